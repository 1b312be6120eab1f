#include "indigo/lifting.hpp"

#include <algorithm>
#include <stdexcept>

#include "indigo/ops.hpp"

namespace indigo {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

}  // namespace

std::pair<Tensor, Tensor> split_polyphase(const Tensor& x) {
  require(x.rank() == 4, "split: expected [N,C,H,W], got " + shape_str(x.shape()));
  Tensor stacked = space_to_depth(x, 2);  // channel p*C+c, p = 2*dy+dx
  return split_channels(stacked, x.dim(1));
}

Tensor merge_polyphase(const Tensor& even, const Tensor& odd) {
  require(even.rank() == 4 && odd.rank() == 4 &&
              odd.dim(1) == 3 * even.dim(1) && odd.dim(0) == even.dim(0) &&
              odd.dim(2) == even.dim(2) && odd.dim(3) == even.dim(3),
          "merge: even " + shape_str(even.shape()) + " and odd " +
              shape_str(odd.shape()) + " are not a polyphase pair");
  return depth_to_space(concat_channels(even, odd), 2);
}

LiftingINN::LiftingINN(ParamStore& ps, LiftingConfig cfg, Rng& rng)
    : cfg_(cfg) {
  require(cfg.levels >= 1 && cfg.pairs >= 1 && cfg.width >= 1 &&
              cfg.channels >= 1,
          "lifting transform: levels, pairs, width, channels must be positive");
  const int c = cfg.channels;
  levels_.resize(static_cast<size_t>(cfg.levels));
  for (int k = 0; k < cfg.levels; ++k) {
    Level& lvl = levels_[static_cast<size_t>(k)];
    for (int m = 0; m < cfg.pairs; ++m) {
      const std::string base =
          "inn.l" + std::to_string(k) + ".m" + std::to_string(m);
      lvl.predict.emplace_back(ps, base + ".p", c, 3 * c, cfg.width,
                               cfg.conditional, cfg.embed_dim, rng);
      lvl.update.emplace_back(ps, base + ".u", 3 * c, c, cfg.width,
                              cfg.conditional, cfg.embed_dim, rng);
    }
  }
}

Decomposition LiftingINN::forward(const Tensor& x, const Tensor* gamma) const {
  require(!levels_.empty(), "lifting transform is not initialized");
  require(cfg_.conditional == (gamma != nullptr),
          cfg_.conditional ? "conditional transform needs an embedding"
                           : "unexpected embedding for unconditional transform");
  const int div = factor();
  require(x.rank() == 4 && x.dim(1) == cfg_.channels &&
              x.dim(2) % div == 0 && x.dim(3) % div == 0,
          "forward: input " + shape_str(x.shape()) + " must be [N," +
              std::to_string(cfg_.channels) + ",H,W] with extents divisible by " +
              std::to_string(div));
  Decomposition out;
  Tensor c = x;
  for (const Level& lvl : levels_) {
    auto [even, odd] = split_polyphase(c);
    c = even;
    Tensor d = odd;
    for (size_t m = 0; m < lvl.predict.size(); ++m) {
      d = sub(d, lvl.predict[m](c, gamma));
      c = add(c, lvl.update[m](d, gamma));
    }
    out.details.push_back(d);
  }
  out.coarse = c;
  return out;
}

Tensor LiftingINN::inverse(const Tensor& coarse,
                           const std::vector<Tensor>& details,
                           const Tensor* gamma) const {
  require(!levels_.empty(), "lifting transform is not initialized");
  require(cfg_.conditional == (gamma != nullptr),
          cfg_.conditional ? "conditional transform needs an embedding"
                           : "unexpected embedding for unconditional transform");
  require(details.size() == levels_.size(),
          "inverse: expected " + std::to_string(levels_.size()) +
              " detail stacks, got " + std::to_string(details.size()));
  Tensor c = coarse;
  for (size_t k = levels_.size(); k-- > 0;) {
    const Level& lvl = levels_[k];
    Tensor d = details[k];
    require(d.rank() == 4 && c.rank() == 4 && d.dim(1) == 3 * cfg_.channels &&
                c.dim(1) == cfg_.channels && d.dim(2) == c.dim(2) &&
                d.dim(3) == c.dim(3),
            "inverse: coarse " + shape_str(c.shape()) + " and detail " +
                shape_str(d.shape()) + " do not match at level " +
                std::to_string(k));
    for (size_t m = lvl.predict.size(); m-- > 0;) {
      c = sub(c, lvl.update[m](d, gamma));
      d = add(d, lvl.predict[m](c, gamma));
    }
    c = merge_polyphase(c, d);
  }
  return c;
}

std::vector<float> train_inn(LiftingINN& inn, ParamStore& ps,
                             const std::vector<Tensor>& xs,
                             const std::vector<Tensor>& ys,
                             const std::vector<Tensor>* gammas,
                             const InnTrainConfig& cfg) {
  require(!xs.empty() && xs.size() == ys.size(),
          "train_inn: need equally many inputs and measurements");
  require(inn.config().conditional == (gammas != nullptr),
          "train_inn: embeddings required exactly for a conditional transform");
  if (gammas)
    require(gammas->size() == xs.size(),
            "train_inn: one embedding per item expected");
  const int div = inn.factor();
  for (size_t i = 0; i < xs.size(); ++i)
    require(ys[i].dim(2) * div == xs[i].dim(2) &&
                ys[i].dim(3) * div == xs[i].dim(3),
            "train_inn: measurement extent must be the input extent over " +
                std::to_string(div) + " (item " + std::to_string(i) + ")");

  Adam opt(ps, {cfg.lr, 0.9f, 0.999f, 1e-8f});
  Rng rng(cfg.seed);
  std::vector<size_t> order(xs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<float> curve;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's own stream keeps epochs reproducible
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    double epoch_loss = 0.0;
    for (size_t idx : order) {
      Tape tape;
      float loss_val;
      {
        Tape::Scope scope(tape);
        Tensor x = to_signed(xs[idx]);
        Tensor y = to_signed(ys[idx]);
        const Tensor* gamma = gammas ? &(*gammas)[idx] : nullptr;
        Decomposition dec = inn.forward(x, gamma);
        Tensor loss = mse(dec.coarse, y);
        loss_val = loss.item();
        tape.backward(loss);
      }
      opt.step(tape);
      epoch_loss += loss_val;
    }
    curve.push_back(static_cast<float>(epoch_loss / static_cast<double>(xs.size())));
  }
  return curve;
}

float finetune_step(LiftingINN& inn, ParamStore& ps, const Tensor& x0t,
                    const Tensor& y, const Tensor* gamma, float lr) {
  Tape tape;
  float loss_val;
  {
    Tape::Scope scope(tape);
    Decomposition dec = inn.forward(x0t.detach(), gamma);
    Tensor loss = sq_diff_sum(dec.coarse, y.detach());
    loss_val = loss.item();
    tape.backward(loss);
  }
  if (lr != 0.f) sgd_step(ps, tape, lr);
  return loss_val;
}

void save_inn(const std::string& path, const ParamStore& ps,
              const LiftingConfig& cfg) {
  std::vector<std::pair<std::string, Tensor>> entries;
  Tensor meta = Tensor::from_data(
      {6},
      {static_cast<float>(cfg.levels), static_cast<float>(cfg.pairs),
       static_cast<float>(cfg.width), static_cast<float>(cfg.channels),
       cfg.conditional ? 1.f : 0.f, static_cast<float>(cfg.embed_dim)},
      false);
  entries.emplace_back("inn.meta", meta);
  for (const auto& name : ps.names()) entries.emplace_back(name, ps.get(name));
  write_checkpoint(path, entries);
}

LiftingINN load_inn(const std::string& path, ParamStore& ps) {
  require(ps.size() == 0, "load_inn: parameter store must start empty");
  auto entries = read_checkpoint(path);
  require(!entries.empty() && entries.front().first == "inn.meta" &&
              entries.front().second.numel() == 6,
          path + " is not a lifting-transform checkpoint");
  const Tensor& meta = entries.front().second;
  LiftingConfig cfg;
  cfg.levels = static_cast<int>(meta.at(0));
  cfg.pairs = static_cast<int>(meta.at(1));
  cfg.width = static_cast<int>(meta.at(2));
  cfg.channels = static_cast<int>(meta.at(3));
  cfg.conditional = meta.at(4) != 0.f;
  cfg.embed_dim = static_cast<int>(meta.at(5));

  Rng rng(0);  // layer init values are overwritten below
  LiftingINN inn(ps, cfg, rng);
  require(entries.size() == ps.size() + 1,
          path + ": expected " + std::to_string(ps.size()) +
              " weight entries, found " + std::to_string(entries.size() - 1));
  for (size_t i = 1; i < entries.size(); ++i) {
    const auto& [name, value] = entries[i];
    require(ps.has(name), path + ": unexpected entry '" + name + "'");
    Tensor& dst = ps.get(name);
    require(dst.shape() == value.shape(),
            path + ": shape mismatch for '" + name + "'");
    std::copy(value.data(), value.data() + value.numel(), dst.raw());
  }
  return inn;
}

}  // namespace indigo
