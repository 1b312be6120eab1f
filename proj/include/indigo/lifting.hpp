#pragma once

#include <string>
#include <utility>
#include <vector>

#include "indigo/nets.hpp"
#include "indigo/params.hpp"
#include "indigo/rng.hpp"
#include "indigo/tensor.hpp"

namespace indigo {

// 2-D lazy-wavelet split: the (0,0) polyphase component is the even part,
// the (0,1), (1,0), (1,1) components stacked along channels are the odd part.
// merge_polyphase is its exact inverse; both are differentiable permutations.
std::pair<Tensor, Tensor> split_polyphase(const Tensor& x);
Tensor merge_polyphase(const Tensor& even, const Tensor& odd);

struct LiftingConfig {
  int levels = 2;    // each level halves both extents
  int pairs = 4;     // predict/update pairs per level
  int width = 32;    // feature width inside the branch networks
  int channels = 3;  // image channels
  bool conditional = false;
  int embed_dim = 128;
};

struct Decomposition {
  Tensor coarse;                // [N,C,H/2^K,W/2^K]
  std::vector<Tensor> details;  // level k: [N,3C,H/2^(k+1),W/2^(k+1)]
};

// Invertible multi-level lifting transform. Each level splits its input into
// even/odd polyphase parts and runs alternating predict steps
// (odd -= P(even)) and update steps (even += U(odd)); the inverse replays
// them with flipped signs in reverse order, so reconstruction is exact for
// any parameter values. A freshly constructed transform has zero predict and
// update maps and therefore starts as the plain polyphase wavelet.
class LiftingINN {
 public:
  LiftingINN() = default;
  LiftingINN(ParamStore& ps, LiftingConfig cfg, Rng& rng);

  const LiftingConfig& config() const { return cfg_; }
  int factor() const { return 1 << cfg_.levels; }

  // x extents must be divisible by 2^levels; gamma: [N, embed_dim], required
  // exactly when the transform is conditional
  Decomposition forward(const Tensor& x, const Tensor* gamma = nullptr) const;
  Tensor inverse(const Tensor& coarse, const std::vector<Tensor>& details,
                 const Tensor* gamma = nullptr) const;

 private:
  struct Level {
    std::vector<PUNet> predict;  // C -> 3C
    std::vector<PUNet> update;   // 3C -> C
  };
  LiftingConfig cfg_;
  std::vector<Level> levels_;
};

struct InnTrainConfig {
  int epochs = 12;
  float lr = 1e-3f;
  uint64_t seed = 1;
};

// Trains the transform so its coarse branch reproduces the measurements:
// mean ||coarse(x_i) - y_i||^2 over the dataset, images given in [0,1] and
// mapped internally to the [-1,1] convention. y extents must be the x extents
// divided by 2^levels. gammas: one [1,embed_dim] row per item, required
// exactly when the transform is conditional. Returns the per-epoch mean loss.
std::vector<float> train_inn(LiftingINN& inn, ParamStore& ps,
                             const std::vector<Tensor>& xs,
                             const std::vector<Tensor>& ys,
                             const std::vector<Tensor>* gammas,
                             const InnTrainConfig& cfg);

// One plain gradient-descent step on the transform parameters toward
// coarse(x0t) == y, inputs already in [-1,1]. x0t and y are constants; only
// the transform parameters move. Returns the pre-step loss value.
float finetune_step(LiftingINN& inn, ParamStore& ps, const Tensor& x0t,
                    const Tensor& y, const Tensor* gamma, float lr);

// Checkpoints carry the architecture alongside the weights, so a reader can
// rebuild the transform without outside configuration.
void save_inn(const std::string& path, const ParamStore& ps,
              const LiftingConfig& cfg);
LiftingINN load_inn(const std::string& path, ParamStore& ps);

}  // namespace indigo
