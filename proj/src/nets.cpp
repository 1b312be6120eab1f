#include "indigo/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace indigo {

namespace {

Tensor he_normal(const Shape& shape, int64_t fan_in, Rng& rng) {
  Tensor t = Tensor::alloc(shape);
  const float std = std::sqrt(2.f / static_cast<float>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i)
    t.raw()[i] = static_cast<float>(rng.normal()) * std;
  return t;
}

}  // namespace

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& prefix, int in_ch,
                         int out_ch, int k, int stride, int pad, Rng& rng,
                         bool zero_init)
    : stride(stride), pad(pad) {
  Tensor weight = zero_init ? Tensor::zeros({out_ch, in_ch, k, k})
                            : he_normal({out_ch, in_ch, k, k},
                                        static_cast<int64_t>(in_ch) * k * k, rng);
  w = ps.add(prefix + ".w", weight);
  b = ps.add(prefix + ".b", Tensor::zeros({out_ch}));
}

Conv2dLayer Conv2dLayer::make_depthwise(ParamStore& ps, const std::string& prefix,
                                        int ch, int k, int stride, int pad,
                                        Rng& rng) {
  Conv2dLayer l;
  l.stride = stride;
  l.pad = pad;
  l.depthwise = true;
  l.w = ps.add(prefix + ".w", he_normal({ch, 1, k, k}, static_cast<int64_t>(k) * k, rng));
  l.b = ps.add(prefix + ".b", Tensor::zeros({ch}));
  return l;
}

Tensor Conv2dLayer::operator()(const Tensor& x) const {
  return depthwise ? conv2d_dw(x, w, b, stride, pad)
                   : conv2d(x, w, b, stride, pad);
}

DenseLayer::DenseLayer(ParamStore& ps, const std::string& prefix, int in_f,
                       int out_f, Rng& rng, bool zero_init, float bias_fill) {
  Tensor weight = zero_init ? Tensor::zeros({out_f, in_f})
                            : he_normal({out_f, in_f}, in_f, rng);
  w = ps.add(prefix + ".w", weight);
  b = ps.add(prefix + ".b", Tensor::full({out_f}, bias_fill));
}

// ---- PUNet ----------------------------------------------------------------

PUNet::PUNet(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch,
             int width, bool conditional, int embed_dim, Rng& rng)
    : conditional(conditional) {
  const int expanded = width * 6;
  input = Conv2dLayer(ps, prefix + ".in", in_ch, width, 5, 1, 2, rng);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const std::string bp = prefix + ".b" + std::to_string(i);
    blocks[i].expand = Conv2dLayer(ps, bp + ".pw1", width, expanded, 1, 1, 0, rng);
    blocks[i].depth =
        Conv2dLayer::make_depthwise(ps, bp + ".dw", expanded, 5, 1, 2, rng);
    blocks[i].project = Conv2dLayer(ps, bp + ".pw2", expanded, width, 1, 1, 0, rng);
    if (conditional)
      blocks[i].modulate = DenseLayer(ps, bp + ".mod", embed_dim, width, rng,
                                      /*zero_init=*/true, /*bias_fill=*/1.f);
  }
  output = Conv2dLayer(ps, prefix + ".out", width, out_ch, 5, 1, 2, rng,
                       /*zero_init=*/true);
}

Tensor PUNet::operator()(const Tensor& x, const Tensor* gamma) const {
  if (conditional != (gamma != nullptr))
    throw std::runtime_error(conditional
                                 ? "conditional branch network needs an embedding"
                                 : "unexpected embedding for unconditional network");
  Tensor h = leaky_relu(input(x));
  for (const Block& blk : blocks) {
    Tensor r = leaky_relu(blk.expand(h));
    r = leaky_relu(blk.depth(r));
    r = blk.project(r);
    if (conditional) r = mul_channel(r, blk.modulate(*gamma));
    h = add(h, r);
  }
  return output(h);
}

// ---- EpsilonNet -----------------------------------------------------------

Tensor timestep_embedding(const std::vector<int>& t, int dim) {
  if (dim % 2 != 0) throw std::runtime_error("timestep embedding dim must be even");
  const int half = dim / 2;
  Tensor out = Tensor::alloc({static_cast<int>(t.size()), dim});
  float* p = out.raw();
  for (size_t n = 0; n < t.size(); ++n)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double phase = t[n] * freq;
      p[n * dim + i] = static_cast<float>(std::sin(phase));
      p[n * dim + half + i] = static_cast<float>(std::cos(phase));
    }
  return out;
}

Tensor EpsilonNet::TimedBlock::operator()(const Tensor& x, const Tensor& emb) const {
  Tensor h = add_channel_bias(c1(x), time_proj(emb));
  h = leaky_relu(h);
  h = c2(h);
  return add(x, h);
}

namespace {

EpsilonNet::TimedBlock make_timed_block(ParamStore& ps, const std::string& prefix,
                                        int width, Rng& rng) {
  EpsilonNet::TimedBlock b;
  b.c1 = Conv2dLayer(ps, prefix + ".c1", width, width, 3, 1, 1, rng);
  b.c2 = Conv2dLayer(ps, prefix + ".c2", width, width, 3, 1, 1, rng,
                     /*zero_init=*/true);
  b.time_proj = DenseLayer(ps, prefix + ".t", EpsilonNet::kTimeDim, width, rng);
  return b;
}

}  // namespace

EpsilonNet::EpsilonNet(ParamStore& ps, int channels, Rng& rng)
    : channels(channels) {
  const int w0 = 32, w1 = 48, w2 = 64;
  time_fc = DenseLayer(ps, "eps.time", kTimeDim, kTimeDim, rng);
  input = Conv2dLayer(ps, "eps.in", channels, w0, 3, 1, 1, rng);
  enc0 = make_timed_block(ps, "eps.enc0", w0, rng);
  down1 = Conv2dLayer(ps, "eps.down1", w0, w1, 3, 2, 1, rng);
  enc1 = make_timed_block(ps, "eps.enc1", w1, rng);
  down2 = Conv2dLayer(ps, "eps.down2", w1, w2, 3, 2, 1, rng);
  mid = make_timed_block(ps, "eps.mid", w2, rng);
  up1 = Conv2dLayer(ps, "eps.up1", w2, w1, 3, 1, 1, rng);
  fuse1 = Conv2dLayer(ps, "eps.fuse1", 2 * w1, w1, 3, 1, 1, rng);
  dec1 = make_timed_block(ps, "eps.dec1", w1, rng);
  up2 = Conv2dLayer(ps, "eps.up2", w1, w0, 3, 1, 1, rng);
  fuse2 = Conv2dLayer(ps, "eps.fuse2", 2 * w0, w0, 3, 1, 1, rng);
  dec0 = make_timed_block(ps, "eps.dec0", w0, rng);
  output = Conv2dLayer(ps, "eps.out", w0, channels, 3, 1, 1, rng,
                       /*zero_init=*/true);
}

Tensor EpsilonNet::operator()(const Tensor& x, const std::vector<int>& t) const {
  if (static_cast<int>(t.size()) != x.dim(0))
    throw std::runtime_error("one timestep per batch element expected");
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0)
    throw std::runtime_error("noise net needs extents divisible by 4, got " +
                             shape_str(x.shape()));
  Tensor emb = leaky_relu(time_fc(timestep_embedding(t, kTimeDim)));
  Tensor h0 = enc0(leaky_relu(input(x)), emb);
  Tensor h1 = enc1(leaky_relu(down1(h0)), emb);
  Tensor h2 = mid(leaky_relu(down2(h1)), emb);
  Tensor u1 = leaky_relu(up1(upsample_nearest(h2, 2)));
  u1 = dec1(leaky_relu(fuse1(concat_channels(u1, h1))), emb);
  Tensor u0 = leaky_relu(up2(upsample_nearest(u1, 2)));
  u0 = dec0(leaky_relu(fuse2(concat_channels(u0, h0))), emb);
  return output(u0);
}

Tensor EpsilonNet::operator()(const Tensor& x, int t) const {
  return (*this)(x, std::vector<int>(static_cast<size_t>(x.dim(0)), t));
}

// ---- IPN ------------------------------------------------------------------

Tensor IPN::ResBlock::operator()(const Tensor& x) const {
  return add(x, c2(leaky_relu(c1(x))));
}

IPN::IPN(ParamStore& ps, int channels, int factor, Rng& rng) : factor(factor) {
  const int width = 48;
  input = Conv2dLayer(ps, "ipn.in", channels, width, 3, 1, 1, rng);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const std::string bp = "ipn.b" + std::to_string(i);
    blocks[i].c1 = Conv2dLayer(ps, bp + ".c1", width, width, 3, 1, 1, rng);
    blocks[i].c2 = Conv2dLayer(ps, bp + ".c2", width, width, 3, 1, 1, rng,
                               /*zero_init=*/true);
  }
  output = Conv2dLayer(ps, "ipn.out", width, channels, 3, 1, 1, rng,
                       /*zero_init=*/true);
}

Tensor IPN::operator()(const Tensor& y) const {
  Tensor up = upsample_nearest(y, factor);
  Tensor h = leaky_relu(input(up));
  for (const ResBlock& blk : blocks) h = blk(h);
  return clamp01(add(up, output(h)));
}

// ---- DEM ------------------------------------------------------------------

DEM::DEM(ParamStore& ps, int channels, Rng& rng) {
  c1 = Conv2dLayer(ps, "dem.c1", channels, 32, 3, 2, 1, rng);
  c2 = Conv2dLayer(ps, "dem.c2", 32, 48, 3, 2, 1, rng);
  c3 = Conv2dLayer(ps, "dem.c3", 48, 64, 3, 2, 1, rng);
  c4 = Conv2dLayer(ps, "dem.c4", 64, 64, 3, 2, 1, rng);
  embed = DenseLayer(ps, "dem.embed", 64, kEmbedDim, rng);
  head = DenseLayer(ps, "dem.head", kEmbedDim, 3, rng);
}

Tensor DEM::features(const Tensor& x) const {
  return leaky_relu(c2(leaky_relu(c1(x))));
}

Tensor DEM::embedding(const Tensor& y) const {
  Tensor f = leaky_relu(c4(leaky_relu(c3(features(y)))));
  return embed(global_avg_pool(f));
}

Tensor DEM::predict_labels(const Tensor& y) const {
  return head(leaky_relu(embedding(y)));
}

}  // namespace indigo
