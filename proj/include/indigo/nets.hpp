#pragma once

#include <array>
#include <string>
#include <vector>

#include "indigo/ops.hpp"
#include "indigo/params.hpp"
#include "indigo/rng.hpp"
#include "indigo/tensor.hpp"

namespace indigo {

// Layer builders register their weights in a ParamStore under dotted names
// ("<prefix>.w", "<prefix>.b") and keep shared handles, so checkpoint loads
// write through to the layers. Weight init is He-style normal with std
// sqrt(2 / fan_in); `zero_init` starts the layer as the zero map (used for
// residual tails so blocks begin as identities).

struct Conv2dLayer {
  Tensor w, b;
  int stride = 1, pad = 0;
  bool depthwise = false;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch,
              int k, int stride, int pad, Rng& rng, bool zero_init = false);
  // depthwise variant: one k x k filter per channel
  static Conv2dLayer make_depthwise(ParamStore& ps, const std::string& prefix,
                                    int ch, int k, int stride, int pad, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct DenseLayer {
  Tensor w, b;

  DenseLayer() = default;
  DenseLayer(ParamStore& ps, const std::string& prefix, int in_f, int out_f,
             Rng& rng, bool zero_init = false, float bias_fill = 0.f);
  Tensor operator()(const Tensor& x) const { return dense(x, w, b); }
};

// Predict/update network used inside the lifting transform: 5x5 input conv,
// two depthwise-separable residual blocks at width 32, 5x5 output conv. The
// output conv starts at zero so a freshly built transform is the plain
// polyphase wavelet. The conditional variant scales each residual branch
// channel-wise by a vector computed from the degradation embedding; its dense
// layer starts at weights 0 / bias 1, so conditioning is initially inert.
struct PUNet {
  struct Block {
    Conv2dLayer expand;   // 1x1, width -> width*6
    Conv2dLayer depth;    // 5x5 depthwise at width*6
    Conv2dLayer project;  // 1x1, width*6 -> width
    DenseLayer modulate;  // embed_dim -> width (conditional only)
  };

  Conv2dLayer input, output;
  std::array<Block, 2> blocks;
  bool conditional = false;

  PUNet() = default;
  PUNet(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch,
        int width, bool conditional, int embed_dim, Rng& rng);
  // gamma: [N, embed_dim] when conditional, must be null otherwise
  Tensor operator()(const Tensor& x, const Tensor* gamma) const;
};

// Sinusoidal embedding of integer timesteps, one row per batch element.
Tensor timestep_embedding(const std::vector<int>& t, int dim);

// Noise-prediction network: conv encoder-decoder over three resolutions
// (widths 32/48/64) with skip connections; the timestep embedding enters each
// residual block as a learned per-channel bias. Output conv starts at zero.
struct EpsilonNet {
  static constexpr int kTimeDim = 64;

  struct TimedBlock {
    Conv2dLayer c1, c2;  // 3x3 at block width; c2 zero-init
    DenseLayer time_proj;
    Tensor operator()(const Tensor& x, const Tensor& emb) const;
  };

  int channels = 3;
  DenseLayer time_fc;
  Conv2dLayer input;
  TimedBlock enc0;
  Conv2dLayer down1;
  TimedBlock enc1;
  Conv2dLayer down2;
  TimedBlock mid;
  Conv2dLayer up1, fuse1;
  TimedBlock dec1;
  Conv2dLayer up2, fuse2;
  TimedBlock dec0;
  Conv2dLayer output;

  EpsilonNet() = default;
  EpsilonNet(ParamStore& ps, int channels, Rng& rng);
  // x: [N,C,H,W] with H, W divisible by 4; t: one timestep per batch element
  Tensor operator()(const Tensor& x, const std::vector<int>& t) const;
  Tensor operator()(const Tensor& x, int t) const;
};

// Initial restorer: nearest-upsamples the measurement to full resolution,
// refines it with 6 residual blocks at width 48, and adds the result back to
// the upsampled input. Output is clamped to [0,1]; the net starts as the
// plain nearest upsampler.
struct IPN {
  struct ResBlock {
    Conv2dLayer c1, c2;  // 3x3; c2 zero-init
    Tensor operator()(const Tensor& x) const;
  };

  int factor = 4;
  Conv2dLayer input;
  std::array<ResBlock, 6> blocks;
  Conv2dLayer output;

  IPN() = default;
  IPN(ParamStore& ps, int channels, int factor, Rng& rng);
  Tensor operator()(const Tensor& y) const;
};

// Degradation encoder: four stride-2 conv blocks, global average pooling and
// a dense layer yield the 128-dim embedding; a small head on top regresses
// the normalized (sigma, delta, quality) labels for training. features()
// exposes the activations after the second stride-2 block, which serve as
// the fixed perceptual space for the image-domain guidance loss.
struct DEM {
  static constexpr int kEmbedDim = 128;

  Conv2dLayer c1, c2, c3, c4;  // stride 2: C -> 32 -> 48 -> 64 -> 64
  DenseLayer embed;            // 64 -> 128
  DenseLayer head;             // 128 -> 3

  DEM() = default;
  DEM(ParamStore& ps, int channels, Rng& rng);
  Tensor features(const Tensor& x) const;   // [N,48,H/4,W/4]
  Tensor embedding(const Tensor& y) const;  // [N,128]
  Tensor predict_labels(const Tensor& y) const;  // [N,3] in label-normalized units
};

}  // namespace indigo
