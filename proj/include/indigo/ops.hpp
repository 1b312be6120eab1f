#pragma once

#include <utility>

#include "indigo/tensor.hpp"

// Differentiable tensor operations. Every op allocates a fresh output,
// validates shapes eagerly, and — when a tape is active and any input is
// tracked — records a backward node on the active tape. Gradients only
// accumulate into tracked inputs.

namespace indigo {

// ---- elementwise ----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, float c);
Tensor mul_scalar(const Tensor& x, float c);
// alpha*a + beta*b, fused (sampler update arithmetic).
Tensor axpby(const Tensor& a, float alpha, const Tensor& b, float beta);
Tensor leaky_relu(const Tensor& x, float slope = 0.2f);
Tensor sigmoid(const Tensor& x);
// clamp to [0,1]; gradient passes through where the input already lies in
// the closed interval and is zero where the clamp was active
Tensor clamp01(const Tensor& x);

// domain conversions between [0,1] image files and the [-1,1] convention the
// diffusion model works in
inline Tensor to_signed(const Tensor& x) { return add_scalar(mul_scalar(x, 2.f), -1.f); }
inline Tensor to_unit(const Tensor& x) { return add_scalar(mul_scalar(x, 0.5f), 0.5f); }

// ---- reductions (accumulated in double) -----------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum_i (a_i - b_i)^2
Tensor sq_diff_sum(const Tensor& a, const Tensor& b);
// mean_i (a_i - b_i)^2
Tensor mse(const Tensor& a, const Tensor& b);

// ---- linear layers --------------------------------------------------------
// x:[N,K] w:[M,K] b:[M] -> [N,M]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
// x:[N,Ci,H,W] w:[Co,Ci,kh,kw] b:[Co], zero padding -> [N,Co,Ho,Wo]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
// depthwise: x:[N,C,H,W] w:[C,1,kh,kw] b:[C]
Tensor conv2d_dw(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                 int pad);

// ---- shape / layout -------------------------------------------------------
Tensor upsample_nearest(const Tensor& x, int factor);
// [N,C,H,W] -> [N,C*r*r,H/r,W/r]; output channel p*C+c holds the polyphase
// component at row offset p/r, column offset p%r.
Tensor space_to_depth(const Tensor& x, int r);
// exact inverse of space_to_depth with the same channel convention
Tensor depth_to_space(const Tensor& x, int r);
Tensor concat_channels(const Tensor& a, const Tensor& b);
// (first c0 channels, remaining channels)
std::pair<Tensor, Tensor> split_channels(const Tensor& x, int c0);
// [N,C,H,W] -> [N,C], mean over spatial positions
Tensor global_avg_pool(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// ---- broadcast over spatial dims ------------------------------------------
// x:[N,C,H,W] + b, where b is [C] (shared) or [N,C] (per sample)
Tensor add_channel_bias(const Tensor& x, const Tensor& b);
// x:[N,C,H,W] * s, where s is [N,C]
Tensor mul_channel(const Tensor& x, const Tensor& s);

}  // namespace indigo
