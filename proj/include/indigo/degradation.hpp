#pragma once

#include <string>
#include <vector>

#include "indigo/rng.hpp"
#include "indigo/tensor.hpp"

// Measurement model: blur with a Gaussian kernel, decimate, add white noise on
// the 0-255 scale, then run a JPEG quantization roundtrip. All stages operate
// on [0,1] images shaped [N,C,H,W] and none of them participates in
// autodifferentiation.

namespace indigo {

struct DegradationParams {
  double sigma = 4.0;  // blur kernel standard deviation, in pixels
  int factor = 4;      // decimation factor
  double delta = 15.0; // noise standard deviation on the 0-255 scale
  int quality = 70;    // JPEG quality in [1,100]; 0 disables the JPEG stage
};

// named presets: "mild", "medium", "severe"
DegradationParams degradation_preset(const std::string& name);

// intervals degradations are drawn from while training degradation-aware
// networks; quality is drawn as an integer
struct DegradationRange {
  double sigma_lo = 3.0, sigma_hi = 9.0;
  double delta_lo = 5.0, delta_hi = 50.0;
  int quality_lo = 30, quality_hi = 80;
};
DegradationParams sample_degradation(const DegradationRange& range, Rng& rng,
                                     int factor = 4);

// normalized Gaussian taps over support 2*ceil(3*sigma)+1
std::vector<double> gaussian_kernel(double sigma);

// separable Gaussian blur with reflected (half-sample symmetric) borders
Tensor gaussian_blur(const Tensor& x, double sigma);

// mean over r x r blocks; extents must divide exactly
Tensor downsample_area(const Tensor& x, int r);

// Separable cubic resampling (Catmull-Rom, a=-0.5) to an arbitrary size, with
// kernel widening when scaling down so decimation does not alias.
Tensor resize_bicubic(const Tensor& x, int out_h, int out_w);

// x + (delta/255) * standard normal draws; delta == 0 returns x unchanged
Tensor add_gaussian_noise(const Tensor& x, double delta, Rng& rng);

// Encode-decode roundtrip: per channel, level-shifted 8x8 orthonormal DCT,
// quantization by the standard luminance table scaled to `quality`,
// dequantization, inverse DCT. Input is clamped to [0,1] first; extents that
// are not multiples of 8 are edge-padded for the transform and cropped after.
Tensor jpeg_roundtrip(const Tensor& x, int quality);

// the quantization table used at a given quality (row-major 8x8)
std::vector<int> jpeg_quant_table(int quality);

// orthonormal 2-D DCT-II of one row-major 8x8 block and its inverse
void dct8x8(const double in[64], double out[64]);
void idct8x8(const double in[64], double out[64]);

// full pipeline in the order blur, decimate, noise, clamp, JPEG
Tensor degrade(const Tensor& x, const DegradationParams& p, Rng& rng);

}  // namespace indigo
