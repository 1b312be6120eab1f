#pragma once

#include <vector>

// Image-processing references for the tests: direct (non-separable,
// non-factored) double-precision computations.
namespace oracle {

// dense 2-D Gaussian convolution with half-sample symmetric borders over one
// H x W plane
std::vector<double> blur_reflect_2d(const std::vector<double>& plane, int h,
                                    int w, double sigma);

// direct cosine-sum orthonormal DCT-II of an 8x8 block and its inverse
void dct8x8_naive(const double in[64], double out[64]);
void idct8x8_naive(const double in[64], double out[64]);

}  // namespace oracle
