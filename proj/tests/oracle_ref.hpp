#pragma once

#include <vector>

#include "indigo/tensor.hpp"

// Double-precision reference implementations used by the tests. These are
// naive elementwise / gather loops with explicit bounds checks and share no
// code with the optimized float kernels they verify.
namespace oracle {

struct DT {
  std::vector<double> v;
  std::vector<int> shape;

  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
};

DT from_tensor(const indigo::Tensor& t);
DT make(std::vector<int> shape);

DT add(const DT& a, const DT& b);
DT sub(const DT& a, const DT& b);
DT mul(const DT& a, const DT& b);
DT add_scalar(const DT& x, double c);
DT mul_scalar(const DT& x, double c);
DT axpby(const DT& a, double alpha, const DT& b, double beta);
DT leaky_relu(const DT& x, double slope);
DT sigmoid(const DT& x);

double sum(const DT& x);
double mean(const DT& x);
double sq_diff_sum(const DT& a, const DT& b);
double mse(const DT& a, const DT& b);

DT dense(const DT& x, const DT& w, const DT& b);
DT conv2d(const DT& x, const DT& w, const DT& b, int stride, int pad);
DT conv2d_dw(const DT& x, const DT& w, const DT& b, int stride, int pad);

DT upsample_nearest(const DT& x, int r);
DT space_to_depth(const DT& x, int r);
DT depth_to_space(const DT& x, int r);
DT concat_channels(const DT& a, const DT& b);
DT slice_channels(const DT& x, int c_begin, int c_len);
DT global_avg_pool(const DT& x);
DT reshape(const DT& x, std::vector<int> shape);
DT add_channel_bias(const DT& x, const DT& b);
DT mul_channel(const DT& x, const DT& s);

}  // namespace oracle
