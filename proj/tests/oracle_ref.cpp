#include "oracle_ref.hpp"

#include <cassert>
#include <cmath>

namespace oracle {

namespace {
int64_t idx4(const DT& t, int n, int c, int h, int w) {
  return ((static_cast<int64_t>(n) * t.dim(1) + c) * t.dim(2) + h) * t.dim(3) +
         w;
}
}  // namespace

DT from_tensor(const indigo::Tensor& t) {
  DT d;
  d.shape = t.shape();
  d.v.resize(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) d.v[static_cast<size_t>(i)] = t.at(i);
  return d;
}

DT make(std::vector<int> shape) {
  DT d;
  d.shape = std::move(shape);
  d.v.assign(static_cast<size_t>(d.numel()), 0.0);
  return d;
}

DT add(const DT& a, const DT& b) {
  assert(a.shape == b.shape);
  DT o = make(a.shape);
  for (size_t i = 0; i < o.v.size(); ++i) o.v[i] = a.v[i] + b.v[i];
  return o;
}

DT sub(const DT& a, const DT& b) {
  assert(a.shape == b.shape);
  DT o = make(a.shape);
  for (size_t i = 0; i < o.v.size(); ++i) o.v[i] = a.v[i] - b.v[i];
  return o;
}

DT mul(const DT& a, const DT& b) {
  assert(a.shape == b.shape);
  DT o = make(a.shape);
  for (size_t i = 0; i < o.v.size(); ++i) o.v[i] = a.v[i] * b.v[i];
  return o;
}

DT add_scalar(const DT& x, double c) {
  DT o = make(x.shape);
  for (size_t i = 0; i < o.v.size(); ++i) o.v[i] = x.v[i] + c;
  return o;
}

DT mul_scalar(const DT& x, double c) {
  DT o = make(x.shape);
  for (size_t i = 0; i < o.v.size(); ++i) o.v[i] = x.v[i] * c;
  return o;
}

DT axpby(const DT& a, double alpha, const DT& b, double beta) {
  assert(a.shape == b.shape);
  DT o = make(a.shape);
  for (size_t i = 0; i < o.v.size(); ++i) o.v[i] = alpha * a.v[i] + beta * b.v[i];
  return o;
}

DT leaky_relu(const DT& x, double slope) {
  DT o = make(x.shape);
  for (size_t i = 0; i < o.v.size(); ++i)
    o.v[i] = x.v[i] >= 0.0 ? x.v[i] : slope * x.v[i];
  return o;
}

DT sigmoid(const DT& x) {
  DT o = make(x.shape);
  for (size_t i = 0; i < o.v.size(); ++i) o.v[i] = 1.0 / (1.0 + std::exp(-x.v[i]));
  return o;
}

double sum(const DT& x) {
  double acc = 0.0;
  for (double v : x.v) acc += v;
  return acc;
}

double mean(const DT& x) { return sum(x) / static_cast<double>(x.numel()); }

double sq_diff_sum(const DT& a, const DT& b) {
  assert(a.shape == b.shape);
  double acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    acc += d * d;
  }
  return acc;
}

double mse(const DT& a, const DT& b) {
  return sq_diff_sum(a, b) / static_cast<double>(a.numel());
}

DT dense(const DT& x, const DT& w, const DT& b) {
  const int N = x.dim(0), K = x.dim(1), M = w.dim(0);
  assert(w.dim(1) == K && b.dim(0) == M);
  DT o = make({N, M});
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) {
      double acc = b.v[static_cast<size_t>(m)];
      for (int k = 0; k < K; ++k)
        acc += x.v[static_cast<size_t>(n) * K + k] *
               w.v[static_cast<size_t>(m) * K + k];
      o.v[static_cast<size_t>(n) * M + m] = acc;
    }
  return o;
}

DT conv2d(const DT& x, const DT& w, const DT& b, int stride, int pad) {
  const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  assert(w.dim(1) == Ci && b.dim(0) == Co);
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  DT o = make({N, Co, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co)
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          double acc = b.v[static_cast<size_t>(co)];
          for (int ci = 0; ci < Ci; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int hy = ho * stride + ky - pad;
                const int hx = wo * stride + kx - pad;
                if (hy < 0 || hy >= H || hx < 0 || hx >= W) continue;
                acc += x.v[static_cast<size_t>(idx4(x, n, ci, hy, hx))] *
                       w.v[static_cast<size_t>(idx4(w, co, ci, ky, kx))];
              }
          o.v[static_cast<size_t>(idx4(o, n, co, ho, wo))] = acc;
        }
  return o;
}

DT conv2d_dw(const DT& x, const DT& w, const DT& b, int stride, int pad) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int kh = w.dim(2), kw = w.dim(3);
  assert(w.dim(0) == C && w.dim(1) == 1 && b.dim(0) == C);
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  DT o = make({N, C, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          double acc = b.v[static_cast<size_t>(c)];
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int hy = ho * stride + ky - pad;
              const int hx = wo * stride + kx - pad;
              if (hy < 0 || hy >= H || hx < 0 || hx >= W) continue;
              acc += x.v[static_cast<size_t>(idx4(x, n, c, hy, hx))] *
                     w.v[static_cast<size_t>((static_cast<int64_t>(c) * kh + ky) * kw + kx)];
            }
          o.v[static_cast<size_t>(idx4(o, n, c, ho, wo))] = acc;
        }
  return o;
}

DT upsample_nearest(const DT& x, int r) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  DT o = make({N, C, H * r, W * r});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H * r; ++h)
        for (int w0 = 0; w0 < W * r; ++w0)
          o.v[static_cast<size_t>(idx4(o, n, c, h, w0))] =
              x.v[static_cast<size_t>(idx4(x, n, c, h / r, w0 / r))];
  return o;
}

DT space_to_depth(const DT& x, int r) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  assert(H % r == 0 && W % r == 0);
  DT o = make({N, C * r * r, H / r, W / r});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w0 = 0; w0 < W; ++w0) {
          const int p = (h % r) * r + (w0 % r);
          o.v[static_cast<size_t>(idx4(o, n, p * C + c, h / r, w0 / r))] =
              x.v[static_cast<size_t>(idx4(x, n, c, h, w0))];
        }
  return o;
}

DT depth_to_space(const DT& x, int r) {
  const int N = x.dim(0), C4 = x.dim(1), H = x.dim(2), W = x.dim(3);
  assert(C4 % (r * r) == 0);
  const int C = C4 / (r * r);
  DT o = make({N, C, H * r, W * r});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H * r; ++h)
        for (int w0 = 0; w0 < W * r; ++w0) {
          const int p = (h % r) * r + (w0 % r);
          o.v[static_cast<size_t>(idx4(o, n, c, h, w0))] =
              x.v[static_cast<size_t>(idx4(x, n, p * C + c, h / r, w0 / r))];
        }
  return o;
}

DT concat_channels(const DT& a, const DT& b) {
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const int H = a.dim(2), W = a.dim(3);
  DT o = make({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < Ca + Cb; ++c)
      for (int h = 0; h < H; ++h)
        for (int w0 = 0; w0 < W; ++w0)
          o.v[static_cast<size_t>(idx4(o, n, c, h, w0))] =
              c < Ca ? a.v[static_cast<size_t>(idx4(a, n, c, h, w0))]
                     : b.v[static_cast<size_t>(idx4(b, n, c - Ca, h, w0))];
  return o;
}

DT slice_channels(const DT& x, int c_begin, int c_len) {
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  DT o = make({N, c_len, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < c_len; ++c)
      for (int h = 0; h < H; ++h)
        for (int w0 = 0; w0 < W; ++w0)
          o.v[static_cast<size_t>(idx4(o, n, c, h, w0))] =
              x.v[static_cast<size_t>(idx4(x, n, c + c_begin, h, w0))];
  return o;
}

DT global_avg_pool(const DT& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  DT o = make({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int h = 0; h < H; ++h)
        for (int w0 = 0; w0 < W; ++w0)
          acc += x.v[static_cast<size_t>(idx4(x, n, c, h, w0))];
      o.v[static_cast<size_t>(n) * C + c] = acc / (static_cast<double>(H) * W);
    }
  return o;
}

DT reshape(const DT& x, std::vector<int> shape) {
  DT o = make(std::move(shape));
  assert(o.numel() == x.numel());
  o.v = x.v;
  return o;
}

DT add_channel_bias(const DT& x, const DT& b) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const bool per_sample = b.rank() == 2;
  DT o = make(x.shape);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double bv =
          per_sample ? b.v[static_cast<size_t>(n) * C + c] : b.v[static_cast<size_t>(c)];
      for (int h = 0; h < H; ++h)
        for (int w0 = 0; w0 < W; ++w0)
          o.v[static_cast<size_t>(idx4(o, n, c, h, w0))] =
              x.v[static_cast<size_t>(idx4(x, n, c, h, w0))] + bv;
    }
  return o;
}

DT mul_channel(const DT& x, const DT& s) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  DT o = make(x.shape);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double sv = s.v[static_cast<size_t>(n) * C + c];
      for (int h = 0; h < H; ++h)
        for (int w0 = 0; w0 < W; ++w0)
          o.v[static_cast<size_t>(idx4(o, n, c, h, w0))] =
              x.v[static_cast<size_t>(idx4(x, n, c, h, w0))] * sv;
    }
  return o;
}

}  // namespace oracle
