#include "indigo/ops.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace indigo {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

void axpy(float* dst, const float* src, float c, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dst[i] += c * src[i];
}

void accumulate(float* dst, const float* src, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::alloc(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.raw();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (recording({&a, &b})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [a, b, out](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      if (a.tracked()) accumulate(t.grad_buf(a).data(), go.data(), a.numel());
      if (b.tracked()) accumulate(t.grad_buf(b).data(), go.data(), b.numel());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::alloc(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.raw();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  if (recording({&a, &b})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [a, b, out](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      if (a.tracked()) accumulate(t.grad_buf(a).data(), go.data(), a.numel());
      if (b.tracked()) axpy(t.grad_buf(b).data(), go.data(), -1.f, b.numel());
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::alloc(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.raw();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (recording({&a, &b})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [a, b, out](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      const int64_t m = out.numel();
      if (a.tracked()) {
        float* ga = t.grad_buf(a).data();
        const float* pb2 = b.data();
        for (int64_t i = 0; i < m; ++i) ga[i] += go[i] * pb2[i];
      }
      if (b.tracked()) {
        float* gb = t.grad_buf(b).data();
        const float* pa2 = a.data();
        for (int64_t i = 0; i < m; ++i) gb[i] += go[i] * pa2[i];
      }
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, float c) {
  Tensor out = Tensor::alloc(x.shape());
  const float* px = x.data();
  float* po = out.raw();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] + c;
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      if (x.tracked()) accumulate(t.grad_buf(x).data(), go.data(), x.numel());
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& x, float c) {
  Tensor out = Tensor::alloc(x.shape());
  const float* px = x.data();
  float* po = out.raw();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] * c;
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out, c](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      if (x.tracked()) axpy(t.grad_buf(x).data(), go.data(), c, x.numel());
    });
  }
  return out;
}

Tensor axpby(const Tensor& a, float alpha, const Tensor& b, float beta) {
  check_same_shape(a, b, "axpby");
  Tensor out = Tensor::alloc(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.raw();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = alpha * pa[i] + beta * pb[i];
  if (recording({&a, &b})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [a, b, out, alpha, beta](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      if (a.tracked()) axpy(t.grad_buf(a).data(), go.data(), alpha, a.numel());
      if (b.tracked()) axpy(t.grad_buf(b).data(), go.data(), beta, b.numel());
    });
  }
  return out;
}

Tensor leaky_relu(const Tensor& x, float slope) {
  Tensor out = Tensor::alloc(x.shape());
  const float* px = x.data();
  float* po = out.raw();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] >= 0.f ? px[i] : slope * px[i];
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out, slope](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(out.id());
      float* gx = t.grad_buf(x).data();
      const float* px2 = x.data();
      const int64_t m = x.numel();
      for (int64_t i = 0; i < m; ++i)
        gx[i] += go[i] * (px2[i] >= 0.f ? 1.f : slope);
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::alloc(x.shape());
  const float* px = x.data();
  float* po = out.raw();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = 1.f / (1.f + std::exp(-px[i]));
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(out.id());
      float* gx = t.grad_buf(x).data();
      const float* po2 = out.data();
      const int64_t m = x.numel();
      for (int64_t i = 0; i < m; ++i) gx[i] += go[i] * po2[i] * (1.f - po2[i]);
    });
  }
  return out;
}

Tensor clamp01(const Tensor& x) {
  Tensor out = Tensor::alloc(x.shape());
  const float* px = x.data();
  float* po = out.raw();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = std::clamp(px[i], 0.f, 1.f);
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(out.id());
      float* gx = t.grad_buf(x).data();
      const float* px2 = x.data();
      const int64_t m = x.numel();
      for (int64_t i = 0; i < m; ++i)
        if (px2[i] >= 0.f && px2[i] <= 1.f) gx[i] += go[i];
    });
  }
  return out;
}

// ---- reductions -----------------------------------------------------------

namespace {

Tensor reduce_all(const Tensor& x, bool take_mean) {
  const int64_t n = x.numel();
  double acc = 0.0;
  const float* px = x.data();
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  if (take_mean) acc /= static_cast<double>(n);
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (recording({&x})) {
    out.mark_tracked();
    const float w = take_mean ? 1.f / static_cast<float>(n) : 1.f;
    Tape::active()->add_node(out, [x, out, w](Tape& t) {
      if (!x.tracked()) return;
      const float g = (*t.find_grad(out.id()))[0] * w;
      float* gx = t.grad_buf(x).data();
      const int64_t m = x.numel();
      for (int64_t i = 0; i < m; ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor sq_diff_reduce(const Tensor& a, const Tensor& b, bool take_mean,
                      const char* name) {
  check_same_shape(a, b, name);
  const int64_t n = a.numel();
  double acc = 0.0;
  const float* pa = a.data();
  const float* pb = b.data();
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += d * d;
  }
  if (take_mean) acc /= static_cast<double>(n);
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (recording({&a, &b})) {
    out.mark_tracked();
    const float w = take_mean ? 1.f / static_cast<float>(n) : 1.f;
    Tape::active()->add_node(out, [a, b, out, w](Tape& t) {
      const float c = 2.f * (*t.find_grad(out.id()))[0] * w;
      const float* pa2 = a.data();
      const float* pb2 = b.data();
      const int64_t m = a.numel();
      if (a.tracked()) {
        float* ga = t.grad_buf(a).data();
        for (int64_t i = 0; i < m; ++i) ga[i] += c * (pa2[i] - pb2[i]);
      }
      if (b.tracked()) {
        float* gb = t.grad_buf(b).data();
        for (int64_t i = 0; i < m; ++i) gb[i] -= c * (pa2[i] - pb2[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_all(x, false); }
Tensor mean(const Tensor& x) { return reduce_all(x, true); }
Tensor sq_diff_sum(const Tensor& a, const Tensor& b) {
  return sq_diff_reduce(a, b, false, "sq_diff_sum");
}
Tensor mse(const Tensor& a, const Tensor& b) {
  return sq_diff_reduce(a, b, true, "mse");
}

// ---- dense ----------------------------------------------------------------

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2 && b.rank() == 1,
          "dense: expected x[N,K] w[M,K] b[M], got " + shape_str(x.shape()) +
              " " + shape_str(w.shape()) + " " + shape_str(b.shape()));
  const int N = x.dim(0), K = x.dim(1), M = w.dim(0);
  require(w.dim(1) == K && b.dim(0) == M,
          "dense: inconsistent shapes " + shape_str(x.shape()) + " " +
              shape_str(w.shape()) + " " + shape_str(b.shape()));
  Tensor out = Tensor::alloc({N, M});
  const float* px = x.data();
  const float* pw = w.data();
  const float* pb = b.data();
  float* po = out.raw();
  for (int n = 0; n < N; ++n) {
    const float* xr = px + static_cast<int64_t>(n) * K;
    for (int m = 0; m < M; ++m) {
      const float* wr = pw + static_cast<int64_t>(m) * K;
      float acc = pb[m];
      for (int k = 0; k < K; ++k) acc += xr[k] * wr[k];
      po[static_cast<int64_t>(n) * M + m] = acc;
    }
  }
  if (recording({&x, &w, &b})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, w, b, out, N, K, M](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      const float* pgo = go.data();
      if (x.tracked()) {
        float* gx = t.grad_buf(x).data();
        const float* pw2 = w.data();
        for (int n = 0; n < N; ++n)
          for (int m = 0; m < M; ++m)
            axpy(gx + static_cast<int64_t>(n) * K,
                 pw2 + static_cast<int64_t>(m) * K,
                 pgo[static_cast<int64_t>(n) * M + m], K);
      }
      if (w.tracked()) {
        float* gw = t.grad_buf(w).data();
        const float* px2 = x.data();
        for (int n = 0; n < N; ++n)
          for (int m = 0; m < M; ++m)
            axpy(gw + static_cast<int64_t>(m) * K,
                 px2 + static_cast<int64_t>(n) * K,
                 pgo[static_cast<int64_t>(n) * M + m], K);
      }
      if (b.tracked()) {
        float* gb = t.grad_buf(b).data();
        for (int n = 0; n < N; ++n)
          accumulate(gb, pgo + static_cast<int64_t>(n) * M, M);
      }
    });
  }
  return out;
}

// ---- convolution ----------------------------------------------------------

namespace {

// zero-padded copy of a batched [N,C,H,W] block
std::shared_ptr<std::vector<float>> make_padded(const float* px, int N, int C,
                                                int H, int W, int p) {
  const int Hp = H + 2 * p, Wp = W + 2 * p;
  auto buf = std::make_shared<std::vector<float>>(
      static_cast<size_t>(N) * C * Hp * Wp, 0.f);
  float* pp = buf->data();
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = px + static_cast<int64_t>(nc) * H * W;
    float* dst = pp + static_cast<int64_t>(nc) * Hp * Wp +
                 static_cast<int64_t>(p) * Wp + p;
    for (int h = 0; h < H; ++h)
      std::memcpy(dst + static_cast<int64_t>(h) * Wp,
                  src + static_cast<int64_t>(h) * W, sizeof(float) * W);
  }
  return buf;
}

// accumulate one kernel tap: out[ho,wo] += wv * xin[ho*s+.., wo*s+..]
inline void conv_tap_fwd(float* obase, const float* xrow0, float wv, int Ho,
                         int Wo, int Wp, int s) {
  if (s == 1) {
    for (int ho = 0; ho < Ho; ++ho)
      axpy(obase + static_cast<int64_t>(ho) * Wo,
           xrow0 + static_cast<int64_t>(ho) * Wp, wv, Wo);
  } else {
    for (int ho = 0; ho < Ho; ++ho) {
      const float* xr = xrow0 + static_cast<int64_t>(ho) * s * Wp;
      float* orow = obase + static_cast<int64_t>(ho) * Wo;
      for (int wo = 0; wo < Wo; ++wo) orow[wo] += wv * xr[wo * s];
    }
  }
}

// stride-1 fast path: all K*K taps of one (out-channel, in-channel) pair are
// applied in a single pass over the output plane, so the output row is read
// and written once instead of once per tap
template <int K>
void stencil_acc_plane(const float* xpad, int xpitch, const float* wblock,
                       float* out, int Ho, int Wo) {
  for (int ho = 0; ho < Ho; ++ho) {
    const float* xrow = xpad + static_cast<int64_t>(ho) * xpitch;
    float* orow = out + static_cast<int64_t>(ho) * Wo;
    for (int wo = 0; wo < Wo; ++wo) {
      float acc = orow[wo];
      for (int ky = 0; ky < K; ++ky) {
        const float* xr = xrow + ky * xpitch + wo;
        const float* wr = wblock + ky * K;
        for (int kx = 0; kx < K; ++kx) acc += wr[kx] * xr[kx];
      }
      orow[wo] = acc;
    }
  }
}

bool stencil_dispatch(const float* xpad, int xpitch, const float* wblock,
                      float* out, int Ho, int Wo, int kh, int kw) {
  if (kh != kw) return false;
  switch (kh) {
    case 1: stencil_acc_plane<1>(xpad, xpitch, wblock, out, Ho, Wo); return true;
    case 3: stencil_acc_plane<3>(xpad, xpitch, wblock, out, Ho, Wo); return true;
    case 5: stencil_acc_plane<5>(xpad, xpitch, wblock, out, Ho, Wo); return true;
    case 7: stencil_acc_plane<7>(xpad, xpitch, wblock, out, Ho, Wo); return true;
    default: return false;
  }
}

// dot product with a fixed 8-lane accumulator; the explicit lanes make the
// reduction order deterministic while still letting the compiler vectorize
inline float lane_dot(const float* a, const float* b, int n) {
  float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) lanes[j] += a[i + j] * b[i + j];
  for (int j = 0; i < n; ++i, ++j) lanes[j] += a[i] * b[i];
  return ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) +
         ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
}

// per-tap dot products for the weight gradient, one pass per tap over the
// read-only planes
template <int K>
void stencil_wgrad_plane(const float* gobase, const float* xpad, int xpitch,
                         float* gwblock, int Ho, int Wo) {
  for (int ky = 0; ky < K; ++ky)
    for (int kx = 0; kx < K; ++kx) {
      float acc = 0.f;
      for (int ho = 0; ho < Ho; ++ho)
        acc += lane_dot(gobase + static_cast<int64_t>(ho) * Wo,
                        xpad + static_cast<int64_t>(ho + ky) * xpitch + kx, Wo);
      gwblock[ky * K + kx] += acc;
    }
}

bool stencil_wgrad_dispatch(const float* gobase, const float* xpad, int xpitch,
                            float* gwblock, int Ho, int Wo, int kh, int kw) {
  if (kh != kw) return false;
  switch (kh) {
    case 1: stencil_wgrad_plane<1>(gobase, xpad, xpitch, gwblock, Ho, Wo); return true;
    case 3: stencil_wgrad_plane<3>(gobase, xpad, xpitch, gwblock, Ho, Wo); return true;
    case 5: stencil_wgrad_plane<5>(gobase, xpad, xpitch, gwblock, Ho, Wo); return true;
    case 7: stencil_wgrad_plane<7>(gobase, xpad, xpitch, gwblock, Ho, Wo); return true;
    default: return false;
  }
}

// backward of one tap: gx[ho*s+..] += wv * go[ho,wo]; gw += <go, x>
inline void conv_tap_bwd(const float* gobase, const float* xrow0, float* gxrow0,
                         float wv, float* gw_entry, int Ho, int Wo, int Wp,
                         int s) {
  float wacc = 0.f;
  for (int ho = 0; ho < Ho; ++ho) {
    const float* grow = gobase + static_cast<int64_t>(ho) * Wo;
    const int64_t xoff = static_cast<int64_t>(ho) * s * Wp;
    if (gxrow0) {
      float* gxr = gxrow0 + xoff;
      if (s == 1)
        axpy(gxr, grow, wv, Wo);
      else
        for (int wo = 0; wo < Wo; ++wo) gxr[wo * s] += wv * grow[wo];
    }
    if (gw_entry) {
      const float* xr = xrow0 + xoff;
      float acc = 0.f;
      if (s == 1)
        for (int wo = 0; wo < Wo; ++wo) acc += grow[wo] * xr[wo];
      else
        for (int wo = 0; wo < Wo; ++wo) acc += grow[wo] * xr[wo * s];
      wacc += acc;
    }
  }
  if (gw_entry) *gw_entry += wacc;
}

struct ConvCtx {
  Tensor x, w, b, out;
  int stride, pad;
  bool depthwise;
  std::shared_ptr<std::vector<float>> xpad;  // null when pad == 0
};

void conv_backward(const ConvCtx& c, Tape& t) {
  const int N = c.x.dim(0), Ci = c.x.dim(1), H = c.x.dim(2), W = c.x.dim(3);
  const int Co = c.out.dim(1), Ho = c.out.dim(2), Wo = c.out.dim(3);
  const int kh = c.w.dim(2), kw = c.w.dim(3);
  const int s = c.stride, p = c.pad;
  const int Hp = H + 2 * p, Wp = W + 2 * p;
  const float* xp = c.xpad ? c.xpad->data() : c.x.data();
  const std::vector<float>& go = *t.find_grad(c.out.id());
  const float* pgo = go.data();

  if (c.b.tracked()) {
    float* gb = t.grad_buf(c.b).data();
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < Co; ++co) {
        const float* g = pgo + (static_cast<int64_t>(n) * Co + co) * Ho * Wo;
        float acc = 0.f;
        for (int i = 0; i < Ho * Wo; ++i) acc += g[i];
        gb[co] += acc;
      }
  }

  const bool need_x = c.x.tracked(), need_w = c.w.tracked();
  if (!need_x && !need_w) return;
  std::vector<float> gxpad;
  if (need_x) gxpad.assign(static_cast<size_t>(N) * Ci * Hp * Wp, 0.f);
  float* gw = need_w ? t.grad_buf(c.w).data() : nullptr;
  const float* pw = c.w.data();

  // stride-1 square kernels take the stencil path: the input gradient is a
  // correlation of the margin-padded output gradient with the flipped kernel
  const bool fast = s == 1 && kh == kw &&
                    (kh == 1 || kh == 3 || kh == 5 || kh == 7);
  const int M = kh - 1;
  const int gp_pitch = Wo + 2 * M, gp_rows = Ho + 2 * M;
  std::vector<float> gopad;
  if (fast && need_x && M > 0)
    gopad.resize(static_cast<size_t>(gp_rows) * gp_pitch);
  float wflip[49];

  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co) {
      const float* gobase =
          pgo + (static_cast<int64_t>(n) * Co + co) * Ho * Wo;
      const float* gsrc = gobase;
      int gsrc_pitch = Wo;
      if (fast && need_x && M > 0) {
        std::fill(gopad.begin(), gopad.end(), 0.f);
        for (int ho = 0; ho < Ho; ++ho)
          std::memcpy(gopad.data() + (static_cast<int64_t>(ho) + M) * gp_pitch + M,
                      gobase + static_cast<int64_t>(ho) * Wo, sizeof(float) * Wo);
        gsrc = gopad.data();
        gsrc_pitch = gp_pitch;
      }
      const int ci_lo = c.depthwise ? co : 0;
      const int ci_hi = c.depthwise ? co + 1 : Ci;
      for (int ci = ci_lo; ci < ci_hi; ++ci) {
        const int64_t xplane = (static_cast<int64_t>(n) * Ci + ci) * Hp * Wp;
        const int64_t wblock =
            c.depthwise ? static_cast<int64_t>(co) * kh * kw
                        : (static_cast<int64_t>(co) * Ci + ci) * kh * kw;
        if (fast) {
          if (need_x) {
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx)
                wflip[ky * kw + kx] =
                    pw[wblock + (kh - 1 - ky) * kw + (kw - 1 - kx)];
            stencil_dispatch(gsrc, gsrc_pitch, wflip, gxpad.data() + xplane,
                             Hp, Wp, kh, kw);
          }
          if (need_w)
            stencil_wgrad_dispatch(gobase, xp + xplane, Wp, gw + wblock, Ho,
                                   Wo, kh, kw);
        } else {
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int64_t off = xplane + static_cast<int64_t>(ky) * Wp + kx;
              conv_tap_bwd(gobase, xp + off,
                           need_x ? gxpad.data() + off : nullptr,
                           pw[wblock + ky * kw + kx],
                           need_w ? gw + wblock + ky * kw + kx : nullptr, Ho,
                           Wo, Wp, s);
            }
        }
      }
    }

  if (need_x) {
    float* gx = t.grad_buf(c.x).data();
    if (p == 0) {
      accumulate(gx, gxpad.data(), static_cast<int64_t>(N) * Ci * H * W);
    } else {
      for (int nc = 0; nc < N * Ci; ++nc)
        for (int h = 0; h < H; ++h)
          accumulate(gx + (static_cast<int64_t>(nc) * H + h) * W,
                     gxpad.data() + (static_cast<int64_t>(nc) * Hp + h + p) * Wp + p,
                     W);
    }
  }
}

Tensor conv_common(const Tensor& x, const Tensor& w, const Tensor& b,
                   int stride, int pad, bool depthwise, const char* name) {
  require(x.rank() == 4 && w.rank() == 4 && b.rank() == 1,
          std::string(name) + ": expected x[N,C,H,W] w[.,.,kh,kw] b[.], got " +
              shape_str(x.shape()) + " " + shape_str(w.shape()) + " " +
              shape_str(b.shape()));
  require(stride >= 1 && pad >= 0,
          std::string(name) + ": bad stride/pad " + std::to_string(stride) +
              "/" + std::to_string(pad));
  const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (depthwise)
    require(w.dim(1) == 1 && Co == Ci,
            std::string(name) + ": weight " + shape_str(w.shape()) +
                " does not match " + std::to_string(Ci) + " channels");
  else
    require(w.dim(1) == Ci, std::string(name) + ": weight expects " +
                                std::to_string(w.dim(1)) +
                                " input channels, input has " +
                                std::to_string(Ci));
  require(b.dim(0) == Co, std::string(name) + ": bias " +
                              shape_str(b.shape()) + " vs " +
                              std::to_string(Co) + " output channels");
  const int Hp = H + 2 * pad, Wp = W + 2 * pad;
  require(Hp >= kh && Wp >= kw,
          std::string(name) + ": kernel larger than padded input");
  const int Ho = (Hp - kh) / stride + 1, Wo = (Wp - kw) / stride + 1;

  std::shared_ptr<std::vector<float>> xpad;
  const float* xp = x.data();
  if (pad > 0) {
    xpad = make_padded(xp, N, Ci, H, W, pad);
    xp = xpad->data();
  }

  Tensor out = Tensor::alloc({N, Co, Ho, Wo});
  float* po = out.raw();
  const float* pw = w.data();
  const float* pb = b.data();
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co) {
      float* obase = po + (static_cast<int64_t>(n) * Co + co) * Ho * Wo;
      std::fill(obase, obase + static_cast<int64_t>(Ho) * Wo, pb[co]);
      const int ci_lo = depthwise ? co : 0;
      const int ci_hi = depthwise ? co + 1 : Ci;
      for (int ci = ci_lo; ci < ci_hi; ++ci) {
        const int64_t xplane = (static_cast<int64_t>(n) * Ci + ci) * Hp * Wp;
        const int64_t wblock =
            depthwise ? static_cast<int64_t>(co) * kh * kw
                      : (static_cast<int64_t>(co) * Ci + ci) * kh * kw;
        if (stride == 1 && stencil_dispatch(xp + xplane, Wp, pw + wblock,
                                            obase, Ho, Wo, kh, kw))
          continue;
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx)
            conv_tap_fwd(obase,
                         xp + xplane + static_cast<int64_t>(ky) * Wp + kx,
                         pw[wblock + ky * kw + kx], Ho, Wo, Wp, stride);
      }
    }

  if (recording({&x, &w, &b})) {
    out.mark_tracked();
    ConvCtx ctx{x, w, b, out, stride, pad, depthwise, xpad};
    Tape::active()->add_node(
        out, [ctx = std::move(ctx)](Tape& t) { conv_backward(ctx, t); });
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
  return conv_common(x, w, b, stride, pad, false, "conv2d");
}

Tensor conv2d_dw(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                 int pad) {
  return conv_common(x, w, b, stride, pad, true, "conv2d_dw");
}

// ---- shape / layout -------------------------------------------------------

Tensor upsample_nearest(const Tensor& x, int factor) {
  require(x.rank() == 4 && factor >= 1,
          "upsample_nearest: bad input " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int r = factor, Hr = H * r, Wr = W * r;
  Tensor out = Tensor::alloc({N, C, Hr, Wr});
  const float* px = x.data();
  float* po = out.raw();
  for (int nc = 0; nc < N * C; ++nc)
    for (int h = 0; h < H; ++h) {
      const float* xr = px + (static_cast<int64_t>(nc) * H + h) * W;
      for (int dy = 0; dy < r; ++dy) {
        float* orow =
            po + (static_cast<int64_t>(nc) * Hr + h * r + dy) * Wr;
        for (int w0 = 0; w0 < W; ++w0)
          for (int dx = 0; dx < r; ++dx) orow[w0 * r + dx] = xr[w0];
      }
    }
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out, r](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(out.id());
      float* gx = t.grad_buf(x).data();
      const int N2 = x.dim(0), C2 = x.dim(1), H2 = x.dim(2), W2 = x.dim(3);
      const int Hr2 = H2 * r, Wr2 = W2 * r;
      for (int nc = 0; nc < N2 * C2; ++nc)
        for (int h = 0; h < H2; ++h) {
          float* gxr = gx + (static_cast<int64_t>(nc) * H2 + h) * W2;
          for (int dy = 0; dy < r; ++dy) {
            const float* grow =
                go.data() + (static_cast<int64_t>(nc) * Hr2 + h * r + dy) * Wr2;
            for (int w0 = 0; w0 < W2; ++w0)
              for (int dx = 0; dx < r; ++dx) gxr[w0] += grow[w0 * r + dx];
          }
        }
    });
  }
  return out;
}

Tensor space_to_depth(const Tensor& x, int r) {
  require(x.rank() == 4 && r >= 1, "space_to_depth: bad input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % r == 0 && W % r == 0,
          "space_to_depth: " + shape_str(x.shape()) +
              " not divisible by factor " + std::to_string(r));
  const int Ho = H / r, Wo = W / r, Co = C * r * r;
  Tensor out = Tensor::alloc({N, Co, Ho, Wo});
  const float* px = x.data();
  float* po = out.raw();
  for (int n = 0; n < N; ++n)
    for (int p = 0; p < r * r; ++p) {
      const int dy = p / r, dx = p % r;
      for (int c = 0; c < C; ++c) {
        const float* src = px + (static_cast<int64_t>(n) * C + c) * H * W;
        float* dst =
            po + (static_cast<int64_t>(n) * Co + p * C + c) * Ho * Wo;
        for (int ho = 0; ho < Ho; ++ho)
          for (int wo = 0; wo < Wo; ++wo)
            dst[static_cast<int64_t>(ho) * Wo + wo] =
                src[(static_cast<int64_t>(ho) * r + dy) * W + wo * r + dx];
      }
    }
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out, r](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(out.id());
      float* gx = t.grad_buf(x).data();
      const int N2 = x.dim(0), C2 = x.dim(1), H2 = x.dim(2), W2 = x.dim(3);
      const int Ho2 = H2 / r, Wo2 = W2 / r, Co2 = C2 * r * r;
      for (int n = 0; n < N2; ++n)
        for (int p = 0; p < r * r; ++p) {
          const int dy = p / r, dx = p % r;
          for (int c = 0; c < C2; ++c) {
            float* dst = gx + (static_cast<int64_t>(n) * C2 + c) * H2 * W2;
            const float* src =
                go.data() +
                (static_cast<int64_t>(n) * Co2 + p * C2 + c) * Ho2 * Wo2;
            for (int ho = 0; ho < Ho2; ++ho)
              for (int wo = 0; wo < Wo2; ++wo)
                dst[(static_cast<int64_t>(ho) * r + dy) * W2 + wo * r + dx] +=
                    src[static_cast<int64_t>(ho) * Wo2 + wo];
          }
        }
    });
  }
  return out;
}

Tensor depth_to_space(const Tensor& x, int r) {
  require(x.rank() == 4 && r >= 1, "depth_to_space: bad input");
  const int N = x.dim(0), C4 = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(C4 % (r * r) == 0, "depth_to_space: " + std::to_string(C4) +
                                 " channels not divisible by " +
                                 std::to_string(r * r));
  const int C = C4 / (r * r), Hr = H * r, Wr = W * r;
  Tensor out = Tensor::alloc({N, C, Hr, Wr});
  const float* px = x.data();
  float* po = out.raw();
  for (int n = 0; n < N; ++n)
    for (int p = 0; p < r * r; ++p) {
      const int dy = p / r, dx = p % r;
      for (int c = 0; c < C; ++c) {
        const float* src = px + (static_cast<int64_t>(n) * C4 + p * C + c) * H * W;
        float* dst = po + (static_cast<int64_t>(n) * C + c) * Hr * Wr;
        for (int h = 0; h < H; ++h)
          for (int w0 = 0; w0 < W; ++w0)
            dst[(static_cast<int64_t>(h) * r + dy) * Wr + w0 * r + dx] =
                src[static_cast<int64_t>(h) * W + w0];
      }
    }
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out, r](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(out.id());
      float* gx = t.grad_buf(x).data();
      const int N2 = x.dim(0), C42 = x.dim(1), H2 = x.dim(2), W2 = x.dim(3);
      const int C = C42 / (r * r), Hr2 = H2 * r, Wr2 = W2 * r;
      for (int n = 0; n < N2; ++n)
        for (int p = 0; p < r * r; ++p) {
          const int dy = p / r, dx = p % r;
          for (int c = 0; c < C; ++c) {
            float* dst =
                gx + (static_cast<int64_t>(n) * C42 + p * C + c) * H2 * W2;
            const float* src =
                go.data() + (static_cast<int64_t>(n) * C + c) * Hr2 * Wr2;
            for (int h = 0; h < H2; ++h)
              for (int w0 = 0; w0 < W2; ++w0)
                dst[static_cast<int64_t>(h) * W2 + w0] +=
                    src[(static_cast<int64_t>(h) * r + dy) * Wr2 + w0 * r + dx];
          }
        }
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.rank() == 4 && b.rank() == 4 && a.dim(0) == b.dim(0) &&
              a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: incompatible " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const int H = a.dim(2), W = a.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor out = Tensor::alloc({N, Ca + Cb, H, W});
  float* po = out.raw();
  for (int n = 0; n < N; ++n) {
    std::memcpy(po + static_cast<int64_t>(n) * (Ca + Cb) * plane,
                a.data() + static_cast<int64_t>(n) * Ca * plane,
                sizeof(float) * Ca * plane);
    std::memcpy(po + (static_cast<int64_t>(n) * (Ca + Cb) + Ca) * plane,
                b.data() + static_cast<int64_t>(n) * Cb * plane,
                sizeof(float) * Cb * plane);
  }
  if (recording({&a, &b})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [a, b, out](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      const int N2 = a.dim(0), Ca2 = a.dim(1), Cb2 = b.dim(1);
      const int64_t plane2 = static_cast<int64_t>(a.dim(2)) * a.dim(3);
      if (a.tracked()) {
        float* ga = t.grad_buf(a).data();
        for (int n = 0; n < N2; ++n)
          accumulate(ga + static_cast<int64_t>(n) * Ca2 * plane2,
                     go.data() + static_cast<int64_t>(n) * (Ca2 + Cb2) * plane2,
                     Ca2 * plane2);
      }
      if (b.tracked()) {
        float* gb = t.grad_buf(b).data();
        for (int n = 0; n < N2; ++n)
          accumulate(gb + static_cast<int64_t>(n) * Cb2 * plane2,
                     go.data() +
                         (static_cast<int64_t>(n) * (Ca2 + Cb2) + Ca2) * plane2,
                     Cb2 * plane2);
      }
    });
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, int c0) {
  require(x.rank() == 4, "split_channels: expected [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(c0 > 0 && c0 < C, "split_channels: split point " +
                                std::to_string(c0) + " out of range for " +
                                std::to_string(C) + " channels");
  const int64_t plane = static_cast<int64_t>(H) * W;
  Tensor front = Tensor::alloc({N, c0, H, W});
  Tensor back = Tensor::alloc({N, C - c0, H, W});
  for (int n = 0; n < N; ++n) {
    std::memcpy(front.raw() + static_cast<int64_t>(n) * c0 * plane,
                x.data() + static_cast<int64_t>(n) * C * plane,
                sizeof(float) * c0 * plane);
    std::memcpy(back.raw() + static_cast<int64_t>(n) * (C - c0) * plane,
                x.data() + (static_cast<int64_t>(n) * C + c0) * plane,
                sizeof(float) * (C - c0) * plane);
  }
  if (recording({&x})) {
    front.mark_tracked();
    back.mark_tracked();
    Tape* tape = Tape::active();
    tape->add_node(front, [x, front, c0](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(front.id());
      float* gx = t.grad_buf(x).data();
      const int N2 = x.dim(0), C2 = x.dim(1);
      const int64_t plane2 = static_cast<int64_t>(x.dim(2)) * x.dim(3);
      for (int n = 0; n < N2; ++n)
        accumulate(gx + static_cast<int64_t>(n) * C2 * plane2,
                   go.data() + static_cast<int64_t>(n) * c0 * plane2,
                   c0 * plane2);
    });
    tape->add_node(back, [x, back, c0](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(back.id());
      float* gx = t.grad_buf(x).data();
      const int N2 = x.dim(0), C2 = x.dim(1);
      const int64_t plane2 = static_cast<int64_t>(x.dim(2)) * x.dim(3);
      for (int n = 0; n < N2; ++n)
        accumulate(gx + (static_cast<int64_t>(n) * C2 + c0) * plane2,
                   go.data() + static_cast<int64_t>(n) * (C2 - c0) * plane2,
                   (C2 - c0) * plane2);
    });
  }
  return {front, back};
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() == 4, "global_avg_pool: expected [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor out = Tensor::alloc({N, C});
  const float* px = x.data();
  float* po = out.raw();
  for (int nc = 0; nc < N * C; ++nc) {
    double acc = 0.0;
    const float* p = px + static_cast<int64_t>(nc) * plane;
    for (int64_t i = 0; i < plane; ++i) acc += p[i];
    po[nc] = static_cast<float>(acc / static_cast<double>(plane));
  }
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out, plane](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(out.id());
      float* gx = t.grad_buf(x).data();
      const int NC = x.dim(0) * x.dim(1);
      for (int nc = 0; nc < NC; ++nc) {
        const float g = go[nc] / static_cast<float>(plane);
        float* p = gx + static_cast<int64_t>(nc) * plane;
        for (int64_t i = 0; i < plane; ++i) p[i] += g;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
              " changes element count");
  Tensor out = Tensor::alloc(shape);
  std::memcpy(out.raw(), x.data(), sizeof(float) * x.numel());
  if (recording({&x})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, out](Tape& t) {
      if (!x.tracked()) return;
      const std::vector<float>& go = *t.find_grad(out.id());
      accumulate(t.grad_buf(x).data(), go.data(), x.numel());
    });
  }
  return out;
}

// ---- channel broadcast ----------------------------------------------------

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require(x.rank() == 4, "add_channel_bias: expected [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  const bool per_sample = b.rank() == 2;
  require((b.rank() == 1 && b.dim(0) == C) ||
              (per_sample && b.dim(0) == N && b.dim(1) == C),
          "add_channel_bias: bias " + shape_str(b.shape()) +
              " incompatible with " + shape_str(x.shape()));
  Tensor out = Tensor::alloc(x.shape());
  const float* px = x.data();
  const float* pb = b.data();
  float* po = out.raw();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float bv = per_sample ? pb[static_cast<int64_t>(n) * C + c] : pb[c];
      const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) po[off + i] = px[off + i] + bv;
    }
  if (recording({&x, &b})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, b, out, per_sample, plane](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      if (x.tracked())
        accumulate(t.grad_buf(x).data(), go.data(), x.numel());
      if (b.tracked()) {
        float* gb = t.grad_buf(b).data();
        const int N2 = x.dim(0), C2 = x.dim(1);
        for (int n = 0; n < N2; ++n)
          for (int c = 0; c < C2; ++c) {
            const float* g =
                go.data() + (static_cast<int64_t>(n) * C2 + c) * plane;
            float acc = 0.f;
            for (int64_t i = 0; i < plane; ++i) acc += g[i];
            gb[per_sample ? static_cast<int64_t>(n) * C2 + c : c] += acc;
          }
      }
    });
  }
  return out;
}

Tensor mul_channel(const Tensor& x, const Tensor& s) {
  require(x.rank() == 4 && s.rank() == 2 && s.dim(0) == x.dim(0) &&
              s.dim(1) == x.dim(1),
          "mul_channel: scale " + shape_str(s.shape()) +
              " incompatible with " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor out = Tensor::alloc(x.shape());
  const float* px = x.data();
  const float* ps = s.data();
  float* po = out.raw();
  for (int nc = 0; nc < N * C; ++nc) {
    const float sv = ps[nc];
    const int64_t off = static_cast<int64_t>(nc) * plane;
    for (int64_t i = 0; i < plane; ++i) po[off + i] = px[off + i] * sv;
  }
  if (recording({&x, &s})) {
    out.mark_tracked();
    Tape::active()->add_node(out, [x, s, out, plane](Tape& t) {
      const std::vector<float>& go = *t.find_grad(out.id());
      const int NC = x.dim(0) * x.dim(1);
      if (x.tracked()) {
        float* gx = t.grad_buf(x).data();
        const float* ps2 = s.data();
        for (int nc = 0; nc < NC; ++nc)
          axpy(gx + static_cast<int64_t>(nc) * plane,
               go.data() + static_cast<int64_t>(nc) * plane, ps2[nc], plane);
      }
      if (s.tracked()) {
        float* gs = t.grad_buf(s).data();
        const float* px2 = x.data();
        for (int nc = 0; nc < NC; ++nc) {
          const int64_t off = static_cast<int64_t>(nc) * plane;
          float acc = 0.f;
          for (int64_t i = 0; i < plane; ++i)
            acc += go[off + i] * px2[off + i];
          gs[nc] += acc;
        }
      }
    });
  }
  return out;
}

}  // namespace indigo
