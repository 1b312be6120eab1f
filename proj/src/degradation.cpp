#include "indigo/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "indigo/ops.hpp"

namespace indigo {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// half-sample symmetric reflection, applied repeatedly for very wide kernels
int fold_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0)
      i = -1 - i;
    else
      i = 2 * n - 1 - i;
  }
  return i;
}

// folded source index for every tap position of a 1-D pass
std::vector<int> fold_table(int n, int radius) {
  std::vector<int> tab(static_cast<size_t>(n + 2 * radius));
  for (int i = 0; i < n + 2 * radius; ++i)
    tab[static_cast<size_t>(i)] = fold_index(i - radius, n);
  return tab;
}

struct ResamplePlan {
  // per destination sample: source indices (already clamped) and weights
  std::vector<std::vector<int>> idx;
  std::vector<std::vector<double>> w;
};

double cubic_catmull(double t) {
  constexpr double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

ResamplePlan resample_plan(int n_src, int n_dst) {
  ResamplePlan plan;
  plan.idx.resize(static_cast<size_t>(n_dst));
  plan.w.resize(static_cast<size_t>(n_dst));
  const double scale = static_cast<double>(n_src) / n_dst;
  const double kscale = std::max(1.0, scale);  // widen kernel when shrinking
  const double support = 2.0 * kscale;
  for (int j = 0; j < n_dst; ++j) {
    const double center = (j + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::ceil(center - support));
    const int hi = static_cast<int>(std::floor(center + support));
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
      const double wv = cubic_catmull((i - center) / kscale);
      if (wv == 0.0) continue;
      plan.idx[static_cast<size_t>(j)].push_back(std::clamp(i, 0, n_src - 1));
      plan.w[static_cast<size_t>(j)].push_back(wv);
      total += wv;
    }
    for (double& wv : plan.w[static_cast<size_t>(j)]) wv /= total;
  }
  return plan;
}

// ---- JPEG internals -------------------------------------------------------

constexpr int kBaseLuminance[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   // row 0
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

struct DctMatrix {
  double d[8][8];
  DctMatrix() {
    const double pi = 3.14159265358979323846;
    for (int u = 0; u < 8; ++u) {
      const double c = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int j = 0; j < 8; ++j)
        d[u][j] = c * std::cos((2.0 * j + 1.0) * u * pi / 16.0);
    }
  }
};

const DctMatrix& dct_matrix() {
  static const DctMatrix m;
  return m;
}

// one 8x8 block: level shift, DCT, quantize, dequantize, inverse DCT
void jpeg_block(double* block, const std::vector<int>& quant) {
  double shifted[64], coef[64];
  for (int i = 0; i < 64; ++i) shifted[i] = block[i] - 128.0;
  dct8x8(shifted, coef);
  for (int i = 0; i < 64; ++i) {
    const double q = static_cast<double>(quant[static_cast<size_t>(i)]);
    coef[i] = std::round(coef[i] / q) * q;
  }
  idct8x8(coef, shifted);
  for (int i = 0; i < 64; ++i) block[i] = shifted[i] + 128.0;
}

}  // namespace

void dct8x8(const double in[64], double out[64]) {
  const auto& m = dct_matrix();
  double tmp[8][8];
  // out = D * in * D^T
  for (int u = 0; u < 8; ++u)
    for (int j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += m.d[u][k] * in[k * 8 + j];
      tmp[u][j] = acc;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += tmp[u][k] * m.d[v][k];
      out[u * 8 + v] = acc;
    }
}

void idct8x8(const double in[64], double out[64]) {
  const auto& m = dct_matrix();
  double tmp[8][8];
  // out = D^T * in * D
  for (int j = 0; j < 8; ++j)
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += m.d[k][j] * in[k * 8 + v];
      tmp[j][v] = acc;
    }
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += tmp[j][k] * m.d[k][i];
      out[j * 8 + i] = acc;
    }
}

DegradationParams degradation_preset(const std::string& name) {
  if (name == "mild") return {4.0, 4, 15.0, 70};
  if (name == "medium") return {6.0, 4, 25.0, 50};
  if (name == "severe") return {8.0, 4, 35.0, 30};
  throw std::runtime_error("unknown degradation preset '" + name + "'");
}

DegradationParams sample_degradation(const DegradationRange& range, Rng& rng,
                                     int factor) {
  DegradationParams p;
  p.sigma = rng.uniform(range.sigma_lo, range.sigma_hi);
  p.delta = rng.uniform(range.delta_lo, range.delta_hi);
  p.quality = rng.uniform_int(range.quality_lo, range.quality_hi);
  p.factor = factor;
  return p;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

Tensor gaussian_blur(const Tensor& x, double sigma) {
  require(x.rank() == 4, "gaussian_blur: expected [N,C,H,W]");
  const auto kern = gaussian_kernel(sigma);
  const int radius = (static_cast<int>(kern.size()) - 1) / 2;
  if (radius == 0) return x;
  const int NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto foldw = fold_table(W, radius);
  const auto foldh = fold_table(H, radius);
  Tensor out = Tensor::alloc(x.shape());
  std::vector<double> tmp(static_cast<size_t>(H) * W);
  for (int nc = 0; nc < NC; ++nc) {
    const float* src = x.data() + static_cast<int64_t>(nc) * H * W;
    float* dst = out.raw() + static_cast<int64_t>(nc) * H * W;
    for (int h = 0; h < H; ++h)
      for (int w0 = 0; w0 < W; ++w0) {
        double acc = 0.0;
        for (int i = 0; i < 2 * radius + 1; ++i)
          acc += kern[static_cast<size_t>(i)] *
                 src[static_cast<int64_t>(h) * W + foldw[static_cast<size_t>(w0 + i)]];
        tmp[static_cast<size_t>(h) * W + w0] = acc;
      }
    for (int h = 0; h < H; ++h)
      for (int w0 = 0; w0 < W; ++w0) {
        double acc = 0.0;
        for (int i = 0; i < 2 * radius + 1; ++i)
          acc += kern[static_cast<size_t>(i)] *
                 tmp[static_cast<size_t>(foldh[static_cast<size_t>(h + i)]) * W + w0];
        dst[static_cast<int64_t>(h) * W + w0] = static_cast<float>(acc);
      }
  }
  return out;
}

Tensor downsample_area(const Tensor& x, int r) {
  require(x.rank() == 4, "downsample_area: expected [N,C,H,W]");
  const int NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  require(r >= 1 && H % r == 0 && W % r == 0,
          "downsample_area: " + shape_str(x.shape()) +
              " not divisible by factor " + std::to_string(r));
  const int Ho = H / r, Wo = W / r;
  Tensor out = Tensor::alloc({x.dim(0), x.dim(1), Ho, Wo});
  const double inv = 1.0 / (static_cast<double>(r) * r);
  for (int nc = 0; nc < NC; ++nc) {
    const float* src = x.data() + static_cast<int64_t>(nc) * H * W;
    float* dst = out.raw() + static_cast<int64_t>(nc) * Ho * Wo;
    for (int ho = 0; ho < Ho; ++ho)
      for (int wo = 0; wo < Wo; ++wo) {
        double acc = 0.0;
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx)
            acc += src[(static_cast<int64_t>(ho) * r + dy) * W + wo * r + dx];
        dst[static_cast<int64_t>(ho) * Wo + wo] = static_cast<float>(acc * inv);
      }
  }
  return out;
}

Tensor resize_bicubic(const Tensor& x, int out_h, int out_w) {
  require(x.rank() == 4 && out_h >= 1 && out_w >= 1,
          "resize_bicubic: bad arguments");
  const int NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const ResamplePlan ph = resample_plan(H, out_h);
  const ResamplePlan pw = resample_plan(W, out_w);
  Tensor out = Tensor::alloc({x.dim(0), x.dim(1), out_h, out_w});
  std::vector<double> tmp(static_cast<size_t>(H) * out_w);
  for (int nc = 0; nc < NC; ++nc) {
    const float* src = x.data() + static_cast<int64_t>(nc) * H * W;
    float* dst = out.raw() + static_cast<int64_t>(nc) * out_h * out_w;
    for (int h = 0; h < H; ++h)
      for (int j = 0; j < out_w; ++j) {
        const auto& idx = pw.idx[static_cast<size_t>(j)];
        const auto& wgt = pw.w[static_cast<size_t>(j)];
        double acc = 0.0;
        for (size_t k = 0; k < idx.size(); ++k)
          acc += wgt[k] * src[static_cast<int64_t>(h) * W + idx[k]];
        tmp[static_cast<size_t>(h) * out_w + j] = acc;
      }
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j) {
        const auto& idx = ph.idx[static_cast<size_t>(i)];
        const auto& wgt = ph.w[static_cast<size_t>(i)];
        double acc = 0.0;
        for (size_t k = 0; k < idx.size(); ++k)
          acc += wgt[k] * tmp[static_cast<size_t>(idx[k]) * out_w + j];
        dst[static_cast<int64_t>(i) * out_w + j] = static_cast<float>(acc);
      }
  }
  return out;
}

Tensor add_gaussian_noise(const Tensor& x, double delta, Rng& rng) {
  if (delta == 0.0) return x;
  Tensor out = Tensor::alloc(x.shape());
  const float* src = x.data();
  float* dst = out.raw();
  const double s = delta / 255.0;
  for (int64_t i = 0; i < x.numel(); ++i)
    dst[i] = static_cast<float>(src[i] + s * rng.normal());
  return out;
}

std::vector<int> jpeg_quant_table(int quality) {
  require(quality >= 1 && quality <= 100,
          "jpeg_quant_table: quality " + std::to_string(quality) +
              " outside [1,100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::vector<int> table(64);
  for (int i = 0; i < 64; ++i)
    table[static_cast<size_t>(i)] =
        std::clamp((kBaseLuminance[i] * scale + 50) / 100, 1, 255);
  return table;
}

Tensor jpeg_roundtrip(const Tensor& x, int quality) {
  require(x.rank() == 4, "jpeg_roundtrip: expected [N,C,H,W]");
  const auto quant = jpeg_quant_table(quality);
  const int NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Hb = (H + 7) / 8 * 8, Wb = (W + 7) / 8 * 8;
  std::vector<double> plane(static_cast<size_t>(Hb) * Wb);
  Tensor out = Tensor::alloc(x.shape());
  for (int nc = 0; nc < NC; ++nc) {
    const float* src = x.data() + static_cast<int64_t>(nc) * H * W;
    float* dst = out.raw() + static_cast<int64_t>(nc) * H * W;
    for (int h = 0; h < Hb; ++h)
      for (int w0 = 0; w0 < Wb; ++w0)
        plane[static_cast<size_t>(h) * Wb + w0] =
            255.0 * std::clamp(src[static_cast<int64_t>(std::min(h, H - 1)) * W +
                                   std::min(w0, W - 1)],
                               0.f, 1.f);
    double block[64];
    for (int by = 0; by < Hb; by += 8)
      for (int bx = 0; bx < Wb; bx += 8) {
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j)
            block[i * 8 + j] = plane[static_cast<size_t>(by + i) * Wb + bx + j];
        jpeg_block(block, quant);
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j)
            plane[static_cast<size_t>(by + i) * Wb + bx + j] = block[i * 8 + j];
      }
    for (int h = 0; h < H; ++h)
      for (int w0 = 0; w0 < W; ++w0)
        dst[static_cast<int64_t>(h) * W + w0] = static_cast<float>(
            std::clamp(plane[static_cast<size_t>(h) * Wb + w0] / 255.0, 0.0, 1.0));
  }
  return out;
}

Tensor degrade(const Tensor& x, const DegradationParams& p, Rng& rng) {
  require(p.factor >= 1, "degrade: decimation factor must be positive");
  require(p.quality >= 0 && p.quality <= 100,
          "degrade: quality " + std::to_string(p.quality) + " outside [0,100]");
  Tensor y = gaussian_blur(x, p.sigma);
  if (p.factor > 1) y = downsample_area(y, p.factor);
  y = add_gaussian_noise(y, p.delta, rng);
  y = clamp01(y);
  if (p.quality >= 1) y = jpeg_roundtrip(y, p.quality);
  return y;
}

}  // namespace indigo
