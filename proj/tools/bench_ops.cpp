// Microbenchmark for the convolution kernels that dominate training and
// sampling time. Prints effective GMAC/s for forward and forward+backward.

#include <chrono>
#include <cstdio>

#include "indigo/ops.hpp"
#include "indigo/rng.hpp"
#include "indigo/tensor.hpp"

using namespace indigo;

namespace {

Tensor randn(Rng& rng, Shape shape, float scale, bool grad) {
  Tensor t = Tensor::from_data(shape, rng.normal_vec(shape_numel(shape)), grad);
  float* p = t.raw();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] *= scale;
  return t;
}

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void bench_case(const char* name, int N, int Ci, int H, int W, int Co, int k,
                int stride, bool backward) {
  Rng rng(7);
  Tensor x = randn(rng, {N, Ci, H, W}, 1.f, backward);
  Tensor w = randn(rng, {Co, Ci, k, k}, 0.05f, backward);
  Tensor b = randn(rng, {Co}, 0.05f, backward);
  const int pad = k / 2;
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  const double macs =
      static_cast<double>(N) * Co * Ho * Wo * Ci * k * k * (backward ? 3 : 1);

  // warm up once, then time enough repetitions for ~0.3 s
  int reps = 1;
  double elapsed = 0;
  for (int round = 0; round < 8 && elapsed < 0.3; ++round, reps *= 2) {
    const double t0 = now_s();
    for (int i = 0; i < reps; ++i) {
      if (backward) {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor out = conv2d(x, w, b, stride, pad);
        Tensor loss = sum(out);
        tape.backward(loss);
      } else {
        Tensor out = conv2d(x, w, b, stride, pad);
        (void)out;
      }
    }
    elapsed = now_s() - t0;
  }
  reps /= 2;
  std::printf("%-34s %7.2f GMAC/s  (%.1f ms/iter)\n", name,
              macs * reps / elapsed * 1e-9, elapsed / reps * 1e3);
}

}  // namespace

int main() {
  std::printf("convolution throughput (single thread)\n");
  bench_case("fwd 16x32x32x32 k3", 16, 32, 32, 32, 32, 3, 1, false);
  bench_case("fwd 16x32x32x32 k5", 16, 32, 32, 32, 32, 5, 1, false);
  bench_case("fwd 16x64x16x16 k3", 16, 64, 16, 16, 64, 3, 1, false);
  bench_case("fwd 1x32x32x32 k5", 1, 32, 32, 32, 32, 5, 1, false);
  bench_case("fwd+bwd 16x32x32x32 k3", 16, 32, 32, 32, 32, 3, 1, true);
  bench_case("fwd+bwd 16x32x32x32 k5", 16, 32, 32, 32, 32, 5, 1, true);
  bench_case("fwd+bwd 16x64x16x16 k3", 16, 64, 16, 16, 64, 3, 1, true);
  return 0;
}
