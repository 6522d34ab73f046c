// Benchmark of the OpenMP kernels against their serial reference twins.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "gf/kernels.h"
#include "gf/mesh.h"
#include "gf/parallel.h"
#include "gf/rng.h"

using namespace gf;

namespace {

double time_best_of(const std::function<void()>& fn, int reps = 5) {
  double best = 1e18;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

void row(const char* name, double serial_s, double parallel_s) {
  std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name,
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) par::set_threads(std::atoi(argv[1]));
  std::printf("threads: %d\n", par::threads());
  Rng rng(1);

  const int out = 512, in = 6012, b = 8;
  std::vector<double> w(static_cast<std::size_t>(out) * in), xt(in * b),
      yt(static_cast<std::size_t>(out) * b), bias(out);
  for (auto& v : w) v = rng.uniform(-1, 1);
  for (auto& v : xt) v = rng.uniform(-1, 1);

  row("matmul_tb 512x6012x8",
      time_best_of([&] {
        kernels::ref::matmul_tb(w.data(), out, in, xt.data(), b, bias.data(), yt.data());
      }),
      time_best_of([&] {
        kernels::matmul_tb(w.data(), out, in, xt.data(), b, bias.data(), yt.data());
      }));

  std::vector<double> dyt(static_cast<std::size_t>(out) * b),
      dxt(static_cast<std::size_t>(in) * b);
  for (auto& v : dyt) v = rng.uniform(-1, 1);
  row("matmul_at_b",
      time_best_of(
          [&] { kernels::ref::matmul_at_b(w.data(), out, in, dyt.data(), b, dxt.data()); }),
      time_best_of(
          [&] { kernels::matmul_at_b(w.data(), out, in, dyt.data(), b, dxt.data()); }));

  std::vector<double> dw(static_cast<std::size_t>(out) * in, 0.0);
  row("accum_outer",
      time_best_of(
          [&] { kernels::ref::accum_outer(dyt.data(), xt.data(), out, in, b, dw.data()); }),
      time_best_of(
          [&] { kernels::accum_outer(dyt.data(), xt.data(), out, in, b, dw.data()); }));

  std::vector<double> logits(272 * 50);
  for (auto& v : logits) v = rng.uniform(-3, 3);
  std::vector<double> probe = logits;
  row("softmax_rows 272x50",
      time_best_of([&] {
        probe = logits;
        kernels::ref::softmax_rows(probe.data(), 272, 50);
      }),
      time_best_of([&] {
        probe = logits;
        kernels::softmax_rows(probe.data(), 272, 50);
      }));

  std::vector<double> big(1 << 22);
  for (auto& v : big) v = rng.uniform(-1, 1);
  row("det_sum 4M",
      time_best_of([&] { (void)kernels::ref::det_sum(big.data(), big.size()); }),
      time_best_of([&] { (void)kernels::det_sum(big.data(), big.size()); }));

  std::vector<Vec3> source(272), target(1002);
  for (auto& v : source) v = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
  for (auto& v : target) v = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
  row("knn 272->1002 k=50",
      time_best_of([&] { (void)ref::knn_points(source, target, 50); }),
      time_best_of([&] { (void)knn_points(source, target, 50); }));
  row("nearest 272->1002",
      time_best_of([&] { (void)ref::nearest_vertex(source, target); }),
      time_best_of([&] { (void)nearest_vertex(source, target); }));
  return 0;
}
