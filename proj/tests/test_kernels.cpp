#include "gf/kernels.h"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "gf/rng.h"

using namespace gf;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b,
                 double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <=
          tol * (1.0 + std::abs(a[i]) + std::abs(b[i])));
  }
}

}  // namespace

TEST_CASE("matmul_tb matches the serial reference") {
  Rng rng(1);
  const int out = 37, in = 211, b = 8;
  const auto w = random_vec(rng, static_cast<std::size_t>(out) * in);
  const auto x = random_vec(rng, static_cast<std::size_t>(in) * b);
  const auto bias = random_vec(rng, out);
  std::vector<double> y(static_cast<std::size_t>(out) * b), yr = y;
  kernels::matmul_tb(w.data(), out, in, x.data(), b, bias.data(), y.data());
  kernels::ref::matmul_tb(w.data(), out, in, x.data(), b, bias.data(), yr.data());
  check_close(y, yr, 1e-12);
}

TEST_CASE("matmul_at_b matches the serial reference") {
  Rng rng(2);
  const int out = 64, in = 1300, b = 8;
  const auto w = random_vec(rng, static_cast<std::size_t>(out) * in);
  const auto dy = random_vec(rng, static_cast<std::size_t>(out) * b);
  std::vector<double> dx(static_cast<std::size_t>(in) * b), dxr = dx;
  kernels::matmul_at_b(w.data(), out, in, dy.data(), b, dx.data());
  kernels::ref::matmul_at_b(w.data(), out, in, dy.data(), b, dxr.data());
  check_close(dx, dxr, 1e-12);
}

TEST_CASE("accum_outer matches the serial reference and accumulates") {
  Rng rng(3);
  const int out = 45, in = 1100, b = 8;
  const auto dy = random_vec(rng, static_cast<std::size_t>(out) * b);
  const auto x = random_vec(rng, static_cast<std::size_t>(in) * b);
  auto dw = random_vec(rng, static_cast<std::size_t>(out) * in, 0.1);
  auto dwr = dw;
  kernels::accum_outer(dy.data(), x.data(), out, in, b, dw.data());
  kernels::ref::accum_outer(dy.data(), x.data(), out, in, b, dwr.data());
  check_close(dw, dwr, 1e-12);
}

TEST_CASE("softmax rows: zeros give uniform, saturation gives one-hot") {
  std::vector<double> a(2 * 5, 0.0);
  a[5 + 2] = 50.0;
  kernels::softmax_rows(a.data(), 2, 5);
  for (int j = 0; j < 5; ++j) CHECK(a[j] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(a[5 + 2] > 1.0 - 1e-6);

  Rng rng(4);
  auto b = random_vec(rng, 7 * 11, 3.0);
  auto br = b;
  kernels::softmax_rows(b.data(), 7, 11);
  kernels::ref::softmax_rows(br.data(), 7, 11);
  check_close(b, br, 1e-12);
  for (int r = 0; r < 7; ++r) {
    double s = 0.0;
    for (int j = 0; j < 11; ++j) s += b[r * 11 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("det_sum is exact vs serial on chunk-friendly orders") {
  Rng rng(5);
  const auto v = random_vec(rng, 100000);
  const double a = kernels::det_sum(v.data(), v.size());
  const double b = kernels::ref::det_sum(v.data(), v.size());
  CHECK(std::abs(a - b) < 1e-9);
  // Repeatability is bitwise.
  CHECK(a == kernels::det_sum(v.data(), v.size()));
}

TEST_CASE("adam refuses non-finite gradients") {
  std::vector<double> p = {1.0, 2.0}, m = {0, 0}, v = {0, 0};
  std::vector<double> g = {0.1, std::nan("")};
  kernels::AdamHyper h;
  CHECK_FALSE(kernels::adam_update(p.data(), g.data(), m.data(), v.data(), 2, 1, h));
  CHECK(p[0] == 1.0);  // untouched
  CHECK(m[0] == 0.0);
}
