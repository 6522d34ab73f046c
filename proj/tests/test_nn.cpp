#include "gf/nn.h"

#include <cmath>

#include "doctest.h"
#include "gf/rng.h"

using namespace gf;
using nn::Activation;
using nn::BatchMat;
using nn::DenseNet;

namespace {

DenseNet small_net(Rng& rng) {
  DenseNet net = DenseNet::make({{6, 9, Activation::kRelu},
                                 {9, 7, Activation::kRelu},
                                 {7, 4, Activation::kLinear}});
  nn::he_init(net, rng);
  return net;
}

BatchMat random_batch(Rng& rng, int dim, int batch, double scale = 1.0) {
  BatchMat x(dim, batch);
  for (auto& v : x.a) v = rng.uniform(-scale, scale);
  return x;
}

}  // namespace

TEST_CASE("forward: zero net maps to zero, identity layer passes through") {
  DenseNet zero = DenseNet::make({{5, 3, Activation::kLinear}});
  BatchMat x(5, 2);
  for (auto& v : x.a) v = 1.5;
  const BatchMat y = nn::forward(zero, x, nullptr);
  for (double v : y.a) CHECK(v == 0.0);

  DenseNet ident = DenseNet::make({{4, 4, Activation::kLinear}});
  for (int i = 0; i < 4; ++i) ident.w(0)[i * 4 + i] = 1.0;
  Rng rng(1);
  const BatchMat xr = random_batch(rng, 4, 3);
  const BatchMat yr = nn::forward(ident, xr, nullptr);
  for (std::size_t i = 0; i < xr.a.size(); ++i) CHECK(yr.a[i] == xr.a[i]);
}

TEST_CASE("forward matches a naive loop evaluation") {
  Rng rng(2);
  DenseNet net = small_net(rng);
  const BatchMat x = random_batch(rng, 6, 4);
  const BatchMat y = nn::forward(net, x, nullptr);

  for (int b = 0; b < 4; ++b) {
    std::vector<double> cur = x.column(b);
    for (int l = 0; l < net.layer_count(); ++l) {
      const auto& s = net.spec[l];
      std::vector<double> next(s.out);
      for (int i = 0; i < s.out; ++i) {
        double acc = net.b(l)[i];
        for (int k = 0; k < s.in; ++k) acc += net.w(l)[i * s.in + k] * cur[k];
        next[i] = s.act == Activation::kRelu ? std::max(0.0, acc) : acc;
      }
      cur = next;
    }
    const auto col = y.column(b);
    for (int i = 0; i < 4; ++i)
      CHECK(std::abs(col[i] - cur[i]) < 1e-9 * (1.0 + std::abs(cur[i])));
  }
}

TEST_CASE("forward rejects non-finite input") {
  Rng rng(3);
  DenseNet net = small_net(rng);
  BatchMat x(6, 1);
  x.a[2] = std::nan("");
  CHECK_THROWS(nn::forward(net, x, nullptr));
}

TEST_CASE("backward: linear layer gradients by hand") {
  DenseNet net = DenseNet::make({{3, 2, Activation::kLinear}});
  net.w(0)[0] = 0.5;
  net.w(0)[4] = -1.0;
  BatchMat x(3, 1);
  x.a = {1.0, 2.0, 3.0};
  nn::ForwardCache cache;
  nn::forward(net, x, &cache);
  // Loss = sum of outputs: upstream gradient of ones.
  BatchMat dy(2, 1);
  dy.a = {1.0, 1.0};
  std::vector<double> pgrad(net.params.size(), 0.0);
  const BatchMat dx = nn::backward(net, cache, dy, pgrad);
  // dW = outer(1, x) per row.
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) CHECK(pgrad[net.w_offset[0] + r * 3 + c] == x.a[c]);
  CHECK(pgrad[net.b_offset[0]] == 1.0);
  // dx = W^T * 1.
  CHECK(dx.a[0] == 0.5);
  CHECK(dx.a[1] == -1.0);  // column 1: w(0)[1]=0 + w(1)[...]. w[4] = row1,col1
}

TEST_CASE("relu blocks gradient at negative pre-activation") {
  DenseNet net = DenseNet::make({{1, 1, Activation::kRelu}});
  net.w(0)[0] = 1.0;
  net.b(0)[0] = -5.0;  // pre-activation negative for small inputs
  BatchMat x(1, 1);
  x.a = {1.0};
  nn::ForwardCache cache;
  nn::forward(net, x, &cache);
  BatchMat dy(1, 1);
  dy.a = {1.0};
  std::vector<double> pgrad(net.params.size(), 0.0);
  const BatchMat dx = nn::backward(net, cache, dy, pgrad);
  CHECK(dx.a[0] == 0.0);
  CHECK(pgrad[0] == 0.0);
}

TEST_CASE("backward matches central finite differences on every parameter") {
  Rng rng(4);
  DenseNet net = small_net(rng);
  const BatchMat x = random_batch(rng, 6, 3);
  // Loss: weighted sum of outputs (fixed random weights).
  std::vector<double> lw(4 * 3);
  for (auto& v : lw) v = rng.uniform(-1, 1);

  auto loss = [&](const std::vector<double>& params) {
    DenseNet n2 = net;
    n2.params = params;
    const BatchMat y = nn::forward(n2, x, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < y.a.size(); ++i) s += lw[i] * y.a[i];
    return s;
  };

  nn::ForwardCache cache;
  const BatchMat y = nn::forward(net, x, &cache);
  BatchMat dy(4, 3);
  dy.a = lw;
  std::vector<double> pgrad(net.params.size(), 0.0);
  nn::backward(net, cache, dy, pgrad);

  const auto report = nn::gradcheck(loss, net.params, pgrad);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("adam: zero gradient leaves parameters, constant gradient descends") {
  std::vector<double> p = {1.0, -2.0};
  nn::AdamState state(2);
  nn::adam_step(state, p, {0.0, 0.0});
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);

  std::vector<double> q = {0.5};
  nn::AdamState s2(1);
  for (int i = 0; i < 40; ++i) nn::adam_step(s2, q, {2.0});
  CHECK(q[0] < 0.5);  // moves opposite the gradient sign
}

TEST_CASE("adam matches an independent recurrence oracle on a quadratic bowl") {
  // Oracle: textbook Adam recurrences computed with separate state.
  const double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> p = {1.0, -3.0};
  std::vector<double> oracle = p;
  double om[2] = {0, 0}, ov[2] = {0, 0};

  nn::AdamState state(2, {lr, b1, b2, eps});
  double prev_loss = 1e18;
  for (int t = 1; t <= 10; ++t) {
    // Loss = 0.5 * (p0^2 + p1^2); grad = p.
    const std::vector<double> g = p;
    const double loss = 0.5 * (p[0] * p[0] + p[1] * p[1]);
    CHECK(loss < prev_loss);
    prev_loss = loss;
    nn::adam_step(state, p, g);

    for (int i = 0; i < 2; ++i) {
      om[i] = b1 * om[i] + (1 - b1) * oracle[i];
      ov[i] = b2 * ov[i] + (1 - b2) * oracle[i] * oracle[i];
      const double mh = om[i] / (1 - std::pow(b1, t));
      const double vh = ov[i] / (1 - std::pow(b2, t));
      oracle[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    // Recompute oracle gradient base for next step from updated oracle.
    CHECK(std::abs(p[0] - oracle[0]) < 1e-9);
    CHECK(std::abs(p[1] - oracle[1]) < 1e-9);
  }
}

TEST_CASE("gradcheck flags an analytic quadratic exactly") {
  auto loss = [](const std::vector<double>& p) {
    return 3.0 * p[0] * p[0] + 2.0 * p[0] * p[1] + p[1] * p[1];
  };
  const std::vector<double> at = {0.7, -1.3};
  const std::vector<double> grad = {6.0 * at[0] + 2.0 * at[1], 2.0 * at[0] + 2.0 * at[1]};
  const auto report = nn::gradcheck(loss, at, grad);
  CHECK(report.max_rel_err < 1e-8);
}

TEST_CASE("net spec and parameters round-trip") {
  Rng rng(6);
  DenseNet net = small_net(rng);
  const auto dir = std::filesystem::temp_directory_path() / "gf_nn_test";
  std::filesystem::create_directories(dir);
  nn::save_net(dir, "probe", net);
  DenseNet back = nn::net_from_spec(nn::net_spec_json(net));
  nn::load_net_params(dir, "probe", back);
  CHECK(back.params == net.params);
  CHECK(back.spec.size() == net.spec.size());
}
