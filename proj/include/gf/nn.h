#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gf/kernels.h"
#include "gf/rng.h"
#include "gf/tensor.h"
#include "json.hpp"

namespace gf::nn {

enum class Activation { kRelu, kLinear };

// Batch of activations in column-per-item layout: [dim x batch] row-major,
// item b occupies column b.
struct BatchMat {
  int dim = 0;
  int batch = 0;
  std::vector<double> a;

  BatchMat() = default;
  BatchMat(int d, int b) : dim(d), batch(b), a(static_cast<std::size_t>(d) * b, 0.0) {}

  double& at(int d, int b) { return a[static_cast<std::size_t>(d) * batch + b]; }
  double at(int d, int b) const { return a[static_cast<std::size_t>(d) * batch + b]; }

  void set_column(int b, const std::vector<double>& v) {
    for (int d = 0; d < dim; ++d) at(d, b) = v[d];
  }
  std::vector<double> column(int b) const {
    std::vector<double> v(dim);
    for (int d = 0; d < dim; ++d) v[d] = at(d, b);
    return v;
  }
};

// Fully connected network with relu/linear activations. Parameters live in
// one flat vector (per-layer weight blocks then bias), which keeps gradient
// accumulation and the optimizer trivial.
struct DenseNet {
  struct LayerSpec {
    int in = 0;
    int out = 0;
    Activation act = Activation::kLinear;
  };

  std::vector<LayerSpec> spec;
  std::vector<double> params;
  std::vector<std::size_t> w_offset;
  std::vector<std::size_t> b_offset;

  static DenseNet make(const std::vector<LayerSpec>& spec);

  int layer_count() const { return static_cast<int>(spec.size()); }
  int input_dim() const { return spec.front().in; }
  int output_dim() const { return spec.back().out; }

  double* w(int l) { return params.data() + w_offset[l]; }
  const double* w(int l) const { return params.data() + w_offset[l]; }
  double* b(int l) { return params.data() + b_offset[l]; }
  const double* b(int l) const { return params.data() + b_offset[l]; }
};

// He-style uniform init scaled by fan-in, biases zero.
void he_init(DenseNet& net, Rng& rng);

struct ForwardCache {
  int batch = 0;
  std::vector<BatchMat> inputs;   // per layer: input activations
  std::vector<BatchMat> preacts;  // per layer: pre-activation z
};

// Affine + activation composition; the cache is sufficient for backward.
// Throws on non-finite input.
BatchMat forward(const DenseNet& net, const BatchMat& x, ForwardCache* cache);

// Exact reverse-mode gradients. Parameter gradients are accumulated into
// pgrad (layout mirrors net.params); returns the input gradient.
BatchMat backward(const DenseNet& net, const ForwardCache& cache,
                  const BatchMat& dy, std::vector<double>& pgrad);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  kernels::AdamHyper hyper;

  explicit AdamState(std::size_t n, const kernels::AdamHyper& h = {})
      : m(n, 0.0), v(n, 0.0), hyper(h) {}
};

// Standard Adam with bias correction. Throws if any gradient entry is
// non-finite (the step is refused), or if a parameter goes non-finite.
void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grads);

struct GradCheckReport {
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  std::size_t checked = 0;
};

// Central finite differences of lossfn against analytic_grad, parameter by
// parameter. rel = |fd - g| / max(floor, |fd| + |g|).
GradCheckReport gradcheck(const std::function<double(const std::vector<double>&)>& lossfn,
                          const std::vector<double>& params,
                          const std::vector<double>& analytic_grad,
                          double h = 1e-5, double denom_floor = 1e-6);

// Serialization helpers: flat parameter tensor + JSON spec fragment.
nlohmann::json net_spec_json(const DenseNet& net);
DenseNet net_from_spec(const nlohmann::json& spec);
void save_net(const std::filesystem::path& dir, const std::string& name,
              const DenseNet& net);
void load_net_params(const std::filesystem::path& dir, const std::string& name,
                     DenseNet& net);

}  // namespace gf::nn
