#include "gf/nn.h"

#include <cmath>
#include <filesystem>
#include <stdexcept>

namespace gf::nn {

DenseNet DenseNet::make(const std::vector<LayerSpec>& spec) {
  if (spec.empty()) throw std::invalid_argument("DenseNet: empty spec");
  for (std::size_t l = 1; l < spec.size(); ++l)
    if (spec[l].in != spec[l - 1].out)
      throw std::invalid_argument("DenseNet: layer dimensions do not chain");
  DenseNet net;
  net.spec = spec;
  std::size_t total = 0;
  for (const auto& s : spec) {
    net.w_offset.push_back(total);
    total += static_cast<std::size_t>(s.out) * s.in;
    net.b_offset.push_back(total);
    total += static_cast<std::size_t>(s.out);
  }
  net.params.assign(total, 0.0);
  return net;
}

void he_init(DenseNet& net, Rng& rng) {
  for (int l = 0; l < net.layer_count(); ++l) {
    const auto& s = net.spec[l];
    const double bound = std::sqrt(6.0 / s.in);
    double* w = net.w(l);
    for (std::size_t i = 0; i < static_cast<std::size_t>(s.out) * s.in; ++i)
      w[i] = rng.uniform(-bound, bound);
    double* b = net.b(l);
    for (int i = 0; i < s.out; ++i) b[i] = 0.0;
  }
}

BatchMat forward(const DenseNet& net, const BatchMat& x, ForwardCache* cache) {
  if (x.dim != net.input_dim())
    throw std::invalid_argument("forward: input width mismatch");
  for (double v : x.a)
    if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input");

  if (cache != nullptr) {
    cache->batch = x.batch;
    cache->inputs.clear();
    cache->preacts.clear();
  }
  BatchMat cur = x;
  for (int l = 0; l < net.layer_count(); ++l) {
    const auto& s = net.spec[l];
    if (cache != nullptr) cache->inputs.push_back(cur);
    BatchMat z(s.out, cur.batch);
    kernels::matmul_tb(net.w(l), s.out, s.in, cur.a.data(), cur.batch, net.b(l),
                       z.a.data());
    if (cache != nullptr) cache->preacts.push_back(z);
    if (s.act == Activation::kRelu) {
      BatchMat act(s.out, cur.batch);
      kernels::relu_fwd(z.a.data(), act.a.data(), z.a.size());
      cur = std::move(act);
    } else {
      cur = std::move(z);
    }
  }
  return cur;
}

BatchMat backward(const DenseNet& net, const ForwardCache& cache,
                  const BatchMat& dy, std::vector<double>& pgrad) {
  if (cache.inputs.size() != static_cast<std::size_t>(net.layer_count()))
    throw std::invalid_argument("backward: forward cache missing or stale");
  if (pgrad.size() != net.params.size())
    throw std::invalid_argument("backward: gradient buffer size mismatch");
  if (dy.dim != net.output_dim() || dy.batch != cache.batch)
    throw std::invalid_argument("backward: upstream gradient shape mismatch");

  BatchMat delta = dy;
  for (int l = net.layer_count() - 1; l >= 0; --l) {
    const auto& s = net.spec[l];
    if (s.act == Activation::kRelu) {
      BatchMat dz(s.out, delta.batch);
      kernels::relu_bwd(cache.preacts[l].a.data(), delta.a.data(), dz.a.data(),
                        dz.a.size());
      delta = std::move(dz);
    }
    // dW += delta * input^T; db += row sums of delta.
    kernels::accum_outer(delta.a.data(), cache.inputs[l].a.data(), s.out, s.in,
                         delta.batch, pgrad.data() + net.w_offset[l]);
    double* db = pgrad.data() + net.b_offset[l];
    for (int i = 0; i < s.out; ++i) {
      double acc = 0.0;
      for (int b = 0; b < delta.batch; ++b) acc += delta.at(i, b);
      db[i] += acc;
    }
    BatchMat dx(s.in, delta.batch);
    kernels::matmul_at_b(net.w(l), s.out, s.in, delta.a.data(), delta.batch,
                         dx.a.data());
    if (l == 0) return dx;
    delta = std::move(dx);
  }
  return delta;  // unreachable
}

void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  const long step = state.step + 1;
  if (!kernels::adam_update(params.data(), grads.data(), state.m.data(),
                            state.v.data(), params.size(), step, state.hyper))
    throw std::runtime_error("adam_step: non-finite gradient, step refused");
  state.step = step;
  for (double p : params)
    if (!std::isfinite(p)) throw std::runtime_error("adam_step: non-finite parameter");
}

GradCheckReport gradcheck(const std::function<double(const std::vector<double>&)>& lossfn,
                          const std::vector<double>& params,
                          const std::vector<double>& analytic_grad,
                          double h, double denom_floor) {
  if (params.size() != analytic_grad.size())
    throw std::invalid_argument("gradcheck: gradient size mismatch");
  GradCheckReport report;
  std::vector<double> p = params;
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = lossfn(p);
    p[i] = orig - h;
    const double fm = lossfn(p);
    p[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double g = analytic_grad[i];
    const double denom = std::max(denom_floor, std::abs(fd) + std::abs(g));
    const double rel = std::abs(fd - g) / denom;
    report.max_rel_err = std::max(report.max_rel_err, rel);
    sum += rel;
  }
  report.checked = p.size();
  report.mean_rel_err = report.checked > 0 ? sum / report.checked : 0.0;
  return report;
}

nlohmann::json net_spec_json(const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : net.spec) {
    nlohmann::json l;
    l["in"] = s.in;
    l["out"] = s.out;
    l["act"] = s.act == Activation::kRelu ? "relu" : "linear";
    layers.push_back(l);
  }
  return layers;
}

DenseNet net_from_spec(const nlohmann::json& spec) {
  std::vector<DenseNet::LayerSpec> layers;
  for (const auto& l : spec) {
    DenseNet::LayerSpec s;
    s.in = l.at("in").get<int>();
    s.out = l.at("out").get<int>();
    s.act = l.at("act").get<std::string>() == "relu" ? Activation::kRelu
                                                     : Activation::kLinear;
    layers.push_back(s);
  }
  return DenseNet::make(layers);
}

void save_net(const std::filesystem::path& dir, const std::string& name,
              const DenseNet& net) {
  write_tensor(dir / (name + ".gft"), net.params);
}

void load_net_params(const std::filesystem::path& dir, const std::string& name,
                     DenseNet& net) {
  std::vector<double> p = read_tensor_vec(dir / (name + ".gft"));
  if (p.size() != net.params.size())
    throw std::runtime_error("checkpoint size mismatch for net " + name);
  net.params = std::move(p);
}

}  // namespace gf::nn
