#include "gf/eval.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gf/config.h"
#include "gf/kernels.h"
#include "gf/log.h"

namespace gf::eval {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct ReferenceParserRow {
  const char* cls;
  double linear, fc, parser;
};
// Published per-vertex errors (mm) for garment parsing on the SIZER scans.
constexpr ReferenceParserRow kParserReference[] = {
    {"Polo", 32.21, 17.25, 14.33},    {"Shirt", 27.63, 19.35, 14.56},
    {"Vest", 28.17, 18.56, 15.89},    {"Hoodies", 37.34, 23.69, 15.76},
    {"T-Shirt", 26.94, 15.98, 13.77}, {"Shorts", 29.78, 20.12, 16.07},
    {"Pants", 34.82, 18.2, 17.24},    {"Coat", 41.27, 22.19, 15.34},
    {"Shorts2", 31.38, 23.45, 16.23},
};

struct ReferenceSizerRow {
  const char* cls;
  double margin_v, margin_a, avg_v, avg_a, lin_v, lin_a, ours_v, ours_a;
};
// Published resizing errors (V_err mm / A_err %) on the SIZER scans.
constexpr ReferenceSizerRow kSizerReference[] = {
    {"Polo t-shirt", 33.25, 24.56, 23.86, 3.63, 35.05, 8.45, 16.42, 1.79},
    {"Shirt", 36.52, 19.57, 21.95, 2.76, 34.53, 7.01, 15.54, 1.41},
    {"Shorts", 43.21, 27.21, 24.79, 5.41, 35.77, 4.99, 16.71, 2.38},
    {"Pants", 30.83, 15.15, 21.54, 4.73, 38.16, 7.13, 19.26, 2.43},
};

void add_sample(MetricReport& report, const std::string& cls, const std::string& split,
                double v, double a) {
  auto& cell = report.cells[cls][split];
  cell.v_inst.push_back(v);
  cell.a_inst.push_back(a);
  auto& total = report.cells[cls]["test"];
  if (split != "test" && split != "all") {
    total.v_inst.push_back(v);
    total.a_inst.push_back(a);
  }
}

std::vector<const synth::Instance*> class_instances(const synth::Dataset& ds,
                                                    const std::vector<int>& idx,
                                                    const std::string& cls) {
  std::vector<const synth::Instance*> out;
  for (int i : idx)
    if (ds.instances[i].class_name == cls) out.push_back(&ds.instances[i]);
  return out;
}

std::vector<std::string> dataset_classes(const synth::Dataset& ds) {
  std::vector<std::string> classes;
  for (const auto& inst : ds.instances)
    if (std::find(classes.begin(), classes.end(), inst.class_name) == classes.end())
      classes.push_back(inst.class_name);
  std::sort(classes.begin(), classes.end());
  return classes;
}

const synth::Instance* find_instance(const synth::Dataset& ds, int subject,
                                     const std::string& cls, int size) {
  for (const auto& inst : ds.instances)
    if (inst.subject == subject && inst.class_name == cls && inst.size_idx == size)
      return &inst;
  return nullptr;
}

}  // namespace

double v_err(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("v_err: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += norm(pred[i] - gt[i]);
  return 1000.0 * acc / static_cast<double>(pred.size());
}

double a_err(const Mesh& pred, const Mesh& gt) {
  const double ga = surface_area(gt);
  if (ga <= 0.0) throw std::invalid_argument("a_err: zero ground-truth area");
  return 100.0 * std::abs(surface_area(pred) - ga) / ga;
}

double MetricCell::v_mean() const {
  return v_inst.empty() ? 0.0 : kernels::ref::det_sum(v_inst.data(), v_inst.size()) /
                                    static_cast<double>(v_inst.size());
}

double MetricCell::a_mean() const {
  return a_inst.empty() ? 0.0 : kernels::ref::det_sum(a_inst.data(), a_inst.size()) /
                                    static_cast<double>(a_inst.size());
}

nlohmann::json EvalConfig::to_json() const {
  nlohmann::json j;
  j["fc_epochs"] = fc_epochs;
  j["lasso_iters"] = lasso_iters;
  j["lasso_lambda_ratio"] = lasso_lambda_ratio;
  j["seed"] = seed;
  return j;
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig c;
  c.fc_epochs = j.value("fc_epochs", c.fc_epochs);
  c.lasso_iters = j.value("lasso_iters", c.lasso_iters);
  c.lasso_lambda_ratio = j.value("lasso_lambda_ratio", c.lasso_lambda_ratio);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<SizerPair> sizer_test_pairs(const synth::Dataset& ds,
                                        const std::string& cls) {
  std::vector<SizerPair> pairs;
  // Unseen subjects: all ordered pairs among their sizes.
  std::map<int, std::vector<const synth::Instance*>> by_subject;
  for (int i : ds.test_unseen_subject_idx) {
    const auto& inst = ds.instances[i];
    if (inst.class_name == cls) by_subject[inst.subject].push_back(&inst);
  }
  for (const auto& [subject, insts] : by_subject)
    for (const auto* a : insts)
      for (const auto* b : insts)
        if (a != b)
          pairs.push_back({a, b, &ds.subjects[subject], "unseen_subject"});

  // Held-out sizes of seen subjects: predict the held size from each
  // available same-subject input.
  std::vector<char> in_test(ds.instances.size(), 0);
  for (int i : ds.test_unseen_subject_idx) in_test[i] = 1;
  for (int i : ds.test_unseen_size_idx) in_test[i] = 1;
  for (int i : ds.test_unseen_size_idx) {
    const auto& target = ds.instances[i];
    if (target.class_name != cls) continue;
    for (std::size_t j = 0; j < ds.instances.size(); ++j) {
      const auto& input = ds.instances[j];
      if (in_test[j] || input.subject != target.subject ||
          input.class_name != cls || input.size_idx == target.size_idx)
        continue;
      pairs.push_back({&input, &target, &ds.subjects[target.subject], "unseen_size"});
    }
  }
  return pairs;
}

MetricReport baseline_error_margin(const synth::Dataset& ds) {
  MetricReport report;
  report.method = "error-margin";
  report.seed = ds.config.seed;
  for (const auto& cls : dataset_classes(ds)) {
    std::vector<char> test_subject(ds.subjects.size(), 0);
    for (int i : ds.test_idx())
      if (ds.instances[i].class_name == cls) test_subject[ds.instances[i].subject] = 1;
    for (const auto& subject : ds.subjects) {
      for (std::size_t k = 0; k + 1 < subject.sizes.size(); ++k) {
        const auto* a = find_instance(ds, subject.id, cls, subject.sizes[k]);
        const auto* b = find_instance(ds, subject.id, cls, subject.sizes[k + 1]);
        if (a == nullptr || b == nullptr) continue;
        const double v = v_err(a->garment.vertices, b->garment.vertices);
        const double ae = a_err(a->garment, b->garment);
        auto& all = report.cells[cls]["all"];
        all.v_inst.push_back(v);
        all.a_inst.push_back(ae);
        if (test_subject[subject.id]) {
          auto& test = report.cells[cls]["test"];
          test.v_inst.push_back(v);
          test.a_inst.push_back(ae);
        }
      }
    }
  }
  return report;
}

MetricReport baseline_average_prediction(const synth::Dataset& ds) {
  MetricReport report;
  report.method = "average-prediction";
  report.seed = ds.config.seed;
  for (const auto& cls : dataset_classes(ds)) {
    // Cohort: subjects appearing in the test pools for this class.
    std::vector<int> subjects;
    for (int i : ds.test_idx()) {
      const auto& inst = ds.instances[i];
      if (inst.class_name == cls &&
          std::find(subjects.begin(), subjects.end(), inst.subject) == subjects.end())
        subjects.push_back(inst.subject);
    }
    std::sort(subjects.begin(), subjects.end());
    for (int s : subjects) {
      std::vector<const synth::Instance*> insts;
      for (int size : ds.subjects[s].sizes) {
        const auto* inst = find_instance(ds, s, cls, size);
        if (inst != nullptr) insts.push_back(inst);
      }
      if (insts.empty()) continue;
      std::vector<Vec3> avg(insts[0]->garment.vertex_count());
      for (const auto* inst : insts)
        for (std::size_t v = 0; v < avg.size(); ++v)
          avg[v] += inst->garment.vertices[v];
      for (auto& v : avg) v = v / static_cast<double>(insts.size());
      const Mesh avg_mesh{avg, insts[0]->garment.faces};
      for (const auto* inst : insts)
        add_sample(report, cls, "test", v_err(avg, inst->garment.vertices),
                   a_err(avg_mesh, inst->garment));
    }
  }
  return report;
}

std::map<std::pair<int, int>, double> fit_scaling_factors(const synth::Dataset& ds,
                                                          const std::string& cls) {
  std::map<std::pair<int, int>, std::vector<double>> ratios;
  std::map<int, std::vector<const synth::Instance*>> by_subject;
  for (int i : ds.train_idx) {
    const auto& inst = ds.instances[i];
    if (inst.class_name == cls) by_subject[inst.subject].push_back(&inst);
  }
  for (const auto& [subject, insts] : by_subject)
    for (const auto* a : insts)
      for (const auto* b : insts) {
        if (a == b) continue;
        ratios[{a->size_idx, b->size_idx}].push_back(surface_area(b->garment) /
                                                     surface_area(a->garment));
      }
  std::map<std::pair<int, int>, double> factor;
  for (const auto& [key, r] : ratios) {
    double mean = 0.0;
    for (double x : r) mean += x;
    factor[key] = std::sqrt(mean / r.size());
  }
  return factor;
}

MetricReport baseline_linear_scaling(const synth::Dataset& ds, const BodyModel& model) {
  MetricReport report;
  report.method = "linear-scaling";
  report.seed = ds.config.seed;
  for (const auto& cls : dataset_classes(ds)) {
    const GarmentTemplate& g = model.garments.at(cls);
    const std::map<std::pair<int, int>, double> factor = fit_scaling_factors(ds, cls);

    // Mean offset between garment and template-cut centroids per target
    // size, fitted on the training split.
    std::map<int, int> delta_count;
    std::map<int, Vec3> delta_sum;
    for (int i : ds.train_idx) {
      const auto& a = ds.instances[i];
      if (a.class_name != cls) continue;
      const auto& subject = ds.subjects[a.subject];
      const std::vector<Vec3> tmpl =
          garment_template(model, g, subject.beta, subject.theta);
      const std::vector<Affine> xf =
          garment_vertex_transforms(model, g, subject.beta, subject.theta);
      Vec3 ct;
      for (std::size_t v = 0; v < tmpl.size(); ++v) ct += xf[v].apply(tmpl[v]);
      ct = ct / static_cast<double>(tmpl.size());
      Vec3 cg;
      for (const auto& v : a.garment.vertices) cg += v;
      cg = cg / static_cast<double>(a.garment.vertices.size());
      delta_sum[a.size_idx] += cg - ct;
      delta_count[a.size_idx]++;
    }
    std::map<int, Vec3> delta;
    for (const auto& [size, sum] : delta_sum)
      delta[size] = sum / static_cast<double>(delta_count[size]);

    for (const auto& pair : sizer_test_pairs(ds, cls)) {
      const auto fit = factor.find({pair.in->size_idx, pair.out->size_idx});
      const double s = fit != factor.end() ? fit->second : 1.0;
      Vec3 c_in;
      for (const auto& v : pair.in->garment.vertices) c_in += v;
      c_in = c_in / static_cast<double>(pair.in->garment.vertices.size());

      const std::vector<Vec3> tmpl =
          garment_template(model, g, pair.subject->beta, pair.subject->theta);
      const std::vector<Affine> xf =
          garment_vertex_transforms(model, g, pair.subject->beta, pair.subject->theta);
      Vec3 c_tmpl;
      for (std::size_t i = 0; i < tmpl.size(); ++i) c_tmpl += xf[i].apply(tmpl[i]);
      c_tmpl = c_tmpl / static_cast<double>(tmpl.size());
      const Vec3 target_centroid =
          c_tmpl + (delta.count(pair.out->size_idx) != 0u ? delta.at(pair.out->size_idx)
                                                          : Vec3{});

      std::vector<Vec3> pred(pair.in->garment.vertices.size());
      for (std::size_t v = 0; v < pred.size(); ++v)
        pred[v] = (pair.in->garment.vertices[v] - c_in) * s + target_centroid;
      add_sample(report, cls, pair.split, v_err(pred, pair.out->garment.vertices),
                 a_err(Mesh{pred, pair.out->garment.faces}, pair.out->garment));
    }
  }
  return report;
}

namespace {

// Proximal-gradient LASSO shared across all output columns of one class.
struct LassoModel {
  int in = 0;
  int out = 0;
  std::vector<double> w;          // in x out
  std::vector<double> intercept;  // out
  std::vector<double> x_mean;     // in
};

LassoModel fit_lasso(const std::vector<std::vector<double>>& features,
                     const std::vector<std::vector<double>>& targets, int iters,
                     double lambda_ratio) {
  const int n = static_cast<int>(features.size());
  const int in = static_cast<int>(features[0].size());
  const int out = static_cast<int>(targets[0].size());
  LassoModel m;
  m.in = in;
  m.out = out;

  // Column-centered design and targets.
  std::vector<double> x(static_cast<std::size_t>(n) * in);
  std::vector<double> y(static_cast<std::size_t>(n) * out);
  m.x_mean.assign(in, 0.0);
  std::vector<double> y_mean(out, 0.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < in; ++c) m.x_mean[c] += features[r][c] / n;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < out; ++c) y_mean[c] += targets[r][c] / n;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < in; ++c)
      x[static_cast<std::size_t>(r) * in + c] = features[r][c] - m.x_mean[c];
    for (int c = 0; c < out; ++c)
      y[static_cast<std::size_t>(r) * out + c] = targets[r][c] - y_mean[c];
  }

  // Step size from the largest eigenvalue of X^T X / n (power iteration).
  std::vector<double> v(in, 1.0 / std::sqrt(static_cast<double>(in)));
  std::vector<double> xv(n), xtxv(in);
  double lip = 1.0;
  for (int it = 0; it < 30; ++it) {
    kernels::matmul_tb(x.data(), n, in, v.data(), 1, nullptr, xv.data());
    kernels::matmul_at_b(x.data(), n, in, xv.data(), 1, xtxv.data());
    double nrm = 0.0;
    for (double q : xtxv) nrm += q * q;
    nrm = std::sqrt(nrm);
    lip = nrm / n;
    for (int c = 0; c < in; ++c) v[c] = xtxv[c] / nrm;
  }
  const double step = 1.0 / std::max(lip, 1e-12);

  // lambda as a fraction of the all-zero threshold max |X^T Y| / n.
  std::vector<double> xty(static_cast<std::size_t>(in) * out);
  kernels::matmul_at_b(x.data(), n, in, y.data(), out, xty.data());
  double lambda_max = 0.0;
  for (double q : xty) lambda_max = std::max(lambda_max, std::abs(q) / n);
  const double lambda = lambda_ratio * lambda_max;

  m.w.assign(static_cast<std::size_t>(in) * out, 0.0);
  std::vector<double> pred(static_cast<std::size_t>(n) * out);
  std::vector<double> grad(static_cast<std::size_t>(in) * out);
  for (int it = 0; it < iters; ++it) {
    kernels::matmul_tb(x.data(), n, in, m.w.data(), out, nullptr, pred.data());
    for (std::size_t e = 0; e < pred.size(); ++e) pred[e] -= y[e];
    kernels::matmul_at_b(x.data(), n, in, pred.data(), out, grad.data());
    const double thresh = step * lambda;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(m.w.size()); ++e) {
      double wv = m.w[e] - step * grad[e] / n;
      if (wv > thresh)
        wv -= thresh;
      else if (wv < -thresh)
        wv += thresh;
      else
        wv = 0.0;
      m.w[e] = wv;
    }
  }
  // Fold the feature means into the intercept.
  m.intercept = y_mean;
  std::vector<double> shift(out, 0.0);
  for (int c = 0; c < in; ++c) {
    const double xm = m.x_mean[c];
    if (xm == 0.0) continue;
    const double* wr = m.w.data() + static_cast<std::size_t>(c) * out;
    for (int o = 0; o < out; ++o) shift[o] += xm * wr[o];
  }
  for (int o = 0; o < out; ++o) m.intercept[o] -= shift[o];
  return m;
}

std::vector<double> lasso_predict(const LassoModel& m, const std::vector<double>& x) {
  std::vector<double> out = m.intercept;
  for (int c = 0; c < m.in; ++c) {
    const double xv = x[c];
    if (xv == 0.0) continue;
    const double* wr = m.w.data() + static_cast<std::size_t>(c) * m.out;
    for (int o = 0; o < m.out; ++o) out[o] += xv * wr[o];
  }
  return out;
}

}  // namespace

MetricReport baseline_linear_parser(const synth::Dataset& ds, const EvalConfig& cfg) {
  MetricReport report;
  report.method = "linear-parser";
  report.seed = cfg.seed;
  report.config_hash = config_hash(cfg.to_json());
  for (const auto& cls : dataset_classes(ds)) {
    const auto train = class_instances(ds, ds.train_idx, cls);
    std::vector<std::vector<double>> features, targets;
    for (const auto* inst : train) {
      features.push_back(parsernet::mesh_features(inst->single));
      const Vec3 c = centroid(inst->single);
      std::vector<double> t;
      t.reserve(inst->garment.vertices.size() * 3);
      for (const auto& v : inst->garment.vertices) {
        t.push_back(v.x - c.x);
        t.push_back(v.y - c.y);
        t.push_back(v.z - c.z);
      }
      targets.push_back(std::move(t));
    }
    const LassoModel m =
        fit_lasso(features, targets, cfg.lasso_iters, cfg.lasso_lambda_ratio);

    auto eval_pool = [&](const std::vector<int>& idx, const std::string& split) {
      for (const auto* inst : class_instances(ds, idx, cls)) {
        const std::vector<double> f = parsernet::mesh_features(inst->single);
        const std::vector<double> p = lasso_predict(m, f);
        const Vec3 c = centroid(inst->single);
        std::vector<Vec3> pred(inst->garment.vertices.size());
        for (std::size_t v = 0; v < pred.size(); ++v)
          pred[v] = Vec3{p[3 * v], p[3 * v + 1], p[3 * v + 2]} + c;
        add_sample(report, cls, split, v_err(pred, inst->garment.vertices),
                   a_err(Mesh{pred, inst->garment.faces}, inst->garment));
      }
    };
    eval_pool(ds.test_unseen_subject_idx, "unseen_subject");
    eval_pool(ds.test_unseen_size_idx, "unseen_size");
  }
  return report;
}

MetricReport baseline_fc_parser(const synth::Dataset& ds,
                                const parsernet::ParserBundle& bundle,
                                const EvalConfig& cfg) {
  MetricReport report;
  report.method = "fc-parser";
  report.seed = cfg.seed;
  report.config_hash = config_hash(cfg.to_json());
  const BodyModel& model = bundle.model;

  for (const auto& cls : dataset_classes(ds)) {
    const GarmentTemplate& g = model.garments.at(cls);
    const int mg = g.size();
    const auto& pcfg = bundle.config;

    nn::DenseNet net = nn::DenseNet::make(
        {{6 * model.vertex_count(), pcfg.parser_hidden, nn::Activation::kRelu},
         {pcfg.parser_hidden, pcfg.parser_hidden, nn::Activation::kRelu},
         {pcfg.parser_hidden, mg * 3, nn::Activation::kLinear}});
    Rng rng(cfg.seed ^ fnv1a("fc:" + cls));
    nn::he_init(net, rng);
    // Displacement outputs are centimeter scale; start the output layer there.
    for (std::size_t i = net.w_offset[2]; i < net.params.size(); ++i)
      net.params[i] *= 0.02;

    struct Item {
      const synth::Instance* inst;
      std::vector<double> features;
      std::vector<Vec3> tmpl_posed;
      std::vector<Affine> xf;
    };
    auto prep = [&](const synth::Instance* inst) {
      Item it;
      it.inst = inst;
      it.features = parsernet::mesh_features(inst->single);
      auto [theta, beta] = parsernet::predict_pose_shape(bundle, inst->single);
      it.tmpl_posed = garment_template(model, g, beta, theta);
      const auto xf = garment_vertex_transforms(model, g, beta, theta);
      it.xf = xf;
      return it;
    };

    std::vector<Item> train;
    for (const auto* inst : class_instances(ds, ds.train_idx, cls))
      train.push_back(prep(inst));

    nn::AdamState adam(net.params.size(), {pcfg.lr, 0.9, 0.999, 1e-8});
    std::vector<double> grads(net.params.size(), 0.0);
    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(cfg.seed ^ fnv1a("fc-shuffle:" + cls));

    for (int epoch = 0; epoch < cfg.fc_epochs; ++epoch) {
      shuffle_rng.shuffle(order);
      for (std::size_t at = 0; at < order.size(); at += pcfg.batch_size) {
        const std::size_t bsz =
            std::min<std::size_t>(pcfg.batch_size, order.size() - at);
        nn::BatchMat x(net.input_dim(), static_cast<int>(bsz));
        for (std::size_t b = 0; b < bsz; ++b)
          x.set_column(static_cast<int>(b), train[order[at + b]].features);
        nn::ForwardCache cache;
        const nn::BatchMat out = nn::forward(net, x, &cache);
        nn::BatchMat dout(out.dim, out.batch);
#pragma omp parallel for schedule(static)
        for (int b = 0; b < static_cast<int>(bsz); ++b) {
          const Item& it = train[order[at + b]];
          std::vector<Vec3> pred(mg);
          for (int i = 0; i < mg; ++i) {
            const Vec3 d{out.at(3 * i, b), out.at(3 * i + 1, b), out.at(3 * i + 2, b)};
            pred[i] = it.xf[i].apply(it.tmpl_posed[i] + d);
          }
          const auto comp = losses::loss_sizer_total(
              pred, it.inst->garment,
              bundle.garment_heads.at(cls).laplacian, it.inst->body, pcfg.d_tol,
              pcfg.weights);
          for (int i = 0; i < mg; ++i) {
            const Vec3 dd = transpose(it.xf[i].rot) * comp.dpred[i];
            dout.at(3 * i, b) = dd.x;
            dout.at(3 * i + 1, b) = dd.y;
            dout.at(3 * i + 2, b) = dd.z;
          }
        }
        nn::backward(net, cache, dout, grads);
        nn::adam_step(adam, net.params, grads);
        std::fill(grads.begin(), grads.end(), 0.0);
      }
    }

    auto eval_pool = [&](const std::vector<int>& idx, const std::string& split) {
      for (const auto* inst : class_instances(ds, idx, cls)) {
        const Item it = prep(inst);
        nn::BatchMat x(net.input_dim(), 1);
        x.a = it.features;
        const nn::BatchMat out = nn::forward(net, x, nullptr);
        std::vector<Vec3> pred(mg);
        for (int i = 0; i < mg; ++i) {
          const Vec3 d{out.a[3 * i], out.a[3 * i + 1], out.a[3 * i + 2]};
          pred[i] = it.xf[i].apply(it.tmpl_posed[i] + d);
        }
        add_sample(report, cls, split, v_err(pred, inst->garment.vertices),
                   a_err(Mesh{pred, inst->garment.faces}, inst->garment));
      }
    };
    eval_pool(ds.test_unseen_subject_idx, "unseen_subject");
    eval_pool(ds.test_unseen_size_idx, "unseen_size");
  }
  return report;
}

MetricReport eval_parser(const parsernet::ParserBundle& bundle,
                         const synth::Dataset& ds) {
  MetricReport report;
  report.method = "parsernet";
  report.seed = bundle.config.seed;
  report.config_hash = config_hash(bundle.config.to_json());
  auto eval_pool = [&](const std::vector<int>& idx, const std::string& split) {
    for (int i : idx) {
      const auto& inst = ds.instances[i];
      const parsernet::ParseResult res = parsernet::parse(bundle, inst.single);
      const Mesh& pred = bundle.model.garments.at(inst.class_name).layer ==
                                 GarmentLayer::kUpper
                             ? res.upper
                             : res.lower;
      add_sample(report, inst.class_name, split,
                 v_err(pred.vertices, inst.garment.vertices),
                 a_err(pred, inst.garment));
    }
  };
  eval_pool(ds.test_unseen_subject_idx, "unseen_subject");
  eval_pool(ds.test_unseen_size_idx, "unseen_size");
  return report;
}

MetricReport eval_sizer(const std::map<std::string, sizernet::SizerModel>& models,
                        const synth::Dataset& ds) {
  MetricReport report;
  report.method = "sizernet";
  report.seed = ds.config.seed;
  for (const auto& [cls, model] : models) {
    for (const auto& pair : sizer_test_pairs(ds, cls)) {
      const Mesh pred = sizernet::resize(
          model, pair.in->garment.vertices, pair.subject->beta,
          sizernet::SizeLabel::from_index(pair.in->size_idx),
          sizernet::SizeLabel::from_index(pair.out->size_idx), pair.subject->theta);
      add_sample(report, cls, pair.split, v_err(pred.vertices, pair.out->garment.vertices),
                 a_err(pred, pair.out->garment));
    }
  }
  return report;
}

double penetration_fraction(const std::vector<Vec3>& pred, const Mesh& body) {
  const std::vector<Vec3> normals = vertex_normals(body);
  const std::vector<int> corr = nearest_vertex(pred, body.vertices);
  int inside = 0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (dot(normals[corr[j]], pred[j] - body.vertices[corr[j]]) < 0.0) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(pred.size());
}

double sizer_monotonicity(const std::map<std::string, sizernet::SizerModel>& models,
                          const synth::Dataset& ds) {
  int ok = 0, total = 0;
  for (const auto& [cls, model] : models) {
    for (int i : ds.test_idx()) {
      const auto& inst = ds.instances[i];
      if (inst.class_name != cls) continue;
      double prev = -1.0;
      bool monotone = true;
      for (int size = 0; size <= 2; ++size) {  // S -> L
        const Mesh out = sizernet::resize(
            model, inst.garment.vertices, ds.subjects[inst.subject].beta,
            sizernet::SizeLabel::from_index(inst.size_idx),
            sizernet::SizeLabel::from_index(size), ds.subjects[inst.subject].theta);
        const double area = surface_area(out);
        if (prev >= 0.0 && area < prev) monotone = false;
        prev = area;
      }
      ++total;
      if (monotone) ++ok;
    }
  }
  return total > 0 ? static_cast<double>(ok) / total : 1.0;
}

std::string report_csv(const std::vector<MetricReport>& reports) {
  std::string csv = "class,method,split,v_err_mm,a_err_pct,n_instances,seed\n";
  for (const auto& report : reports) {
    for (const auto& [cls, splits] : report.cells) {
      for (const auto& [split, cell] : splits) {
        csv += cls + "," + report.method + "," + split + "," + fmt(cell.v_mean()) +
               "," + fmt(cell.a_mean()) + "," + std::to_string(cell.count()) + "," +
               std::to_string(report.seed) + "\n";
      }
    }
  }
  return csv;
}

BenchmarkArtifacts benchmark(const parsernet::ParserBundle* parser,
                             const std::map<std::string, sizernet::SizerModel>* sizers,
                             const synth::Dataset& ds, const EvalConfig& cfg,
                             const std::filesystem::path& out_dir) {
  BenchmarkArtifacts art;
  const auto classes = dataset_classes(ds);

  auto cell_str = [](const MetricReport& r, const std::string& cls) {
    auto it = r.cells.find(cls);
    if (it == r.cells.end() || it->second.count("test") == 0) return std::string("-");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%7.2f", it->second.at("test").v_mean());
    return std::string(buf);
  };
  auto cell_va = [](const MetricReport& r, const std::string& cls) {
    auto it = r.cells.find(cls);
    if (it == r.cells.end() || it->second.count("test") == 0)
      return std::string("    -       -  ");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%7.2f %7.2f", it->second.at("test").v_mean(),
                  it->second.at("test").a_mean());
    return std::string(buf);
  };

  std::vector<MetricReport>& parser_reports = art.parser_reports;
  if (parser != nullptr) {
    log::info("benchmark: linear parser baseline");
    parser_reports.push_back(baseline_linear_parser(ds, cfg));
    log::info("benchmark: fc parser baseline");
    parser_reports.push_back(baseline_fc_parser(ds, *parser, cfg));
    log::info("benchmark: parsernet");
    parser_reports.push_back(eval_parser(*parser, ds));

    std::string table =
        "Garment parsing, per-vertex error V_err (mm), synthetic test split\n";
    table += "class      linear-model        fc   parsernet\n";
    for (const auto& cls : classes) {
      table += cls;
      table.append(cls.size() < 11 ? 11 - cls.size() : 1, ' ');
      table += cell_str(parser_reports[0], cls) + "     " +
               cell_str(parser_reports[1], cls) + "     " +
               cell_str(parser_reports[2], cls) + "\n";
    }
    table += "\nreference (SIZER scans, mm):\n";
    for (const auto& row : kParserReference) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-11s%7.2f   %7.2f     %7.2f\n", row.cls,
                    row.linear, row.fc, row.parser);
      table += buf;
    }
    art.parser_table = table;

    std::vector<MetricReport> with_ref = parser_reports;
    for (const auto& row : kParserReference) {
      MetricReport ref;
      ref.method = "reference-linear-parser";
      ref.cells[row.cls]["reference"].v_inst = {row.linear};
      ref.cells[row.cls]["reference"].a_inst = {0.0};
      with_ref.push_back(ref);
      MetricReport ref_fc;
      ref_fc.method = "reference-fc-parser";
      ref_fc.cells[row.cls]["reference"].v_inst = {row.fc};
      ref_fc.cells[row.cls]["reference"].a_inst = {0.0};
      with_ref.push_back(ref_fc);
      MetricReport ref_pn;
      ref_pn.method = "reference-parsernet";
      ref_pn.cells[row.cls]["reference"].v_inst = {row.parser};
      ref_pn.cells[row.cls]["reference"].a_inst = {0.0};
      with_ref.push_back(ref_pn);
    }
    art.parser_csv = report_csv(with_ref);
  }

  if (sizers != nullptr) {
    log::info("benchmark: sizer baselines");
    std::vector<MetricReport>& sizer_reports = art.sizer_reports;
    sizer_reports.push_back(baseline_error_margin(ds));
    sizer_reports.push_back(baseline_average_prediction(ds));
    sizer_reports.push_back(
        baseline_linear_scaling(ds, sizers->begin()->second.model));
    log::info("benchmark: sizernet");
    sizer_reports.push_back(eval_sizer(*sizers, ds));

    std::string table =
        "Garment resizing, V_err (mm) / A_err (%), synthetic test split\n";
    table += "class      error-margin      average-pred      linear-scaling    sizernet\n";
    for (const auto& cls : classes) {
      table += cls;
      table.append(cls.size() < 11 ? 11 - cls.size() : 1, ' ');
      table += cell_va(sizer_reports[0], cls) + "   " + cell_va(sizer_reports[1], cls) +
               "   " + cell_va(sizer_reports[2], cls) + "   " +
               cell_va(sizer_reports[3], cls) + "\n";
    }
    table += "\nreference (SIZER scans, V_err mm / A_err %):\n";
    for (const auto& row : kSizerReference) {
      char buf[200];
      std::snprintf(buf, sizeof(buf),
                    "%-13s%7.2f %7.2f   %7.2f %7.2f   %7.2f %7.2f   %7.2f %7.2f\n",
                    row.cls, row.margin_v, row.margin_a, row.avg_v, row.avg_a,
                    row.lin_v, row.lin_a, row.ours_v, row.ours_a);
      table += buf;
    }
    art.sizer_table = table;

    std::vector<MetricReport> with_ref = sizer_reports;
    for (const auto& row : kSizerReference) {
      auto push = [&](const std::string& method, double v, double a) {
        MetricReport ref;
        ref.method = method;
        ref.cells[row.cls]["reference"].v_inst = {v};
        ref.cells[row.cls]["reference"].a_inst = {a};
        with_ref.push_back(ref);
      };
      push("reference-error-margin", row.margin_v, row.margin_a);
      push("reference-average-prediction", row.avg_v, row.avg_a);
      push("reference-linear-scaling", row.lin_v, row.lin_a);
      push("reference-sizernet", row.ours_v, row.ours_a);
    }
    art.sizer_csv = report_csv(with_ref);
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    if (!art.parser_csv.empty()) {
      write_text_file(out_dir / "parser_results.csv", art.parser_csv);
      write_text_file(out_dir / "parser_table.txt", art.parser_table);
    }
    if (!art.sizer_csv.empty()) {
      write_text_file(out_dir / "sizer_results.csv", art.sizer_csv);
      write_text_file(out_dir / "sizer_table.txt", art.sizer_table);
    }
  }
  return art;
}

}  // namespace gf::eval
