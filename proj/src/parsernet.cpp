#include "gf/parsernet.h"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "gf/config.h"
#include "gf/log.h"

namespace gf::parsernet {

namespace {

using nn::BatchMat;

// dz = softmax_backward(w, dw) per row: w * (dw - <w, dw>).
void softmax_rows_backward(const double* w, const double* dw, double* dz, int rows,
                           int k) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = w + static_cast<std::size_t>(r) * k;
    const double* dwr = dw + static_cast<std::size_t>(r) * k;
    double* dzr = dz + static_cast<std::size_t>(r) * k;
    double inner = 0.0;
    for (int j = 0; j < k; ++j) inner += wr[j] * dwr[j];
    for (int j = 0; j < k; ++j) dzr[j] = wr[j] * (dwr[j] - inner);
  }
}

std::vector<std::array<int, 3>> restrict_faces(
    const std::vector<std::array<int, 3>>& faces, const std::vector<int>& keep,
    int vertex_count) {
  std::vector<int> map(vertex_count, -1);
  for (std::size_t i = 0; i < keep.size(); ++i) map[keep[i]] = static_cast<int>(i);
  std::vector<std::array<int, 3>> out;
  for (const auto& f : faces)
    if (map[f[0]] >= 0 && map[f[1]] >= 0 && map[f[2]] >= 0)
      out.push_back({map[f[0]], map[f[1]], map[f[2]]});
  return out;
}

SparseMatrix faces_laplacian(int rows, const std::vector<std::array<int, 3>>& faces) {
  Mesh tmp;
  tmp.vertices.resize(rows);
  tmp.faces = faces;
  return graph_laplacian(tmp).matrix;
}

RegressorHead make_head(const BodyModel& model, const std::vector<Vec3>& source_verts,
                        const std::vector<std::array<int, 3>>& faces,
                        const ParserConfig& cfg, Rng& rng) {
  RegressorHead head;
  head.rows = static_cast<int>(source_verts.size());
  head.k = cfg.k;
  const auto nbrs = knn_points(source_verts, model.template_verts, cfg.k);
  head.neighborhoods.reserve(static_cast<std::size_t>(head.rows) * cfg.k);
  for (const auto& row : nbrs)
    head.neighborhoods.insert(head.neighborhoods.end(), row.begin(), row.end());
  head.faces = faces;
  head.laplacian = faces_laplacian(head.rows, faces);
  const int in = 6 * model.vertex_count();
  head.net = nn::DenseNet::make({{in, cfg.parser_hidden, nn::Activation::kRelu},
                                 {cfg.parser_hidden, cfg.parser_hidden, nn::Activation::kRelu},
                                 {cfg.parser_hidden, head.rows * cfg.k, nn::Activation::kLinear}});
  nn::he_init(head.net, rng);
  return head;
}

BatchMat assemble_features(const std::vector<const std::vector<double>*>& cols) {
  BatchMat x(static_cast<int>(cols[0]->size()), static_cast<int>(cols.size()));
  for (std::size_t b = 0; b < cols.size(); ++b)
    for (int d = 0; d < x.dim; ++d) x.at(d, static_cast<int>(b)) = (*cols[b])[d];
  return x;
}

}  // namespace

nlohmann::json ParserConfig::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["pose_shape_hidden"] = pose_shape_hidden;
  j["parser_hidden"] = parser_hidden;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["d_tol"] = d_tol;
  j["tau"] = tau;
  j["skin_margin"] = skin_margin;
  j["init_bias_tau"] = init_bias_tau;
  j["stage1_epochs"] = stage1_epochs;
  j["init_epochs"] = init_epochs;
  j["joint_epochs"] = joint_epochs;
  j["finetune_epochs"] = finetune_epochs;
  j["seed"] = seed;
  j["weights"] = {{"w_3d", weights.w_3d},       {"w_norm", weights.w_norm},
                  {"w_lap", weights.w_lap},     {"w_interp", weights.w_interp},
                  {"w_w", weights.w_w},         {"w_pose", weights.w_pose},
                  {"w_shape", weights.w_shape}, {"w_v", weights.w_v}};
  return j;
}

ParserConfig ParserConfig::from_json(const nlohmann::json& j) {
  ParserConfig c;
  c.k = j.value("k", c.k);
  c.pose_shape_hidden = j.value("pose_shape_hidden", c.pose_shape_hidden);
  c.parser_hidden = j.value("parser_hidden", c.parser_hidden);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.d_tol = j.value("d_tol", c.d_tol);
  c.tau = j.value("tau", c.tau);
  c.skin_margin = j.value("skin_margin", c.skin_margin);
  c.init_bias_tau = j.value("init_bias_tau", c.init_bias_tau);
  c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
  c.init_epochs = j.value("init_epochs", c.init_epochs);
  c.joint_epochs = j.value("joint_epochs", c.joint_epochs);
  c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.w_3d = w.value("w_3d", c.weights.w_3d);
    c.weights.w_norm = w.value("w_norm", c.weights.w_norm);
    c.weights.w_lap = w.value("w_lap", c.weights.w_lap);
    c.weights.w_interp = w.value("w_interp", c.weights.w_interp);
    c.weights.w_w = w.value("w_w", c.weights.w_w);
    c.weights.w_pose = w.value("w_pose", c.weights.w_pose);
    c.weights.w_shape = w.value("w_shape", c.weights.w_shape);
    c.weights.w_v = w.value("w_v", c.weights.w_v);
  }
  return c;
}

std::vector<double> mesh_features(const Mesh& mesh) {
  const int n = mesh.vertex_count();
  const Vec3 c = centroid(mesh);
  const std::vector<Vec3> normals = vertex_normals(mesh);
  std::vector<double> f(6 * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Vec3 p = mesh.vertices[i] - c;
    f[3 * i] = p.x;
    f[3 * i + 1] = p.y;
    f[3 * i + 2] = p.z;
    f[3 * n + 3 * i] = normals[i].x;
    f[3 * n + 3 * i + 1] = normals[i].y;
    f[3 * n + 3 * i + 2] = normals[i].z;
  }
  return f;
}

ParserBundle make_parser_bundle(const BodyModel& model, const ParserConfig& config) {
  ParserBundle b;
  b.config = config;
  b.model = model;
  b.skin_weighting = losses::make_skin_weighting(
      model.template_mesh(), model.skin_vertices, config.tau, config.skin_margin);

  const int in = 6 * model.vertex_count();
  Rng rng(config.seed ^ 0x9a75ULL);
  b.pose_net = nn::DenseNet::make(
      {{in, config.pose_shape_hidden, nn::Activation::kRelu},
       {config.pose_shape_hidden, config.pose_shape_hidden, nn::Activation::kRelu},
       {config.pose_shape_hidden, 3 * model.joint_count(), nn::Activation::kLinear}});
  nn::he_init(b.pose_net, rng);
  b.shape_net = nn::DenseNet::make(
      {{in, config.pose_shape_hidden, nn::Activation::kRelu},
       {config.pose_shape_hidden, config.pose_shape_hidden, nn::Activation::kRelu},
       {config.pose_shape_hidden, model.shape_count(), nn::Activation::kLinear}});
  nn::he_init(b.shape_net, rng);
  // The pose net's targets are small A-pose jitters; a small-scale output
  // layer starts it near the canonical pose. The shape net keeps the full
  // He scale since beta targets are O(1) and Adam at lr=1e-4 moves each
  // parameter too slowly to grow magnitudes from scratch.
  for (std::size_t i = b.pose_net.w_offset[2]; i < b.pose_net.params.size(); ++i)
    b.pose_net.params[i] *= 0.05;

  for (const auto& [name, g] : model.garments) {
    std::vector<Vec3> src(g.size());
    for (int i = 0; i < g.size(); ++i) src[i] = model.template_verts[g.body_vertex[i]];
    b.garment_heads[name] = make_head(model, src, g.faces, config, rng);
  }
  {
    const auto& domain = b.skin_weighting.skin_vertices;
    std::vector<Vec3> src(domain.size());
    for (std::size_t i = 0; i < domain.size(); ++i)
      src[i] = model.template_verts[domain[i]];
    b.body_head = make_head(
        model, src, restrict_faces(model.faces, domain, model.vertex_count()), config,
        rng);
  }
  return b;
}

std::pair<std::vector<double>, std::vector<double>> predict_pose_shape(
    const ParserBundle& bundle, const Mesh& mesh) {
  const std::vector<double> f = mesh_features(mesh);
  BatchMat x(static_cast<int>(f.size()), 1);
  x.a = f;
  const BatchMat theta = nn::forward(bundle.pose_net, x, nullptr);
  const BatchMat beta = nn::forward(bundle.shape_net, x, nullptr);
  for (double v : theta.a)
    if (!std::isfinite(v)) throw std::runtime_error("pose net: non-finite output");
  for (double v : beta.a)
    if (!std::isfinite(v)) throw std::runtime_error("shape net: non-finite output");
  return {theta.a, beta.a};
}

SparseRegressor predict_regressor(const nn::DenseNet& net,
                                  const std::vector<int>& neighborhoods, int rows,
                                  int k, const Mesh& mesh) {
  const std::vector<double> f = mesh_features(mesh);
  BatchMat x(static_cast<int>(f.size()), 1);
  x.a = f;
  const BatchMat z = nn::forward(net, x, nullptr);
  for (double v : z.a)
    if (!std::isfinite(v)) throw std::runtime_error("regressor: non-finite logits");
  SparseRegressor w;
  w.rows = rows;
  w.k = k;
  w.neighbors = neighborhoods;
  w.weights = z.a;
  kernels::softmax_rows(w.weights.data(), rows, k);
  return w;
}

Mesh apply_regressor(const SparseRegressor& w, const Mesh& mesh,
                     const std::vector<std::array<int, 3>>& faces) {
  Mesh out;
  out.faces = faces;
  out.vertices.resize(w.rows);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < w.rows; ++i) {
    const int* nbr = w.row_neighbors(i);
    const double* ww = w.row_weights(i);
    Vec3 acc;
    for (int j = 0; j < w.k; ++j) acc += ww[j] * mesh.vertices.at(nbr[j]);
    out.vertices[i] = acc;
  }
  return out;
}

namespace {

// Shared training helpers.

struct AdamBundle {
  nn::AdamState state;
  std::vector<double> grads;
  explicit AdamBundle(const nn::DenseNet& net, double lr)
      : state(net.params.size(), {lr, 0.9, 0.999, 1e-8}),
        grads(net.params.size(), 0.0) {}
  void step(nn::DenseNet& net) {
    nn::adam_step(state, net.params, grads);
    std::fill(grads.begin(), grads.end(), 0.0);
  }
};

// Per-item state shared across training stages.
struct ItemCache {
  std::vector<double> features;
  const synth::Instance* instance = nullptr;  // null for undressed items
  const synth::SubjectParams* subject = nullptr;
  Mesh undressed;  // only for undressed items
  const Mesh& input_mesh() const {
    return instance != nullptr ? instance->single : undressed;
  }
};

}  // namespace

void init_to_indicator(RegressorHead& head, const GarmentTemplate& garment,
                       const std::vector<Vec3>& model_template,
                       const std::vector<const Mesh*>& training_meshes,
                       const ParserConfig& config, std::uint64_t seed,
                       std::vector<TrainLogRow>* log_rows) {
  // Targets: position of the associated body vertex inside each row's
  // neighborhood (guaranteed by the k-NN construction: distance zero).
  std::vector<int> target(head.rows, -1);
  for (int i = 0; i < head.rows; ++i) {
    const int want = garment.body_vertex[i];
    const int* nbr = head.neighborhoods.data() + static_cast<std::size_t>(i) * head.k;
    for (int j = 0; j < head.k; ++j)
      if (nbr[j] == want) {
        target[i] = j;
        break;
      }
    if (target[i] < 0)
      throw std::runtime_error("init_to_indicator: associated vertex missing from N_i");
  }

  // Start the output layer as the cut-out: distance-shaped logit biases
  // (b_ij = -d_ij / tau) so the row peaks on the associated vertex but keeps
  // live gradients on its nearest neighbors. Rows whose neighborhoods are
  // tight get their biases sharpened until the softmax deviation from the
  // one-hot target is at most 0.04. Adam at the configured learning rate
  // could not grow logit gaps like these from a cold start.
  const int l = head.net.layer_count() - 1;
  Rng rng(seed ^ 0x1234ULL);
  const auto& spec = head.net.spec[l];
  double* w = head.net.w(l);
  const double bound = 0.01 * std::sqrt(6.0 / spec.in);
  for (std::size_t i = 0; i < static_cast<std::size_t>(spec.out) * spec.in; ++i)
    w[i] = rng.uniform(-bound, bound);
  double* bias = head.net.b(l);
  for (int i = 0; i < head.rows; ++i) {
    const int* nbr = head.neighborhoods.data() + static_cast<std::size_t>(i) * head.k;
    const Vec3 anchor = model_template[garment.body_vertex[i]];
    double* row = bias + static_cast<std::size_t>(i) * head.k;
    for (int j = 0; j < head.k; ++j)
      row[j] = -norm(model_template[nbr[j]] - anchor) / config.init_bias_tau;
    // Sharpen until sum_{j != t} exp(b_j) <= 0.04 / (1 - 0.04).
    double scale = 1.0;
    for (int iter = 0; iter < 60; ++iter) {
      double mass = 0.0;
      for (int j = 0; j < head.k; ++j)
        if (j != target[i]) mass += std::exp(scale * row[j]);
      if (mass <= 0.04 / 0.96) break;
      scale *= 1.15;
    }
    if (scale != 1.0)
      for (int j = 0; j < head.k; ++j) row[j] *= scale;
  }

  AdamBundle adam(head.net, config.lr);
  std::vector<const Mesh*> order = training_meshes;
  Rng shuffle_rng(seed ^ 0x777ULL);
  for (int epoch = 0; epoch < config.init_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
      const std::size_t bsz = std::min<std::size_t>(config.batch_size, order.size() - at);
      std::vector<std::vector<double>> feats(bsz);
      std::vector<const std::vector<double>*> cols(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        feats[b] = mesh_features(*order[at + b]);
        cols[b] = &feats[b];
      }
      const BatchMat x = assemble_features(cols);
      nn::ForwardCache cache;
      const BatchMat z = nn::forward(head.net, x, &cache);
      BatchMat dz(z.dim, z.batch);
      std::vector<double> batch_loss(bsz, 0.0);
#pragma omp parallel for schedule(static)
      for (int b = 0; b < static_cast<int>(bsz); ++b) {
        std::vector<double> probs = z.column(b);
        kernels::ref::softmax_rows(probs.data(), head.rows, head.k);
        double nll = 0.0;
        const double inv_m = 1.0 / head.rows;
        for (int i = 0; i < head.rows; ++i) {
          const double pt = probs[static_cast<std::size_t>(i) * head.k + target[i]];
          nll -= std::log(std::max(pt, 1e-300)) * inv_m;
          for (int j = 0; j < head.k; ++j) {
            const double p = probs[static_cast<std::size_t>(i) * head.k + j];
            dz.at(i * head.k + j, b) = (p - (j == target[i] ? 1.0 : 0.0)) * inv_m;
          }
        }
        batch_loss[b] = nll;
      }
      for (double bl : batch_loss) epoch_loss += bl;
      nn::backward(head.net, cache, dz, adam.grads);
      adam.step(head.net);
    }
    if (log_rows != nullptr)
      log_rows->push_back({"init:" + garment.class_name, epoch, epoch_loss});
  }

  // Post-condition: rows are still (sharper) cut-outs on the training set.
  double max_dev = 0.0;
  for (const Mesh* mesh : training_meshes) {
    const SparseRegressor w_pred =
        predict_regressor(head.net, head.neighborhoods, head.rows, head.k, *mesh);
    for (int i = 0; i < head.rows; ++i) {
      const double* row = w_pred.row_weights(i);
      for (int j = 0; j < head.k; ++j) {
        const double want = j == target[i] ? 1.0 : 0.0;
        max_dev = std::max(max_dev, std::abs(row[j] - want));
      }
    }
  }
  if (max_dev >= 0.05)
    throw std::runtime_error("init_to_indicator: max row deviation " +
                             std::to_string(max_dev) + " >= 0.05");
}

namespace {

// One optimizer step of a garment head over a batch of instances.
double garment_head_step(RegressorHead& head, AdamBundle& adam,
                         const std::vector<const ItemCache*>& batch,
                         const ParserConfig& cfg) {
  std::vector<const std::vector<double>*> cols(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) cols[b] = &batch[b]->features;
  const BatchMat x = assemble_features(cols);
  nn::ForwardCache cache;
  const BatchMat z = nn::forward(head.net, x, &cache);
  BatchMat dz(z.dim, z.batch);
  std::vector<double> batch_loss(batch.size(), 0.0);

#pragma omp parallel for schedule(static)
  for (int b = 0; b < static_cast<int>(batch.size()); ++b) {
    const synth::Instance& inst = *batch[b]->instance;
    SparseRegressor w;
    w.rows = head.rows;
    w.k = head.k;
    w.neighbors = head.neighborhoods;
    w.weights = z.column(b);
    kernels::ref::softmax_rows(w.weights.data(), head.rows, head.k);

    std::vector<Vec3> pred(head.rows);
    for (int i = 0; i < head.rows; ++i) {
      const int* nbr = w.row_neighbors(i);
      const double* ww = w.row_weights(i);
      Vec3 acc;
      for (int j = 0; j < head.k; ++j) acc += ww[j] * inst.single.vertices[nbr[j]];
      pred[i] = acc;
    }

    const losses::CompositeLoss comp = losses::loss_parser_total(
        pred, inst.garment, head.laplacian, inst.body, w, inst.single, cfg.d_tol,
        cfg.weights);
    batch_loss[b] = comp.value;

    // dW_ij = dpred_i . M_j (+ regularizer term), then through the softmax.
    std::vector<double> dw(w.weights.size());
    for (int i = 0; i < head.rows; ++i) {
      const int* nbr = w.row_neighbors(i);
      for (int j = 0; j < head.k; ++j) {
        double g = dot(comp.dpred[i], inst.single.vertices[nbr[j]]);
        if (!comp.dweights.empty()) g += comp.dweights[static_cast<std::size_t>(i) * head.k + j];
        dw[static_cast<std::size_t>(i) * head.k + j] = g;
      }
    }
    std::vector<double> dzb(w.weights.size());
    softmax_rows_backward(w.weights.data(), dw.data(), dzb.data(), head.rows, head.k);
    for (std::size_t e = 0; e < dzb.size(); ++e)
      dz.at(static_cast<int>(e), b) = dzb[e];
  }

  nn::backward(head.net, cache, dz, adam.grads);
  adam.step(head.net);
  double total = 0.0;
  for (double v : batch_loss) total += v;
  return total;
}

// One optimizer step of the body head (geodesic-weighted skin supervision).
double body_head_step(RegressorHead& head, AdamBundle& adam,
                      const std::vector<const ItemCache*>& batch,
                      const losses::SkinWeighting& weighting, const ParserConfig& cfg) {
  std::vector<const std::vector<double>*> cols(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) cols[b] = &batch[b]->features;
  const BatchMat x = assemble_features(cols);
  nn::ForwardCache cache;
  const BatchMat z = nn::forward(head.net, x, &cache);
  BatchMat dz(z.dim, z.batch);
  std::vector<double> batch_loss(batch.size(), 0.0);
  const std::vector<int>& domain = weighting.skin_vertices;

#pragma omp parallel for schedule(static)
  for (int b = 0; b < static_cast<int>(batch.size()); ++b) {
    const Mesh& input = batch[b]->input_mesh();
    SparseRegressor w;
    w.rows = head.rows;
    w.k = head.k;
    w.neighbors = head.neighborhoods;
    w.weights = z.column(b);
    kernels::ref::softmax_rows(w.weights.data(), head.rows, head.k);

    std::vector<Vec3> pred(head.rows);
    for (int i = 0; i < head.rows; ++i) {
      const int* nbr = w.row_neighbors(i);
      const double* ww = w.row_weights(i);
      Vec3 acc;
      for (int j = 0; j < head.k; ++j) acc += ww[j] * input.vertices[nbr[j]];
      pred[i] = acc;
    }

    // Self-supervised: the visible-skin slice of the input mesh is the
    // reference for all three geometric terms.
    std::vector<Vec3> ref_verts(domain.size());
    for (std::size_t i = 0; i < domain.size(); ++i)
      ref_verts[i] = input.vertices[domain[i]];
    const Mesh ref{ref_verts, head.faces};

    double value = 0.0;
    std::vector<Vec3> dpred(head.rows);
    {
      const auto l = losses::loss_body_3d(pred, input, weighting);
      value += cfg.weights.w_3d * l.value;
      for (int i = 0; i < head.rows; ++i) dpred[i] += l.grad[i] * cfg.weights.w_3d;
    }
    if (cfg.weights.w_norm != 0.0) {
      const auto l = losses::loss_normal(Mesh{pred, head.faces}, ref);
      value += cfg.weights.w_norm * l.value;
      for (int i = 0; i < head.rows; ++i) dpred[i] += l.grad[i] * cfg.weights.w_norm;
    }
    if (cfg.weights.w_lap != 0.0) {
      const auto l = losses::loss_laplacian(pred, ref_verts, head.laplacian);
      value += cfg.weights.w_lap * l.value;
      for (int i = 0; i < head.rows; ++i) dpred[i] += l.grad[i] * cfg.weights.w_lap;
    }
    std::vector<double> dw(w.weights.size(), 0.0);
    if (cfg.weights.w_w != 0.0) {
      const auto l = losses::loss_weight_reg(w, input);
      value += cfg.weights.w_w * l.value;
      for (std::size_t e = 0; e < dw.size(); ++e) dw[e] = cfg.weights.w_w * l.grad[e];
    }
    batch_loss[b] = value;

    for (int i = 0; i < head.rows; ++i) {
      const int* nbr = w.row_neighbors(i);
      for (int j = 0; j < head.k; ++j)
        dw[static_cast<std::size_t>(i) * head.k + j] +=
            dot(dpred[i], input.vertices[nbr[j]]);
    }
    std::vector<double> dzb(w.weights.size());
    softmax_rows_backward(w.weights.data(), dw.data(), dzb.data(), head.rows, head.k);
    for (std::size_t e = 0; e < dzb.size(); ++e)
      dz.at(static_cast<int>(e), b) = dzb[e];
  }

  nn::backward(head.net, cache, dz, adam.grads);
  adam.step(head.net);
  double total = 0.0;
  for (double v : batch_loss) total += v;
  return total;
}

double pose_shape_step(ParserBundle& bundle, AdamBundle& pose_adam,
                       AdamBundle& shape_adam,
                       const std::vector<const ItemCache*>& batch) {
  const BodyModel& model = bundle.model;
  std::vector<const std::vector<double>*> cols(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) cols[b] = &batch[b]->features;
  const BatchMat x = assemble_features(cols);

  nn::ForwardCache pose_cache, shape_cache;
  const BatchMat theta_hat = nn::forward(bundle.pose_net, x, &pose_cache);
  const BatchMat beta_hat = nn::forward(bundle.shape_net, x, &shape_cache);
  BatchMat dtheta(theta_hat.dim, theta_hat.batch);
  BatchMat dbeta(beta_hat.dim, beta_hat.batch);
  std::vector<double> batch_loss(batch.size(), 0.0);

#pragma omp parallel for schedule(static)
  for (int b = 0; b < static_cast<int>(batch.size()); ++b) {
    const ItemCache& item = *batch[b];
    const Mesh& input = item.input_mesh();
    const auto& beta_gt = item.subject->beta;
    const auto& theta_gt = item.subject->theta;

    // Pose branch: M(beta_gt, theta_hat, 0).
    BodyParams pp = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
    pp.beta = beta_gt;
    pp.theta = theta_hat.column(b);
    const Mesh pose_body = skin(model, pp);
    const auto pl = losses::loss_pose(pp.theta, theta_gt, pose_body.vertices, input,
                                      bundle.config.weights);
    const SkinGrads pg = skin_backward(model, pp, pl.dbody_pred);
    for (int t = 0; t < dtheta.dim; ++t)
      dtheta.at(t, b) = pl.dtheta_pred[t] + pg.dtheta[t];

    // Shape branch: M(beta_hat, theta_gt, 0).
    BodyParams sp = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
    sp.beta = beta_hat.column(b);
    sp.theta = theta_gt;
    const Mesh shape_body = skin(model, sp);
    const auto sl =
        losses::loss_shape(sp.beta, beta_gt, model.shape_sigmas, shape_body.vertices,
                           input, bundle.config.weights);
    const SkinGrads sg = skin_backward(model, sp, sl.dbody_pred);
    for (int k = 0; k < dbeta.dim; ++k) dbeta.at(k, b) = sl.dbeta_pred[k] + sg.dbeta[k];

    batch_loss[b] = pl.value + sl.value;
  }

  nn::backward(bundle.pose_net, pose_cache, dtheta, pose_adam.grads);
  pose_adam.step(bundle.pose_net);
  nn::backward(bundle.shape_net, shape_cache, dbeta, shape_adam.grads);
  shape_adam.step(bundle.shape_net);
  double total = 0.0;
  for (double v : batch_loss) total += v;
  return total;
}

template <typename StepFn>
double run_epoch(std::vector<const ItemCache*>& items, Rng& rng, int batch_size,
                 StepFn&& step) {
  rng.shuffle(items);
  double epoch_loss = 0.0;
  for (std::size_t at = 0; at < items.size(); at += batch_size) {
    const std::size_t bsz = std::min<std::size_t>(batch_size, items.size() - at);
    std::vector<const ItemCache*> batch(items.begin() + at, items.begin() + at + bsz);
    epoch_loss += step(batch);
  }
  return epoch_loss;
}

}  // namespace

std::vector<TrainLogRow> train_parser(ParserBundle& bundle,
                                      const synth::Dataset& dataset) {
  const ParserConfig& cfg = bundle.config;
  const BodyModel& model = bundle.model;
  std::vector<TrainLogRow> log_rows;

  // Item caches: clothed train instances plus each train subject's
  // undressed body (D = 0), which anchors shape recovery off-garment.
  std::vector<ItemCache> items;
  std::vector<char> subject_in_train(dataset.subjects.size(), 0);
  for (int idx : dataset.train_idx) {
    const synth::Instance& inst = dataset.instances[idx];
    ItemCache it;
    it.instance = &inst;
    it.subject = &dataset.subjects[inst.subject];
    it.features = mesh_features(inst.single);
    items.push_back(std::move(it));
    subject_in_train[inst.subject] = 1;
  }
  const std::size_t clothed_count = items.size();
  for (std::size_t s = 0; s < dataset.subjects.size(); ++s) {
    if (!subject_in_train[s]) continue;
    ItemCache it;
    it.subject = &dataset.subjects[s];
    BodyParams p = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
    p.beta = it.subject->beta;
    p.theta = it.subject->theta;
    it.undressed = skin(model, p);
    it.features = mesh_features(it.undressed);
    items.push_back(std::move(it));
  }

  // Stage 1: pose and shape networks, trained separately on all items.
  {
    AdamBundle pose_adam(bundle.pose_net, cfg.lr);
    AdamBundle shape_adam(bundle.shape_net, cfg.lr);
    std::vector<const ItemCache*> ptrs;
    for (const auto& it : items) ptrs.push_back(&it);
    Rng rng(cfg.seed ^ 0x51a6e1ULL);
    for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
      const double loss = run_epoch(ptrs, rng, cfg.batch_size, [&](const auto& batch) {
        return pose_shape_step(bundle, pose_adam, shape_adam, batch);
      });
      log_rows.push_back({"pose_shape", epoch, loss});
      log::debug("stage1 epoch %d loss %.6f", epoch, loss);
    }
  }

  // Stage 2: indicator initialization for every head.
  {
    std::vector<const Mesh*> train_meshes;
    for (std::size_t i = 0; i < clothed_count; ++i)
      train_meshes.push_back(&items[i].instance->single);
    for (auto& [name, head] : bundle.garment_heads)
      init_to_indicator(head, model.garments.at(name), model.template_verts,
                        train_meshes, cfg, cfg.seed ^ fnv1a(name), &log_rows);
    // The body head's indicator target is the skin-domain vertex itself.
    GarmentTemplate body_as_garment;
    body_as_garment.class_name = "body";
    body_as_garment.body_vertex = bundle.skin_weighting.skin_vertices;
    body_as_garment.faces = bundle.body_head.faces;
    init_to_indicator(bundle.body_head, body_as_garment, model.template_verts,
                      train_meshes, cfg, cfg.seed ^ fnv1a("body"), &log_rows);
  }

  // Stage 3: joint pass over all garment classes plus the body head.
  std::map<std::string, std::vector<const ItemCache*>> class_items;
  std::vector<const ItemCache*> clothed_ptrs;
  for (std::size_t i = 0; i < clothed_count; ++i) {
    class_items[items[i].instance->class_name].push_back(&items[i]);
    clothed_ptrs.push_back(&items[i]);
  }
  std::map<std::string, AdamBundle> head_adam;
  for (auto& [name, head] : bundle.garment_heads)
    head_adam.emplace(name, AdamBundle(head.net, cfg.lr));
  AdamBundle body_adam(bundle.body_head.net, cfg.lr);

  Rng joint_rng(cfg.seed ^ 0x3017ULL);
  for (int epoch = 0; epoch < cfg.joint_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (auto& [name, head] : bundle.garment_heads) {
      epoch_loss += run_epoch(class_items[name], joint_rng, cfg.batch_size,
                              [&](const auto& batch) {
                                return garment_head_step(head, head_adam.at(name),
                                                         batch, cfg);
                              });
    }
    epoch_loss += run_epoch(clothed_ptrs, joint_rng, cfg.batch_size,
                            [&](const auto& batch) {
                              return body_head_step(bundle.body_head, body_adam, batch,
                                                    bundle.skin_weighting, cfg);
                            });
    log_rows.push_back({"joint", epoch, epoch_loss});
    log::debug("joint epoch %d loss %.6f", epoch, epoch_loss);
  }

  // Stage 4: per-class fine-tuning.
  for (auto& [name, head] : bundle.garment_heads) {
    Rng rng(cfg.seed ^ fnv1a("finetune:" + name));
    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
      const double loss = run_epoch(class_items[name], rng, cfg.batch_size,
                                    [&](const auto& batch) {
                                      return garment_head_step(head, head_adam.at(name),
                                                               batch, cfg);
                                    });
      log_rows.push_back({"finetune:" + name, epoch, loss});
    }
  }
  return log_rows;
}

ParseResult parse(const ParserBundle& bundle, const Mesh& mesh) {
  ParseResult out;
  auto [theta, beta] = predict_pose_shape(bundle, mesh);
  out.theta = theta;
  out.beta = beta;

  for (const auto& [name, head] : bundle.garment_heads) {
    const SparseRegressor w =
        predict_regressor(head.net, head.neighborhoods, head.rows, head.k, mesh);
    Mesh garment = apply_regressor(w, mesh, head.faces);
    if (bundle.model.garments.at(name).layer == GarmentLayer::kUpper)
      out.upper = std::move(garment);
    else
      out.lower = std::move(garment);
  }

  BodyParams p = BodyParams::zero(bundle.model.shape_count(),
                                  bundle.model.joint_count(), 0);
  p.beta = beta;
  p.theta = theta;
  out.smooth_body = skin(bundle.model, p);

  const SparseRegressor wb =
      predict_regressor(bundle.body_head.net, bundle.body_head.neighborhoods,
                        bundle.body_head.rows, bundle.body_head.k, mesh);
  const Mesh skin_pred = apply_regressor(wb, mesh, bundle.body_head.faces);
  out.body = out.smooth_body;
  const auto& domain = bundle.skin_weighting.skin_vertices;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const double wgt = bundle.skin_weighting.w_geo[i];
    out.body.vertices[domain[i]] =
        wgt * skin_pred.vertices[i] + (1.0 - wgt) * out.smooth_body.vertices[domain[i]];
  }
  return out;
}

namespace {

nlohmann::json head_json(const RegressorHead& head) {
  nlohmann::json j;
  j["rows"] = head.rows;
  j["k"] = head.k;
  j["spec"] = nn::net_spec_json(head.net);
  j["neighborhoods"] = head.neighborhoods;
  nlohmann::json faces = nlohmann::json::array();
  for (const auto& f : head.faces) faces.push_back({f[0], f[1], f[2]});
  j["faces"] = faces;
  return j;
}

RegressorHead head_from_json(const nlohmann::json& j) {
  RegressorHead head;
  head.rows = j.at("rows").get<int>();
  head.k = j.at("k").get<int>();
  head.net = nn::net_from_spec(j.at("spec"));
  head.neighborhoods = j.at("neighborhoods").get<std::vector<int>>();
  for (const auto& f : j.at("faces"))
    head.faces.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
  head.laplacian = faces_laplacian(head.rows, head.faces);
  return head;
}

}  // namespace

void save_parser(const std::filesystem::path& dir, const ParserBundle& bundle) {
  std::filesystem::create_directories(dir);
  save_body_model(dir / "body_model", bundle.model);
  nlohmann::json manifest;
  manifest["config"] = bundle.config.to_json();
  manifest["config_hash"] = config_hash(bundle.config.to_json());
  manifest["pose_net"] = nn::net_spec_json(bundle.pose_net);
  manifest["shape_net"] = nn::net_spec_json(bundle.shape_net);
  nlohmann::json heads = nlohmann::json::object();
  for (const auto& [name, head] : bundle.garment_heads) heads[name] = head_json(head);
  manifest["garment_heads"] = heads;
  manifest["body_head"] = head_json(bundle.body_head);
  manifest["skin_weighting"] = {{"vertices", bundle.skin_weighting.skin_vertices},
                                {"w_geo", bundle.skin_weighting.w_geo}};
  write_json_file(dir / "manifest.json", manifest);

  nn::save_net(dir, "pose_net", bundle.pose_net);
  nn::save_net(dir, "shape_net", bundle.shape_net);
  for (const auto& [name, head] : bundle.garment_heads)
    nn::save_net(dir, "head_" + name, head.net);
  nn::save_net(dir, "head_body", bundle.body_head.net);
}

ParserBundle load_parser(const std::filesystem::path& dir) {
  ParserBundle bundle;
  const nlohmann::json manifest = read_json_file(dir / "manifest.json");
  bundle.config = ParserConfig::from_json(manifest.at("config"));
  bundle.model = load_body_model(dir / "body_model");
  bundle.pose_net = nn::net_from_spec(manifest.at("pose_net"));
  bundle.shape_net = nn::net_from_spec(manifest.at("shape_net"));
  nn::load_net_params(dir, "pose_net", bundle.pose_net);
  nn::load_net_params(dir, "shape_net", bundle.shape_net);
  for (const auto& [name, jh] : manifest.at("garment_heads").items()) {
    bundle.garment_heads[name] = head_from_json(jh);
    nn::load_net_params(dir, "head_" + name, bundle.garment_heads[name].net);
  }
  bundle.body_head = head_from_json(manifest.at("body_head"));
  nn::load_net_params(dir, "head_body", bundle.body_head.net);
  bundle.skin_weighting.skin_vertices =
      manifest.at("skin_weighting").at("vertices").get<std::vector<int>>();
  bundle.skin_weighting.w_geo =
      manifest.at("skin_weighting").at("w_geo").get<std::vector<double>>();
  return bundle;
}

}  // namespace gf::parsernet
