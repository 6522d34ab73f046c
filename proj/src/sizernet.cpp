#include "gf/sizernet.h"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "gf/config.h"
#include "gf/log.h"

namespace gf::sizernet {

namespace {

using nn::BatchMat;

SparseMatrix class_laplacian(const GarmentTemplate& g) {
  Mesh tmp;
  tmp.vertices.resize(g.size());
  tmp.faces = g.faces;
  return graph_laplacian(tmp).matrix;
}

std::vector<double> flatten(const std::vector<Vec3>& v) {
  std::vector<double> out(v.size() * 3);
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[3 * i] = v[i].x;
    out[3 * i + 1] = v[i].y;
    out[3 * i + 2] = v[i].z;
  }
  return out;
}

BatchMat concat_batches(const BatchMat& a, const BatchMat& b) {
  BatchMat out(a.dim + b.dim, a.batch);
  for (int c = 0; c < a.batch; ++c) {
    for (int d = 0; d < a.dim; ++d) out.at(d, c) = a.at(d, c);
    for (int d = 0; d < b.dim; ++d) out.at(a.dim + d, c) = b.at(d, c);
  }
  return out;
}

void split_batch(const BatchMat& joint, int first_dim, BatchMat& a, BatchMat& b) {
  a = BatchMat(first_dim, joint.batch);
  b = BatchMat(joint.dim - first_dim, joint.batch);
  for (int c = 0; c < joint.batch; ++c) {
    for (int d = 0; d < first_dim; ++d) a.at(d, c) = joint.at(d, c);
    for (int d = first_dim; d < joint.dim; ++d) b.at(d - first_dim, c) = joint.at(d, c);
  }
}

// Forward pass with every intermediate kept for the skip-aware backward.
struct SizerCache {
  nn::ForwardCache enc1, enc2, enc3, dec1, dec2, dec3;
  BatchMat h1, h2, latent, d1_in, d2_in, out;
};

BatchMat sizer_forward(const SizerModel& m, const BatchMat& enc_in,
                       const BatchMat& cond, SizerCache* cache) {
  SizerCache local;
  SizerCache& c = cache != nullptr ? *cache : local;
  c.h1 = nn::forward(m.enc1, enc_in, &c.enc1);
  c.h2 = nn::forward(m.enc2, c.h1, &c.enc2);
  c.latent = nn::forward(m.enc3, c.h2, &c.enc3);
  const BatchMat cond_full = concat_batches(cond, c.latent);
  c.d1_in = concat_batches(cond_full, c.h2);
  const BatchMat g1 = nn::forward(m.dec1, c.d1_in, &c.dec1);
  c.d2_in = concat_batches(g1, c.h1);
  const BatchMat g2 = nn::forward(m.dec2, c.d2_in, &c.dec2);
  c.out = nn::forward(m.dec3, g2, &c.dec3);
  return c.out;
}

struct SizerGrads {
  std::vector<double> enc1, enc2, enc3, dec1, dec2, dec3;
  explicit SizerGrads(const SizerModel& m)
      : enc1(m.enc1.params.size(), 0.0),
        enc2(m.enc2.params.size(), 0.0),
        enc3(m.enc3.params.size(), 0.0),
        dec1(m.dec1.params.size(), 0.0),
        dec2(m.dec2.params.size(), 0.0),
        dec3(m.dec3.params.size(), 0.0) {}
};

void sizer_backward(const SizerModel& m, const SizerCache& c, const BatchMat& dout,
                    SizerGrads& grads) {
  const int cond_dim = m.model.shape_count() + m.config.latent + 8;
  const BatchMat dg2 = nn::backward(m.dec3, c.dec3, dout, grads.dec3);
  const BatchMat dd2_in = nn::backward(m.dec2, c.dec2, dg2, grads.dec2);
  BatchMat dg1, dh1_skip;
  split_batch(dd2_in, m.dec1.output_dim(), dg1, dh1_skip);
  const BatchMat dd1_in = nn::backward(m.dec1, c.dec1, dg1, grads.dec1);
  BatchMat dcond_full, dh2_skip;
  split_batch(dd1_in, cond_dim, dcond_full, dh2_skip);
  BatchMat dcond, dlatent;
  split_batch(dcond_full, cond_dim - m.config.latent, dcond, dlatent);

  BatchMat dh2 = nn::backward(m.enc3, c.enc3, dlatent, grads.enc3);
  for (std::size_t i = 0; i < dh2.a.size(); ++i) dh2.a[i] += dh2_skip.a[i];
  BatchMat dh1 = nn::backward(m.enc2, c.enc2, dh2, grads.enc2);
  for (std::size_t i = 0; i < dh1.a.size(); ++i) dh1.a[i] += dh1_skip.a[i];
  nn::backward(m.enc1, c.enc1, dh1, grads.enc1);
}

}  // namespace

nlohmann::json SizerConfig::to_json() const {
  nlohmann::json j;
  j["latent"] = latent;
  j["hidden"] = hidden;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["d_tol"] = d_tol;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["weights"] = {{"w_3d", weights.w_3d},
                  {"w_norm", weights.w_norm},
                  {"w_lap", weights.w_lap},
                  {"w_interp", weights.w_interp},
                  {"w_v", weights.w_v}};
  return j;
}

SizerConfig SizerConfig::from_json(const nlohmann::json& j) {
  SizerConfig c;
  c.latent = j.value("latent", c.latent);
  c.hidden = j.value("hidden", c.hidden);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.d_tol = j.value("d_tol", c.d_tol);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.w_3d = w.value("w_3d", c.weights.w_3d);
    c.weights.w_norm = w.value("w_norm", c.weights.w_norm);
    c.weights.w_lap = w.value("w_lap", c.weights.w_lap);
    c.weights.w_interp = w.value("w_interp", c.weights.w_interp);
    c.weights.w_v = w.value("w_v", c.weights.w_v);
  }
  return c;
}

SizerModel make_sizer(const BodyModel& model, const std::string& class_name,
                      const SizerConfig& config) {
  SizerModel m;
  m.config = config;
  m.model = model;
  m.class_name = class_name;
  const GarmentTemplate& g = model.garments.at(class_name);
  const int mg3 = g.size() * 3;
  const int h = config.hidden;
  const int cond = model.shape_count() + config.latent + 8;
  Rng rng(config.seed ^ fnv1a("sizer:" + class_name));
  m.enc1 = nn::DenseNet::make({{mg3, h, nn::Activation::kRelu}});
  m.enc2 = nn::DenseNet::make({{h, h, nn::Activation::kRelu}});
  m.enc3 = nn::DenseNet::make({{h, config.latent, nn::Activation::kLinear}});
  m.dec1 = nn::DenseNet::make({{cond + h, h, nn::Activation::kRelu}});
  m.dec2 = nn::DenseNet::make({{h + h, h, nn::Activation::kRelu}});
  m.dec3 = nn::DenseNet::make({{h, mg3, nn::Activation::kLinear}});
  nn::he_init(m.enc1, rng);
  nn::he_init(m.enc2, rng);
  nn::he_init(m.enc3, rng);
  nn::he_init(m.dec1, rng);
  nn::he_init(m.dec2, rng);
  nn::he_init(m.dec3, rng);
  // Displacement outputs are centimeter scale; start the output layer there.
  for (auto& p : m.dec3.params) p *= 0.02;
  m.laplacian = class_laplacian(g);
  return m;
}

std::vector<double> encode(const SizerModel& model,
                           const std::vector<Vec3>& garment_unposed) {
  if (static_cast<int>(garment_unposed.size()) != model.garment_size())
    throw std::invalid_argument("encode: wrong garment class size");
  BatchMat x(model.garment_size() * 3, 1);
  x.a = flatten(garment_unposed);
  const BatchMat h1 = nn::forward(model.enc1, x, nullptr);
  const BatchMat h2 = nn::forward(model.enc2, h1, nullptr);
  const BatchMat z = nn::forward(model.enc3, h2, nullptr);
  for (double v : z.a)
    if (!std::isfinite(v)) throw std::runtime_error("encode: non-finite latent");
  return z.a;
}

Mesh resize(const SizerModel& model, const std::vector<Vec3>& garment_posed,
            const std::vector<double>& beta, const SizeLabel& delta_in,
            const SizeLabel& delta_out, const std::vector<double>& theta) {
  delta_in.index();   // validates one-hot
  delta_out.index();
  if (static_cast<int>(beta.size()) != model.model.shape_count())
    throw std::invalid_argument("resize: beta dimension mismatch");
  const GarmentTemplate& g = model.model.garments.at(model.class_name);
  const std::vector<Vec3> d_in =
      garment_unskin(model.model, g, beta, theta, garment_posed);
  const std::vector<double> zero_theta(theta.size(), 0.0);
  const std::vector<Vec3> tmpl = garment_template(model.model, g, beta, zero_theta);
  std::vector<Vec3> enc_in(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) enc_in[i] = tmpl[i] + d_in[i];

  BatchMat x(model.garment_size() * 3, 1);
  x.a = flatten(enc_in);
  BatchMat cond(model.model.shape_count() + 8, 1);
  for (int i = 0; i < model.model.shape_count(); ++i) cond.at(i, 0) = beta[i];
  for (int i = 0; i < 4; ++i) {
    cond.at(model.model.shape_count() + i, 0) = delta_in.onehot[i];
    cond.at(model.model.shape_count() + 4 + i, 0) = delta_out.onehot[i];
  }
  const BatchMat out = sizer_forward(model, x, cond, nullptr);
  std::vector<Vec3> d_out(g.size());
  for (int i = 0; i < g.size(); ++i)
    d_out[i] = {out.a[3 * i], out.a[3 * i + 1], out.a[3 * i + 2]};
  return garment_skin(model.model, g, beta, theta, d_out);
}

std::vector<TrainLogRow> train_sizer(SizerModel& model, const synth::Dataset& dataset) {
  const SizerConfig& cfg = model.config;
  const GarmentTemplate& g = model.model.garments.at(model.class_name);
  const int mg = g.size();

  // Ordered same-subject size pairs (identity included) from the train split.
  struct Pair {
    const synth::Instance* in;
    const synth::Instance* out;
    const synth::SubjectParams* subject;
  };
  std::vector<Pair> pairs;
  std::map<int, std::vector<const synth::Instance*>> by_subject;
  for (int idx : dataset.train_idx) {
    const synth::Instance& inst = dataset.instances[idx];
    if (inst.class_name == model.class_name) by_subject[inst.subject].push_back(&inst);
  }
  for (const auto& [subject, insts] : by_subject)
    for (const auto* a : insts)
      for (const auto* b : insts)
        pairs.push_back({a, b, &dataset.subjects[subject]});
  if (pairs.empty()) throw std::invalid_argument("train_sizer: no training pairs");

  // Per-subject caches: template cut and blended vertex transforms.
  std::map<int, std::vector<Vec3>> tmpl_cache;
  std::map<int, std::vector<Vec3>> tmpl_posed_cache;
  std::map<int, std::vector<Affine>> xf_cache;
  const std::vector<double> zero_theta(3 * model.model.joint_count(), 0.0);
  for (const auto& [subject, insts] : by_subject) {
    const auto& sp = dataset.subjects[subject];
    tmpl_cache[subject] = garment_template(model.model, g, sp.beta, zero_theta);
    tmpl_posed_cache[subject] = garment_template(model.model, g, sp.beta, sp.theta);
    xf_cache[subject] = garment_vertex_transforms(model.model, g, sp.beta, sp.theta);
  }

  SizerGrads grads(model);
  nn::AdamState a_enc1(model.enc1.params.size(), {cfg.lr, 0.9, 0.999, 1e-8});
  nn::AdamState a_enc2(model.enc2.params.size(), {cfg.lr, 0.9, 0.999, 1e-8});
  nn::AdamState a_enc3(model.enc3.params.size(), {cfg.lr, 0.9, 0.999, 1e-8});
  nn::AdamState a_dec1(model.dec1.params.size(), {cfg.lr, 0.9, 0.999, 1e-8});
  nn::AdamState a_dec2(model.dec2.params.size(), {cfg.lr, 0.9, 0.999, 1e-8});
  nn::AdamState a_dec3(model.dec3.params.size(), {cfg.lr, 0.9, 0.999, 1e-8});

  std::vector<TrainLogRow> log_rows;
  Rng rng(cfg.seed ^ fnv1a("train:" + model.class_name));
  const int cond_dim = model.model.shape_count() + 8;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(pairs);
    double epoch_loss = 0.0;
    for (std::size_t at = 0; at < pairs.size(); at += cfg.batch_size) {
      const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, pairs.size() - at);
      BatchMat x(mg * 3, static_cast<int>(bsz));
      BatchMat cond(cond_dim, static_cast<int>(bsz));
      for (std::size_t b = 0; b < bsz; ++b) {
        const Pair& p = pairs[at + b];
        const auto& tmpl = tmpl_cache[p.in->subject];
        for (int i = 0; i < mg; ++i) {
          const Vec3 v = tmpl[i] + p.in->d_g[i];
          x.at(3 * i, static_cast<int>(b)) = v.x;
          x.at(3 * i + 1, static_cast<int>(b)) = v.y;
          x.at(3 * i + 2, static_cast<int>(b)) = v.z;
        }
        for (int i = 0; i < model.model.shape_count(); ++i)
          cond.at(i, static_cast<int>(b)) = p.subject->beta[i];
        cond.at(model.model.shape_count() + p.in->size_idx, static_cast<int>(b)) = 1.0;
        cond.at(model.model.shape_count() + 4 + p.out->size_idx, static_cast<int>(b)) =
            1.0;
      }

      SizerCache cache;
      const BatchMat out = sizer_forward(model, x, cond, &cache);
      BatchMat dout(out.dim, out.batch);
      std::vector<double> batch_loss(bsz, 0.0);

#pragma omp parallel for schedule(static)
      for (int b = 0; b < static_cast<int>(bsz); ++b) {
        const Pair& p = pairs[at + b];
        const auto& xf = xf_cache.at(p.in->subject);
        const auto& tmpl_posed = tmpl_posed_cache.at(p.in->subject);
        std::vector<Vec3> pred(mg);
        std::vector<Vec3> d_out(mg);
        for (int i = 0; i < mg; ++i) {
          d_out[i] = {out.at(3 * i, b), out.at(3 * i + 1, b), out.at(3 * i + 2, b)};
          pred[i] = xf[i].apply(tmpl_posed[i] + d_out[i]);
        }
        const losses::CompositeLoss comp =
            losses::loss_sizer_total(pred, p.out->garment, model.laplacian,
                                     p.out->body, cfg.d_tol, cfg.weights);
        batch_loss[b] = comp.value;
        for (int i = 0; i < mg; ++i) {
          const Vec3 dd = transpose(xf[i].rot) * comp.dpred[i];
          dout.at(3 * i, b) = dd.x;
          dout.at(3 * i + 1, b) = dd.y;
          dout.at(3 * i + 2, b) = dd.z;
        }
      }
      for (double v : batch_loss) epoch_loss += v;

      sizer_backward(model, cache, dout, grads);
      nn::adam_step(a_enc1, model.enc1.params, grads.enc1);
      nn::adam_step(a_enc2, model.enc2.params, grads.enc2);
      nn::adam_step(a_enc3, model.enc3.params, grads.enc3);
      nn::adam_step(a_dec1, model.dec1.params, grads.dec1);
      nn::adam_step(a_dec2, model.dec2.params, grads.dec2);
      nn::adam_step(a_dec3, model.dec3.params, grads.dec3);
      std::fill(grads.enc1.begin(), grads.enc1.end(), 0.0);
      std::fill(grads.enc2.begin(), grads.enc2.end(), 0.0);
      std::fill(grads.enc3.begin(), grads.enc3.end(), 0.0);
      std::fill(grads.dec1.begin(), grads.dec1.end(), 0.0);
      std::fill(grads.dec2.begin(), grads.dec2.end(), 0.0);
      std::fill(grads.dec3.begin(), grads.dec3.end(), 0.0);
    }
    log_rows.push_back({epoch, epoch_loss});
    log::debug("sizer %s epoch %d loss %.6f", model.class_name.c_str(), epoch,
               epoch_loss);
  }
  return log_rows;
}

void save_sizer(const std::filesystem::path& dir, const SizerModel& model) {
  std::filesystem::create_directories(dir);
  save_body_model(dir / "body_model", model.model);
  nlohmann::json manifest;
  manifest["config"] = model.config.to_json();
  manifest["config_hash"] = config_hash(model.config.to_json());
  manifest["class"] = model.class_name;
  manifest["enc1"] = nn::net_spec_json(model.enc1);
  manifest["enc2"] = nn::net_spec_json(model.enc2);
  manifest["enc3"] = nn::net_spec_json(model.enc3);
  manifest["dec1"] = nn::net_spec_json(model.dec1);
  manifest["dec2"] = nn::net_spec_json(model.dec2);
  manifest["dec3"] = nn::net_spec_json(model.dec3);
  write_json_file(dir / "manifest.json", manifest);
  nn::save_net(dir, "enc1", model.enc1);
  nn::save_net(dir, "enc2", model.enc2);
  nn::save_net(dir, "enc3", model.enc3);
  nn::save_net(dir, "dec1", model.dec1);
  nn::save_net(dir, "dec2", model.dec2);
  nn::save_net(dir, "dec3", model.dec3);
}

SizerModel load_sizer(const std::filesystem::path& dir) {
  SizerModel m;
  const nlohmann::json manifest = read_json_file(dir / "manifest.json");
  m.config = SizerConfig::from_json(manifest.at("config"));
  m.model = load_body_model(dir / "body_model");
  m.class_name = manifest.at("class").get<std::string>();
  m.enc1 = nn::net_from_spec(manifest.at("enc1"));
  m.enc2 = nn::net_from_spec(manifest.at("enc2"));
  m.enc3 = nn::net_from_spec(manifest.at("enc3"));
  m.dec1 = nn::net_from_spec(manifest.at("dec1"));
  m.dec2 = nn::net_from_spec(manifest.at("dec2"));
  m.dec3 = nn::net_from_spec(manifest.at("dec3"));
  nn::load_net_params(dir, "enc1", m.enc1);
  nn::load_net_params(dir, "enc2", m.enc2);
  nn::load_net_params(dir, "enc3", m.enc3);
  nn::load_net_params(dir, "dec1", m.dec1);
  nn::load_net_params(dir, "dec2", m.dec2);
  nn::load_net_params(dir, "dec3", m.dec3);
  m.laplacian = class_laplacian(m.model.garments.at(m.class_name));
  return m;
}

}  // namespace gf::sizernet
