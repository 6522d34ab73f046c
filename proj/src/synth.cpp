#include "gf/synth.h"

#include <algorithm>
#include <cmath>

#include "gf/config.h"
#include "gf/log.h"
#include "gf/losses.h"
#include "gf/rng.h"
#include "gf/sizes.h"
#include "gf/tensor.h"

namespace gf::synth {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t key(std::uint64_t seed, int subject, const std::string& cls, int size,
                  std::uint64_t salt) {
  std::uint64_t h = mix(seed, 0x5107);
  h = mix(h, static_cast<std::uint64_t>(subject) + 1);
  h = mix(h, fnv1a(cls));
  h = mix(h, static_cast<std::uint64_t>(size) + 17);
  return mix(h, salt);
}

// Adjacency lists of a face set (indices local to the face set's vertices).
std::vector<std::vector<int>> adjacency(int n, const std::vector<std::array<int, 3>>& faces) {
  Mesh tmp;
  tmp.vertices.resize(n);
  tmp.faces = faces;
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : mesh_edges(tmp)) {
    adj[e[0]].push_back(e[1]);
    adj[e[1]].push_back(e[0]);
  }
  return adj;
}

// Band-limited scalar field: iid gaussians smoothed by neighbor averaging,
// then rescaled to unit RMS.
std::vector<double> smooth_field(Rng& rng, const std::vector<std::vector<int>>& adj,
                                 int iters) {
  const int n = static_cast<int>(adj.size());
  std::vector<double> f(n);
  for (auto& v : f) v = rng.normal();
  std::vector<double> next(n);
  for (int it = 0; it < iters; ++it) {
    for (int i = 0; i < n; ++i) {
      double acc = f[i];
      for (int j : adj[i]) acc += f[j];
      next[i] = acc / (1.0 + adj[i].size());
    }
    f.swap(next);
  }
  double rms = 0.0;
  for (double v : f) rms += v * v;
  rms = std::sqrt(rms / n);
  if (rms > 0.0)
    for (auto& v : f) v /= rms;
  return f;
}

struct GarmentGeometry {
  std::vector<int> hem_rows;       // local garment vertex ids
  std::vector<double> hem_factor;  // 1 at the hem edge, fading upward
  std::vector<int> blouse_rows;    // just above the waistband (tshirt only)
  std::vector<int> sleeve_rows;
  std::vector<Vec3> sleeve_dir;
};

GarmentGeometry garment_geometry(const BodyModel& model, const GarmentTemplate& g) {
  GarmentGeometry geo;
  const Vec3 l_dir = normalized(model.rest_joints[5] - model.rest_joints[4]);
  const Vec3 r_dir = normalized(model.rest_joints[8] - model.rest_joints[7]);
  for (int i = 0; i < g.size(); ++i) {
    const int bv = g.body_vertex[i];
    const int part = model.vertex_part[bv];
    const int ring = model.vertex_ring[bv];
    if (g.class_name == "tshirt") {
      if (part == kTorso && ring <= 3) {
        constexpr double kHemFade[4] = {1.0, 0.8, 0.5, 0.25};
        geo.hem_rows.push_back(i);
        geo.hem_factor.push_back(kHemFade[ring]);
      }
      if (part == kTorso && (ring == 4 || ring == 5)) geo.blouse_rows.push_back(i);
      if ((part == kLeftUpperArm || part == kRightUpperArm) && ring == 3) {
        geo.sleeve_rows.push_back(i);
        geo.sleeve_dir.push_back(part == kLeftUpperArm ? l_dir : r_dir);
      }
    } else {
      if ((part == kLeftThigh || part == kRightThigh) && ring == 4) {
        geo.hem_rows.push_back(i);
        geo.hem_factor.push_back(0.8);
      }
    }
  }
  return geo;
}

}  // namespace

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json j;
  j["subjects"] = subjects;
  j["sizes_per_subject"] = sizes_per_subject;
  j["seed"] = seed;
  j["ease_tshirt"] = ease_tshirt;
  j["ease_shorts"] = ease_shorts;
  j["size_outward"] = size_outward;
  j["hem_drop"] = hem_drop;
  j["sleeve_drop"] = sleeve_drop;
  j["beta_fit_coupling"] = beta_fit_coupling;
  j["beta_size_coupling"] = beta_size_coupling;
  j["wrinkle_sigma"] = wrinkle_sigma;
  j["wrinkle_sigma_per_size"] = wrinkle_sigma_per_size;
  j["wrinkle_smooth_iters"] = wrinkle_smooth_iters;
  j["tuck_hem_ease"] = tuck_hem_ease;
  j["hem_loose_factor"] = hem_loose_factor;
  j["blouse_bump"] = blouse_bump;
  j["blouse_bump_per_size"] = blouse_bump_per_size;
  j["projection_margin"] = projection_margin;
  j["skin_detail_amp"] = skin_detail_amp;
  j["shoulder_jitter"] = shoulder_jitter;
  j["hip_jitter"] = hip_jitter;
  j["spine_jitter"] = spine_jitter;
  j["holdout_subjects"] = holdout_subjects;
  j["holdout_size_picks"] = holdout_size_picks;
  return j;
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.subjects = j.value("subjects", c.subjects);
  c.sizes_per_subject = j.value("sizes_per_subject", c.sizes_per_subject);
  c.seed = j.value("seed", c.seed);
  c.ease_tshirt = j.value("ease_tshirt", c.ease_tshirt);
  c.ease_shorts = j.value("ease_shorts", c.ease_shorts);
  c.size_outward = j.value("size_outward", c.size_outward);
  c.hem_drop = j.value("hem_drop", c.hem_drop);
  c.sleeve_drop = j.value("sleeve_drop", c.sleeve_drop);
  c.beta_fit_coupling = j.value("beta_fit_coupling", c.beta_fit_coupling);
  c.beta_size_coupling = j.value("beta_size_coupling", c.beta_size_coupling);
  c.wrinkle_sigma = j.value("wrinkle_sigma", c.wrinkle_sigma);
  c.wrinkle_sigma_per_size = j.value("wrinkle_sigma_per_size", c.wrinkle_sigma_per_size);
  c.wrinkle_smooth_iters = j.value("wrinkle_smooth_iters", c.wrinkle_smooth_iters);
  c.tuck_hem_ease = j.value("tuck_hem_ease", c.tuck_hem_ease);
  c.hem_loose_factor = j.value("hem_loose_factor", c.hem_loose_factor);
  c.blouse_bump = j.value("blouse_bump", c.blouse_bump);
  c.blouse_bump_per_size = j.value("blouse_bump_per_size", c.blouse_bump_per_size);
  c.projection_margin = j.value("projection_margin", c.projection_margin);
  c.skin_detail_amp = j.value("skin_detail_amp", c.skin_detail_amp);
  c.shoulder_jitter = j.value("shoulder_jitter", c.shoulder_jitter);
  c.hip_jitter = j.value("hip_jitter", c.hip_jitter);
  c.spine_jitter = j.value("spine_jitter", c.spine_jitter);
  c.holdout_subjects = j.value("holdout_subjects", c.holdout_subjects);
  c.holdout_size_picks = j.value("holdout_size_picks", c.holdout_size_picks);
  return c;
}

std::vector<Vec3> garment_field_salted(const BodyModel& model, const SynthConfig& cfg,
                                       const SubjectParams& subject,
                                       const std::string& class_name, int size_idx,
                                       bool tucked, std::uint64_t salt) {
  const GarmentTemplate& g = model.garments.at(class_name);
  BodyParams p = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
  p.beta = subject.beta;
  const std::vector<Vec3> u = unposed(model, p);
  const std::vector<Vec3> normals = vertex_normals(Mesh{u, model.faces});

  Rng rng(key(cfg.seed, subject.id, class_name, size_idx, salt));
  const double girth = subject.beta.size() > 1 ? subject.beta[1] : 0.0;
  const double fit = 1.0 + cfg.beta_fit_coupling * std::tanh(0.7 * girth);
  const double sizemod = 1.0 - cfg.beta_size_coupling * std::tanh(0.7 * girth);
  const double ease0 = class_name == "tshirt" ? cfg.ease_tshirt : cfg.ease_shorts;
  const double lambda = static_cast<double>(size_idx);

  const GarmentGeometry geo = garment_geometry(model, g);
  std::vector<char> is_hem(g.size(), 0);
  std::vector<double> hem_f(g.size(), 0.0);
  for (std::size_t h = 0; h < geo.hem_rows.size(); ++h) {
    is_hem[geo.hem_rows[h]] = 1;
    hem_f[geo.hem_rows[h]] = geo.hem_factor[h];
  }

  std::vector<char> is_blouse(g.size(), 0);
  for (int b : geo.blouse_rows) is_blouse[b] = 1;

  std::vector<Vec3> d(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const int bv = g.body_vertex[i];
    const Vec3 n = normals[bv];
    const int ring = model.vertex_ring[bv];
    const double shapefield = 1.0 + 0.2 * std::cos(M_PI * ring / 15.0);
    double ease = ease0 * fit * shapefield;
    double outward = cfg.size_outward * lambda * sizemod;
    if (class_name == "tshirt" && is_hem[i]) {
      if (tucked) {
        // Tucked hems slide under the waistband and hug the body.
        ease = cfg.tuck_hem_ease;
        outward *= 0.3;
      } else {
        ease *= cfg.hem_loose_factor;
        d[i] += Vec3{0.0, -cfg.hem_drop * lambda * sizemod * hem_f[i], 0.0};
      }
    }
    if (class_name == "tshirt" && tucked && is_blouse[i]) {
      // Fabric bunches just above the waistband.
      d[i] += n * (cfg.blouse_bump + cfg.blouse_bump_per_size * lambda);
    }
    if (class_name == "shorts" && is_hem[i])
      d[i] += Vec3{0.0, -cfg.hem_drop * lambda * sizemod * hem_f[i], 0.0};
    d[i] += n * (ease + outward);
  }
  for (std::size_t s = 0; s < geo.sleeve_rows.size(); ++s)
    d[geo.sleeve_rows[s]] += geo.sleeve_dir[s] * (cfg.sleeve_drop * lambda * sizemod);

  // Wrinkles: three band-limited fields, mostly along the normal.
  const auto adj = adjacency(g.size(), g.faces);
  const double sigma = cfg.wrinkle_sigma + cfg.wrinkle_sigma_per_size * lambda;
  const auto fn = smooth_field(rng, adj, cfg.wrinkle_smooth_iters);
  const auto ft1 = smooth_field(rng, adj, cfg.wrinkle_smooth_iters);
  const auto ft2 = smooth_field(rng, adj, cfg.wrinkle_smooth_iters);
  for (int i = 0; i < g.size(); ++i) {
    const Vec3 n = normals[g.body_vertex[i]];
    const Vec3 helper = std::abs(n.y) < 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
    const Vec3 t1 = normalized(cross(n, helper));
    const Vec3 t2 = cross(n, t1);
    d[i] += n * (sigma * fn[i]) + t1 * (0.3 * sigma * ft1[i]) + t2 * (0.3 * sigma * ft2[i]);
  }
  return d;
}

std::vector<Vec3> garment_field(const BodyModel& model, const SynthConfig& cfg,
                                const SubjectParams& subject,
                                const std::string& class_name, int size_idx) {
  const bool tucked = (key(cfg.seed, subject.id, "tuck", size_idx, 0) & 1) != 0;
  return garment_field_salted(model, cfg, subject, class_name, size_idx, tucked, 0);
}

namespace {

// Pushes garment vertices outside the posed body until the interpenetration
// loss is exactly zero (tangent-plane clearance >= margin at every nearest
// body vertex).
bool project_outside(const BodyModel& model, const GarmentTemplate& g,
                     const SubjectParams& subject, const Mesh& body_posed,
                     double margin, std::vector<Vec3>& d) {
  const std::vector<Vec3> body_normals = vertex_normals(body_posed);
  const std::vector<Affine> xf =
      garment_vertex_transforms(model, g, subject.beta, subject.theta);
  for (int iter = 0; iter < 40; ++iter) {
    const Mesh posed = garment_skin(model, g, subject.beta, subject.theta, d);
    const std::vector<int> corr = nearest_vertex(posed.vertices, body_posed.vertices);
    bool any = false;
    for (int j = 0; j < g.size(); ++j) {
      const int i = corr[j];
      const double clearance =
          dot(body_normals[i], posed.vertices[j] - body_posed.vertices[i]);
      if (clearance < margin) {
        any = true;
        const Vec3 push = body_normals[i] * (margin - clearance + 1e-6);
        d[j] += inverse(xf[j].rot) * push;
      }
    }
    if (!any) return true;
  }
  return false;
}

}  // namespace

Dataset generate_dataset(const BodyModel& model, const SynthConfig& cfg,
                         const std::filesystem::path& out_dir) {
  Dataset ds;
  ds.config = cfg;
  const int n = model.vertex_count();

  // Skin-subgraph adjacency for the detail field.
  std::vector<char> is_skin(n, 0);
  for (int v : model.skin_vertices) is_skin[v] = 1;
  std::vector<std::vector<int>> skin_adj(n);
  for (const auto& e : mesh_edges(model.template_mesh())) {
    if (is_skin[e[0]] && is_skin[e[1]]) {
      skin_adj[e[0]].push_back(e[1]);
      skin_adj[e[1]].push_back(e[0]);
    }
  }
  const std::vector<Vec3> template_normals = vertex_normals(model.template_mesh());

  for (int s = 0; s < cfg.subjects; ++s) {
    Rng rng(key(cfg.seed, s, "subject", 0, 0));
    SubjectParams subject;
    subject.id = s;
    subject.beta.resize(model.shape_count());
    for (auto& b : subject.beta) b = std::clamp(rng.normal(), -3.0, 3.0);
    subject.theta.assign(3 * model.joint_count(), 0.0);
    auto jitter = [&](int joint, double amp) {
      for (int c = 0; c < 3; ++c)
        subject.theta[3 * joint + c] = rng.uniform(-amp, amp);
    };
    jitter(1, cfg.spine_jitter);   // spine
    jitter(4, cfg.shoulder_jitter);
    jitter(7, cfg.shoulder_jitter);
    jitter(10, cfg.hip_jitter);
    jitter(13, cfg.hip_jitter);

    // Outward-only smooth skin detail.
    subject.skin_detail.assign(n, Vec3{});
    {
      std::vector<double> f(n, 0.0);
      for (int v : model.skin_vertices) f[v] = rng.uniform(0.0, 1.0);
      std::vector<double> next(n, 0.0);
      for (int it = 0; it < 3; ++it) {
        for (int v : model.skin_vertices) {
          double acc = f[v];
          for (int w : skin_adj[v]) acc += f[w];
          next[v] = acc / (1.0 + skin_adj[v].size());
        }
        for (int v : model.skin_vertices) f[v] = next[v];
      }
      double mx = 0.0;
      for (int v : model.skin_vertices) mx = std::max(mx, f[v]);
      for (int v : model.skin_vertices)
        subject.skin_detail[v] =
            template_normals[v] * (mx > 0.0 ? cfg.skin_detail_amp * f[v] / mx : 0.0);
    }

    const int start = static_cast<int>(rng.below(4 - cfg.sizes_per_subject + 1));
    for (int k = 0; k < cfg.sizes_per_subject; ++k) subject.sizes.push_back(start + k);
    ds.subjects.push_back(std::move(subject));
  }

  // Instances: subject x class x size.
  for (const auto& subject : ds.subjects) {
    BodyParams detail = BodyParams::zero(model.shape_count(), model.joint_count(), n);
    detail.beta = subject.beta;
    detail.theta = subject.theta;
    detail.offsets = subject.skin_detail;
    const Mesh body_posed = skin(model, detail);
    const int companion_size = subject.sizes[subject.sizes.size() / 2];

    for (const auto& [class_name, g] : model.garments) {
      const std::string other =
          class_name == "tshirt" ? std::string("shorts") : std::string("tshirt");
      const GarmentTemplate& og = model.garments.at(other);
      for (int size_idx : subject.sizes) {
        Instance inst;
        inst.subject = subject.id;
        inst.class_name = class_name;
        inst.size_idx = size_idx;
        inst.companion_size = companion_size;
        inst.tucked = (key(cfg.seed, subject.id, "tuck", size_idx, 0) & 1) != 0;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "s%03d_%s_%s", subject.id, class_name.c_str(),
                      size_name(size_idx).c_str());
        inst.id = buf;

        // Ground-truth garment field, projected outside the body.
        inst.d_g = garment_field_salted(model, cfg, subject, class_name, size_idx,
                                        inst.tucked, 0);
        std::uint64_t salt = 1;
        while (!project_outside(model, g, subject, body_posed, cfg.projection_margin,
                                inst.d_g)) {
          log::info("instance %s: projection stalled, resampling wrinkles",
                    inst.id.c_str());
          inst.d_g = garment_field_salted(model, cfg, subject, class_name, size_idx,
                                          inst.tucked, salt++);
          if (salt > 4) throw std::runtime_error("projection failed for " + inst.id);
        }

        // Companion layer worn in the same scan (its own drape draw).
        std::vector<Vec3> d_other =
            garment_field_salted(model, cfg, subject, other, companion_size,
                                 inst.tucked, fnv1a(inst.id));
        if (!project_outside(model, og, subject, body_posed, cfg.projection_margin,
                             d_other))
          throw std::runtime_error("companion projection failed for " + inst.id);

        const std::vector<Vec3>& d_tshirt = class_name == "tshirt" ? inst.d_g : d_other;
        const std::vector<Vec3>& d_shorts = class_name == "shorts" ? inst.d_g : d_other;
        const GarmentTemplate& g_tshirt = model.garments.at("tshirt");
        const GarmentTemplate& g_shorts = model.garments.at("shorts");

        // Single mesh: skin detail plus scattered garment offsets; the
        // outermost layer wins on the waist overlap (tucked shirts sit under
        // the shorts waistband).
        std::vector<char> in_shorts(n, 0);
        for (int v : g_shorts.body_vertex) in_shorts[v] = 1;
        BodyParams single = BodyParams::zero(model.shape_count(), model.joint_count(), n);
        single.beta = subject.beta;
        single.theta = subject.theta;
        single.offsets = subject.skin_detail;
        for (int i = 0; i < g_shorts.size(); ++i)
          single.offsets[g_shorts.body_vertex[i]] = d_shorts[i];
        for (int i = 0; i < g_tshirt.size(); ++i) {
          const int bv = g_tshirt.body_vertex[i];
          if (inst.tucked && in_shorts[bv]) continue;
          single.offsets[bv] = d_tshirt[i];
        }
        inst.single = skin(model, single);
        inst.garment = garment_skin(model, g, subject.beta, subject.theta, inst.d_g);
        inst.body = body_posed;
        ds.instances.push_back(std::move(inst));
      }
    }
  }

  split_dataset(ds, cfg.holdout_subjects, cfg.holdout_size_picks);

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "subjects");
    fs::create_directories(out_dir / "instances");

    nlohmann::json manifest;
    manifest["seed"] = cfg.seed;
    manifest["config"] = cfg.to_json();
    manifest["config_hash"] = config_hash(cfg.to_json());
    manifest["skin_vertices"] = model.skin_vertices;
    nlohmann::json subjects = nlohmann::json::array();
    for (const auto& subject : ds.subjects) {
      nlohmann::json js;
      js["id"] = subject.id;
      js["beta"] = subject.beta;
      js["theta"] = subject.theta;
      js["sizes"] = subject.sizes;
      subjects.push_back(js);

      char buf[32];
      std::snprintf(buf, sizeof(buf), "s%03d", subject.id);
      const fs::path sdir = out_dir / "subjects" / buf;
      fs::create_directories(sdir);
      nlohmann::json params;
      params["beta"] = subject.beta;
      params["theta"] = subject.theta;
      params["sizes"] = subject.sizes;
      write_json_file(sdir / "params.json", params);
      BodyParams smooth = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
      smooth.beta = subject.beta;
      smooth.theta = subject.theta;
      save_obj(sdir / "body_smooth.obj", skin(model, smooth));
    }
    manifest["subjects"] = subjects;

    nlohmann::json instances = nlohmann::json::array();
    for (const auto& inst : ds.instances) {
      const fs::path idir = out_dir / "instances" / inst.id;
      fs::create_directories(idir);
      save_obj(idir / "single.obj", inst.single);
      save_obj(idir / "garment.obj", inst.garment);
      save_obj(idir / "body.obj", inst.body);
      Tensor t;
      t.shape = {static_cast<std::int64_t>(inst.d_g.size()), 3};
      for (const auto& v : inst.d_g) {
        t.data.push_back(v.x);
        t.data.push_back(v.y);
        t.data.push_back(v.z);
      }
      write_tensor(idir / "d_g.gft", t);
      nlohmann::json meta;
      meta["id"] = inst.id;
      meta["subject"] = inst.subject;
      meta["class"] = inst.class_name;
      meta["size"] = inst.size_idx;
      meta["size_label"] = size_name(inst.size_idx);
      meta["tucked"] = inst.tucked;
      meta["companion_size"] = inst.companion_size;
      write_json_file(idir / "meta.json", meta);

      nlohmann::json ji;
      ji["id"] = inst.id;
      ji["subject"] = inst.subject;
      ji["class"] = inst.class_name;
      ji["size"] = inst.size_idx;
      ji["tucked"] = inst.tucked;
      ji["companion_size"] = inst.companion_size;
      instances.push_back(ji);
    }
    manifest["instances"] = instances;
    write_json_file(out_dir / "manifest.json", manifest);
    save_split(ds, out_dir);
  }
  return ds;
}

void split_dataset(Dataset& ds, int holdout_subjects, int holdout_size_picks) {
  const SynthConfig& cfg = ds.config;
  if (holdout_subjects > cfg.subjects)
    throw std::invalid_argument("holdout larger than dataset");
  Rng rng(key(cfg.seed, -1, "split", 0, 0));

  std::vector<int> order(cfg.subjects);
  for (int i = 0; i < cfg.subjects; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<char> unseen_subject(cfg.subjects, 0);
  for (int i = 0; i < holdout_subjects; ++i) unseen_subject[order[i]] = 1;

  // Unseen-size picks among the remaining subjects.
  std::vector<std::pair<int, std::string>> candidates;
  for (int s = 0; s < cfg.subjects; ++s) {
    if (unseen_subject[s]) continue;
    candidates.push_back({s, "shorts"});
    candidates.push_back({s, "tshirt"});
  }
  rng.shuffle(candidates);
  std::map<std::pair<int, std::string>, int> held_size;
  const int picks = std::min<int>(holdout_size_picks, candidates.size());
  for (int i = 0; i < picks; ++i) {
    const auto& [s, cls] = candidates[i];
    const auto& sizes = ds.subjects[s].sizes;
    held_size[{s, cls}] = sizes[rng.below(sizes.size())];
  }

  ds.train_idx.clear();
  ds.test_unseen_subject_idx.clear();
  ds.test_unseen_size_idx.clear();
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    const Instance& inst = ds.instances[i];
    if (unseen_subject[inst.subject]) {
      ds.test_unseen_subject_idx.push_back(static_cast<int>(i));
    } else if (auto it = held_size.find({inst.subject, inst.class_name});
               it != held_size.end() && it->second == inst.size_idx) {
      ds.test_unseen_size_idx.push_back(static_cast<int>(i));
    } else {
      ds.train_idx.push_back(static_cast<int>(i));
    }
  }
}

void save_split(const Dataset& ds, const std::filesystem::path& out_dir) {
  nlohmann::json j;
  auto ids = [&](const std::vector<int>& idx) {
    nlohmann::json arr = nlohmann::json::array();
    for (int i : idx) arr.push_back(ds.instances[i].id);
    return arr;
  };
  j["train"] = ids(ds.train_idx);
  j["test_unseen_subject"] = ids(ds.test_unseen_subject_idx);
  j["test_unseen_size"] = ids(ds.test_unseen_size_idx);
  write_json_file(out_dir / "split.json", j);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const nlohmann::json manifest = read_json_file(dir / "manifest.json");
  Dataset ds;
  ds.config = SynthConfig::from_json(manifest.at("config"));
  for (const auto& js : manifest.at("subjects")) {
    SubjectParams s;
    s.id = js.at("id").get<int>();
    s.beta = js.at("beta").get<std::vector<double>>();
    s.theta = js.at("theta").get<std::vector<double>>();
    s.sizes = js.at("sizes").get<std::vector<int>>();
    ds.subjects.push_back(std::move(s));
  }
  std::map<std::string, int> by_id;
  for (const auto& ji : manifest.at("instances")) {
    Instance inst;
    inst.id = ji.at("id").get<std::string>();
    inst.subject = ji.at("subject").get<int>();
    inst.class_name = ji.at("class").get<std::string>();
    inst.size_idx = ji.at("size").get<int>();
    inst.tucked = ji.at("tucked").get<bool>();
    inst.companion_size = ji.at("companion_size").get<int>();
    const auto idir = dir / "instances" / inst.id;
    inst.single = load_obj(idir / "single.obj");
    inst.garment = load_obj(idir / "garment.obj");
    inst.body = load_obj(idir / "body.obj");
    const Tensor t = read_tensor(idir / "d_g.gft");
    inst.d_g.resize(t.shape[0]);
    for (std::size_t i = 0; i < inst.d_g.size(); ++i)
      inst.d_g[i] = {t.data[3 * i], t.data[3 * i + 1], t.data[3 * i + 2]};
    by_id[inst.id] = static_cast<int>(ds.instances.size());
    ds.instances.push_back(std::move(inst));
  }
  const nlohmann::json split = read_json_file(dir / "split.json");
  for (const auto& id : split.at("train")) ds.train_idx.push_back(by_id.at(id));
  for (const auto& id : split.at("test_unseen_subject"))
    ds.test_unseen_subject_idx.push_back(by_id.at(id));
  for (const auto& id : split.at("test_unseen_size"))
    ds.test_unseen_size_idx.push_back(by_id.at(id));
  return ds;
}

}  // namespace gf::synth
