#include "gf/parsernet.h"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gf/eval.h"
#include "gf/rng.h"

using namespace gf;
namespace fs = std::filesystem;

namespace {

synth::Dataset tiny_dataset(int subjects = 6, std::uint64_t seed = 31) {
  synth::SynthConfig cfg;
  cfg.subjects = subjects;
  cfg.holdout_subjects = 1;
  cfg.holdout_size_picks = 1;
  cfg.seed = seed;
  return synth::generate_dataset(default_body(), cfg, "");
}

parsernet::ParserConfig tiny_config() {
  parsernet::ParserConfig cfg;
  cfg.stage1_epochs = 2;
  cfg.init_epochs = 2;
  cfg.joint_epochs = 1;
  cfg.finetune_epochs = 1;
  return cfg;
}

}  // namespace

TEST_CASE("mesh_features: centering, translation invariance, normals oracle") {
  const BodyModel& model = default_body();
  const Mesh tmpl = model.template_mesh();
  const auto f = parsernet::mesh_features(tmpl);
  REQUIRE(f.size() == 6u * tmpl.vertex_count());

  const Vec3 c = centroid(tmpl);
  const auto normals = vertex_normals(tmpl);
  const int n = tmpl.vertex_count();
  for (int i = 0; i < n; i += 97) {
    CHECK(f[3 * i] == tmpl.vertices[i].x - c.x);
    CHECK(f[3 * n + 3 * i] == normals[i].x);
    CHECK(f[3 * n + 3 * i + 2] == normals[i].z);
  }

  Mesh moved = tmpl;
  for (auto& v : moved.vertices) v += {0.7, -1.2, 0.4};
  const auto f2 = parsernet::mesh_features(moved);
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK(std::abs(f2[i] - f[i]) < 1e-9);
}

TEST_CASE("predict_pose_shape: zero-initialized nets give zero outputs") {
  parsernet::ParserConfig cfg;
  parsernet::ParserBundle bundle = parsernet::make_parser_bundle(default_body(), cfg);
  std::fill(bundle.pose_net.params.begin(), bundle.pose_net.params.end(), 0.0);
  std::fill(bundle.shape_net.params.begin(), bundle.shape_net.params.end(), 0.0);
  const auto [theta, beta] = predict_pose_shape(bundle, default_body().template_mesh());
  for (double t : theta) CHECK(t == 0.0);
  for (double b : beta) CHECK(b == 0.0);
}

TEST_CASE("predict_regressor: uniform at zero logits, one-hot at saturation") {
  const BodyModel& model = default_body();
  parsernet::ParserConfig cfg;
  parsernet::ParserBundle bundle = parsernet::make_parser_bundle(model, cfg);
  parsernet::RegressorHead& head = bundle.garment_heads.at("tshirt");

  std::fill(head.net.params.begin(), head.net.params.end(), 0.0);
  const Mesh tmpl = model.template_mesh();
  SparseRegressor w = parsernet::predict_regressor(head.net, head.neighborhoods,
                                                   head.rows, head.k, tmpl);
  for (int j = 0; j < head.k; ++j)
    CHECK(w.row_weights(0)[j] == doctest::Approx(1.0 / head.k).epsilon(1e-12));

  // +50 on one logit per row saturates.
  for (int i = 0; i < head.rows; ++i)
    head.net.b(head.net.layer_count() - 1)[i * head.k + (i % head.k)] = 50.0;
  w = parsernet::predict_regressor(head.net, head.neighborhoods, head.rows, head.k,
                                   tmpl);
  for (int i = 0; i < head.rows; i += 37)
    CHECK(w.row_weights(i)[i % head.k] > 1.0 - 1e-9);

  // Random logits: rows sum to one and match a reference softmax.
  Rng rng(5);
  for (auto& p : head.net.params) p = rng.uniform(-0.01, 0.01);
  w = parsernet::predict_regressor(head.net, head.neighborhoods, head.rows, head.k,
                                   tmpl);
  for (int i = 0; i < head.rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < head.k; ++j) {
      CHECK(w.row_weights(i)[j] >= 0.0);
      sum += w.row_weights(i)[j];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("apply_regressor: indicator cut-out, centroids, dense oracle") {
  const BodyModel& model = default_body();
  const GarmentTemplate& g = model.garments.at("shorts");
  const Mesh tmpl = model.template_mesh();
  const int k = 5;

  // One-hot rows on the associated vertex reproduce I^g M.
  SparseRegressor w;
  w.rows = g.size();
  w.k = k;
  for (int i = 0; i < g.size(); ++i) {
    w.neighbors.push_back(g.body_vertex[i]);
    for (int j = 1; j < k; ++j) w.neighbors.push_back((g.body_vertex[i] + j) % tmpl.vertex_count());
    w.weights.push_back(1.0);
    for (int j = 1; j < k; ++j) w.weights.push_back(0.0);
  }
  Mesh cut = parsernet::apply_regressor(w, tmpl, g.faces);
  for (int i = 0; i < g.size(); ++i)
    CHECK(norm(cut.vertices[i] - tmpl.vertices[g.body_vertex[i]]) == 0.0);

  // Uniform rows hit the neighborhood centroid.
  std::fill(w.weights.begin(), w.weights.end(), 1.0 / k);
  cut = parsernet::apply_regressor(w, tmpl, g.faces);
  for (int i = 0; i < g.size(); i += 41) {
    Vec3 c;
    for (int j = 0; j < k; ++j) c += tmpl.vertices[w.row_neighbors(i)[j]];
    CHECK(norm(cut.vertices[i] - c / k) < 1e-12);
  }

  // Random rows match the dense indicator-matrix product.
  Rng rng(7);
  for (int i = 0; i < g.size(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      w.row_weights(i)[j] = rng.uniform(0.0, 1.0);
      sum += w.row_weights(i)[j];
    }
    for (int j = 0; j < k; ++j) w.row_weights(i)[j] /= sum;
  }
  cut = parsernet::apply_regressor(w, tmpl, g.faces);
  std::vector<SparseMatrix::Triplet> trip;
  for (int i = 0; i < g.size(); ++i)
    for (int j = 0; j < k; ++j)
      trip.push_back({i, w.row_neighbors(i)[j], w.row_weights(i)[j]});
  const auto dense = SparseMatrix::from_triplets(g.size(), tmpl.vertex_count(), trip)
                         .apply(tmpl.vertices);
  for (int i = 0; i < g.size(); ++i) CHECK(norm(cut.vertices[i] - dense[i]) < 1e-10);

  // Convex-hull containment, per coordinate.
  Vec3 lo{1e18, 1e18, 1e18}, hi{-1e18, -1e18, -1e18};
  for (const auto& v : tmpl.vertices)
    for (int c = 0; c < 3; ++c) {
      lo[c] = std::min(lo[c], v[c]);
      hi[c] = std::max(hi[c], v[c]);
    }
  for (const auto& v : cut.vertices)
    for (int c = 0; c < 3; ++c) {
      CHECK(v[c] >= lo[c] - 1e-12);
      CHECK(v[c] <= hi[c] + 1e-12);
    }
}

TEST_CASE("garment predictions are translation equivariant") {
  const BodyModel& model = default_body();
  parsernet::ParserConfig cfg;
  parsernet::ParserBundle bundle = parsernet::make_parser_bundle(model, cfg);
  const parsernet::RegressorHead& head = bundle.garment_heads.at("tshirt");

  const Mesh base = model.template_mesh();
  Mesh moved = base;
  const Vec3 t{0.4, -0.9, 1.3};
  for (auto& v : moved.vertices) v += t;

  const SparseRegressor w1 = parsernet::predict_regressor(
      head.net, head.neighborhoods, head.rows, head.k, base);
  const SparseRegressor w2 = parsernet::predict_regressor(
      head.net, head.neighborhoods, head.rows, head.k, moved);
  const Mesh g1 = parsernet::apply_regressor(w1, base, head.faces);
  const Mesh g2 = parsernet::apply_regressor(w2, moved, head.faces);
  for (int i = 0; i < head.rows; ++i)
    CHECK(norm(g2.vertices[i] - (g1.vertices[i] + t)) < 1e-9);
}

TEST_CASE("init_to_indicator reaches the cut-out within 2mm") {
  const BodyModel& model = default_body();
  const synth::Dataset ds = tiny_dataset();
  parsernet::ParserConfig cfg = tiny_config();
  parsernet::ParserBundle bundle = parsernet::make_parser_bundle(model, cfg);

  std::vector<const Mesh*> meshes;
  for (int idx : ds.train_idx) meshes.push_back(&ds.instances[idx].single);

  parsernet::RegressorHead& head = bundle.garment_heads.at("tshirt");
  const GarmentTemplate& g = model.garments.at("tshirt");
  parsernet::init_to_indicator(head, g, model.template_verts, meshes, cfg, 99, nullptr);

  double worst_mean = 0.0;
  for (const Mesh* mesh : meshes) {
    const SparseRegressor w = parsernet::predict_regressor(
        head.net, head.neighborhoods, head.rows, head.k, *mesh);
    const Mesh pred = parsernet::apply_regressor(w, *mesh, head.faces);
    double mean = 0.0;
    for (int i = 0; i < head.rows; ++i)
      mean += norm(pred.vertices[i] - mesh->vertices[g.body_vertex[i]]);
    worst_mean = std::max(worst_mean, mean / head.rows);
  }
  CHECK(worst_mean < 0.002);
}

TEST_CASE("training is deterministic and parse round-trips through checkpoints") {
  const BodyModel& model = default_body();
  const synth::Dataset ds = tiny_dataset(5, 77);
  parsernet::ParserConfig cfg = tiny_config();

  parsernet::ParserBundle b1 = parsernet::make_parser_bundle(model, cfg);
  parsernet::ParserBundle b2 = parsernet::make_parser_bundle(model, cfg);
  const auto log1 = parsernet::train_parser(b1, ds);
  const auto log2 = parsernet::train_parser(b2, ds);
  REQUIRE(log1.size() == log2.size());
  for (std::size_t i = 0; i < log1.size(); ++i) {
    CHECK(log1[i].stage == log2[i].stage);
    CHECK(log1[i].loss == log2[i].loss);  // bitwise
  }

  const auto dir = fs::temp_directory_path() / "gf_parser_ckpt";
  fs::remove_all(dir);
  parsernet::save_parser(dir, b1);
  const parsernet::ParserBundle back = parsernet::load_parser(dir);
  CHECK(back.pose_net.params == b1.pose_net.params);
  CHECK(back.garment_heads.at("tshirt").net.params ==
        b1.garment_heads.at("tshirt").net.params);

  const Mesh& probe = ds.instances[ds.test_idx()[0]].single;
  const auto r1 = parsernet::parse(b1, probe);
  const auto r2 = parsernet::parse(back, probe);
  for (int i = 0; i < r1.upper.vertex_count(); ++i)
    CHECK(norm(r1.upper.vertices[i] - r2.upper.vertices[i]) == 0.0);
  for (int i = 0; i < r1.body.vertex_count(); ++i)
    CHECK(norm(r1.body.vertices[i] - r2.body.vertices[i]) == 0.0);
  CHECK(r1.beta == r2.beta);
}
