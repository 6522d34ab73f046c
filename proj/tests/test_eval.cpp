#include "gf/eval.h"

#include <cmath>

#include "doctest.h"
#include "gf/rng.h"

using namespace gf;

namespace {

synth::Dataset tiny_dataset(int subjects, int sizes, std::uint64_t seed) {
  synth::SynthConfig cfg;
  cfg.subjects = subjects;
  cfg.sizes_per_subject = sizes;
  cfg.holdout_subjects = 2;
  cfg.holdout_size_picks = 2;
  cfg.seed = seed;
  return synth::generate_dataset(default_body(), cfg, "");
}

Mesh tri_mesh(double scale) {
  Mesh m;
  m.vertices = {{0, 0, 0}, {scale, 0, 0}, {0, scale, 0}};
  m.faces = {{0, 1, 2}};
  return m;
}

}  // namespace

TEST_CASE("v_err: zero, uniform offset, loop oracle, symmetry") {
  Rng rng(1);
  std::vector<Vec3> a(50), b(50);
  for (auto& v : a) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  CHECK(eval::v_err(a, a) == 0.0);

  b = a;
  for (auto& v : b) v += {0.01, 0.0, 0.0};
  CHECK(eval::v_err(a, b) == doctest::Approx(10.0).epsilon(1e-12));

  for (auto& v : b) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  double oracle = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) oracle += norm(a[i] - b[i]);
  oracle = 1000.0 * oracle / a.size();
  CHECK(std::abs(eval::v_err(a, b) - oracle) < 1e-9);
  CHECK(eval::v_err(a, b) == eval::v_err(b, a));
  CHECK(eval::v_err(a, b) > 0.0);
}

TEST_CASE("a_err: zero, similarity scaling, rigid invariance") {
  const Mesh m = tri_mesh(1.0);
  CHECK(eval::a_err(m, m) == 0.0);
  CHECK(eval::a_err(tri_mesh(1.1), m) == doctest::Approx(21.0).epsilon(1e-9));

  Mesh rotated = m;
  const double ca = std::cos(0.9), sa = std::sin(0.9);
  for (auto& v : rotated.vertices)
    v = {v.x * ca - v.y * sa + 2.0, v.x * sa + v.y * ca - 1.0, v.z + 0.5};
  CHECK(eval::a_err(rotated, m) < 1e-9);
}

TEST_CASE("metric cells: aggregate equals mean of per-instance values") {
  eval::MetricCell cell;
  Rng rng(2);
  double sum = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double v = rng.uniform(0, 30);
    cell.v_inst.push_back(v);
    cell.a_inst.push_back(v / 3.0);
    sum += v;
  }
  CHECK(std::abs(cell.v_mean() - sum / 100.0) < 1e-9);
}

TEST_CASE("average prediction with two sizes equals half the mutual v_err") {
  const synth::Dataset ds = tiny_dataset(6, 2, 19);
  const auto report = eval::baseline_average_prediction(ds);
  // Reconstruct the property instance by instance.
  for (const auto& cls : {std::string("tshirt"), std::string("shorts")}) {
    std::vector<int> subjects;
    for (int i : ds.test_idx())
      if (ds.instances[i].class_name == cls) subjects.push_back(ds.instances[i].subject);
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    REQUIRE(!subjects.empty());
    std::size_t cursor = 0;
    const auto& cell = report.cells.at(cls).at("test");
    for (int s : subjects) {
      std::vector<const synth::Instance*> insts;
      for (const auto& inst : ds.instances)
        if (inst.subject == s && inst.class_name == cls) insts.push_back(&inst);
      REQUIRE(insts.size() == 2);
      const double mutual =
          eval::v_err(insts[0]->garment.vertices, insts[1]->garment.vertices);
      for (int k = 0; k < 2; ++k) {
        REQUIRE(cursor < cell.v_inst.size());
        CHECK(cell.v_inst[cursor] == doctest::Approx(mutual / 2.0).epsilon(1e-9));
        ++cursor;
      }
    }
  }
}

TEST_CASE("fitted scaling factor is the root of the mean area ratio") {
  const synth::Dataset ds = tiny_dataset(6, 3, 23);
  const auto factors = eval::fit_scaling_factors(ds, "tshirt");
  REQUIRE(!factors.empty());

  // Independent recomputation.
  std::map<std::pair<int, int>, std::vector<double>> ratios;
  for (int i : ds.train_idx) {
    const auto& a = ds.instances[i];
    if (a.class_name != "tshirt") continue;
    for (int j : ds.train_idx) {
      const auto& b = ds.instances[j];
      if (&a == &b || b.class_name != "tshirt" || b.subject != a.subject) continue;
      ratios[{a.size_idx, b.size_idx}].push_back(surface_area(b.garment) /
                                                 surface_area(a.garment));
    }
  }
  for (const auto& [key, r] : ratios) {
    double mean = 0.0;
    for (double x : r) mean += x;
    mean /= r.size();
    CHECK(factors.at(key) == doctest::Approx(std::sqrt(mean)).epsilon(1e-6));
  }
}

TEST_CASE("error margin exceeds 5mm and is reported for test subjects") {
  const synth::Dataset ds = tiny_dataset(8, 3, 29);
  const auto report = eval::baseline_error_margin(ds);
  for (const auto& cls : {std::string("tshirt"), std::string("shorts")}) {
    CHECK(report.cells.at(cls).at("all").v_mean() > 5.0);
    CHECK(report.cells.at(cls).at("test").count() > 0);
  }
}

TEST_CASE("penetration fraction: outside zero, inside one") {
  Mesh body;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) body.vertices.push_back({c * 0.1, r * 0.1, 0.0});
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const int a = r * 5 + c;
      body.faces.push_back({a, a + 1, a + 6});
      body.faces.push_back({a, a + 6, a + 5});
    }
  std::vector<Vec3> above, below;
  for (const auto& v : body.vertices) {
    above.push_back(v + Vec3{0, 0, 0.01});
    below.push_back(v - Vec3{0, 0, 0.01});
  }
  CHECK(eval::penetration_fraction(above, body) == 0.0);
  CHECK(eval::penetration_fraction(below, body) == 1.0);
}

TEST_CASE("csv output is deterministic and carries the schema header") {
  eval::MetricReport r;
  r.method = "probe";
  r.seed = 9;
  r.cells["tshirt"]["test"].v_inst = {1.0, 2.0};
  r.cells["tshirt"]["test"].a_inst = {0.5, 1.5};
  const std::string a = eval::report_csv({r});
  const std::string b = eval::report_csv({r});
  CHECK(a == b);
  CHECK(a.find("class,method,split,v_err_mm,a_err_pct,n_instances,seed") == 0);
  CHECK(a.find("tshirt,probe,test,1.500000,1.000000,2,9") != std::string::npos);
}
