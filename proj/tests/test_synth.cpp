#include "gf/synth.h"

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gf/losses.h"
#include "gf/sizes.h"

using namespace gf;
namespace fs = std::filesystem;

namespace {

synth::SynthConfig small_config() {
  synth::SynthConfig cfg;
  cfg.subjects = 8;
  cfg.holdout_subjects = 2;
  cfg.holdout_size_picks = 3;
  cfg.seed = 11;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

bool trees_equal(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& rel : fa)
    if (slurp(a / rel) != slurp(b / rel)) return false;
  return true;
}

}  // namespace

TEST_CASE("generator: determinism, zero interpenetration, size monotonicity") {
  const BodyModel& model = default_body();
  const synth::SynthConfig cfg = small_config();

  const auto dir1 = fs::temp_directory_path() / "gf_synth_a";
  const auto dir2 = fs::temp_directory_path() / "gf_synth_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  const synth::Dataset ds = synth::generate_dataset(model, cfg, dir1);
  synth::generate_dataset(model, cfg, dir2);
  CHECK(trees_equal(dir1, dir2));

  CHECK(ds.instances.size() ==
        static_cast<std::size_t>(cfg.subjects * 2 * cfg.sizes_per_subject));

  // Ground truth never interpenetrates: the loss is exactly zero.
  for (const auto& inst : ds.instances) {
    const auto l = losses::loss_interp(inst.garment.vertices, inst.garment.vertices,
                                       inst.body, 0.02);
    CHECK(l.value == 0.0);
  }

  // Surface area strictly increases with size for each subject and class.
  for (const auto& subject : ds.subjects) {
    for (const std::string cls : {"tshirt", "shorts"}) {
      std::vector<double> areas;
      for (const auto& inst : ds.instances)
        if (inst.subject == subject.id && inst.class_name == cls)
          areas.push_back(surface_area(inst.garment));
      REQUIRE(areas.size() == 3);
      CHECK(areas[0] < areas[1]);
      CHECK(areas[1] < areas[2]);
    }
  }
}

TEST_CASE("generator: error margin between consecutive sizes exceeds 5mm") {
  const BodyModel& model = default_body();
  const synth::SynthConfig cfg = small_config();
  const synth::Dataset ds = synth::generate_dataset(model, cfg, "");

  double total = 0.0;
  int count = 0;
  for (const auto& subject : ds.subjects) {
    for (const std::string cls : {"tshirt", "shorts"}) {
      std::vector<const synth::Instance*> insts;
      for (const auto& inst : ds.instances)
        if (inst.subject == subject.id && inst.class_name == cls)
          insts.push_back(&inst);
      for (std::size_t k = 0; k + 1 < insts.size(); ++k) {
        double err = 0.0;
        for (int i = 0; i < insts[k]->garment.vertex_count(); ++i)
          err += norm(insts[k]->garment.vertices[i] - insts[k + 1]->garment.vertices[i]);
        total += err / insts[k]->garment.vertex_count();
        ++count;
      }
    }
  }
  const double margin_mm = 1000.0 * total / count;
  CHECK(margin_mm > 5.0);
}

TEST_CASE("split: pools are disjoint and sized as configured") {
  const BodyModel& model = default_body();
  synth::SynthConfig cfg = small_config();
  synth::Dataset ds = synth::generate_dataset(model, cfg, "");

  // Unseen subjects contribute all their instances.
  CHECK(ds.test_unseen_subject_idx.size() ==
        static_cast<std::size_t>(cfg.holdout_subjects * 2 * cfg.sizes_per_subject));
  CHECK(ds.test_unseen_size_idx.size() ==
        static_cast<std::size_t>(cfg.holdout_size_picks));
  CHECK(ds.train_idx.size() + ds.test_unseen_subject_idx.size() +
            ds.test_unseen_size_idx.size() ==
        ds.instances.size());

  std::vector<int> all = ds.train_idx;
  all.insert(all.end(), ds.test_unseen_subject_idx.begin(),
             ds.test_unseen_subject_idx.end());
  all.insert(all.end(), ds.test_unseen_size_idx.begin(), ds.test_unseen_size_idx.end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());

  // Holdout zero empties the test pools.
  synth::split_dataset(ds, 0, 0);
  CHECK(ds.test_unseen_subject_idx.empty());
  CHECK(ds.test_unseen_size_idx.empty());
  CHECK(ds.train_idx.size() == ds.instances.size());

  synth::Dataset over = ds;
  CHECK_THROWS(synth::split_dataset(over, cfg.subjects + 1, 0));
}

TEST_CASE("dataset round-trips through the directory layout") {
  const BodyModel& model = default_body();
  synth::SynthConfig cfg = small_config();
  cfg.subjects = 4;
  cfg.holdout_subjects = 1;
  cfg.holdout_size_picks = 2;
  const auto dir = fs::temp_directory_path() / "gf_synth_rt";
  fs::remove_all(dir);
  const synth::Dataset ds = synth::generate_dataset(model, cfg, dir);
  const synth::Dataset back = synth::load_dataset(dir);

  REQUIRE(back.instances.size() == ds.instances.size());
  CHECK(back.train_idx == ds.train_idx);
  CHECK(back.test_unseen_size_idx == ds.test_unseen_size_idx);
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    CHECK(back.instances[i].id == ds.instances[i].id);
    CHECK(back.instances[i].tucked == ds.instances[i].tucked);
    REQUIRE(back.instances[i].single.vertex_count() ==
            ds.instances[i].single.vertex_count());
    for (int v = 0; v < ds.instances[i].single.vertex_count(); ++v)
      CHECK(norm(back.instances[i].single.vertices[v] -
                 ds.instances[i].single.vertices[v]) < 1e-6);
    for (std::size_t v = 0; v < ds.instances[i].d_g.size(); ++v)
      CHECK(norm(back.instances[i].d_g[v] - ds.instances[i].d_g[v]) == 0.0);
  }
  for (std::size_t s = 0; s < ds.subjects.size(); ++s)
    CHECK(back.subjects[s].beta == ds.subjects[s].beta);
}

TEST_CASE("the (beta, size) -> garment map carries learnable signal") {
  // A nearest-neighbor-in-beta predictor must beat per-subject average
  // prediction, otherwise the dataset would be pure noise.
  const BodyModel& model = default_body();
  synth::SynthConfig cfg = small_config();
  cfg.subjects = 24;
  cfg.seed = 23;
  const synth::Dataset ds = synth::generate_dataset(model, cfg, "");

  auto find = [&](int subject, const std::string& cls, int size) -> const synth::Instance* {
    for (const auto& inst : ds.instances)
      if (inst.subject == subject && inst.class_name == cls && inst.size_idx == size)
        return &inst;
    return nullptr;
  };

  double nn_err = 0.0, avg_err = 0.0;
  int count = 0;
  for (int test_subject = 0; test_subject < 4; ++test_subject) {
    const auto& ts = ds.subjects[test_subject];
    for (const std::string cls : {"tshirt", "shorts"}) {
      for (int size : ts.sizes) {
        const synth::Instance* target = find(test_subject, cls, size);
        REQUIRE(target != nullptr);
        // Nearest training subject in beta with this size available.
        int best = -1;
        double best_d = 1e18;
        for (int other = 4; other < cfg.subjects; ++other) {
          const auto& os = ds.subjects[other];
          if (std::find(os.sizes.begin(), os.sizes.end(), size) == os.sizes.end())
            continue;
          double d = 0.0;
          for (std::size_t k = 0; k < os.beta.size(); ++k)
            d += (os.beta[k] - ts.beta[k]) * (os.beta[k] - ts.beta[k]);
          if (d < best_d) {
            best_d = d;
            best = other;
          }
        }
        REQUIRE(best >= 0);
        const synth::Instance* donor = find(best, cls, size);
        // Re-drape the donor displacement field on the test subject's body.
        const Mesh nn_pred = garment_skin(model, model.garments.at(cls), ts.beta,
                                          ts.theta, donor->d_g);
        double e = 0.0;
        for (int v = 0; v < nn_pred.vertex_count(); ++v)
          e += norm(nn_pred.vertices[v] - target->garment.vertices[v]);
        nn_err += e / nn_pred.vertex_count();

        // Average over this subject's sizes.
        std::vector<const synth::Instance*> own;
        for (int s2 : ts.sizes) own.push_back(find(test_subject, cls, s2));
        double ea = 0.0;
        for (int v = 0; v < target->garment.vertex_count(); ++v) {
          Vec3 mean;
          for (const auto* o : own) mean += o->garment.vertices[v];
          mean = mean / static_cast<double>(own.size());
          ea += norm(mean - target->garment.vertices[v]);
        }
        avg_err += ea / target->garment.vertex_count();
        ++count;
      }
    }
  }
  CHECK(nn_err / count < avg_err / count);
}
