#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gf/body.h"
#include "gf/mesh.h"
#include "json.hpp"

namespace gf::synth {

// Generator knobs. Defaults are the benchmark configuration.
struct SynthConfig {
  int subjects = 60;
  int sizes_per_subject = 3;  // contiguous window within {S, M, L, XL}
  std::uint64_t seed = 7;

  // Garment field amplitudes (meters).
  double ease_tshirt = 0.015;
  double ease_shorts = 0.010;
  double size_outward = 0.010;       // per size step, along the body normal
  double hem_drop = 0.014;           // per size step, hem rows
  double sleeve_drop = 0.010;        // per size step, sleeve-end rows
  double beta_fit_coupling = 0.25;   // ease modulation by body girth
  double beta_size_coupling = 0.15;  // size-step modulation by body girth
  double wrinkle_sigma = 0.0015;     // base RMS
  double wrinkle_sigma_per_size = 0.0005;
  int wrinkle_smooth_iters = 3;
  double tuck_hem_ease = 0.006;      // tucked hems hug the body
  double hem_loose_factor = 1.3;     // untucked hems hang loose
  double blouse_bump = 0.008;        // tucked shirts bunch above the waistband
  double blouse_bump_per_size = 0.002;
  double projection_margin = 0.001;
  double skin_detail_amp = 0.003;    // outward-only, so bodies stay inside scans

  // Pose jitter (radians) around the template A-pose.
  double shoulder_jitter = 0.06;
  double hip_jitter = 0.03;
  double spine_jitter = 0.02;

  // Split spec.
  int holdout_subjects = 6;
  int holdout_size_picks = 12;

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SubjectParams {
  int id = 0;
  std::vector<double> beta;
  std::vector<double> theta;
  std::vector<Vec3> skin_detail;  // full body field, zero off the skin region
  std::vector<int> sizes;         // available size indices, ascending
};

struct Instance {
  std::string id;
  int subject = 0;
  std::string class_name;
  int size_idx = 0;
  bool tucked = false;
  int companion_size = 0;

  Mesh single;    // body-topology registration carrying the outermost layers
  Mesh garment;   // ground-truth garment of this class and size
  Mesh body;      // detailed ground-truth body (smooth + skin detail)
  std::vector<Vec3> d_g;
};

struct Dataset {
  SynthConfig config;
  std::vector<SubjectParams> subjects;
  std::vector<Instance> instances;
  std::vector<int> train_idx;
  std::vector<int> test_unseen_subject_idx;
  std::vector<int> test_unseen_size_idx;

  std::vector<int> test_idx() const {
    std::vector<int> t = test_unseen_subject_idx;
    t.insert(t.end(), test_unseen_size_idx.begin(), test_unseen_size_idx.end());
    return t;
  }
};

// Deterministic ground-truth displacement field for one garment instance.
std::vector<Vec3> garment_field(const BodyModel& model, const SynthConfig& cfg,
                                const SubjectParams& subject,
                                const std::string& class_name, int size_idx);

// Generates the full dataset in memory and writes it to out_dir
// (subjects/<id>/..., instances/<id>/..., manifest.json, split.json).
// An empty out_dir keeps everything in memory only.
Dataset generate_dataset(const BodyModel& model, const SynthConfig& cfg,
                         const std::filesystem::path& out_dir);

// Assigns the two disjoint test pools (unseen subject, unseen size of a seen
// subject) and the train pool. Deterministic given cfg.seed.
void split_dataset(Dataset& dataset, int holdout_subjects, int holdout_size_picks);

void save_split(const Dataset& dataset, const std::filesystem::path& out_dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace gf::synth
