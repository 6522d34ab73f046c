#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gf/mesh.h"
#include "gf/parsernet.h"
#include "gf/sizernet.h"
#include "gf/synth.h"

namespace gf::eval {

// Mean per-vertex Euclidean distance in millimeters.
double v_err(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// Relative surface-area change in percent.
double a_err(const Mesh& pred, const Mesh& gt);

// Per-instance metric collection for one (class, method, split) cell.
struct MetricCell {
  std::vector<double> v_inst;
  std::vector<double> a_inst;
  double v_mean() const;
  double a_mean() const;
  int count() const { return static_cast<int>(v_inst.size()); }
};

struct MetricReport {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  // Keyed by class name, then split ("test", "unseen_subject", ...).
  std::map<std::string, std::map<std::string, MetricCell>> cells;
};

struct EvalConfig {
  int fc_epochs = 100;
  int lasso_iters = 60;
  double lasso_lambda_ratio = 1e-3;
  std::uint64_t seed = 3;

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

// Resizing evaluation pairs: within the unseen-subject pool all ordered
// a != b pairs; for held-out sizes every available same-subject input.
struct SizerPair {
  const synth::Instance* in;
  const synth::Instance* out;
  const synth::SubjectParams* subject;
  std::string split;
};
std::vector<SizerPair> sizer_test_pairs(const synth::Dataset& dataset,
                                        const std::string& class_name);

// Baselines.
MetricReport baseline_error_margin(const synth::Dataset& dataset);
MetricReport baseline_average_prediction(const synth::Dataset& dataset);
MetricReport baseline_linear_scaling(const synth::Dataset& dataset,
                                     const BodyModel& model);

// Global isotropic factor per size pair, least-squares on the training
// split's surface-area ratios (the closed form is the root mean ratio).
std::map<std::pair<int, int>, double> fit_scaling_factors(
    const synth::Dataset& dataset, const std::string& class_name);

// Per-vertex sparse linear regression (L1, proximal gradient) from input
// features to garment vertices.
MetricReport baseline_linear_parser(const synth::Dataset& dataset,
                                    const EvalConfig& config);

// Dense net with the parser architecture that directly predicts the
// displacement field; placed with the bundle's predicted pose/shape.
MetricReport baseline_fc_parser(const synth::Dataset& dataset,
                                const parsernet::ParserBundle& bundle,
                                const EvalConfig& config);

MetricReport eval_parser(const parsernet::ParserBundle& bundle,
                         const synth::Dataset& dataset);
MetricReport eval_sizer(const std::map<std::string, sizernet::SizerModel>& models,
                        const synth::Dataset& dataset);

// Fraction of predicted garment vertices strictly behind the tangent plane
// of their nearest body vertex.
double penetration_fraction(const std::vector<Vec3>& pred, const Mesh& body);

// Area monotonicity of resized outputs over S -> L for every test input;
// returns the fraction of inputs with nondecreasing areas.
double sizer_monotonicity(const std::map<std::string, sizernet::SizerModel>& models,
                          const synth::Dataset& dataset);

struct BenchmarkArtifacts {
  std::string parser_csv;
  std::string sizer_csv;
  std::string parser_table;
  std::string sizer_table;
  // In run order: linear-parser, fc-parser, parsernet.
  std::vector<MetricReport> parser_reports;
  // In run order: error-margin, average-prediction, linear-scaling, sizernet.
  std::vector<MetricReport> sizer_reports;
};

// Runs every method, assembles the two published-table layouts, and (when
// out_dir is non-empty) writes parser_results.csv / sizer_results.csv plus
// formatted .txt tables. Reference values measured on the SIZER scans are
// appended with split "reference".
BenchmarkArtifacts benchmark(const parsernet::ParserBundle* parser,
                             const std::map<std::string, sizernet::SizerModel>* sizers,
                             const synth::Dataset& dataset, const EvalConfig& config,
                             const std::filesystem::path& out_dir);

std::string report_csv(const std::vector<MetricReport>& reports);

}  // namespace gf::eval
