#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gf/body.h"
#include "gf/losses.h"
#include "gf/nn.h"
#include "gf/regressor.h"
#include "gf/synth.h"

namespace gf::parsernet {

struct ParserConfig {
  int k = 50;  // neighborhood size |N_i|
  int pose_shape_hidden = 256;
  int parser_hidden = 512;
  int batch_size = 8;
  // Desk-scale default: the published 1e-4 needs roughly two orders of
  // magnitude more optimizer steps than this dataset can supply.
  double lr = 1e-3;
  losses::LossWeights weights;
  double d_tol = 0.02;
  double tau = 0.02;           // w_geo sigmoid scale
  double skin_margin = 0.08;   // clothed-side reach of the skin domain
  double init_bias_tau = 0.008;  // distance shaping of the indicator init
  int stage1_epochs = 80;
  int init_epochs = 4;
  int joint_epochs = 24;
  int finetune_epochs = 10;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static ParserConfig from_json(const nlohmann::json& j);
};

// One regressor head: a dense net emitting m x k logits over fixed
// per-vertex neighborhoods, plus the template connectivity it predicts into.
struct RegressorHead {
  nn::DenseNet net;
  std::vector<int> neighborhoods;          // m * k input-vertex indices
  std::vector<std::array<int, 3>> faces;   // output connectivity
  SparseMatrix laplacian;                  // combinatorial, from faces
  int rows = 0;
  int k = 0;
};

struct ParserBundle {
  ParserConfig config;
  BodyModel model;
  nn::DenseNet pose_net;
  nn::DenseNet shape_net;
  std::map<std::string, RegressorHead> garment_heads;
  RegressorHead body_head;  // predicts the skin-domain vertices
  losses::SkinWeighting skin_weighting;
};

// Flat input features: centroid-centered vertex positions then vertex
// normals (6n). Centering makes every downstream prediction translation
// invariant.
std::vector<double> mesh_features(const Mesh& mesh);

ParserBundle make_parser_bundle(const BodyModel& model, const ParserConfig& config);

std::pair<std::vector<double>, std::vector<double>> predict_pose_shape(
    const ParserBundle& bundle, const Mesh& mesh);  // (theta, beta)

// Softmax over each neighborhood row of the head's logits.
SparseRegressor predict_regressor(const nn::DenseNet& net,
                                  const std::vector<int>& neighborhoods, int rows,
                                  int k, const Mesh& mesh);

// G_i = sum_j W_ij M_j with the given output connectivity.
Mesh apply_regressor(const SparseRegressor& w, const Mesh& mesh,
                     const std::vector<std::array<int, 3>>& faces);

struct TrainLogRow {
  std::string stage;
  int epoch = 0;
  double loss = 0.0;
};

// Supervised pretraining of one head toward its indicator cut-out: the
// output layer starts with distance-shaped biases peaking on the associated
// vertex and a short cross-entropy polish follows. Throws if the final max
// row deviation from the one-hot target exceeds 0.05 on the given meshes.
void init_to_indicator(RegressorHead& head, const GarmentTemplate& garment,
                       const std::vector<Vec3>& model_template,
                       const std::vector<const Mesh*>& training_meshes,
                       const ParserConfig& config, std::uint64_t seed,
                       std::vector<TrainLogRow>* log);

struct ParseResult {
  Mesh upper;
  Mesh lower;
  Mesh body;  // detailed: regressor skin blended over the smooth body
  Mesh smooth_body;
  std::vector<double> theta;
  std::vector<double> beta;
};
ParseResult parse(const ParserBundle& bundle, const Mesh& mesh);

// Staged training: (1) pose/shape nets, (2) indicator init, (3) joint pass
// over all classes, (4) per-class fine-tuning. Deterministic under seed.
std::vector<TrainLogRow> train_parser(ParserBundle& bundle,
                                      const synth::Dataset& dataset);

void save_parser(const std::filesystem::path& dir, const ParserBundle& bundle);
ParserBundle load_parser(const std::filesystem::path& dir);

}  // namespace gf::parsernet
