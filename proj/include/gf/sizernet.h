#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gf/body.h"
#include "gf/losses.h"
#include "gf/nn.h"
#include "gf/sizes.h"
#include "gf/synth.h"

namespace gf::sizernet {

// One-hot size label over {S, M, L, XL}.
struct SizeLabel {
  std::array<double, 4> onehot = {0, 0, 0, 0};

  static SizeLabel from_index(int idx) {
    SizeLabel l;
    l.onehot.at(idx) = 1.0;
    return l;
  }
  static SizeLabel from_name(const std::string& name) {
    return from_index(size_from_name(name));
  }
  int index() const {
    int count = 0, idx = -1;
    for (int i = 0; i < 4; ++i)
      if (onehot[i] == 1.0) {
        ++count;
        idx = i;
      } else if (onehot[i] != 0.0) {
        throw std::invalid_argument("size label not one-hot");
      }
    if (count != 1) throw std::invalid_argument("size label not one-hot");
    return idx;
  }
};

struct SizerConfig {
  int latent = 30;  // d
  int hidden = 512;
  int batch_size = 8;
  // Desk-scale default; the published 1e-4 is kept available in the config.
  double lr = 3e-4;
  losses::LossWeights weights;
  double d_tol = 0.02;
  int epochs = 60;
  std::uint64_t seed = 2;

  nlohmann::json to_json() const;
  static SizerConfig from_json(const nlohmann::json& j);
};

// Encoder-decoder over a garment class. The decoder conditions on
// (beta, latent, size-in, size-out); each encoder hidden layer feeds its
// mirror decoder layer through a skip concatenation.
struct SizerModel {
  SizerConfig config;
  BodyModel model;
  std::string class_name;
  nn::DenseNet enc1, enc2, enc3;  // m*3 -> h -> h -> d
  nn::DenseNet dec1;              // (|beta| + d + 8) + h -> h   (skip from enc2 output)
  nn::DenseNet dec2;              // h + h -> h                  (skip from enc1 output)
  nn::DenseNet dec3;              // h -> m*3
  SparseMatrix laplacian;

  int garment_size() const {
    return model.garments.at(class_name).size();
  }
};

SizerModel make_sizer(const BodyModel& model, const std::string& class_name,
                      const SizerConfig& config);

// Latent code of a garment given in the unposed template-plus-offsets frame.
std::vector<double> encode(const SizerModel& model,
                           const std::vector<Vec3>& garment_unposed);

// Redrape a posed garment at a new size: un-pose, encode, decode the new
// displacement field, skin it back.
Mesh resize(const SizerModel& model, const std::vector<Vec3>& garment_posed,
            const std::vector<double>& beta, const SizeLabel& delta_in,
            const SizeLabel& delta_out, const std::vector<double>& theta);

struct TrainLogRow {
  int epoch = 0;
  double loss = 0.0;
};

// Supervised on all ordered same-subject size pairs (identity included).
std::vector<TrainLogRow> train_sizer(SizerModel& model, const synth::Dataset& dataset);

void save_sizer(const std::filesystem::path& dir, const SizerModel& model);
SizerModel load_sizer(const std::filesystem::path& dir);

}  // namespace gf::sizernet
