#pragma once

#include <vector>

#include "gf/mesh.h"
#include "gf/regressor.h"

namespace gf::losses {

struct LossWeights {
  double w_3d = 1.0;
  double w_norm = 0.1;
  double w_lap = 100.0;
  double w_interp = 10.0;
  double w_w = 0.1;
  double w_pose = 1.0;
  double w_shape = 1.0;
  double w_v = 1.0;
};

// Skin-region weighting for the body loss: the domain is the core skin
// region plus a margin reaching into the clothed side; weights are a sigmoid
// of the signed geodesic distance to the skin/cloth boundary (positive on
// the skin side). Components without a boundary saturate to 1 (all skin)
// or fall outside the domain (all cloth).
struct SkinWeighting {
  std::vector<int> skin_vertices;  // sorted body vertex ids (I^s rows)
  std::vector<double> w_geo;       // same length, in [0, 1]
};

SkinWeighting make_skin_weighting(const Mesh& body_template,
                                  const std::vector<int>& core_skin,
                                  double tau = 0.02, double margin = 0.08);

struct ValueGrad {
  double value = 0.0;
  std::vector<Vec3> grad;
};

// Mean elementwise L1 between vertex sets; subgradient 0 at ties.
ValueGrad loss_3d(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// Geodesic-weighted skin supervision: sum_i w_i sum_c |pred_ic - M_{s_i,c}|.
ValueGrad loss_body_3d(const std::vector<Vec3>& pred, const Mesh& input_mesh,
                       const SkinWeighting& weighting);

// (1/F) sum_f (1 - <N_gt, N_pred>), gradient through the normalized cross
// product. Degenerate predicted faces are skipped and counted.
struct NormalLoss {
  double value = 0.0;
  std::vector<Vec3> grad;
  int skipped_faces = 0;
};
NormalLoss loss_normal(const Mesh& pred, const Mesh& gt);

// || L gt - L pred ||_F (unsquared); subgradient 0 at zero residual.
ValueGrad loss_laplacian(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                         const SparseMatrix& lap);

// Interpenetration: for garment vertices near their ground truth (< d_tol),
// penalize relu(-N_i . (pred_j - B_i)) against the nearest body vertex's
// tangent plane; mean over garment vertices. Correspondences are recomputed
// per call and treated as locally constant for the gradient.
ValueGrad loss_interp(const std::vector<Vec3>& pred_garment,
                      const std::vector<Vec3>& gt_garment, const Mesh& body,
                      double d_tol);

// Weight-locality regularizer: sum_i sum_j W_ij d(M_k, M_j) with
// k = argmax_j W_ij (ties to the lower index, argmax locally constant).
struct WeightRegLoss {
  double value = 0.0;
  std::vector<double> grad;  // rows * k, same layout as regressor weights
};
WeightRegLoss loss_weight_reg(const SparseRegressor& w, const Mesh& mesh);

// Pose supervision: w_pose ||theta^ - theta||^2 + w_v mean_i ||pred_i - M_i||.
struct PoseLoss {
  double value = 0.0;
  std::vector<double> dtheta_pred;
  std::vector<Vec3> dbody_pred;
};
PoseLoss loss_pose(const std::vector<double>& theta_pred,
                   const std::vector<double>& theta_gt,
                   const std::vector<Vec3>& body_pred, const Mesh& input_mesh,
                   const LossWeights& weights);

// Shape supervision: w_shape sum_i sigma_i (b^_i - b_i)^2 + the same
// per-vertex term.
struct ShapeLoss {
  double value = 0.0;
  std::vector<double> dbeta_pred;
  std::vector<Vec3> dbody_pred;
};
ShapeLoss loss_shape(const std::vector<double>& beta_pred,
                     const std::vector<double>& beta_gt,
                     const std::vector<double>& sigmas,
                     const std::vector<Vec3>& body_pred, const Mesh& input_mesh,
                     const LossWeights& weights);

// Weighted sums over the garment terms. The parser composite includes the
// weight regularizer; the sizer composite omits it.
struct CompositeLoss {
  double value = 0.0;
  std::vector<Vec3> dpred;
  std::vector<double> dweights;  // empty for the sizer composite
  int skipped_faces = 0;
};
CompositeLoss loss_parser_total(const std::vector<Vec3>& pred, const Mesh& gt,
                                const SparseMatrix& lap, const Mesh& body,
                                const SparseRegressor& w, const Mesh& input_mesh,
                                double d_tol, const LossWeights& weights);
CompositeLoss loss_sizer_total(const std::vector<Vec3>& pred, const Mesh& gt,
                               const SparseMatrix& lap, const Mesh& body,
                               double d_tol, const LossWeights& weights);

// Distance to the nearest non-differentiable configuration, used by the
// finite-difference harness to resample kink-adjacent points.
double l1_kink_margin(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);
double interp_kink_margin(const std::vector<Vec3>& pred_garment,
                          const std::vector<Vec3>& gt_garment, const Mesh& body,
                          double d_tol);
double weight_reg_kink_margin(const SparseRegressor& w);

}  // namespace gf::losses
