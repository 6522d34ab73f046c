#include "gf/losses.h"

#include <algorithm>
#include <cmath>

namespace gf::losses {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double sigmoid(double x) {
  if (x > 40.0) return 1.0;
  if (x < -40.0) return 0.0;
  return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

SkinWeighting make_skin_weighting(const Mesh& body_template,
                                  const std::vector<int>& core_skin,
                                  double tau, double margin) {
  const int n = body_template.vertex_count();
  std::vector<char> is_skin(n, 0);
  for (int v : core_skin) is_skin[v] = 1;

  // Boundary: endpoints of edges that cross the skin/cloth split.
  std::vector<int> seeds;
  for (const auto& e : mesh_edges(body_template)) {
    if (is_skin[e[0]] != is_skin[e[1]]) {
      seeds.push_back(e[0]);
      seeds.push_back(e[1]);
    }
  }
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  if (!seeds.empty()) dist = geodesic_distances(body_template, seeds).distances;

  SkinWeighting out;
  for (int v = 0; v < n; ++v) {
    const double signed_d = is_skin[v] ? dist[v] : -dist[v];
    if (is_skin[v] || dist[v] <= margin) {
      out.skin_vertices.push_back(v);
      out.w_geo.push_back(sigmoid(signed_d / tau));
    }
  }
  return out;
}

ValueGrad loss_3d(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("loss_3d: shape mismatch");
  const double scale = 1.0 / (3.0 * static_cast<double>(pred.size()));
  ValueGrad out;
  out.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double d = pred[i][c] - gt[i][c];
      out.value += std::abs(d) * scale;
      out.grad[i][c] = sgn(d) * scale;
    }
  }
  return out;
}

ValueGrad loss_body_3d(const std::vector<Vec3>& pred, const Mesh& input_mesh,
                       const SkinWeighting& weighting) {
  if (pred.size() != weighting.skin_vertices.size())
    throw std::invalid_argument("loss_body_3d: shape mismatch");
  ValueGrad out;
  out.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec3 target = input_mesh.vertices.at(weighting.skin_vertices[i]);
    const double w = weighting.w_geo[i];
    for (int c = 0; c < 3; ++c) {
      const double d = pred[i][c] - target[c];
      out.value += w * std::abs(d);
      out.grad[i][c] = w * sgn(d);
    }
  }
  return out;
}

NormalLoss loss_normal(const Mesh& pred, const Mesh& gt) {
  if (pred.faces.size() != gt.faces.size() || pred.vertices.size() != gt.vertices.size())
    throw std::invalid_argument("loss_normal: connectivity mismatch");
  const int f_count = pred.face_count();
  NormalLoss out;
  out.grad.assign(pred.vertex_count(), Vec3{});
  const std::vector<Vec3> gt_normals = face_normals_safe(gt);
  for (int f = 0; f < f_count; ++f) {
    const auto& fc = pred.faces[f];
    const Vec3 e1 = pred.vertices[fc[1]] - pred.vertices[fc[0]];
    const Vec3 e2 = pred.vertices[fc[2]] - pred.vertices[fc[0]];
    const Vec3 c = cross(e1, e2);
    const double cn = norm(c);
    if (0.5 * cn <= 1e-12 || dot(gt_normals[f], gt_normals[f]) == 0.0) {
      out.skipped_faces++;
      continue;
    }
    const Vec3 n_hat = c / cn;
    const Vec3 n_gt = gt_normals[f];
    out.value += 1.0 - dot(n_gt, n_hat);
    // dL/dc = -(I - n n^T) n_gt / (F |c|)
    const Vec3 proj = n_gt - n_hat * dot(n_hat, n_gt);
    const Vec3 q = proj * (-1.0 / cn);
    const Vec3 de1 = cross(e2, q);
    const Vec3 de2 = cross(q, e1);
    out.grad[fc[1]] += de1;
    out.grad[fc[2]] += de2;
    out.grad[fc[0]] -= de1 + de2;
  }
  const double inv_f = f_count > 0 ? 1.0 / f_count : 0.0;
  out.value *= inv_f;
  for (auto& g : out.grad) g *= inv_f;
  return out;
}

ValueGrad loss_laplacian(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                         const SparseMatrix& lap) {
  if (pred.size() != gt.size() || static_cast<int>(pred.size()) != lap.rows() ||
      lap.rows() != lap.cols())
    throw std::invalid_argument("loss_laplacian: shape mismatch");
  std::vector<Vec3> residual(pred.size());
  const std::vector<Vec3> lp = lap.apply(pred);
  const std::vector<Vec3> lg = lap.apply(gt);
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    residual[i] = lg[i] - lp[i];
    sq += dot(residual[i], residual[i]);
  }
  ValueGrad out;
  out.value = std::sqrt(sq);
  out.grad.assign(pred.size(), Vec3{});
  if (out.value > 0.0) {
    for (auto& r : residual) r *= 1.0 / out.value;
    const std::vector<Vec3> lt = lap.apply_transpose(residual);
    for (std::size_t i = 0; i < pred.size(); ++i) out.grad[i] = -1.0 * lt[i];
  }
  return out;
}

ValueGrad loss_interp(const std::vector<Vec3>& pred_garment,
                      const std::vector<Vec3>& gt_garment, const Mesh& body,
                      double d_tol) {
  if (pred_garment.size() != gt_garment.size())
    throw std::invalid_argument("loss_interp: shape mismatch");
  if (body.vertices.empty())
    throw std::invalid_argument("loss_interp: empty body mesh");
  const std::vector<Vec3> normals = vertex_normals(body);
  const std::vector<int> corr = nearest_vertex(pred_garment, body.vertices);
  const double inv_m = 1.0 / static_cast<double>(pred_garment.size());
  ValueGrad out;
  out.grad.assign(pred_garment.size(), Vec3{});
  for (std::size_t j = 0; j < pred_garment.size(); ++j) {
    if (norm(pred_garment[j] - gt_garment[j]) >= d_tol) continue;
    const int i = corr[j];
    const double arg = -dot(normals[i], pred_garment[j] - body.vertices[i]);
    if (arg > 0.0) {
      out.value += arg * inv_m;
      out.grad[j] = normals[i] * (-inv_m);
    }
  }
  return out;
}

WeightRegLoss loss_weight_reg(const SparseRegressor& w, const Mesh& mesh) {
  WeightRegLoss out;
  out.grad.assign(w.weights.size(), 0.0);
  for (int i = 0; i < w.rows; ++i) {
    const double* row = w.row_weights(i);
    const int* nbr = w.row_neighbors(i);
    int arg = 0;
    for (int j = 1; j < w.k; ++j)
      if (row[j] > row[arg]) arg = j;  // strict: ties keep the lower index
    const Vec3 anchor = mesh.vertices.at(nbr[arg]);
    for (int j = 0; j < w.k; ++j) {
      const double d = norm(anchor - mesh.vertices.at(nbr[j]));
      out.value += row[j] * d;
      out.grad[static_cast<std::size_t>(i) * w.k + j] = d;
    }
  }
  return out;
}

namespace {

// Shared per-vertex mean Euclidean term of the pose/shape losses.
double mean_euclid_term(const std::vector<Vec3>& pred, const Mesh& input_mesh,
                        double weight, std::vector<Vec3>& grad) {
  if (pred.size() != input_mesh.vertices.size())
    throw std::invalid_argument("pose/shape loss: vertex count mismatch");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  grad.assign(pred.size(), Vec3{});
  double value = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec3 d = pred[i] - input_mesh.vertices[i];
    const double nd = norm(d);
    value += weight * nd * inv_n;
    if (nd > 0.0) grad[i] = d * (weight * inv_n / nd);
  }
  return value;
}

}  // namespace

PoseLoss loss_pose(const std::vector<double>& theta_pred,
                   const std::vector<double>& theta_gt,
                   const std::vector<Vec3>& body_pred, const Mesh& input_mesh,
                   const LossWeights& weights) {
  if (theta_pred.size() != theta_gt.size())
    throw std::invalid_argument("loss_pose: theta dimension mismatch");
  PoseLoss out;
  out.dtheta_pred.resize(theta_pred.size());
  for (std::size_t i = 0; i < theta_pred.size(); ++i) {
    const double d = theta_pred[i] - theta_gt[i];
    out.value += weights.w_pose * d * d;
    out.dtheta_pred[i] = 2.0 * weights.w_pose * d;
  }
  out.value += mean_euclid_term(body_pred, input_mesh, weights.w_v, out.dbody_pred);
  return out;
}

ShapeLoss loss_shape(const std::vector<double>& beta_pred,
                     const std::vector<double>& beta_gt,
                     const std::vector<double>& sigmas,
                     const std::vector<Vec3>& body_pred, const Mesh& input_mesh,
                     const LossWeights& weights) {
  if (beta_pred.size() != beta_gt.size() || beta_pred.size() != sigmas.size())
    throw std::invalid_argument("loss_shape: beta dimension mismatch");
  ShapeLoss out;
  out.dbeta_pred.resize(beta_pred.size());
  for (std::size_t i = 0; i < beta_pred.size(); ++i) {
    const double d = beta_pred[i] - beta_gt[i];
    out.value += weights.w_shape * sigmas[i] * d * d;
    out.dbeta_pred[i] = 2.0 * weights.w_shape * sigmas[i] * d;
  }
  out.value += mean_euclid_term(body_pred, input_mesh, weights.w_v, out.dbody_pred);
  return out;
}

namespace {

CompositeLoss garment_composite(const std::vector<Vec3>& pred, const Mesh& gt,
                                const SparseMatrix& lap, const Mesh& body,
                                const SparseRegressor* w, const Mesh* input_mesh,
                                double d_tol, const LossWeights& weights) {
  CompositeLoss out;
  out.dpred.assign(pred.size(), Vec3{});

  if (weights.w_3d != 0.0) {
    const ValueGrad l = loss_3d(pred, gt.vertices);
    out.value += weights.w_3d * l.value;
    for (std::size_t i = 0; i < pred.size(); ++i)
      out.dpred[i] += l.grad[i] * weights.w_3d;
  }
  if (weights.w_norm != 0.0) {
    const NormalLoss l = loss_normal(Mesh{pred, gt.faces}, gt);
    out.value += weights.w_norm * l.value;
    out.skipped_faces = l.skipped_faces;
    for (std::size_t i = 0; i < pred.size(); ++i)
      out.dpred[i] += l.grad[i] * weights.w_norm;
  }
  if (weights.w_lap != 0.0) {
    const ValueGrad l = loss_laplacian(pred, gt.vertices, lap);
    out.value += weights.w_lap * l.value;
    for (std::size_t i = 0; i < pred.size(); ++i)
      out.dpred[i] += l.grad[i] * weights.w_lap;
  }
  if (weights.w_interp != 0.0) {
    const ValueGrad l = loss_interp(pred, gt.vertices, body, d_tol);
    out.value += weights.w_interp * l.value;
    for (std::size_t i = 0; i < pred.size(); ++i)
      out.dpred[i] += l.grad[i] * weights.w_interp;
  }
  if (w != nullptr && weights.w_w != 0.0) {
    const WeightRegLoss l = loss_weight_reg(*w, *input_mesh);
    out.value += weights.w_w * l.value;
    out.dweights.resize(l.grad.size());
    for (std::size_t i = 0; i < l.grad.size(); ++i)
      out.dweights[i] = weights.w_w * l.grad[i];
  }
  return out;
}

}  // namespace

CompositeLoss loss_parser_total(const std::vector<Vec3>& pred, const Mesh& gt,
                                const SparseMatrix& lap, const Mesh& body,
                                const SparseRegressor& w, const Mesh& input_mesh,
                                double d_tol, const LossWeights& weights) {
  return garment_composite(pred, gt, lap, body, &w, &input_mesh, d_tol, weights);
}

CompositeLoss loss_sizer_total(const std::vector<Vec3>& pred, const Mesh& gt,
                               const SparseMatrix& lap, const Mesh& body,
                               double d_tol, const LossWeights& weights) {
  return garment_composite(pred, gt, lap, body, nullptr, nullptr, d_tol, weights);
}

double l1_kink_margin(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (int c = 0; c < 3; ++c)
      margin = std::min(margin, std::abs(pred[i][c] - gt[i][c]));
  return margin;
}

double interp_kink_margin(const std::vector<Vec3>& pred_garment,
                          const std::vector<Vec3>& gt_garment, const Mesh& body,
                          double d_tol) {
  const std::vector<Vec3> normals = vertex_normals(body);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < pred_garment.size(); ++j) {
    // Gate boundary.
    margin = std::min(margin, std::abs(norm(pred_garment[j] - gt_garment[j]) - d_tol));
    // Nearest-neighbor switch: gap between the two closest body vertices.
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = d1;
    int arg = 0;
    for (std::size_t i = 0; i < body.vertices.size(); ++i) {
      const double d = norm(body.vertices[i] - pred_garment[j]);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        arg = static_cast<int>(i);
      } else if (d < d2) {
        d2 = d;
      }
    }
    margin = std::min(margin, d2 - d1);
    // Relu kink.
    margin = std::min(margin,
                      std::abs(dot(normals[arg], pred_garment[j] - body.vertices[arg])));
  }
  return margin;
}

double weight_reg_kink_margin(const SparseRegressor& w) {
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < w.rows; ++i) {
    const double* row = w.row_weights(i);
    double first = -1.0, second = -1.0;
    for (int j = 0; j < w.k; ++j) {
      if (row[j] > first) {
        second = first;
        first = row[j];
      } else if (row[j] > second) {
        second = row[j];
      }
    }
    if (w.k > 1) margin = std::min(margin, first - second);
  }
  return margin;
}

}  // namespace gf::losses
