#include "gf/gradsuite.h"

#include <cmath>
#include <functional>

#include "gf/body.h"
#include "gf/kernels.h"
#include "gf/losses.h"
#include "gf/nn.h"
#include "gf/rng.h"
#include "gf/config.h"

namespace gf::gradsuite {

namespace {

Mesh flat_grid(int rows, int cols, double z, double step = 0.05) {
  Mesh m;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m.vertices.push_back({c * step, r * step, z});
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c) {
      const int a = r * cols + c, b = a + 1, d = a + cols, e = d + 1;
      m.faces.push_back({a, b, e});
      m.faces.push_back({a, e, d});
    }
  return m;
}

std::vector<double> flatten(const std::vector<Vec3>& v) {
  std::vector<double> out(v.size() * 3);
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[3 * i] = v[i].x;
    out[3 * i + 1] = v[i].y;
    out[3 * i + 2] = v[i].z;
  }
  return out;
}

std::vector<Vec3> unflatten(const std::vector<double>& v) {
  std::vector<Vec3> out(v.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return out;
}

std::vector<Vec3> jitter(const std::vector<Vec3>& v, Rng& rng, double amp) {
  std::vector<Vec3> out = v;
  for (auto& p : out)
    p += {rng.uniform(-amp, amp), rng.uniform(-amp, amp), rng.uniform(-amp, amp)};
  return out;
}

// One named check: repeatedly samples a configuration (resampling when the
// kink margin is too small), evaluates the analytic gradient and compares
// with central differences.
struct Check {
  std::string name;
  // Returns {params, analytic grad, lossfn, kink margin}.
  struct Sample {
    std::vector<double> params;
    std::vector<double> grad;
    std::function<double(const std::vector<double>&)> lossfn;
    double kink_margin = 1.0;
  };
  std::function<Sample(Rng&)> draw;
};

Result run_check(const Check& check, std::uint64_t seed, int points) {
  Result result;
  result.name = check.name;
  Rng rng(seed ^ fnv1a(check.name));
  for (int p = 0; p < points; ++p) {
    Check::Sample sample = check.draw(rng);
    int attempts = 0;
    while (sample.kink_margin < 1e-7 && attempts++ < 50) sample = check.draw(rng);
    const auto report = nn::gradcheck(sample.lossfn, sample.params, sample.grad);
    result.max_rel_err = std::max(result.max_rel_err, report.max_rel_err);
    result.mean_rel_err += report.mean_rel_err;
    ++result.points;
  }
  if (result.points > 0) result.mean_rel_err /= result.points;
  return result;
}

}  // namespace

std::vector<Result> run_suite(std::uint64_t seed, int points) {
  std::vector<Check> checks;

  const Mesh body = flat_grid(6, 6, 0.0);
  const Mesh gt_garment = flat_grid(4, 4, 0.012);
  const SparseMatrix lap = graph_laplacian(gt_garment).matrix;
  const losses::LossWeights weights;  // defaults
  const double d_tol = 0.02;

  checks.push_back(
      {"loss_3d", [&](Rng& rng) -> Check::Sample {
         Check::Sample s;
         const auto pred = jitter(gt_garment.vertices, rng, 0.01);
         const auto got = losses::loss_3d(pred, gt_garment.vertices);
         s.params = flatten(pred);
         s.grad = flatten(got.grad);
         s.lossfn = [&](const std::vector<double>& p) {
           return losses::loss_3d(unflatten(p), gt_garment.vertices).value;
         };
         s.kink_margin = losses::l1_kink_margin(pred, gt_garment.vertices);
         return s;
       }});

  // Shared skin weighting over the small grid: left half skin.
  losses::SkinWeighting weighting;
  for (int i = 0; i < gt_garment.vertex_count(); ++i) {
    weighting.skin_vertices.push_back(i);
    weighting.w_geo.push_back(1.0 / (1.0 + std::exp(-(i - 8.0) / 3.0)));
  }
  checks.push_back(
      {"loss_body_3d", [&](Rng& rng) -> Check::Sample {
         Check::Sample s;
         const auto pred = jitter(gt_garment.vertices, rng, 0.01);
         const auto got = losses::loss_body_3d(pred, gt_garment, weighting);
         s.params = flatten(pred);
         s.grad = flatten(got.grad);
         s.lossfn = [&](const std::vector<double>& p) {
           return losses::loss_body_3d(unflatten(p), gt_garment, weighting).value;
         };
         s.kink_margin = losses::l1_kink_margin(pred, gt_garment.vertices);
         return s;
       }});

  checks.push_back(
      {"loss_normal", [&](Rng& rng) -> Check::Sample {
         Check::Sample s;
         const auto pred = jitter(gt_garment.vertices, rng, 0.008);
         const auto got = losses::loss_normal(Mesh{pred, gt_garment.faces}, gt_garment);
         s.params = flatten(pred);
         s.grad = flatten(got.grad);
         s.lossfn = [&](const std::vector<double>& p) {
           return losses::loss_normal(Mesh{unflatten(p), gt_garment.faces}, gt_garment)
               .value;
         };
         s.kink_margin = got.skipped_faces == 0 ? 1.0 : 0.0;
         return s;
       }});

  checks.push_back(
      {"loss_laplacian", [&](Rng& rng) -> Check::Sample {
         Check::Sample s;
         const auto pred = jitter(gt_garment.vertices, rng, 0.01);
         const auto got = losses::loss_laplacian(pred, gt_garment.vertices, lap);
         s.params = flatten(pred);
         s.grad = flatten(got.grad);
         s.lossfn = [&](const std::vector<double>& p) {
           return losses::loss_laplacian(unflatten(p), gt_garment.vertices, lap).value;
         };
         s.kink_margin = got.value;  // nondifferentiable only at zero residual
         return s;
       }});

  // A lower garment so the jitter actually pushes vertices into the body.
  const Mesh tight_garment = flat_grid(4, 4, 0.006);
  checks.push_back(
      {"loss_interp", [&](Rng& rng) -> Check::Sample {
         Check::Sample s;
         const auto pred = jitter(tight_garment.vertices, rng, 0.012);
         const auto got = losses::loss_interp(pred, tight_garment.vertices, body, d_tol);
         s.params = flatten(pred);
         s.grad = flatten(got.grad);
         s.lossfn = [&](const std::vector<double>& p) {
           return losses::loss_interp(unflatten(p), tight_garment.vertices, body, d_tol)
               .value;
         };
         s.kink_margin = got.value > 0.0
                             ? losses::interp_kink_margin(pred, tight_garment.vertices,
                                                          body, d_tol)
                             : 0.0;  // resample until something penetrates
         return s;
       }});

  checks.push_back(
      {"loss_weight_reg", [&](Rng& rng) -> Check::Sample {
         Check::Sample s;
         SparseRegressor w;
         w.rows = 8;
         w.k = 4;
         for (int i = 0; i < w.rows; ++i)
           for (int j = 0; j < w.k; ++j)
             w.neighbors.push_back((i * 3 + j * 5) % body.vertex_count());
         w.weights.resize(w.rows * w.k);
         for (int i = 0; i < w.rows; ++i) {
           double sum = 0.0;
           for (int j = 0; j < w.k; ++j) {
             w.row_weights(i)[j] = rng.uniform(0.05, 1.0);
             sum += w.row_weights(i)[j];
           }
           for (int j = 0; j < w.k; ++j) w.row_weights(i)[j] /= sum;
         }
         const auto got = losses::loss_weight_reg(w, body);
         Check::Sample s2;
         s2.params = w.weights;
         s2.grad = got.grad;
         SparseRegressor probe = w;
         s2.lossfn = [probe, &body](const std::vector<double>& p) mutable {
           probe.weights = p;
           return losses::loss_weight_reg(probe, body).value;
         };
         s2.kink_margin = losses::weight_reg_kink_margin(w);
         return s2;
       }});

  const Mesh input_mesh = flat_grid(4, 4, 0.002);
  checks.push_back(
      {"loss_pose", [&](Rng& rng) -> Check::Sample {
         Check::Sample s;
         std::vector<double> theta(9), theta_gt(9);
         for (auto& t : theta) t = rng.uniform(-0.4, 0.4);
         for (auto& t : theta_gt) t = rng.uniform(-0.4, 0.4);
         const auto pred = jitter(input_mesh.vertices, rng, 0.01);
         const auto got = losses::loss_pose(theta, theta_gt, pred, input_mesh, weights);
         s.params = theta;
         { const auto fp = flatten(pred); s.params.insert(s.params.end(), fp.begin(), fp.end()); }
         s.grad = got.dtheta_pred;
         const auto gb = flatten(got.dbody_pred);
         s.grad.insert(s.grad.end(), gb.begin(), gb.end());
         s.lossfn = [&, theta_gt](const std::vector<double>& p) {
           std::vector<double> th(p.begin(), p.begin() + 9);
           std::vector<double> rest(p.begin() + 9, p.end());
           return losses::loss_pose(th, theta_gt, unflatten(rest), input_mesh, weights)
               .value;
         };
         double margin = 1.0;
         for (std::size_t i = 0; i < pred.size(); ++i)
           margin = std::min(margin, norm(pred[i] - input_mesh.vertices[i]));
         s.kink_margin = margin;
         return s;
       }});

  checks.push_back(
      {"loss_shape", [&](Rng& rng) -> Check::Sample {
         Check::Sample s;
         const std::vector<double> sigmas = {0.05, 0.03, 0.02};
         std::vector<double> beta(3), beta_gt(3);
         for (auto& b : beta) b = rng.uniform(-1.5, 1.5);
         for (auto& b : beta_gt) b = rng.uniform(-1.5, 1.5);
         const auto pred = jitter(input_mesh.vertices, rng, 0.01);
         const auto got =
             losses::loss_shape(beta, beta_gt, sigmas, pred, input_mesh, weights);
         s.params = beta;
         { const auto fp = flatten(pred); s.params.insert(s.params.end(), fp.begin(), fp.end()); }
         s.grad = got.dbeta_pred;
         const auto gb = flatten(got.dbody_pred);
         s.grad.insert(s.grad.end(), gb.begin(), gb.end());
         s.lossfn = [&, beta_gt, sigmas](const std::vector<double>& p) {
           std::vector<double> b(p.begin(), p.begin() + 3);
           std::vector<double> rest(p.begin() + 3, p.end());
           return losses::loss_shape(b, beta_gt, sigmas, unflatten(rest), input_mesh,
                                     weights)
               .value;
         };
         double margin = 1.0;
         for (std::size_t i = 0; i < pred.size(); ++i)
           margin = std::min(margin, norm(pred[i] - input_mesh.vertices[i]));
         s.kink_margin = margin;
         return s;
       }});

  // Composite Eq-7 style: gradient w.r.t. predictions and regressor weights.
  checks.push_back(
      {"loss_parser_total", [&](Rng& rng) -> Check::Sample {
         SparseRegressor w;
         w.rows = gt_garment.vertex_count();
         w.k = 3;
         for (int i = 0; i < w.rows; ++i)
           for (int j = 0; j < w.k; ++j)
             w.neighbors.push_back((i + j * 7) % input_mesh.vertex_count());
         w.weights.resize(w.rows * w.k);
         for (int i = 0; i < w.rows; ++i) {
           double sum = 0.0;
           for (int j = 0; j < w.k; ++j) {
             w.row_weights(i)[j] = rng.uniform(0.05, 1.0);
             sum += w.row_weights(i)[j];
           }
           for (int j = 0; j < w.k; ++j) w.row_weights(i)[j] /= sum;
         }
         const auto pred = jitter(gt_garment.vertices, rng, 0.006);
         const auto got = losses::loss_parser_total(pred, gt_garment, lap, body, w,
                                                    input_mesh, d_tol, weights);
         Check::Sample s;
         s.params = flatten(pred);
         s.params.insert(s.params.end(), w.weights.begin(), w.weights.end());
         s.grad = flatten(got.dpred);
         s.grad.insert(s.grad.end(), got.dweights.begin(), got.dweights.end());
         const std::size_t split = pred.size() * 3;
         SparseRegressor probe = w;
         s.lossfn = [&, probe, split](const std::vector<double>& p) mutable {
           std::vector<double> pv(p.begin(), p.begin() + split);
           probe.weights.assign(p.begin() + split, p.end());
           return losses::loss_parser_total(unflatten(pv), gt_garment, lap, body,
                                            probe, input_mesh, d_tol, weights)
               .value;
         };
         s.kink_margin = std::min(
             {losses::l1_kink_margin(pred, gt_garment.vertices),
              losses::interp_kink_margin(pred, gt_garment.vertices, body, d_tol),
              losses::weight_reg_kink_margin(w)});
         return s;
       }});

  checks.push_back(
      {"loss_sizer_total", [&](Rng& rng) -> Check::Sample {
         Check::Sample s;
         const auto pred = jitter(gt_garment.vertices, rng, 0.006);
         const auto got =
             losses::loss_sizer_total(pred, gt_garment, lap, body, d_tol, weights);
         s.params = flatten(pred);
         s.grad = flatten(got.dpred);
         s.lossfn = [&](const std::vector<double>& p) {
           return losses::loss_sizer_total(unflatten(p), gt_garment, lap, body, d_tol,
                                           weights)
               .value;
         };
         s.kink_margin =
             std::min(losses::l1_kink_margin(pred, gt_garment.vertices),
                      losses::interp_kink_margin(pred, gt_garment.vertices, body, d_tol));
         return s;
       }});

  // Chain check: Eq-4/5 losses through the skinning backward.
  checks.push_back(
      {"pose_shape_chain", [&](Rng& rng) -> Check::Sample {
         const BodyModel& model = default_body();
         Check::Sample s;
         std::vector<double> theta(3 * model.joint_count());
         for (auto& t : theta) t = rng.uniform(-0.15, 0.15);
         std::vector<double> beta(model.shape_count());
         for (auto& b : beta) b = rng.uniform(-1.0, 1.0);
         std::vector<double> theta_gt(theta.size(), 0.0);
         std::vector<double> beta_gt(beta.size(), 0.0);
         BodyParams gt = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
         const Mesh input = skin(model, gt);

         const std::size_t theta_dim = theta.size();
         auto eval_loss = [&model, theta_dim, beta_gt, theta_gt, input,
                           weights](const std::vector<double>& p) {
           std::vector<double> th(p.begin(), p.begin() + theta_dim);
           std::vector<double> be(p.begin() + theta_dim, p.end());
           BodyParams pp = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
           pp.theta = th;
           pp.beta = beta_gt;
           const Mesh pose_body = skin(model, pp);
           const double lp =
               losses::loss_pose(th, theta_gt, pose_body.vertices, input, weights).value;
           BodyParams sp = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
           sp.theta = theta_gt;
           sp.beta = be;
           const Mesh shape_body = skin(model, sp);
           const double ls = losses::loss_shape(be, beta_gt, model.shape_sigmas,
                                                shape_body.vertices, input, weights)
                                 .value;
           return lp + ls;
         };

         s.params = theta;
         s.params.insert(s.params.end(), beta.begin(), beta.end());
         // Analytic gradient via the training chain.
         BodyParams pp = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
         pp.theta = theta;
         pp.beta = beta_gt;
         const Mesh pose_body = skin(model, pp);
         const auto pl =
             losses::loss_pose(theta, theta_gt, pose_body.vertices, input, weights);
         const SkinGrads pg = skin_backward(model, pp, pl.dbody_pred);
         BodyParams sp = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
         sp.theta = theta_gt;
         sp.beta = beta;
         const Mesh shape_body = skin(model, sp);
         const auto sl = losses::loss_shape(beta, beta_gt, model.shape_sigmas,
                                            shape_body.vertices, input, weights);
         const SkinGrads sg = skin_backward(model, sp, sl.dbody_pred);
         s.grad.resize(theta.size() + beta.size());
         for (std::size_t t = 0; t < theta.size(); ++t)
           s.grad[t] = pl.dtheta_pred[t] + pg.dtheta[t];
         for (std::size_t k = 0; k < beta.size(); ++k)
           s.grad[theta.size() + k] = sl.dbeta_pred[k] + sg.dbeta[k];
         s.lossfn = eval_loss;
         double margin = 1.0;
         for (int i = 0; i < input.vertex_count(); ++i) {
           margin = std::min(margin, norm(pose_body.vertices[i] - input.vertices[i]));
           margin = std::min(margin, norm(shape_body.vertices[i] - input.vertices[i]));
         }
         s.kink_margin = margin;
         return s;
       }});

  // Chain check: the full parser composite through a small regressor head
  // (softmax rows over fixed neighborhoods applied to the input mesh).
  checks.push_back(
      {"parser_head_chain", [&](Rng& rng) -> Check::Sample {
         const int rows = gt_garment.vertex_count();
         const int k = 3;
         SparseRegressor pattern;
         pattern.rows = rows;
         pattern.k = k;
         for (int i = 0; i < rows; ++i)
           for (int j = 0; j < k; ++j)
             pattern.neighbors.push_back((i + j * 5) % input_mesh.vertex_count());

         std::vector<double> logits(rows * k);
         for (auto& z : logits) z = rng.uniform(-1.0, 1.0);

         auto eval_loss = [&gt_garment, &lap, &body, &input_mesh, &weights, d_tol,
                           pattern, rows, k](const std::vector<double>& z) {
           SparseRegressor w = pattern;
           w.weights = z;
           kernels::ref::softmax_rows(w.weights.data(), rows, k);
           std::vector<Vec3> pred(rows);
           for (int i = 0; i < rows; ++i) {
             Vec3 acc;
             for (int j = 0; j < k; ++j)
               acc += w.row_weights(i)[j] *
                      input_mesh.vertices[w.row_neighbors(i)[j]];
             pred[i] = acc;
           }
           return losses::loss_parser_total(pred, gt_garment, lap, body, w, input_mesh,
                                            d_tol, weights)
               .value;
         };

         // Analytic gradient through softmax + convex combination.
         SparseRegressor w = pattern;
         w.weights = logits;
         kernels::ref::softmax_rows(w.weights.data(), rows, k);
         std::vector<Vec3> pred(rows);
         for (int i = 0; i < rows; ++i) {
           Vec3 acc;
           for (int j = 0; j < k; ++j)
             acc += w.row_weights(i)[j] * input_mesh.vertices[w.row_neighbors(i)[j]];
           pred[i] = acc;
         }
         const auto comp = losses::loss_parser_total(pred, gt_garment, lap, body, w,
                                                     input_mesh, d_tol, weights);
         std::vector<double> dw(w.weights.size());
         for (int i = 0; i < rows; ++i)
           for (int j = 0; j < k; ++j)
             dw[i * k + j] = dot(comp.dpred[i],
                                 input_mesh.vertices[w.row_neighbors(i)[j]]) +
                             comp.dweights[i * k + j];
         std::vector<double> dz(w.weights.size());
         for (int r = 0; r < rows; ++r) {
           const double* wr = w.row_weights(r);
           double inner = 0.0;
           for (int j = 0; j < k; ++j) inner += wr[j] * dw[r * k + j];
           for (int j = 0; j < k; ++j)
             dz[r * k + j] = wr[j] * (dw[r * k + j] - inner);
         }

         Check::Sample s;
         s.params = logits;
         s.grad = dz;
         s.lossfn = eval_loss;
         s.kink_margin = std::min(
             {losses::l1_kink_margin(pred, gt_garment.vertices),
              losses::interp_kink_margin(pred, gt_garment.vertices, body, d_tol),
              losses::weight_reg_kink_margin(w)});
         return s;
       }});

  std::vector<Result> results;
  for (const auto& check : checks) results.push_back(run_check(check, seed, points));
  return results;
}

bool all_pass(const std::vector<Result>& results, double threshold) {
  for (const auto& r : results)
    if (!(r.max_rel_err < threshold)) return false;
  return true;
}

}  // namespace gf::gradsuite
