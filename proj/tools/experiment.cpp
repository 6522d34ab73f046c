// Scratch harness for pipeline experiments; not part of the shipped CLI.
#include <chrono>
#include <cstdio>

#include "gf/body.h"
#include "gf/eval.h"
#include "gf/parsernet.h"
#include "gf/sizernet.h"
#include "gf/synth.h"

using namespace gf;

namespace {

double now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void print_report(const eval::MetricReport& r) {
  for (const auto& [cls, splits] : r.cells)
    for (const auto& [split, cell] : splits)
      std::printf("  %-22s %-8s %-15s V=%7.2fmm A=%6.2f%% n=%d\n", r.method.c_str(),
                  cls.c_str(), split.c_str(), cell.v_mean(), cell.a_mean(),
                  cell.count());
}

}  // namespace

int main(int argc, char** argv) {
  int subjects = argc > 1 ? std::atoi(argv[1]) : 24;
  int stage1 = argc > 2 ? std::atoi(argv[2]) : 30;
  int joint = argc > 3 ? std::atoi(argv[3]) : 10;
  int fine = argc > 4 ? std::atoi(argv[4]) : 4;
  int sizer_epochs = argc > 5 ? std::atoi(argv[5]) : 20;
  int fc_epochs = argc > 6 ? std::atoi(argv[6]) : 30;
  double lr = argc > 7 ? std::atof(argv[7]) : 0.0;
  const bool stage1_only = argc > 8 && std::string(argv[8]) == "stage1";

  const BodyModel& model = default_body();
  synth::SynthConfig scfg;
  scfg.subjects = subjects;
  scfg.holdout_subjects = std::max(2, subjects / 10);
  scfg.holdout_size_picks = std::max(2, subjects / 5);
  double t0 = now();
  synth::Dataset ds = synth::generate_dataset(model, scfg, "");
  std::printf("[t] synth %.1fs (%zu instances, %zu train)\n", now() - t0,
              ds.instances.size(), ds.train_idx.size());

  parsernet::ParserConfig pcfg;
  pcfg.stage1_epochs = stage1;
  pcfg.joint_epochs = joint;
  pcfg.finetune_epochs = fine;
  if (lr > 0.0) pcfg.lr = lr;
  if (stage1_only) {
    pcfg.init_epochs = 0;
    pcfg.joint_epochs = 0;
    pcfg.finetune_epochs = 0;
  }
  parsernet::ParserBundle bundle = parsernet::make_parser_bundle(model, pcfg);
  t0 = now();
  const auto log = parsernet::train_parser(bundle, ds);
  std::printf("[t] parser train %.1fs\n", now() - t0);
  for (const auto& row : log)
    if (row.epoch == 0 || (row.epoch + 1) % 10 == 0)
      std::printf("  %-16s ep%3d loss %10.4f\n", row.stage.c_str(), row.epoch,
                  row.loss);

  // Pose/shape recovery on held-out undressed bodies.
  {
    double verr_sum = 0.0, beta_only = 0.0, theta_only = 0.0, beta_l2 = 0.0;
    int count = 0;
    std::vector<char> unseen(ds.subjects.size(), 0);
    for (int i : ds.test_unseen_subject_idx) unseen[ds.instances[i].subject] = 1;
    for (std::size_t s = 0; s < ds.subjects.size(); ++s) {
      if (!unseen[s]) continue;
      BodyParams p = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
      p.beta = ds.subjects[s].beta;
      p.theta = ds.subjects[s].theta;
      const Mesh body = skin(model, p);
      auto [theta_hat, beta_hat] = parsernet::predict_pose_shape(bundle, body);
      BodyParams ph = BodyParams::zero(model.shape_count(), model.joint_count(), 0);
      ph.beta = beta_hat;
      ph.theta = theta_hat;
      verr_sum += eval::v_err(skin(model, ph).vertices, body.vertices);
      BodyParams pb = p;
      pb.beta = beta_hat;
      beta_only += eval::v_err(skin(model, pb).vertices, body.vertices);
      BodyParams pt = p;
      pt.theta = theta_hat;
      theta_only += eval::v_err(skin(model, pt).vertices, body.vertices);
      for (std::size_t k = 0; k < beta_hat.size(); ++k)
        beta_l2 += (beta_hat[k] - p.beta[k]) * (beta_hat[k] - p.beta[k]);
      ++count;
    }
    std::printf(
        "undressed body recovery: V=%.2fmm (beta-only %.2f, theta-only %.2f, "
        "|beta err| %.3f) over %d subjects\n",
        verr_sum / count, beta_only / count, theta_only / count,
        std::sqrt(beta_l2 / count), count);
  }
  if (stage1_only) return 0;

  eval::EvalConfig ecfg;
  ecfg.fc_epochs = fc_epochs;
  t0 = now();
  const auto pn = eval::eval_parser(bundle, ds);
  std::printf("[t] parser eval %.1fs\n", now() - t0);
  print_report(pn);
  t0 = now();
  const auto fc = eval::baseline_fc_parser(ds, bundle, ecfg);
  std::printf("[t] fc baseline %.1fs\n", now() - t0);
  print_report(fc);
  t0 = now();
  const auto lin = eval::baseline_linear_parser(ds, ecfg);
  std::printf("[t] lasso baseline %.1fs\n", now() - t0);
  print_report(lin);

  // Sizer.
  std::map<std::string, sizernet::SizerModel> sizers;
  for (const std::string cls : {"tshirt", "shorts"}) {
    sizernet::SizerConfig cfg;
    cfg.epochs = sizer_epochs;
    sizers.emplace(cls, sizernet::make_sizer(model, cls, cfg));
    t0 = now();
    const auto slog = sizernet::train_sizer(sizers.at(cls), ds);
    std::printf("[t] sizer %s train %.1fs (loss %0.3f -> %0.3f)\n", cls.c_str(),
                now() - t0, slog.front().loss, slog.back().loss);
  }
  print_report(eval::eval_sizer(sizers, ds));
  print_report(eval::baseline_error_margin(ds));
  print_report(eval::baseline_average_prediction(ds));
  print_report(eval::baseline_linear_scaling(ds, model));
  std::printf("monotonicity: %.3f\n", eval::sizer_monotonicity(sizers, ds));

  // Interpenetration fractions.
  double pen_sum = 0.0;
  int pen_n = 0;
  for (int i : ds.test_idx()) {
    const auto& inst = ds.instances[i];
    const auto res = parsernet::parse(bundle, inst.single);
    const Mesh& pred = model.garments.at(inst.class_name).layer == GarmentLayer::kUpper
                           ? res.upper
                           : res.lower;
    pen_sum += eval::penetration_fraction(pred.vertices, inst.body);
    ++pen_n;
  }
  std::printf("parser penetration fraction: %.4f\n", pen_sum / pen_n);
  return 0;
}
