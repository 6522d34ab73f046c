// Command-line front end: dataset synthesis, training, inference and
// evaluation as one reproducible binary.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "gf/body.h"
#include "gf/config.h"
#include "gf/eval.h"
#include "gf/gradsuite.h"
#include "gf/log.h"
#include "gf/parallel.h"
#include "gf/parsernet.h"
#include "gf/sizernet.h"
#include "gf/synth.h"

namespace fs = std::filesystem;
using namespace gf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file; flags override it");
  auto* seed = cmd->add_option("--seed", opts.seed, "RNG seed");
  seed->each([&](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--threads", opts.threads, "worker threads (0 = machine parallelism)");
  cmd->add_option("--out", opts.out, "output directory or file");
}

nlohmann::json load_config_json(const CommonOpts& opts) {
  if (opts.config_path.empty()) return nlohmann::json::object();
  return read_json_file(opts.config_path);
}

void write_run_metadata(const fs::path& dir, const nlohmann::json& config,
                        std::uint64_t seed) {
  nlohmann::json meta;
  meta["config"] = config;
  meta["config_hash"] = config_hash(config);
  meta["seed"] = seed;
  write_json_file(dir / "run_metadata.json", meta);
}

std::string metrics_csv(const std::vector<parsernet::TrainLogRow>& rows) {
  std::string csv = "stage,epoch,loss\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.17g\n", r.stage.c_str(), r.epoch, r.loss);
    csv += buf;
  }
  return csv;
}

int cmd_synth(const CommonOpts& opts) {
  if (opts.out.empty()) {
    log::error("synth: --out is required");
    return kExitUsage;
  }
  nlohmann::json cj = load_config_json(opts);
  synth::SynthConfig cfg = synth::SynthConfig::from_json(
      cj.contains("synth") ? cj.at("synth") : cj);
  if (opts.seed_set) cfg.seed = opts.seed;
  log::info("synth: %d subjects, seed %llu -> %s", cfg.subjects,
            static_cast<unsigned long long>(cfg.seed), opts.out.c_str());
  synth::generate_dataset(default_body(), cfg, opts.out);
  return kExitOk;
}

int cmd_train_parser(const CommonOpts& opts, const std::string& data) {
  if (data.empty() || opts.out.empty()) {
    log::error("train-parser: --data and --out are required");
    return kExitUsage;
  }
  nlohmann::json cj = load_config_json(opts);
  parsernet::ParserConfig cfg = parsernet::ParserConfig::from_json(
      cj.contains("parser") ? cj.at("parser") : cj);
  if (opts.seed_set) cfg.seed = opts.seed;

  const synth::Dataset ds = synth::load_dataset(data);
  parsernet::ParserBundle bundle = parsernet::make_parser_bundle(default_body(), cfg);
  fs::create_directories(opts.out);
  try {
    const auto log_rows = parsernet::train_parser(bundle, ds);
    parsernet::save_parser(opts.out, bundle);
    write_text_file(fs::path(opts.out) / "metrics.csv", metrics_csv(log_rows));
  } catch (const std::exception& e) {
    log::error("train-parser aborted: %s", e.what());
    parsernet::save_parser(fs::path(opts.out) / "abort_checkpoint", bundle);
    return kExitRuntime;
  }
  write_run_metadata(opts.out, cfg.to_json(), cfg.seed);
  return kExitOk;
}

int cmd_train_sizer(const CommonOpts& opts, const std::string& data) {
  if (data.empty() || opts.out.empty()) {
    log::error("train-sizer: --data and --out are required");
    return kExitUsage;
  }
  nlohmann::json cj = load_config_json(opts);
  sizernet::SizerConfig cfg = sizernet::SizerConfig::from_json(
      cj.contains("sizer") ? cj.at("sizer") : cj);
  if (opts.seed_set) cfg.seed = opts.seed;

  const synth::Dataset ds = synth::load_dataset(data);
  fs::create_directories(opts.out);
  std::vector<std::string> classes;
  for (const auto& [name, g] : default_body().garments) classes.push_back(name);
  std::string metrics = "class,epoch,loss\n";
  for (const auto& cls : classes) {
    sizernet::SizerModel model = sizernet::make_sizer(default_body(), cls, cfg);
    try {
      const auto rows = sizernet::train_sizer(model, ds);
      for (const auto& r : rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%d,%.17g\n", cls.c_str(), r.epoch, r.loss);
        metrics += buf;
      }
    } catch (const std::exception& e) {
      log::error("train-sizer aborted on %s: %s", cls.c_str(), e.what());
      sizernet::save_sizer(fs::path(opts.out) / ("abort_" + cls), model);
      return kExitRuntime;
    }
    sizernet::save_sizer(fs::path(opts.out) / cls, model);
  }
  write_text_file(fs::path(opts.out) / "metrics.csv", metrics);
  write_run_metadata(opts.out, cfg.to_json(), cfg.seed);
  return kExitOk;
}

int cmd_parse(const CommonOpts& opts, const std::string& model_dir,
              const std::string& input) {
  if (model_dir.empty() || input.empty() || opts.out.empty()) {
    log::error("parse: --model, --input and --out are required");
    return kExitUsage;
  }
  const parsernet::ParserBundle bundle = parsernet::load_parser(model_dir);
  const Mesh mesh = load_obj(input);
  const parsernet::ParseResult res = parsernet::parse(bundle, mesh);
  fs::create_directories(opts.out);
  save_obj(fs::path(opts.out) / "upper.obj", res.upper);
  save_obj(fs::path(opts.out) / "lower.obj", res.lower);
  save_obj(fs::path(opts.out) / "body.obj", res.body);
  nlohmann::json params;
  params["theta"] = res.theta;
  params["beta"] = res.beta;
  params["config_hash"] = config_hash(bundle.config.to_json());
  write_json_file(fs::path(opts.out) / "params.json", params);
  return kExitOk;
}

int cmd_resize(const CommonOpts& opts, const std::string& model_dir,
               const std::string& garment_path, const std::string& beta_path,
               const std::string& from, const std::string& to,
               const std::string& cls_flag) {
  if (model_dir.empty() || garment_path.empty() || beta_path.empty() ||
      opts.out.empty()) {
    log::error("resize: --model, --garment, --beta and --out are required");
    return kExitUsage;
  }
  const Mesh garment = load_obj(garment_path);

  // Pick the class model by flag or by vertex count.
  fs::path chosen;
  for (const auto& entry : fs::directory_iterator(model_dir)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "manifest.json")) continue;
    const nlohmann::json manifest = read_json_file(entry.path() / "manifest.json");
    if (!manifest.contains("class")) continue;
    const std::string cls = manifest.at("class").get<std::string>();
    if (!cls_flag.empty()) {
      if (cls == cls_flag) chosen = entry.path();
      continue;
    }
    const sizernet::SizerModel probe = sizernet::load_sizer(entry.path());
    if (probe.garment_size() == garment.vertex_count()) {
      if (!chosen.empty()) {
        log::error("resize: garment size is ambiguous, pass --class");
        return kExitUsage;
      }
      chosen = entry.path();
    }
  }
  if (chosen.empty()) {
    log::error("resize: no sizer model matches the garment");
    return kExitUsage;
  }
  const sizernet::SizerModel model = sizernet::load_sizer(chosen);
  if (model.garment_size() != garment.vertex_count()) {
    log::error("resize: garment vertex count does not match class '%s'",
               model.class_name.c_str());
    return kExitUsage;
  }

  const nlohmann::json params = read_json_file(beta_path);
  const std::vector<double> beta = params.at("beta").get<std::vector<double>>();
  std::vector<double> theta(3 * model.model.joint_count(), 0.0);
  if (params.contains("theta")) theta = params.at("theta").get<std::vector<double>>();

  const Mesh out = sizernet::resize(model, garment.vertices, beta,
                                    sizernet::SizeLabel::from_name(from),
                                    sizernet::SizeLabel::from_name(to), theta);
  save_obj(opts.out, out);
  return kExitOk;
}

int cmd_eval(const CommonOpts& opts, const std::string& data,
             const std::string& parser_dir, const std::string& sizer_dir) {
  if (data.empty()) {
    log::error("eval: --data is required");
    return kExitUsage;
  }
  if (parser_dir.empty() && sizer_dir.empty()) {
    log::error("eval: pass --parser and/or --sizer (a trained model path)");
    return kExitUsage;
  }
  nlohmann::json cj = load_config_json(opts);
  eval::EvalConfig cfg =
      eval::EvalConfig::from_json(cj.contains("eval") ? cj.at("eval") : cj);
  if (opts.seed_set) cfg.seed = opts.seed;

  const synth::Dataset ds = synth::load_dataset(data);
  parsernet::ParserBundle bundle;
  std::map<std::string, sizernet::SizerModel> sizers;
  const parsernet::ParserBundle* bundle_ptr = nullptr;
  if (!parser_dir.empty()) {
    bundle = parsernet::load_parser(parser_dir);
    bundle_ptr = &bundle;
  }
  if (!sizer_dir.empty()) {
    for (const auto& entry : fs::directory_iterator(sizer_dir)) {
      if (!entry.is_directory() || !fs::exists(entry.path() / "manifest.json"))
        continue;
      sizernet::SizerModel m = sizernet::load_sizer(entry.path());
      const std::string cls = m.class_name;
      sizers.emplace(cls, std::move(m));
    }
    if (sizers.empty()) {
      log::error("eval: no sizer models under %s", sizer_dir.c_str());
      return kExitUsage;
    }
  }

  const eval::BenchmarkArtifacts art = eval::benchmark(
      bundle_ptr, sizers.empty() ? nullptr : &sizers, ds, cfg, opts.out);
  if (!art.parser_table.empty()) std::fputs(art.parser_table.c_str(), stdout);
  if (!art.sizer_table.empty()) std::fputs(art.sizer_table.c_str(), stdout);
  if (!opts.out.empty()) write_run_metadata(opts.out, cfg.to_json(), cfg.seed);
  return kExitOk;
}

int cmd_gradcheck(const CommonOpts& opts) {
  const std::uint64_t seed = opts.seed_set ? opts.seed : 7;
  const auto results = gradsuite::run_suite(seed);
  for (const auto& r : results)
    std::printf("%-22s max_rel_err %.3e  mean %.3e  (%d points)\n", r.name.c_str(),
                r.max_rel_err, r.mean_rel_err, r.points);
  if (!gradsuite::all_pass(results)) {
    log::error("gradcheck: at least one loss exceeded 1e-4");
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"garmentforge: garment parsing and size-sensitive redraping"};
  app.require_subcommand(1);

  CommonOpts synth_opts, tparser_opts, tsizer_opts, parse_opts, resize_opts, eval_opts,
      grad_opts;
  std::string data_parser, data_sizer, data_eval;
  std::string parse_model, parse_input;
  std::string resize_model, resize_garment, resize_beta, resize_from = "M",
                            resize_to = "L", resize_class;
  std::string eval_parser_dir, eval_sizer_dir;
  bool grad_all = false;

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth_cmd, synth_opts);
  int synth_subjects = -1;
  synth_cmd->add_option("--subjects", synth_subjects, "number of subjects");

  auto* tparser_cmd = app.add_subcommand("train-parser", "train the parsing networks");
  add_common(tparser_cmd, tparser_opts);
  tparser_cmd->add_option("--data", data_parser, "dataset directory")->required();

  auto* tsizer_cmd = app.add_subcommand("train-sizer", "train the resizing networks");
  add_common(tsizer_cmd, tsizer_opts);
  tsizer_cmd->add_option("--data", data_sizer, "dataset directory")->required();

  auto* parse_cmd = app.add_subcommand("parse", "split a single mesh into layers");
  add_common(parse_cmd, parse_opts);
  parse_cmd->add_option("--model", parse_model, "trained parser directory")->required();
  parse_cmd->add_option("--input", parse_input, "registered single mesh (OBJ)")
      ->required();

  auto* resize_cmd = app.add_subcommand("resize", "redrape a garment at a new size");
  add_common(resize_cmd, resize_opts);
  resize_cmd->add_option("--model", resize_model, "trained sizer directory")->required();
  resize_cmd->add_option("--garment", resize_garment, "garment mesh (OBJ)")->required();
  resize_cmd->add_option("--beta", resize_beta, "params.json with beta/theta")
      ->required();
  resize_cmd->add_option("--from", resize_from, "input size label");
  resize_cmd->add_option("--to", resize_to, "output size label");
  resize_cmd->add_option("--class", resize_class, "garment class override");

  auto* eval_cmd = app.add_subcommand("eval", "run metrics, baselines and tables");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--data", data_eval, "dataset directory")->required();
  eval_cmd->add_option("--parser", eval_parser_dir, "trained parser directory");
  eval_cmd->add_option("--sizer", eval_sizer_dir, "trained sizer directory");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference audit of losses");
  add_common(grad_cmd, grad_opts);
  grad_cmd->add_flag("--all", grad_all, "check every loss (default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) {
      par::set_threads(synth_opts.threads);
      if (synth_subjects > 0) {
        // Explicit flag overrides the config file.
        nlohmann::json cj = load_config_json(synth_opts);
        nlohmann::json sj = cj.contains("synth") ? cj.at("synth") : cj;
        sj["subjects"] = synth_subjects;
        cj["synth"] = sj;
        const auto tmp = fs::temp_directory_path() / "gf_synth_config.json";
        write_json_file(tmp, cj);
        synth_opts.config_path = tmp.string();
      }
      return cmd_synth(synth_opts);
    }
    if (tparser_cmd->parsed()) {
      par::set_threads(tparser_opts.threads);
      return cmd_train_parser(tparser_opts, data_parser);
    }
    if (tsizer_cmd->parsed()) {
      par::set_threads(tsizer_opts.threads);
      return cmd_train_sizer(tsizer_opts, data_sizer);
    }
    if (parse_cmd->parsed()) {
      par::set_threads(parse_opts.threads);
      return cmd_parse(parse_opts, parse_model, parse_input);
    }
    if (resize_cmd->parsed()) {
      par::set_threads(resize_opts.threads);
      return cmd_resize(resize_opts, resize_model, resize_garment, resize_beta,
                        resize_from, resize_to, resize_class);
    }
    if (eval_cmd->parsed()) {
      par::set_threads(eval_opts.threads);
      return cmd_eval(eval_opts, data_eval, eval_parser_dir, eval_sizer_dir);
    }
    if (grad_cmd->parsed()) {
      par::set_threads(grad_opts.threads);
      return cmd_gradcheck(grad_opts);
    }
  } catch (const std::invalid_argument& e) {
    log::error("%s", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log::error("%s", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
