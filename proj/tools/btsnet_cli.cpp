#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "btsnet/ablation.hpp"
#include "btsnet/audit.hpp"
#include "btsnet/checkpoint.hpp"
#include "btsnet/config.hpp"
#include "btsnet/data.hpp"
#include "btsnet/errors.hpp"
#include "btsnet/gradcheck.hpp"
#include "btsnet/heatmap.hpp"
#include "btsnet/metrics.hpp"
#include "btsnet/trainer.hpp"

using namespace btsnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigArgs {
  std::string path;
  std::string scale = "tiny";
  std::vector<std::string> overrides;  // dotted.key=json
};

void add_config_options(CLI::App* app, ConfigArgs& a) {
  app->add_option("-c,--config", a.path, "experiment config (JSON)");
  app->add_option("--scale", a.scale, "defaults when no config is given")
      ->check(CLI::IsMember({"tiny", "full"}));
  app->add_option("--set", a.overrides, "override a config value, e.g. train.epochs=5");
}

void set_dotted(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare strings
  }
  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

TrainConfig resolve_config(const ConfigArgs& a) {
  json j;
  if (!a.path.empty()) {
    std::ifstream in(a.path);
    if (!in) throw ConfigError("cannot read config '" + a.path + "'");
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config '" + a.path + "' is not valid JSON: " + e.what());
    }
  } else {
    j = to_json(TrainConfig::defaults(parse_scale(a.scale)));
  }
  for (const auto& o : a.overrides) set_dotted(j, o);
  TrainConfig cfg = config_from_json(j);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

void emit_json(const std::string& path, const json& j) {
  if (!path.empty()) write_text(path, j.dump(2) + "\n");
}

std::vector<Sample> preprocessed(const TrainConfig& cfg, const std::vector<Sample>& raw) {
  std::vector<Sample> out;
  out.reserve(raw.size());
  for (const auto& s : raw) out.push_back(preprocess(s, cfg.input_h(), cfg.input_w()));
  return out;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  ConfigArgs cfg;
  std::string out = "runs/train";
  std::string resume;
  std::string dump;
};

template <typename T>
int run_train(const TrainArgs& a) {
  const TrainConfig cfg = resolve_config(a.cfg);
  if (!a.dump.empty()) {
    save_config(a.dump, cfg);
    return 0;
  }
  const auto samples = load_samples(cfg, Split::kTrain);
  std::printf("training on %zu samples, %d epochs, %s\n", samples.size(), cfg.train.epochs,
              to_string(cfg.precision).c_str());
  fs::create_directories(a.out);
  save_config(fs::path(a.out) / "config.json", cfg);
  auto net = build_network<T>(cfg);
  TrainOptions opt;
  opt.out_dir = a.out;
  opt.resume = a.resume;
  opt.on_epoch = [](const EpochRecord& r) {
    std::printf("epoch %4d  lr %.3g  loss %.6f\n", r.epoch + 1, r.lr, r.loss);
    std::fflush(stdout);
  };
  TrainResult r;
  try {
    r = train<T>(cfg, samples, *net, opt);
  } catch (const NonFiniteLossError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    for (const auto& s : e.stems()) std::fprintf(stderr, "  batch stem: %s\n", s.c_str());
    return 3;
  }
  json log = json::array();
  for (const auto& e : r.epochs) log.push_back({{"epoch", e.epoch + 1}, {"lr", e.lr}, {"loss", e.loss}});
  write_text(fs::path(a.out) / "loss_log.json", log.dump(2) + "\n");
  std::printf("checkpoint: %s\n", r.checkpoint.string().c_str());
  return 0;
}

// infer ---------------------------------------------------------------------

struct InferArgs {
  ConfigArgs cfg;
  std::string checkpoint;
  std::string out = "runs/pred";
  std::string split = "test";
  bool all_outputs = false;
};

template <typename T>
int run_infer(const InferArgs& a) {
  TrainConfig cfg = resolve_config(a.cfg);
  if (a.all_outputs) cfg.outputs = {"c", "r", "d"};
  auto net = restore_network<T>(cfg, a.checkpoint);
  const auto samples = load_samples(cfg, parse_split(a.split));
  fs::create_directories(a.out);
  const auto files = infer<T>(*net, cfg, samples, a.out);
  std::printf("wrote %zu maps to %s\n", files.size(), a.out.c_str());
  return 0;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  ConfigArgs cfg;
  std::string pred, gt, checkpoint;
  std::string split = "test";
  std::string output = "c";
  std::string report;
};

template <typename T>
metrics::MetricsReport eval_checkpoint(const EvalArgs& a) {
  const TrainConfig cfg = resolve_config(a.cfg);
  auto net = restore_network<T>(cfg, a.checkpoint);
  const auto samples = preprocessed(cfg, load_samples(cfg, parse_split(a.split)));
  return evaluate_model<T>(*net, cfg, samples, a.output);
}

int run_eval(const EvalArgs& a) {
  metrics::MetricsReport report;
  if (!a.pred.empty()) {
    if (a.gt.empty()) throw ConfigError("--pred needs --gt");
    report = metrics::evaluate_dataset(a.pred, a.gt);
  } else if (!a.checkpoint.empty()) {
    const auto precision = resolve_config(a.cfg).precision;
    report = precision == Precision::kFloat64 ? eval_checkpoint<double>(a) : eval_checkpoint<float>(a);
  } else {
    throw ConfigError("eval needs --pred/--gt or --checkpoint");
  }
  const std::string label =
      a.pred.empty() ? "S_" + a.output : fs::path(a.pred).lexically_normal().filename().string();
  std::cout << metrics::report_table({{label, report}});
  if (!a.report.empty()) write_text(a.report, metrics::report_json(report) + "\n");
  if (!report.ok()) {
    for (const auto& e : report.errors) std::fprintf(stderr, "error: %s\n", e.c_str());
    return 2;
  }
  return 0;
}

// ablate --------------------------------------------------------------------

struct AblateArgs {
  ConfigArgs cfg;
  std::string suite;
  std::string report;
};

int run_ablate(const AblateArgs& a) {
  const TrainConfig cfg = resolve_config(a.cfg);
  const auto r = run_ablation(parse_ablation_suite(a.suite), cfg,
                              [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); });
  std::cout << ablation_table(r);
  emit_json(a.report, ablation_json(r));
  return 0;
}

// params --------------------------------------------------------------------

struct ParamsArgs {
  std::string scale = "full";
  std::string report;
};

int run_params(const ParamsArgs& a) {
  const auto audit = audit_parameters(parse_scale(a.scale));
  std::cout << audit_table(audit);
  emit_json(a.report, audit_json(audit));
  return 0;
}

// gradcheck -----------------------------------------------------------------

struct GradArgs {
  std::vector<std::string> components;
  std::string dtype = "float64";
  double eps = 1e-6;
  int samples = 12;
  std::string report;
};

double tolerance(const std::string& component) {
  if (component == "loss") return 1e-5;
  if (component == "network") return 1e-3;
  return 1e-4;
}

int run_gradcheck(const GradArgs& a) {
  const auto& components = a.components.empty() ? gradcheck_components() : a.components;
  GradCheckOptions opt;
  opt.eps = a.eps;
  opt.samples_per_leaf = a.samples;
  json rows = json::array();
  bool ok = true;
  std::printf("%-18s %12s %10s  %s\n", "component", "max rel err", "tolerance", "worst");
  for (const auto& c : components) {
    const auto r = a.dtype == "float32" ? grad_check<float>(c, opt) : grad_check<double>(c, opt);
    const double tol = tolerance(c);
    // float32 differences are only indicative
    const bool pass = a.dtype == "float32" || r.max_rel_error < tol;
    ok = ok && pass;
    std::printf("%-18s %12.3e %10.0e  %s%s\n", c.c_str(), r.max_rel_error, tol, r.worst.c_str(),
                pass ? "" : "  FAIL");
    rows.push_back({{"component", c},
                    {"max_rel_error", r.max_rel_error},
                    {"tolerance", tol},
                    {"worst", r.worst},
                    {"checked", r.checked}});
  }
  emit_json(a.report, {{"dtype", a.dtype}, {"eps", a.eps}, {"results", rows}});
  return ok ? 0 : 1;
}

// viz -----------------------------------------------------------------------

struct VizArgs {
  ConfigArgs cfg;
  std::string checkpoint;
  std::string levels = "r3,d3";
  std::string split = "test";
  std::vector<std::string> stems;
  std::string out = "runs/viz";
};

template <typename T>
int run_viz(const VizArgs& a) {
  const TrainConfig cfg = resolve_config(a.cfg);
  std::vector<FeatureLevel> levels;
  std::stringstream ss(a.levels);
  for (std::string tok; std::getline(ss, tok, ',');) levels.push_back(parse_feature_level(tok));
  auto net = a.checkpoint.empty() ? build_network<T>(cfg) : restore_network<T>(cfg, a.checkpoint);
  const auto samples = load_samples(cfg, parse_split(a.split));
  std::vector<std::string> missing;
  std::size_t written = 0;
  fs::create_directories(a.out);
  for (const auto& s : samples) {
    if (!a.stems.empty() && std::find(a.stems.begin(), a.stems.end(), s.stem) == a.stems.end()) continue;
    written += export_heatmaps<T>(*net, preprocess(s, cfg.input_h(), cfg.input_w()), levels,
                                  cfg.rgb_norm, a.out)
                   .size();
  }
  for (const auto& stem : a.stems) {
    const bool found = std::any_of(samples.begin(), samples.end(),
                                   [&](const Sample& s) { return s.stem == stem; });
    if (!found) missing.push_back("no sample with stem '" + stem + "'");
  }
  if (!missing.empty()) throw ItemizedError(missing);
  std::printf("wrote %zu heatmaps to %s\n", written, a.out.c_str());
  return 0;
}

// synth ---------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int count = 8;
  std::uint64_t seed = 7;
  int height = 64, width = 64;
};

int run_synth(const SynthArgs& a) {
  const auto samples = synthetic_dataset(a.count, a.seed, a.height, a.width);
  write_dataset(a.out, samples);
  std::printf("wrote %zu samples to %s/{RGB,depth,GT}\n", samples.size(), a.out.c_str());
  return 0;
}

template <typename Fn>
int dispatch(const ConfigArgs& c, Fn&& fn) {
  return resolve_config(c).precision == Precision::kFloat64 ? fn(double{}) : fn(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D salient object detection toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a network and write checkpoints");
  add_config_options(train_cmd, train_args.cfg);
  train_cmd->add_option("-o,--out", train_args.out, "run directory");
  train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue from");
  train_cmd->add_option("--dump-config", train_args.dump, "write the resolved config and exit");

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "write saliency maps for a dataset split");
  add_config_options(infer_cmd, infer_args.cfg);
  infer_cmd->add_option("--checkpoint", infer_args.checkpoint)->required();
  infer_cmd->add_option("-o,--out", infer_args.out);
  infer_cmd->add_option("--split", infer_args.split)->check(CLI::IsMember({"train", "test"}));
  infer_cmd->add_flag("--all-outputs", infer_args.all_outputs, "also write the r and d maps");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "score saliency maps against ground truth");
  add_config_options(eval_cmd, eval_args.cfg);
  eval_cmd->add_option("--pred", eval_args.pred, "directory of predicted maps");
  eval_cmd->add_option("--gt", eval_args.gt, "directory of ground-truth masks");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "score a checkpoint directly");
  eval_cmd->add_option("--split", eval_args.split)->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--output", eval_args.output)->check(CLI::IsMember({"c", "r", "d"}));
  eval_cmd->add_option("--report", eval_args.report, "write the JSON report here");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score an ablation suite");
  add_config_options(ablate_cmd, ablate_args.cfg);
  ablate_cmd->add_option("suite", ablate_args.suite, "directions, attention_order or decoder")
      ->required();
  ablate_cmd->add_option("--report", ablate_args.report, "write the JSON report here");

  ParamsArgs params_args;
  auto* params_cmd = app.add_subcommand("params", "parameter counts per component");
  params_cmd->add_option("--scale", params_args.scale)->check(CLI::IsMember({"tiny", "full"}));
  params_cmd->add_option("--report", params_args.report, "write the JSON report here");

  GradArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite differences against autograd");
  grad_cmd->add_option("components", grad_args.components, "default: all");
  grad_cmd->add_option("--dtype", grad_args.dtype)->check(CLI::IsMember({"float32", "float64"}));
  grad_cmd->add_option("--eps", grad_args.eps);
  grad_cmd->add_option("--samples", grad_args.samples, "coordinates per tensor");
  grad_cmd->add_option("--report", grad_args.report, "write the JSON report here");

  VizArgs viz_args;
  auto* viz_cmd = app.add_subcommand("viz", "export feature heatmaps");
  add_config_options(viz_cmd, viz_args.cfg);
  viz_cmd->add_option("--checkpoint", viz_args.checkpoint, "default: freshly initialized weights");
  viz_cmd->add_option("--levels", viz_args.levels, "comma list like r3,d3");
  viz_cmd->add_option("--split", viz_args.split)->check(CLI::IsMember({"train", "test"}));
  viz_cmd->add_option("--stem", viz_args.stems, "restrict to these samples");
  viz_cmd->add_option("-o,--out", viz_args.out);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic RGB-D dataset");
  synth_cmd->add_option("-o,--out", synth_args.out)->required();
  synth_cmd->add_option("--count", synth_args.count)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_args.seed);
  synth_cmd->add_option("--height", synth_args.height)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--width", synth_args.width)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      return dispatch(train_args.cfg, [&](auto t) { return run_train<decltype(t)>(train_args); });
    }
    if (*infer_cmd) {
      return dispatch(infer_args.cfg, [&](auto t) { return run_infer<decltype(t)>(infer_args); });
    }
    if (*eval_cmd) return run_eval(eval_args);
    if (*ablate_cmd) return run_ablate(ablate_args);
    if (*params_cmd) return run_params(params_args);
    if (*grad_cmd) return run_gradcheck(grad_args);
    if (*viz_cmd) {
      return dispatch(viz_args.cfg, [&](auto t) { return run_viz<decltype(t)>(viz_args); });
    }
    if (*synth_cmd) return run_synth(synth_args);
  } catch (const ItemizedError& e) {
    std::fprintf(stderr, "error: %zu problem(s)\n", e.items().size());
    for (const auto& item : e.items()) std::fprintf(stderr, "  - %s\n", item.c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
