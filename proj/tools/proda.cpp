// proda: synth / train / eval / sweep / localize / gradcheck.
//
// Exit codes: 0 ok, 1 usage or bad config, 2 runtime failure, 3 a
// verification (gradcheck) failed.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "proda/config/run_config.hpp"
#include "proda/errors.hpp"
#include "proda/spec/action_spec.hpp"
#include "proda/eval/report.hpp"
#include "proda/numerics/checkpoint.hpp"
#include "proda/pipeline/gradcheck.hpp"
#include "proda/synthgen/synthgen.hpp"

namespace fs = std::filesystem;
using namespace proda;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2, kVerification = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string dataset;
  std::string checkpoint;
  std::string stage = "both";
  std::optional<double> theta, iou;
  bool injected = false;
};

config::RunConfig resolve(const Options& o) {
  config::RunConfig cfg;
  if (!o.config_file.empty()) {
    if (!fs::exists(o.config_file)) throw UsageError("config file not found: " + o.config_file);
    cfg = config::load(o.config_file);
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    config::set(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.theta) cfg.theta = *o.theta;
  if (o.iou) cfg.iou = *o.iou;
  if (o.injected) cfg.injected = true;
  return cfg;
}

void add_axis_value(std::vector<double>& axis, double v) {
  if (std::find(axis.begin(), axis.end(), v) == axis.end()) {
    axis.push_back(v);
    std::sort(axis.begin(), axis.end());
  }
}

eval::EvalConfig eval_config(const config::RunConfig& cfg) {
  auto e = cfg.eval;
  e.seed = spec::derive_seed(cfg.seed, 0xe7a1, 0);
  add_axis_value(e.thetas, cfg.theta);
  add_axis_value(e.ious, cfg.iou);
  return e;
}

void write_echo(const fs::path& out, const std::string& command, const config::RunConfig& cfg) {
  fs::create_directories(out);
  num::write_file_atomic(out / (command + ".config"), config::echo(cfg));
}

std::vector<ssg::VideoRecord> load_split(const Options& o, const char* split) {
  if (o.dataset.empty()) throw UsageError("--dataset is required");
  const auto path = fs::path(o.dataset) / (std::string(split) + ".jsonl");
  if (!fs::exists(path)) throw std::runtime_error("missing dataset file " + path.string());
  return ssg::read_dataset(path);
}

void load_weights(const Options& o, pipeline::ProdaModel& model) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  num::load_into(model.parameters(), num::read_checkpoint(o.checkpoint));
}

void write_report(const fs::path& out, const std::string& command, const eval::MetricsReport& r) {
  num::write_file_atomic(out / (command + "_report.jsonl"), eval::to_jsonl(r));
  const auto table = eval::to_table(r);
  num::write_file_atomic(out / (command + "_report.txt"), table);
  fmt::print("{}", table);
}

void log_epoch(const pipeline::EpochRecord& r) {
  spdlog::info("stage {} epoch {} loss {:.5f} (bce_u {:.4f} bce_s {:.4f} bce_t {:.4f} dis {:.4f} rec {:.4f}) {:.1f}s",
               r.stage, r.epoch, r.loss.total, r.loss.l_bce_u, r.loss.l_bce_s, r.loss.l_bce_t,
               r.loss.l_dis, r.loss.l_rec, r.seconds);
}

int cmd_synth(const Options& o) {
  const auto cfg = resolve(o);
  auto gen = cfg.gen;
  gen.seed = cfg.seed;
  const fs::path out = o.out;
  write_echo(out, "synth", cfg);
  const auto files = synth::generate_dataset(gen, cfg.n_train, cfg.n_val, out);
  nlohmann::json counts = {{"kind", "label_counts"},
                           {"train", files.train_label_counts},
                           {"val", files.val_label_counts}};
  num::write_file_atomic(out / "synth_report.jsonl", counts.dump() + "\n");
  spdlog::info("wrote {} ({} videos) and {} ({} videos)", files.train.string(), cfg.n_train,
               files.val.string(), cfg.n_val);
  spdlog::info("train label counts: {}", fmt::join(files.train_label_counts, " "));
  return kOk;
}

int cmd_train(const Options& o) {
  const auto cfg = resolve(o);
  if (o.stage != "1" && o.stage != "2" && o.stage != "both")
    throw UsageError("--stage must be 1, 2 or both");
  const auto data = load_split(o, "train");
  pipeline::ProdaModel model(cfg.model_config());
  pipeline::check_compatible(model.config(), data);
  const fs::path out = o.out;
  write_echo(out, "train", cfg);
  const auto echo = config::echo(cfg);

  if (o.stage != "2") {
    auto tc = cfg.stage1_config();
    tc.out_dir = out;
    tc.config_echo = echo;
    tc.on_epoch = log_epoch;
    const auto r = pipeline::train_stage1(model, data, tc);
    spdlog::info("stage 1 checkpoint {}", r.checkpoint.string());
  } else if (!o.checkpoint.empty()) {
    num::load_into(model.parameters(), num::read_checkpoint(o.checkpoint));
  } else {
    spdlog::warn("stage 2 without --checkpoint starts from an untrained backbone");
  }
  if (o.stage != "1") {
    auto tc = cfg.stage2_config();
    tc.out_dir = out;
    tc.config_echo = echo;
    tc.on_epoch = log_epoch;
    const auto r = pipeline::train_stage2(model, data, tc);
    spdlog::info("stage 2 checkpoint {} (frozen grad norm {})", r.checkpoint.string(), r.frozen_grad_norm);
  }
  return kOk;
}

int cmd_eval(const Options& o) {
  const auto cfg = resolve(o);
  const auto data = load_split(o, "val");
  pipeline::ProdaModel model(cfg.model_config());
  load_weights(o, model);
  const fs::path out = o.out;
  write_echo(out, "eval", cfg);
  eval::MetricsReport r;
  r.heads = eval::evaluate_heads(model, data, eval_config(cfg), true);
  write_report(out, "eval", r);
  return kOk;
}

int cmd_sweep(const Options& o) {
  const auto cfg = resolve(o);
  const auto data = load_split(o, "val");
  pipeline::ProdaModel model(cfg.model_config());
  load_weights(o, model);
  const fs::path out = o.out;
  write_echo(out, "sweep", cfg);
  eval::MetricsReport r;
  r.robustness = eval::robustness_sweep(model, data, cfg.injected, eval_config(cfg));
  write_report(out, "sweep", r);
  return kOk;
}

int cmd_localize(const Options& o) {
  const auto cfg = resolve(o);
  const auto data = load_split(o, "val");
  pipeline::ProdaModel model(cfg.model_config());
  load_weights(o, model);
  const fs::path out = o.out;
  write_echo(out, "localize", cfg);
  const auto ec = eval_config(cfg);
  std::vector<eval::FrameWeights> dump;
  eval::MetricsReport r;
  r.localization.push_back(eval::localization_grid(model, data, cfg.injected, ec, cfg.frame_level, &dump));
  write_report(out, "localize", r);
  num::write_file_atomic(out / "frame_weights.jsonl", eval::to_jsonl(dump));

  const auto& g = r.localization.front();
  const auto row = std::find(g.thetas.begin(), g.thetas.end(), cfg.theta) - g.thetas.begin();
  const auto col = std::find(g.ious.begin(), g.ious.end(), cfg.iou) - g.ious.begin();
  fmt::print("segment mAP at theta={} IoU={}: {:.2f}\n", cfg.theta, cfg.iou, 100.0 * g.map[row][col]);
  return kOk;
}

int cmd_gradcheck(const Options& o) {
  const auto cfg = resolve(o);
  const fs::path out = o.out;
  write_echo(out, "gradcheck", cfg);
  const auto report = pipeline::tiny_model_gradcheck();
  std::string lines;
  for (const auto& p : report.params) {
    lines += nlohmann::json{{"kind", "param"},
                            {"name", p.name},
                            {"max_rel_error", p.max_rel_error},
                            {"worst_index", p.worst_index},
                            {"analytic", p.analytic},
                            {"numeric", p.numeric}}
                 .dump() +
             "\n";
  }
  lines += nlohmann::json{{"kind", "summary"},
                          {"eps", report.eps},
                          {"tolerance", report.tolerance},
                          {"max_rel_error", report.max_rel_error},
                          {"pass", report.pass}}
               .dump() +
           "\n";
  num::write_file_atomic(out / "gradcheck_report.jsonl", lines);
  fmt::print("{}, max rel err {:.3e} (tolerance {:.0e}) over {} parameters\n",
             report.pass ? "PASS" : "FAIL", report.max_rel_error, report.tolerance, report.params.size());
  return report.pass ? kOk : kVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-guided action disentanglement over scene graphs"};
  app.require_subcommand(1, 1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_file, "key=value config file");
    sub->add_option("--set", o.overrides, "config override key=value (repeatable)");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
    return sub;
  };
  auto needs_model = [&](CLI::App* sub) {
    sub->add_option("--dataset", o.dataset, "directory with train.jsonl / val.jsonl");
    sub->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    return sub;
  };

  struct Command {
    CLI::App* app;
    int (*run)(const Options&);
  };
  std::vector<Command> commands;
  commands.push_back({common(app.add_subcommand("synth", "generate a synthetic dataset")), cmd_synth});
  auto* train = needs_model(common(app.add_subcommand("train", "stage 1 and/or stage 2 training")));
  train->add_option("--stage", o.stage, "1, 2 or both");
  commands.push_back({train, cmd_train});
  commands.push_back({needs_model(common(app.add_subcommand("eval", "per-head mAP"))), cmd_eval});
  auto* sweep = needs_model(common(app.add_subcommand("sweep", "a_s robustness by label count")));
  sweep->add_flag("--injected", o.injected, "distractor-injected specifications");
  commands.push_back({sweep, cmd_sweep});
  auto* loc = needs_model(common(app.add_subcommand("localize", "segment mAP from frame weights")));
  loc->add_option("--theta", o.theta, "frame-weight threshold");
  loc->add_option("--iou", o.iou, "IoU threshold");
  loc->add_flag("--injected", o.injected, "distractor-injected specifications");
  commands.push_back({loc, cmd_localize});
  commands.push_back({common(app.add_subcommand("gradcheck", "tiny-model gradient check")), cmd_gradcheck});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  spdlog::set_pattern("[%l] %v");
  try {
    for (const auto& c : commands)
      if (c.app->parsed()) return c.run(o);
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n{}", e.what(), app.help());
    return kUsage;
  } catch (const ParseError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntime;
  }
  return kUsage;
}
