#include "proda/config/run_config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "proda/errors.hpp"

namespace proda::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad(std::string_view key, std::string_view value, std::size_t line,
                      const std::string& expected) {
  throw ParseError(line, std::string(key), "'" + std::string(value) + "' is not " + expected);
}

template <typename T>
T parse_int(std::string_view key, std::string_view v, std::size_t line) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, line, "a non-negative integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v, std::size_t line) {
  // from_chars for double is available in libstdc++ 11
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad(key, v, line, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v, std::size_t line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(key, v, line, "true or false");
}

struct Entry {
  const char* name;
  std::function<void(RunConfig&, std::string_view, std::size_t)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_KEY(key, field)                                                                   \
  Entry {                                                                                      \
    key, [](RunConfig& c, std::string_view v, std::size_t l) { c.field = parse_int<std::size_t>(key, v, l); }, \
        [](const RunConfig& c) { return fmt::format("{}", c.field); }                          \
  }
#define DOUBLE_KEY(key, field)                                                                 \
  Entry {                                                                                      \
    key, [](RunConfig& c, std::string_view v, std::size_t l) { c.field = parse_double(key, v, l); }, \
        [](const RunConfig& c) { return fmt::format("{}", c.field); }                          \
  }
#define BOOL_KEY(key, field)                                                                   \
  Entry {                                                                                      \
    key, [](RunConfig& c, std::string_view v, std::size_t l) { c.field = parse_bool(key, v, l); }, \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }             \
  }

const std::vector<Entry>& table() {
  static const std::vector<Entry> entries = {
      {"seed", [](RunConfig& c, std::string_view v, std::size_t l) { c.seed = parse_int<std::uint64_t>("seed", v, l); },
       [](const RunConfig& c) { return fmt::format("{}", c.seed); }},
      // data
      SIZE_KEY("num_actions", gen.num_actions),
      SIZE_KEY("frames", gen.frames),
      SIZE_KEY("max_nodes", gen.max_nodes),
      SIZE_KEY("dim", gen.dim),
      SIZE_KEY("min_actions", gen.min_actions),
      SIZE_KEY("max_actions", gen.max_actions),
      SIZE_KEY("min_duration", gen.min_duration),
      SIZE_KEY("max_duration", gen.max_duration),
      DOUBLE_KEY("relation_noise", gen.relation_noise),
      DOUBLE_KEY("feature_noise", gen.feature_noise),
      SIZE_KEY("n_train", n_train),
      SIZE_KEY("n_val", n_val),
      // model
      SIZE_KEY("candidates", candidates),
      SIZE_KEY("layers", layers),
      DOUBLE_KEY("momentum", momentum),
      DOUBLE_KEY("eps", eps),
      {"prompt",
       [](RunConfig& c, std::string_view v, std::size_t l) {
         if (v == "dynamic") c.prompt_kind = dpm::PromptKind::kDynamic;
         else if (v == "simple") c.prompt_kind = dpm::PromptKind::kSimple;
         else bad("prompt", v, l, "dynamic or simple");
       },
       [](const RunConfig& c) { return std::string(c.prompt_kind == dpm::PromptKind::kDynamic ? "dynamic" : "simple"); }},
      {"prompt_weighting",
       [](RunConfig& c, std::string_view v, std::size_t l) {
         if (v == "softmax") c.prompt_weighting = dpm::PromptWeighting::kSoftmax;
         else if (v == "sigmoid") c.prompt_weighting = dpm::PromptWeighting::kSigmoid;
         else bad("prompt_weighting", v, l, "softmax or sigmoid");
       },
       [](const RunConfig& c) {
         return std::string(c.prompt_weighting == dpm::PromptWeighting::kSoftmax ? "softmax" : "sigmoid");
       }},
      BOOL_KEY("learned_projection", learned_projection),
      // training
      SIZE_KEY("epochs", train.epochs),
      SIZE_KEY("batch_size", train.batch_size),
      DOUBLE_KEY("lr", train.learning_rate),
      SIZE_KEY("K", train.K),
      DOUBLE_KEY("lambda_u", train.weights.lambda_u),
      DOUBLE_KEY("lambda_s", train.weights.lambda_s),
      DOUBLE_KEY("lambda_t", train.weights.lambda_t),
      DOUBLE_KEY("lambda_dis", train.weights.lambda_dis),
      DOUBLE_KEY("m1", train.weights.m1),
      DOUBLE_KEY("m2", train.weights.m2),
      SIZE_KEY("stage2_epochs", stage2_epochs),
      DOUBLE_KEY("stage2_lr", stage2_lr),
      BOOL_KEY("reinit_heads", train.reinit_heads),
      // evaluation
      SIZE_KEY("eval_K", eval.K),
      SIZE_KEY("fused_draws", eval.fused_draws),
      SIZE_KEY("sweep_trials", eval.sweep_trials),
      {"weight_scaling",
       [](RunConfig& c, std::string_view v, std::size_t l) {
         if (v == "minmax") c.eval.scaling = eval::WeightScaling::kMinMax;
         else if (v == "max") c.eval.scaling = eval::WeightScaling::kMax;
         else if (v == "sigmoid") c.eval.scaling = eval::WeightScaling::kSigmoid;
         else bad("weight_scaling", v, l, "minmax, max or sigmoid");
       },
       [](const RunConfig& c) {
         switch (c.eval.scaling) {
           case eval::WeightScaling::kMinMax: return std::string("minmax");
           case eval::WeightScaling::kMax: return std::string("max");
           case eval::WeightScaling::kSigmoid: break;
         }
         return std::string("sigmoid");
       }},
      DOUBLE_KEY("theta", theta),
      DOUBLE_KEY("iou", iou),
      BOOL_KEY("injected", injected),
      BOOL_KEY("frame_level", frame_level),
  };
  return entries;
}

#undef SIZE_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY

}  // namespace

RunConfig::RunConfig() {
  train.epochs = 30;
  train.K = 3;
  eval.K = 3;
}

pipeline::ModelConfig RunConfig::model_config() const {
  pipeline::ModelConfig m;
  m.num_actions = gen.num_actions;
  m.num_object_classes = synth::object_vocabulary(gen);
  m.num_relation_types = synth::kRelationTypes;
  m.frames = gen.frames;
  m.dim = gen.dim;
  m.candidates = candidates;
  m.layers = layers;
  m.momentum = momentum;
  m.eps = eps;
  m.prompt_kind = prompt_kind;
  m.prompt_weighting = prompt_weighting;
  m.learned_projection = learned_projection;
  m.init_seed = seed;
  return m;
}

pipeline::TrainConfig RunConfig::stage1_config() const {
  auto t = train;
  t.seed = seed;
  return t;
}

pipeline::TrainConfig RunConfig::stage2_config() const {
  auto t = stage1_config();
  t.epochs = stage2_epochs;
  t.learning_rate = stage2_lr;
  return t;
}

void set(RunConfig& cfg, std::string_view key, std::string_view value, std::size_t line) {
  for (const auto& e : table()) {
    if (key == e.name) {
      e.set(cfg, trim(value), line);
      return;
    }
  }
  throw ParseError(line, std::string(key), "unknown key");
}

void apply_text(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "", "expected key=value");
    set(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
  }
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig cfg;
  apply_text(cfg, text.str());
  return cfg;
}

std::string echo(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : table()) out += std::string(e.name) + "=" + e.get(cfg) + "\n";
  return out;
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& e : table()) out.emplace_back(e.name);
  return out;
}

}  // namespace proda::config
