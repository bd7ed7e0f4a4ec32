#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "proda/eval/evaluate.hpp"
#include "proda/pipeline/trainer.hpp"
#include "proda/synthgen/synthgen.hpp"

namespace proda::config {

/// Everything one run needs. Shared sizes (C, N, M, D) live in `gen` and are
/// copied into the model by model_config().
struct RunConfig {
  std::uint64_t seed = 7;
  synth::GenConfig gen;
  std::size_t n_train = 600;
  std::size_t n_val = 200;

  std::size_t candidates = 8;  // T
  std::size_t layers = 2;
  double momentum = 0.9;
  double eps = 1e-5;
  dpm::PromptKind prompt_kind = dpm::PromptKind::kDynamic;
  dpm::PromptWeighting prompt_weighting = dpm::PromptWeighting::kSoftmax;
  bool learned_projection = false;

  pipeline::TrainConfig train;  // stage 1
  std::size_t stage2_epochs = 5;
  double stage2_lr = 1e-3;

  eval::EvalConfig eval;
  double theta = 0.7;
  double iou = 0.5;
  bool injected = false;
  bool frame_level = false;

  RunConfig();

  pipeline::ModelConfig model_config() const;
  pipeline::TrainConfig stage1_config() const;
  pipeline::TrainConfig stage2_config() const;
};

/// Sets one key from its text value. Throws ParseError(line, key) for unknown
/// keys and malformed values.
void set(RunConfig& cfg, std::string_view key, std::string_view value, std::size_t line = 0);

/// Reads "key = value" lines; blank lines and lines starting with '#' are
/// skipped. Later keys win.
void apply_text(RunConfig& cfg, std::string_view text);
RunConfig load(const std::filesystem::path& path);

/// "key=value" per line in a fixed order; feeding it back through apply_text
/// reproduces the configuration.
std::string echo(const RunConfig& cfg);

std::vector<std::string> keys();

}  // namespace proda::config
