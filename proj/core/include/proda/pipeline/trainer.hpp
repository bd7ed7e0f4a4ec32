#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "proda/objective/losses.hpp"
#include "proda/pipeline/model.hpp"

namespace proda::pipeline {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::size_t K = 16;  // distractor-injected spec size
  objective::LossWeights weights;
  bool reinit_heads = false;  // stage 2: start the heads from a fresh draw
  /// Checkpoint, manifest and metrics log go here; nothing is written when empty.
  std::filesystem::path out_dir;
  /// Written verbatim at the top of the manifest.
  std::string config_echo;
  /// Called after every epoch (progress reporting).
  std::function<void(const struct EpochRecord&)> on_epoch;
};

struct EpochRecord {
  int stage = 1;
  std::size_t epoch = 0;  // 1-based
  std::size_t samples = 0;
  std::size_t batches = 0;
  objective::LossBreakdown loss;  // means over batches
  double l_bce_m = 0.0;           // stage 2 only
  double seconds = 0.0;           // wall time, never written to files
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::filesystem::path checkpoint;
  /// Stage 2: largest gradient norm seen on any non-head parameter.
  double frozen_grad_norm = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pairs for one epoch: video v contributes build_pairs(labels, K) drawn from
/// a seed derived from (seed, epoch, v); samples are then shuffled with a seed
/// derived from (seed, epoch).
struct EpochPlan {
  std::vector<std::vector<spec::ActionSpecPair>> pairs;  // per video
  std::vector<Sample> samples;
};
EpochPlan plan_epoch(std::span<const ssg::VideoRecord> data, std::size_t K, std::uint64_t seed,
                     std::size_t epoch);

/// Scalar losses for one batch.
struct BatchLoss {
  objective::TotalLoss total;
  num::Tensor bce_m;  // stage 2 only
};
BatchLoss stage1_loss(const ForwardOutput& out, std::span<const Sample> batch,
                      const objective::LossWeights& weights);
BatchLoss stage2_loss(const ForwardOutput& out, std::span<const Sample> batch,
                      const objective::LossWeights& weights);

/// End-to-end training of every parameter on the weighted objective.
TrainResult train_stage1(ProdaModel& model, std::span<const ssg::VideoRecord> data,
                         const TrainConfig& config);

/// Classifier heads only (including the pre-disentanglement head) with BCE;
/// the backbone is frozen and runs with its stored normalization statistics.
TrainResult train_stage2(ProdaModel& model, std::span<const ssg::VideoRecord> data,
                         const TrainConfig& config);

/// Mean losses over one planned epoch without updating anything.
EpochRecord measure_epoch(const ProdaModel& model, std::span<const ssg::VideoRecord> data,
                          const TrainConfig& config, int stage, std::size_t epoch);

}  // namespace proda::pipeline
