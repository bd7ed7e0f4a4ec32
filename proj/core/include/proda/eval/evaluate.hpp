#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "proda/eval/metrics.hpp"
#include "proda/pipeline/model.hpp"

namespace proda::eval {

/// How frame weights are scaled before thresholding at theta.
enum class WeightScaling {
  kSigmoid,  // raw s
  kMinMax,   // (s - min) / (max - min) per query; constant s maps to 1
  kMax,      // s / max per query
};

struct EvalConfig {
  std::size_t K = 3;              // distractor-injected SAP size
  std::uint64_t seed = 11;
  std::size_t fused_draws = 4;    // random SAPs averaged for a_t
  std::size_t sweep_trials = 3;
  std::size_t batch_size = 32;
  WeightScaling scaling = WeightScaling::kMax;
  std::vector<double> thetas{0.2, 0.5, 0.7};  // localization grid rows
  std::vector<double> ious{0.2, 0.5, 0.7};    // and columns
};

/// Applies `scaling` to one query's frame weights.
std::vector<double> scale_weights(std::vector<double> s, WeightScaling scaling);

/// Per-head mAP on a dataset. a_s and a_u score every pair of the training
/// family against y_s / y_u over C+1 columns; a_t and a_m score the video
/// labels (a_t averaged over truth-independent random K-hot SAPs).
struct HeadMaps {
  double a_u = 0.0, a_s = 0.0, a_t = 0.0;
  std::optional<double> a_m;  // only when asked for
};
HeadMaps evaluate_heads(const pipeline::ProdaModel& model, std::span<const ssg::VideoRecord> data,
                        const EvalConfig& cfg, bool with_pre_head);

/// a_s mAP of videos grouped by label count. Non-distractor SAPs hold i = 1..L
/// present labels; distractor-injected ones hold i = 0..L present labels
/// padded to K with absent ones. Mean and std over trials with fresh SAPs.
struct SweepRow {
  std::string group;  // "L=1", ..., "all"
  std::size_t videos = 0;
  bool injected = false;
  double mean = 0.0, stddev = 0.0;
};
std::vector<SweepRow> robustness_sweep(const pipeline::ProdaModel& model,
                                       std::span<const ssg::VideoRecord> data, bool injected,
                                       const EvalConfig& cfg);

/// Segment mAP over theta x IoU. Every ground-truth action of every video is
/// queried through the specified branch with a one-hot SAP, or with that
/// action plus K-1 absent ones when injected; scaled frame weights above
/// theta form the predicted segments.
struct LocalizationGrid {
  bool injected = false;
  std::vector<double> thetas, ious;
  std::vector<std::vector<double>> map;  // [theta][iou]
  std::optional<double> frame_level;     // per-frame AP variant
};

/// Frame weights of one query, for dumps.
struct FrameWeights {
  std::string video_id;
  std::size_t action = 0;
  std::vector<double> s;
  std::vector<ssg::ActionSegment> truth;
};

LocalizationGrid localization_grid(const pipeline::ProdaModel& model,
                                   std::span<const ssg::VideoRecord> data, bool injected,
                                   const EvalConfig& cfg, bool frame_level = false,
                                   std::vector<FrameWeights>* dump = nullptr);

}  // namespace proda::eval
