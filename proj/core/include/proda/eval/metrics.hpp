#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace proda::eval {

/// Row-major V x C score or 0/1 target matrix.
template <typename T>
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}
  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};
using Scores = Matrix<double>;
using Targets = Matrix<std::uint8_t>;

/// Mean of precision at the rank of each positive; descending score, ties
/// broken by original index. nullopt when there are no positives.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> targets);

struct MapResult {
  double value = 0.0;  // macro mean over scored classes; 0 when none
  std::vector<std::optional<double>> per_class;
  std::vector<std::size_t> skipped;  // classes without positives
};
MapResult multilabel_map(const Scores& scores, const Targets& targets);

struct Segment {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // inclusive
  double score = 0.0;
};

/// Maximal runs of frames with s > theta, scored by their mean s.
std::vector<Segment> localize(std::span<const double> s, double theta);

/// |intersection| / |union| over inclusive frame sets.
double iou(const Segment& a, const Segment& b);

/// Predicted and ground-truth segments of one (video, action).
struct LocalizationItem {
  std::size_t video = 0;
  std::size_t action = 0;
  std::vector<Segment> predicted;
  std::vector<Segment> truth;
};

/// Per class: predictions ranked by score (ties by input order) are true
/// positives when their best-IoU unmatched truth segment of the same video
/// reaches the threshold. AP divides by the number of truth segments; the
/// result is the macro mean over classes that have truth segments.
double segment_map(std::span<const LocalizationItem> items, double iou_threshold);

/// Per-frame AP: frame scores s against in-segment flags, macro over classes.
struct FrameItem {
  std::size_t action = 0;
  std::vector<double> scores;
  std::vector<std::uint8_t> in_segment;
};
double frame_map(std::span<const FrameItem> items);

}  // namespace proda::eval
