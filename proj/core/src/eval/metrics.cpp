#include "proda/eval/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "proda/errors.hpp"

namespace proda::eval {

namespace {

std::vector<std::size_t> rank_desc(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> targets) {
  if (scores.size() != targets.size()) {
    throw ContractError("average_precision: " + std::to_string(scores.size()) + " scores, " +
                        std::to_string(targets.size()) + " targets");
  }
  std::size_t positives = 0, seen = 0;
  double sum = 0.0;
  const auto order = rank_desc(scores);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!targets[order[r]]) continue;
    ++seen;
    sum += static_cast<double>(seen) / static_cast<double>(r + 1);
  }
  positives = seen;
  if (positives == 0) return std::nullopt;
  return sum / static_cast<double>(positives);
}

MapResult multilabel_map(const Scores& scores, const Targets& targets) {
  if (scores.rows != targets.rows || scores.cols != targets.cols) {
    throw ContractError("multilabel_map: score and target shapes differ");
  }
  MapResult out;
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> col(scores.rows);
  std::vector<std::uint8_t> tcol(scores.rows);
  for (std::size_t c = 0; c < scores.cols; ++c) {
    for (std::size_t r = 0; r < scores.rows; ++r) {
      col[r] = scores(r, c);
      tcol[r] = targets(r, c);
    }
    auto ap = average_precision(col, tcol);
    out.per_class.push_back(ap);
    if (ap) {
      sum += *ap;
      ++used;
    } else {
      out.skipped.push_back(c);
    }
  }
  out.value = used ? sum / static_cast<double>(used) : 0.0;
  return out;
}

std::vector<Segment> localize(std::span<const double> s, double theta) {
  std::vector<Segment> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!(s[i] > theta)) {
      ++i;
      continue;
    }
    Segment seg{i, i, 0.0};
    double sum = s[i];
    while (seg.end + 1 < s.size() && s[seg.end + 1] > theta) sum += s[++seg.end];
    seg.score = sum / static_cast<double>(seg.end - seg.start + 1);
    out.push_back(seg);
    i = seg.end + 1;
  }
  return out;
}

double iou(const Segment& a, const Segment& b) {
  const auto lo = std::max(a.start, b.start), hi = std::min(a.end, b.end);
  const double inter = hi >= lo ? static_cast<double>(hi - lo + 1) : 0.0;
  const double uni = static_cast<double>(a.end - a.start + 1) +
                     static_cast<double>(b.end - b.start + 1) - inter;
  return inter / uni;
}

double segment_map(std::span<const LocalizationItem> items, double iou_threshold) {
  struct Pred {
    std::size_t item;
    Segment seg;
  };
  std::map<std::size_t, std::vector<Pred>> preds;
  std::map<std::size_t, std::size_t> truth_count;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto& it = items[k];
    truth_count[it.action] += it.truth.size();
    for (const auto& p : it.predicted) preds[it.action].push_back({k, p});
  }
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& [action, n_truth] : truth_count) {
    if (n_truth == 0) continue;
    auto& list = preds[action];
    std::stable_sort(list.begin(), list.end(),
                     [](const Pred& a, const Pred& b) { return a.seg.score > b.seg.score; });
    // truths of one video may be split over several items of the same action
    std::map<std::size_t, std::vector<std::pair<const Segment*, bool>>> truths;  // by video
    for (const auto& it : items)
      if (it.action == action)
        for (const auto& t : it.truth) truths[it.video].push_back({&t, false});
    std::size_t tp = 0;
    double ap = 0.0;
    for (std::size_t r = 0; r < list.size(); ++r) {
      auto& candidates = truths[items[list[r].item].video];
      double best = -1.0;
      std::pair<const Segment*, bool>* best_truth = nullptr;
      for (auto& t : candidates) {
        if (t.second) continue;
        const auto v = iou(list[r].seg, *t.first);
        if (v > best) {
          best = v;
          best_truth = &t;
        }
      }
      if (best_truth && best >= iou_threshold) {
        best_truth->second = true;
        ++tp;
        ap += static_cast<double>(tp) / static_cast<double>(r + 1);
      }
    }
    sum += ap / static_cast<double>(n_truth);
    ++used;
  }
  return used ? sum / static_cast<double>(used) : 0.0;
}

double frame_map(std::span<const FrameItem> items) {
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<std::uint8_t>>> per_class;
  for (const auto& it : items) {
    if (it.scores.size() != it.in_segment.size()) throw ContractError("frame_map: length mismatch");
    auto& [s, t] = per_class[it.action];
    s.insert(s.end(), it.scores.begin(), it.scores.end());
    t.insert(t.end(), it.in_segment.begin(), it.in_segment.end());
  }
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& [action, st] : per_class) {
    if (auto ap = average_precision(st.first, st.second)) {
      sum += *ap;
      ++used;
    }
  }
  return used ? sum / static_cast<double>(used) : 0.0;
}

}  // namespace proda::eval
