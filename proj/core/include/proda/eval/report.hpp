#pragma once

#include <optional>
#include <string>
#include <vector>

#include "proda/eval/evaluate.hpp"

namespace proda::eval {

struct MetricsReport {
  std::optional<HeadMaps> heads;
  std::vector<SweepRow> robustness;
  std::vector<LocalizationGrid> localization;
};

/// One JSON object per line: {"kind":"heads",...}, {"kind":"robustness",...},
/// {"kind":"localization",...}. Doubles use the shortest round-trip form.
std::string to_jsonl(const MetricsReport& report);

/// Aligned human-readable tables (mAP in percent).
std::string to_table(const MetricsReport& report);

/// Frame-weight dump lines: {"video_id", "action", "s", "truth"}.
std::string to_jsonl(const std::vector<FrameWeights>& weights);

}  // namespace proda::eval
