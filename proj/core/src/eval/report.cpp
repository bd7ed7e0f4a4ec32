#include "proda/eval/report.hpp"

#include <fmt/format.h>

#include <nlohmann/json.hpp>

namespace proda::eval {

namespace {

using json = nlohmann::ordered_json;

std::string pct(double x) { return fmt::format("{:6.2f}", 100.0 * x); }

}  // namespace

std::string to_jsonl(const MetricsReport& report) {
  std::string out;
  if (report.heads) {
    json j;
    j["kind"] = "heads";
    j["a_u"] = report.heads->a_u;
    j["a_s"] = report.heads->a_s;
    j["a_t"] = report.heads->a_t;
    if (report.heads->a_m) j["a_m"] = *report.heads->a_m;
    out += j.dump() + "\n";
  }
  for (const auto& r : report.robustness) {
    json j;
    j["kind"] = "robustness";
    j["injected"] = r.injected;
    j["group"] = r.group;
    j["videos"] = r.videos;
    j["mean"] = r.mean;
    j["std"] = r.stddev;
    out += j.dump() + "\n";
  }
  for (const auto& g : report.localization) {
    for (std::size_t t = 0; t < g.thetas.size(); ++t) {
      json j;
      j["kind"] = "localization";
      j["injected"] = g.injected;
      j["theta"] = g.thetas[t];
      j["iou"] = g.ious;
      j["map"] = g.map[t];
      out += j.dump() + "\n";
    }
    if (g.frame_level) {
      json j;
      j["kind"] = "frame_level";
      j["injected"] = g.injected;
      j["map"] = *g.frame_level;
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::string to_table(const MetricsReport& report) {
  std::string out;
  if (report.heads) {
    const auto& h = *report.heads;
    out += "head   mAP(%)\n";
    out += "a_u    " + pct(h.a_u) + "\n";
    out += "a_s    " + pct(h.a_s) + "\n";
    out += "a_t    " + pct(h.a_t) + "\n";
    if (h.a_m) out += "a_m    " + pct(*h.a_m) + "\n";
    out += "\n";
  }
  for (bool injected : {false, true}) {
    bool header = false;
    for (const auto& r : report.robustness) {
      if (r.injected != injected) continue;
      if (!header) {
        out += injected ? "distractor-injected SAP\n" : "non-distractor SAP\n";
        out += fmt::format("{:<8}{:>8}{:>18}\n", "labels", "videos", "a_s mAP(%)");
        header = true;
      }
      out += fmt::format("{:<8}{:>8}{:>10} +/-{:5.2f}\n", r.group, r.videos, pct(r.mean),
                         100.0 * r.stddev);
    }
    if (header) out += "\n";
  }
  for (const auto& g : report.localization) {
    out += g.injected ? "localization, distractor-injected SAP\n" : "localization, one-hot SAP\n";
    out += fmt::format("{:<8}", "theta");
    for (double iou : g.ious) out += fmt::format("{:>10}", fmt::format("IoU={:.1f}", iou));
    out += "\n";
    for (std::size_t t = 0; t < g.thetas.size(); ++t) {
      out += fmt::format("{:<8.1f}", g.thetas[t]);
      for (double x : g.map[t]) out += fmt::format("{:>10}", pct(x));
      out += "\n";
    }
    if (g.frame_level) out += "frame-level mAP " + pct(*g.frame_level) + "\n";
    out += "\n";
  }
  return out;
}

std::string to_jsonl(const std::vector<FrameWeights>& weights) {
  std::string out;
  for (const auto& w : weights) {
    json j;
    j["video_id"] = w.video_id;
    j["action"] = w.action;
    j["s"] = w.s;
    json truth = json::array();
    for (const auto& s : w.truth) truth.push_back({s.action, s.start, s.end});
    j["truth"] = truth;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace proda::eval
