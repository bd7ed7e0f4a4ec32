#include "proda/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "proda/errors.hpp"
#include "proda/spec/action_spec.hpp"

namespace proda::eval {

namespace {

using pipeline::Sample;

// stream tags for derive_seed
constexpr std::uint64_t kPairStream = 0x7061697273ULL;
constexpr std::uint64_t kFusedStream = 0x6675736564ULL;
constexpr std::uint64_t kSweepStream = 0x7377656570ULL;
constexpr std::uint64_t kLocalizeStream = 0x6c6f63616cULL;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Runs the model over `samples` in batches; `sink(out, first)` sees each batch.
template <typename Sink>
void run(const pipeline::ProdaModel& model, std::span<const Sample> samples, bool pre_head,
         std::size_t batch_size, Sink&& sink) {
  if (batch_size == 0) throw ContractError("eval: batch size must be positive");
  for (std::size_t first = 0; first < samples.size(); first += batch_size) {
    const auto n = std::min(batch_size, samples.size() - first);
    auto out = model.forward(samples.subspan(first, n), {.training = false, .pre_head = pre_head});
    sink(out, first, n);
  }
}

void copy_scores(const num::Tensor& logits, std::size_t first, std::size_t n, std::size_t cols,
                 Scores& into) {
  const auto width = logits.shape().back();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < cols; ++c) into(first + b, c) = sigmoid(logits[b * width + c]);
}

std::vector<Sample> samples_of(std::span<const ssg::VideoRecord> data,
                               const std::vector<std::vector<spec::ActionSpecPair>>& pairs,
                               std::vector<std::size_t>* video_of = nullptr) {
  std::vector<Sample> out;
  for (std::size_t v = 0; v < data.size(); ++v)
    for (const auto& p : pairs[v]) {
      out.push_back({&data[v], &p});
      if (video_of) video_of->push_back(v);
    }
  return out;
}

spec::MultiHot random_k_hot(std::size_t C, std::size_t K, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(C);
  for (std::size_t c = 0; c < C; ++c) idx[c] = c;
  std::shuffle(idx.begin(), idx.end(), rng);
  spec::MultiHot out(C, 0);
  for (std::size_t k = 0; k < K; ++k) out[idx[k]] = 1;
  return out;
}

/// a_s mAP of the samples whose index passes `keep`.
template <typename Keep>
double a_s_map(const Scores& scores, const Targets& targets, Keep&& keep) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < scores.rows; ++r)
    if (keep(r)) rows.push_back(r);
  Scores s(rows.size(), scores.cols);
  Targets t(rows.size(), scores.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < scores.cols; ++c) {
      s(i, c) = scores(rows[i], c);
      t(i, c) = targets(rows[i], c);
    }
  return multilabel_map(s, t).value;
}

}  // namespace

std::vector<double> scale_weights(std::vector<double> s, WeightScaling scaling) {
  if (scaling == WeightScaling::kSigmoid || s.empty()) return s;
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double mn = *lo, mx = *hi;
  if (scaling == WeightScaling::kMax) {
    for (auto& x : s) x = mx > 0.0 ? x / mx : 1.0;
    return s;
  }
  for (auto& x : s) x = mx > mn ? (x - mn) / (mx - mn) : 1.0;
  return s;
}

HeadMaps evaluate_heads(const pipeline::ProdaModel& model, std::span<const ssg::VideoRecord> data,
                        const EvalConfig& cfg, bool with_pre_head) {
  pipeline::check_compatible(model.config(), data);
  const auto C = model.config().num_actions;
  if (cfg.K > C) throw ContractError("evaluate_heads: K exceeds C");
  if (cfg.fused_draws == 0) throw ContractError("evaluate_heads: fused_draws must be positive");
  HeadMaps maps;

  // specified / unspecified heads over the training pair family
  std::vector<std::vector<spec::ActionSpecPair>> pairs(data.size());
  for (std::size_t v = 0; v < data.size(); ++v) {
    std::mt19937_64 rng(spec::derive_seed(cfg.seed, kPairStream, v));
    pairs[v] = spec::build_pairs(data[v].annotation.labels, cfg.K, rng).pairs;
  }
  auto samples = samples_of(data, pairs);
  Scores s_scores(samples.size(), C + 1), u_scores(samples.size(), C + 1);
  Targets s_targets(samples.size(), C + 1), u_targets(samples.size(), C + 1);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t c = 0; c <= C; ++c) {
      s_targets(i, c) = samples[i].pair->y_s[c];
      u_targets(i, c) = samples[i].pair->y_u[c];
    }
  run(model, samples, false, cfg.batch_size, [&](const pipeline::ForwardOutput& out, std::size_t first, std::size_t n) {
    copy_scores(out.a_s, first, n, C + 1, s_scores);
    copy_scores(out.a_u, first, n, C + 1, u_scores);
  });
  maps.a_s = multilabel_map(s_scores, s_targets).value;
  maps.a_u = multilabel_map(u_scores, u_targets).value;

  // fused and pre-disentanglement heads against the video labels
  Targets labels(data.size(), C);
  for (std::size_t v = 0; v < data.size(); ++v)
    for (std::size_t c = 0; c < C; ++c) labels(v, c) = data[v].annotation.labels[c];
  Scores t_scores(data.size(), C, 0.0), m_scores(data.size(), C);
  for (std::size_t d = 0; d < cfg.fused_draws; ++d) {
    std::vector<std::vector<spec::ActionSpecPair>> draws(data.size());
    for (std::size_t v = 0; v < data.size(); ++v) {
      std::mt19937_64 rng(spec::derive_seed(cfg.seed, kFusedStream + d, v));
      draws[v].push_back(spec::make_pair(random_k_hot(C, cfg.K, rng), data[v].annotation.labels, true));
    }
    auto fused = samples_of(data, draws);
    Scores draw(data.size(), C);
    const bool pre = with_pre_head && d == 0;
    run(model, fused, pre, cfg.batch_size, [&](const pipeline::ForwardOutput& out, std::size_t first, std::size_t n) {
      copy_scores(out.a_t, first, n, C, draw);
      if (pre) copy_scores(out.a_m, first, n, C, m_scores);
    });
    for (std::size_t i = 0; i < draw.data.size(); ++i)
      t_scores.data[i] += draw.data[i] / static_cast<double>(cfg.fused_draws);
  }
  maps.a_t = multilabel_map(t_scores, labels).value;
  if (with_pre_head) maps.a_m = multilabel_map(m_scores, labels).value;
  return maps;
}

std::vector<SweepRow> robustness_sweep(const pipeline::ProdaModel& model,
                                       std::span<const ssg::VideoRecord> data, bool injected,
                                       const EvalConfig& cfg) {
  pipeline::check_compatible(model.config(), data);
  if (cfg.sweep_trials == 0) throw ContractError("robustness_sweep: need at least one trial");
  const auto C = model.config().num_actions;
  std::map<std::size_t, std::size_t> group_size;
  for (const auto& r : data) ++group_size[r.annotation.label_count()];

  std::map<std::size_t, std::vector<double>> per_group;  // L -> value per trial
  std::vector<double> overall;
  for (std::size_t trial = 0; trial < cfg.sweep_trials; ++trial) {
    std::vector<std::vector<spec::ActionSpecPair>> pairs(data.size());
    for (std::size_t v = 0; v < data.size(); ++v) {
      std::mt19937_64 rng(spec::derive_seed(cfg.seed, kSweepStream + trial, v));
      const auto& truth = data[v].annotation.labels;
      pairs[v] = injected ? spec::distractor_family(truth, cfg.K, rng)
                          : spec::present_only_family(truth, rng);
    }
    std::vector<std::size_t> video_of;
    auto samples = samples_of(data, pairs, &video_of);
    Scores scores(samples.size(), C + 1);
    Targets targets(samples.size(), C + 1);
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (std::size_t c = 0; c <= C; ++c) targets(i, c) = samples[i].pair->y_s[c];
    run(model, samples, false, cfg.batch_size, [&](const pipeline::ForwardOutput& out, std::size_t first, std::size_t n) {
      copy_scores(out.a_s, first, n, C + 1, scores);
    });
    for (const auto& [L, count] : group_size) {
      per_group[L].push_back(a_s_map(scores, targets, [&](std::size_t r) {
        return data[video_of[r]].annotation.label_count() == L;
      }));
    }
    overall.push_back(multilabel_map(scores, targets).value);
  }

  auto row = [&](std::string group, std::size_t videos, const std::vector<double>& values) {
    SweepRow r{std::move(group), videos, injected, 0.0, 0.0};
    for (double x : values) r.mean += x;
    r.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double x : values) ss += (x - r.mean) * (x - r.mean);
      r.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
  };
  std::vector<SweepRow> rows;
  for (const auto& [L, values] : per_group) rows.push_back(row("L=" + std::to_string(L), group_size[L], values));
  rows.push_back(row("all", data.size(), overall));
  return rows;
}

LocalizationGrid localization_grid(const pipeline::ProdaModel& model,
                                   std::span<const ssg::VideoRecord> data, bool injected,
                                   const EvalConfig& cfg, bool frame_level,
                                   std::vector<FrameWeights>* dump) {
  pipeline::check_compatible(model.config(), data);
  const auto C = model.config().num_actions, N = model.config().frames;
  struct Query {
    std::size_t video, action;
  };
  std::vector<Query> queries;
  std::vector<std::vector<spec::ActionSpecPair>> pairs(data.size());
  for (std::size_t v = 0; v < data.size(); ++v) {
    const auto& truth = data[v].annotation.labels;
    std::vector<std::size_t> absent;
    for (std::size_t c = 0; c < C; ++c)
      if (!truth[c]) absent.push_back(c);
    for (std::size_t a = 0; a < C; ++a) {
      if (!truth[a]) continue;
      spec::MultiHot sap(C, 0);
      sap[a] = 1;
      if (injected) {
        if (cfg.K == 0 || cfg.K - 1 > absent.size()) {
          throw ContractError("localization_grid: video '" + data[v].graph.video_id +
                              "' has too few absent actions for K = " + std::to_string(cfg.K));
        }
        std::mt19937_64 rng(spec::derive_seed(cfg.seed, kLocalizeStream, v * C + a));
        auto pool = absent;
        std::shuffle(pool.begin(), pool.end(), rng);
        for (std::size_t k = 0; k + 1 < cfg.K; ++k) sap[pool[k]] = 1;
      }
      pairs[v].push_back(spec::make_pair(std::move(sap), truth, injected));
      queries.push_back({v, a});
    }
  }
  auto samples = samples_of(data, pairs);
  std::vector<std::vector<double>> weights(samples.size(), std::vector<double>(N));
  run(model, samples, false, cfg.batch_size, [&](const pipeline::ForwardOutput& out, std::size_t first, std::size_t n) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < N; ++i) weights[first + b][i] = out.frame_weights[b * N + i];
  });

  std::vector<std::vector<double>> scaled;
  for (const auto& w : weights) scaled.push_back(scale_weights(w, cfg.scaling));

  auto truth_of = [&](const Query& q) {
    std::vector<Segment> out;
    for (const auto& s : data[q.video].annotation.segments)
      if (s.action == q.action) out.push_back({s.start, s.end, 1.0});
    return out;
  };

  LocalizationGrid grid;
  grid.injected = injected;
  grid.thetas = cfg.thetas;
  grid.ious = cfg.ious;
  for (double theta : grid.thetas) {
    std::vector<LocalizationItem> items;
    for (std::size_t q = 0; q < queries.size(); ++q)
      items.push_back({queries[q].video, queries[q].action, localize(scaled[q], theta), truth_of(queries[q])});
    std::vector<double> row;
    for (double thr : grid.ious) row.push_back(segment_map(items, thr));
    grid.map.push_back(std::move(row));
  }
  if (frame_level) {
    std::vector<FrameItem> items;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      FrameItem it{queries[q].action, scaled[q], std::vector<std::uint8_t>(N, 0)};
      for (const auto& s : truth_of(queries[q]))
        for (auto i = s.start; i <= s.end; ++i) it.in_segment[i] = 1;
      items.push_back(std::move(it));
    }
    grid.frame_level = frame_map(items);
  }
  if (dump) {
    for (std::size_t q = 0; q < queries.size(); ++q) {
      FrameWeights fw{data[queries[q].video].graph.video_id, queries[q].action, weights[q], {}};
      for (const auto& s : data[queries[q].video].annotation.segments)
        if (s.action == queries[q].action) fw.truth.push_back(s);
      dump->push_back(std::move(fw));
    }
  }
  return grid;
}

}  // namespace proda::eval
