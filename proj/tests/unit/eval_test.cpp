#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "proda/errors.hpp"
#include "proda/eval/evaluate.hpp"
#include "proda/eval/metrics.hpp"
#include "proda/eval/report.hpp"
#include "proda/synthgen/synthgen.hpp"

namespace proda::eval {
namespace {

// Independent AP: rank of item i is the number of items ahead of it under
// (score desc, index asc), counted pairwise.
double brute_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& t) {
  double sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!t[i]) continue;
    ++pos;
    std::size_t ahead = 0, ahead_pos = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool before = s[j] > s[i] || (s[j] == s[i] && j < i);
      if (before) {
        ++ahead;
        ahead_pos += t[j];
      }
    }
    sum += static_cast<double>(ahead_pos + 1) / static_cast<double>(ahead + 1);
  }
  return sum / static_cast<double>(pos);
}

TEST(AveragePrecision, PerfectRankingIsOne) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<std::uint8_t> t{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(*average_precision(s, t), 1.0);
}

TEST(AveragePrecision, HandWorkedExample) {
  const std::vector<double> s{0.9, 0.8, 0.7};
  const std::vector<std::uint8_t> t{0, 1, 1};
  EXPECT_NEAR(*average_precision(s, t), (1.0 / 2 + 2.0 / 3) / 2, 1e-15);
  EXPECT_NEAR(*average_precision(s, t), 0.5833333333333333, 1e-12);
}

TEST(AveragePrecision, SinglePositiveLastOfN) {
  for (std::size_t n : {1u, 2u, 5u, 17u}) {
    std::vector<double> s(n);
    std::vector<std::uint8_t> t(n, 0);
    for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<double>(n - i);
    t[n - 1] = 1;
    EXPECT_NEAR(*average_precision(s, t), 1.0 / static_cast<double>(n), 1e-15);
  }
}

TEST(AveragePrecision, TiesBreakByOriginalIndex) {
  const std::vector<double> s{0.5, 0.5, 0.5};
  EXPECT_NEAR(*average_precision(s, std::vector<std::uint8_t>{1, 0, 0}), 1.0, 1e-15);
  EXPECT_NEAR(*average_precision(s, std::vector<std::uint8_t>{0, 0, 1}), 1.0 / 3, 1e-15);
}

TEST(AveragePrecision, NoPositivesIsUndefined) {
  const std::vector<double> s{0.1, 0.2};
  EXPECT_FALSE(average_precision(s, std::vector<std::uint8_t>{0, 0}).has_value());
}

TEST(AveragePrecision, LengthMismatchThrows) {
  const std::vector<double> s{0.1, 0.2};
  EXPECT_THROW(average_precision(s, std::vector<std::uint8_t>{1}), ContractError);
}

TEST(AveragePrecision, MatchesBruteForceOnRandomInputs) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<double> s(n);
    std::vector<std::uint8_t> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 7) / 7.0;  // coarse grid forces ties
      t[i] = rng() % 3 == 0;
    }
    t[rng() % n] = 1;
    EXPECT_NEAR(*average_precision(s, t), brute_ap(s, t), 1e-12);
  }
}

TEST(AveragePrecision, InvariantUnderStrictlyMonotoneTransforms) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> s(40), e(40), c(40);
    std::vector<std::uint8_t> t(40);
    for (std::size_t i = 0; i < 40; ++i) {
      s[i] = g(rng);
      t[i] = rng() % 2;
      e[i] = std::exp(3.0 * s[i]) + 2.0;
      c[i] = s[i] * s[i] * s[i];
    }
    t[0] = 1;
    const double base = *average_precision(s, t);
    EXPECT_DOUBLE_EQ(*average_precision(e, t), base);
    EXPECT_DOUBLE_EQ(*average_precision(c, t), base);
  }
}

TEST(MultilabelMap, ScoresEqualToTargetsGiveOne) {
  std::mt19937_64 rng(2);
  Targets t(30, 7);
  Scores s(30, 7);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    t.data[i] = rng() % 2;
    s.data[i] = t.data[i];
  }
  for (std::size_t c = 0; c < 7; ++c) t(0, c) = s(0, c) = 1;
  EXPECT_DOUBLE_EQ(multilabel_map(s, t).value, 1.0);
}

TEST(MultilabelMap, ClassWithoutPositivesIsSkipped) {
  Targets t(3, 3);
  Scores s(3, 3);
  t(0, 0) = 1;
  s(0, 0) = 0.9;
  t(1, 2) = 1;
  s(1, 2) = 0.1;
  s(0, 2) = 0.5;  // ranks the positive of class 2 second
  const auto r = multilabel_map(s, t);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0], 1u);
  EXPECT_FALSE(r.per_class[1].has_value());
  EXPECT_NEAR(r.value, (1.0 + 0.5) / 2, 1e-15);
}

TEST(MultilabelMap, RandomScoresApproachThePositiveRate) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u;
  const std::size_t V = 4000, C = 4;
  const double rate = 0.3;
  Scores s(V, C);
  Targets t(V, C);
  for (std::size_t i = 0; i < V * C; ++i) {
    s.data[i] = u(rng);
    t.data[i] = u(rng) < rate;
  }
  EXPECT_NEAR(multilabel_map(s, t).value, rate, 0.03);
}

TEST(Localize, RunExtraction) {
  const std::vector<double> s{0.9, 0.9, 0.1, 0.8};
  const auto segs = localize(s, 0.7);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].start, 0u);
  EXPECT_EQ(segs[0].end, 1u);
  EXPECT_NEAR(segs[0].score, 0.9, 1e-15);
  EXPECT_EQ(segs[1].start, 3u);
  EXPECT_EQ(segs[1].end, 3u);
  EXPECT_NEAR(segs[1].score, 0.8, 1e-15);
}

TEST(Localize, NothingAboveThresholdIsEmpty) {
  const std::vector<double> s{0.7, 0.2, 0.0, 0.69};
  EXPECT_TRUE(localize(s, 0.7).empty());
}

TEST(Localize, ZeroThresholdCoversTheVideo) {
  const std::vector<double> s{0.3, 0.01, 0.5, 1.0, 0.2};
  const auto segs = localize(s, 0.0);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].start, 0u);
  EXPECT_EQ(segs[0].end, 4u);
}

TEST(Localize, HigherThresholdRefinesLowerThreshold) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u;
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<double> s(12);
    for (auto& x : s) x = u(rng);
    const double lo = u(rng), hi = lo + (1.0 - lo) * u(rng);
    const auto coarse = localize(s, lo);
    for (const auto& f : localize(s, hi)) {
      bool inside = false;
      for (const auto& c : coarse) inside |= c.start <= f.start && f.end <= c.end;
      EXPECT_TRUE(inside);
    }
  }
}

TEST(Iou, InclusiveFrameArithmetic) {
  EXPECT_NEAR(iou({2, 5, 0}, {4, 7, 0}), 2.0 / 6.0, 1e-15);
  EXPECT_DOUBLE_EQ(iou({1, 3, 0}, {1, 3, 0}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 1, 0}, {2, 3, 0}), 0.0);
  EXPECT_NEAR(iou({0, 0, 0}, {0, 3, 0}), 0.25, 1e-15);
}

std::vector<LocalizationItem> random_items(std::mt19937_64& rng, std::size_t videos, std::size_t C,
                                           std::size_t N) {
  std::uniform_real_distribution<double> u;
  std::vector<LocalizationItem> items;
  auto seg = [&] {
    const std::size_t a = rng() % N, b = rng() % N;
    return Segment{std::min(a, b), std::max(a, b), u(rng)};
  };
  for (std::size_t v = 0; v < videos; ++v)
    for (std::size_t c = 0; c < C; ++c) {
      if (rng() % 2) continue;
      LocalizationItem it{v, c, {}, {}};
      for (std::size_t k = 0, n = 1 + rng() % 2; k < n; ++k) it.truth.push_back(seg());
      for (std::size_t k = 0, n = rng() % 3; k < n; ++k) it.predicted.push_back(seg());
      items.push_back(it);
    }
  return items;
}

TEST(SegmentMap, PerfectPredictionsScoreOneAtEveryThreshold) {
  std::mt19937_64 rng(4);
  auto items = random_items(rng, 30, 4, 8);
  for (auto& it : items) it.predicted = it.truth;
  for (double thr : {0.2, 0.5, 0.7, 1.0}) EXPECT_DOUBLE_EQ(segment_map(items, thr), 1.0);
}

TEST(SegmentMap, MonotoneNonIncreasingInIouThreshold) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 40; ++rep) {
    const auto items = random_items(rng, 20, 3, 8);
    double prev = 1.0;
    for (double thr : {0.1, 0.2, 0.3, 0.5, 0.7, 0.9}) {
      const double m = segment_map(items, thr);
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, prev + 1e-12);
      prev = m;
    }
  }
}

TEST(SegmentMap, HandWorkedRanking) {
  // One class, two truth segments. Ranked predictions: hit, miss, hit.
  std::vector<LocalizationItem> items{
      {0, 0, {{0, 3, 0.9}, {5, 7, 0.5}}, {{0, 3, 0}}},
      {1, 0, {{2, 4, 0.7}}, {{2, 4, 0}}},
  };
  // Order: 0.9 hit, 0.7 hit, 0.5 miss -> AP = (1 + 1) / 2.
  EXPECT_DOUBLE_EQ(segment_map(items, 0.5), 1.0);
  items[1].predicted[0].score = 0.4;
  // Order: 0.9 hit, 0.5 miss, 0.4 hit -> AP = (1 + 2/3) / 2.
  EXPECT_NEAR(segment_map(items, 0.5), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(SegmentMap, DuplicatePredictionsMatchOnce) {
  std::vector<LocalizationItem> items{{0, 0, {{1, 2, 0.9}, {1, 2, 0.8}}, {{1, 2, 0}}}};
  // Second copy is a false positive but comes after the only truth is found.
  EXPECT_DOUBLE_EQ(segment_map(items, 0.5), 1.0);
  items[0].predicted[0].score = 0.7;
  items[0].predicted.push_back({5, 6, 0.95});
  // 0.95 miss, 0.8 hit -> AP = 1/2.
  EXPECT_NEAR(segment_map(items, 0.5), 0.5, 1e-15);
}

TEST(FrameMap, PerfectFrameScoresGiveOne) {
  std::vector<FrameItem> items{{0, {0.9, 0.8, 0.1}, {1, 1, 0}}, {1, {0.2, 0.7, 0.6}, {0, 1, 1}}};
  EXPECT_DOUBLE_EQ(frame_map(items), 1.0);
}

TEST(ScaleWeights, Modes) {
  const std::vector<double> s{0.2, 0.6, 0.4};
  EXPECT_EQ(scale_weights(s, WeightScaling::kSigmoid), s);
  const auto mm = scale_weights(s, WeightScaling::kMinMax);
  EXPECT_DOUBLE_EQ(mm[0], 0.0);
  EXPECT_DOUBLE_EQ(mm[1], 1.0);
  EXPECT_NEAR(mm[2], 0.5, 1e-15);
  const auto mx = scale_weights(s, WeightScaling::kMax);
  EXPECT_NEAR(mx[0], 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(mx[1], 1.0);
  const std::vector<double> flat{0.3, 0.3};
  EXPECT_EQ(scale_weights(flat, WeightScaling::kMinMax), (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(scale_weights(flat, WeightScaling::kMax), (std::vector<double>{1.0, 1.0}));
}

// Protocol plumbing on an untrained model: shapes, ranges, grouping and
// determinism. Quality is covered by the acceptance run.
struct SmallWorld {
  synth::GenConfig gen;
  std::vector<ssg::VideoRecord> data;
  std::unique_ptr<pipeline::ProdaModel> model;

  SmallWorld() {
    gen.num_actions = 5;
    gen.max_nodes = 5;
    gen.frames = 4;
    gen.max_actions = 2;
    gen.min_duration = 1;
    gen.max_duration = 3;
    data = synth::generate_split(gen, 24, 1, "e");
    pipeline::ModelConfig m;
    m.num_actions = 5;
    m.num_object_classes = synth::object_vocabulary(gen);
    m.frames = 4;
    m.dim = 8;
    m.candidates = 2;
    model = std::make_unique<pipeline::ProdaModel>(m);
  }
};

TEST(Protocols, HeadMapsAreProbabilitiesAndDeterministic) {
  SmallWorld w;
  EvalConfig cfg;
  cfg.K = 3;
  const auto a = evaluate_heads(*w.model, w.data, cfg, true);
  const auto b = evaluate_heads(*w.model, w.data, cfg, true);
  for (double x : {a.a_u, a.a_s, a.a_t, *a.a_m}) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  EXPECT_EQ(a.a_s, b.a_s);
  EXPECT_EQ(a.a_t, b.a_t);
  EXPECT_FALSE(evaluate_heads(*w.model, w.data, cfg, false).a_m.has_value());
}

TEST(Protocols, SweepGroupsByLabelCount) {
  SmallWorld w;
  EvalConfig cfg;
  cfg.K = 3;
  for (bool injected : {false, true}) {
    const auto rows = robustness_sweep(*w.model, w.data, injected, cfg);
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(rows.back().group, "all");
    EXPECT_EQ(rows.back().videos, w.data.size());
    std::size_t grouped = 0;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
      EXPECT_EQ(rows[i].group.rfind("L=", 0), 0u);
      EXPECT_EQ(rows[i].injected, injected);
      grouped += rows[i].videos;
    }
    EXPECT_EQ(grouped, w.data.size());
    for (const auto& r : rows) {
      EXPECT_GE(r.mean, 0.0);
      EXPECT_LE(r.mean, 1.0);
      EXPECT_GE(r.stddev, 0.0);
    }
  }
}

TEST(Protocols, LocalizationGridShapeAndMonotonicity) {
  SmallWorld w;
  EvalConfig cfg;
  cfg.K = 3;
  cfg.thetas = {0.1, 0.5, 0.9};
  std::vector<FrameWeights> dump;
  const auto g = localization_grid(*w.model, w.data, true, cfg, true, &dump);
  ASSERT_EQ(g.map.size(), 3u);
  for (const auto& row : g.map) {
    ASSERT_EQ(row.size(), 3u);
    for (std::size_t j = 1; j < row.size(); ++j) EXPECT_LE(row[j], row[j - 1]);
  }
  ASSERT_TRUE(g.frame_level.has_value());
  std::size_t queries = 0;
  for (const auto& v : w.data) queries += v.annotation.label_count();
  EXPECT_EQ(dump.size(), queries);
  for (const auto& fw : dump) {
    EXPECT_EQ(fw.s.size(), 4u);
    for (double x : fw.s) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
    EXPECT_FALSE(fw.truth.empty());
  }
  MetricsReport r;
  r.localization.push_back(g);
  EXPECT_EQ(to_jsonl(r), to_jsonl(r));
  EXPECT_NE(to_table(r).find("theta"), std::string::npos);
}

}  // namespace
}  // namespace proda::eval
