#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "proda/errors.hpp"
#include "proda/numerics/grad_check.hpp"
#include "proda/vgpnn/vgpnn.hpp"
#include "test_support.hpp"

namespace {

using namespace proda;
using num::Tensor;

void set(Tensor& t, std::vector<double> values) {
  auto d = t.mutable_data();
  ASSERT_EQ(d.size(), values.size());
  std::copy(values.begin(), values.end(), d.begin());
}

void zero(Tensor& t) {
  for (auto& v : t.mutable_data()) v = 0.0;
}

ssg::SceneGraphSequence graph(std::size_t N, std::size_t M, num::Mask mask,
                              std::vector<ssg::Relation> relations, std::size_t types = 2) {
  ssg::SceneGraphSequence g;
  g.video_id = "g";
  g.num_frames = N;
  g.max_nodes = M;
  g.num_object_classes = 3;
  g.num_relation_types = types;
  g.node_mask = std::move(mask);
  for (auto m : g.node_mask) g.node_class.push_back(m ? 1 : 0);
  std::sort(relations.begin(), relations.end());
  g.relations = std::move(relations);
  ssg::validate(g);
  return g;
}

vgpnn::EdgeFeatures edges_of(const ssg::SceneGraphSequence& g, const Tensor& table) {
  const ssg::SceneGraphSequence* one[] = {&g};
  return vgpnn::build_edges(one, table);
}

Tensor masked_random(const num::Shape& shape, const num::Mask& mask, std::mt19937_64& rng,
                     double scale = 1.0) {
  const auto D = shape.back();
  auto x = num::scale(fixtures::random_const({mask.size(), D}, rng), scale);
  return num::reshape(num::mul(x, num::mask_column(mask)), shape);
}

// ---------------------------------------------------------------------------

TEST(Edges, SumOfRelationEmbeddingsAndDenseLayout) {
  auto g = graph(2, 3, {1, 1, 1, 1, 1, 0},
                 {{0, 0, 1, 0}, {0, 0, 1, 1}, {1, 1, 0, 1}, {0, 2, 2, 0}});
  auto table = Tensor::from({2, 2}, {1, 10, 100, 1000});
  auto e = edges_of(g, table);
  ASSERT_EQ(e.active(), 2u);  // (0 -> 1) and (1 -> 0); the self-loop is skipped
  auto dense = e.dense();
  ASSERT_EQ(dense.shape(), (num::Shape{1, 2, 9, 2}));
  auto mask = e.dense_mask();
  // frame 0, pair 0 -> 1 carries both types
  EXPECT_EQ(dense[(0 * 9 + 1) * 2], 101.0);
  EXPECT_EQ(dense[(0 * 9 + 1) * 2 + 1], 1010.0);
  EXPECT_EQ(mask[0 * 9 + 1], 1);
  // frame 1, pair 1 -> 0 carries type 1 only
  EXPECT_EQ(dense[(1 * 9 + 3) * 2], 100.0);
  EXPECT_EQ(mask[1 * 9 + 3], 1);
  // frame 1, pair 0 -> 1 is masked and zero
  EXPECT_EQ(dense[(1 * 9 + 1) * 2], 0.0);
  EXPECT_EQ(mask[1 * 9 + 1], 0);
  std::size_t on = std::count(mask.begin(), mask.end(), 1);
  EXPECT_EQ(on, 2u);
}

TEST(Link, SingleFrameIsValueProjectionPlusResidual) {
  num::ParameterStore store;
  num::Initializer init(1);
  auto table = store.add("table", init.uniform({2, 3}, 1.0));
  vgpnn::LinkStep link(store, "link", 3, init);
  auto e = edges_of(graph(1, 2, {1, 1}, {{0, 0, 1, 1}}), table);
  auto out = link(e);
  auto expected = num::add(e.values, num::matmul(e.values, link.w_v));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out.values[i], expected[i], 1e-14);
}

TEST(Link, ConstantSequenceStaysConstant) {
  num::ParameterStore store;
  num::Initializer init(2);
  auto table = store.add("table", init.uniform({2, 3}, 1.0));
  vgpnn::LinkStep link(store, "link", 3, init);
  auto e = edges_of(graph(4, 2, num::Mask(8, 1), {{0, 0, 1, 0}, {1, 0, 1, 0}, {2, 0, 1, 0}, {3, 0, 1, 0}}),
                    table);
  auto out = link(e);
  for (std::size_t n = 1; n < 4; ++n)
    for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(out.values[n * 3 + d], out.values[d], 1e-14);
}

TEST(Link, ZeroProjectionsPassEdgesThrough) {
  num::ParameterStore store;
  num::Initializer init(3);
  auto table = store.add("table", init.uniform({2, 3}, 1.0));
  vgpnn::LinkStep link(store, "link", 3, init);
  zero(link.w_q);
  zero(link.w_k);
  zero(link.w_v);
  auto e = edges_of(graph(3, 2, num::Mask(6, 1), {{0, 0, 1, 0}, {2, 0, 1, 1}}), table);
  auto out = link(e);
  for (std::size_t i = 0; i < e.values.size(); ++i) EXPECT_EQ(out.values[i], e.values[i]);
  // masked middle frame stays zero
  for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(out.values[3 + d], 0.0);
}

TEST(Link, PairsAreProcessedIndependently) {
  num::ParameterStore store;
  num::Initializer init(4);
  auto table = store.add("table", init.uniform({2, 3}, 1.0));
  vgpnn::LinkStep link(store, "link", 3, init);
  auto e = edges_of(graph(3, 3, num::Mask(9, 1),
                          {{0, 0, 1, 0}, {1, 0, 1, 1}, {0, 2, 1, 1}, {2, 2, 1, 0}, {1, 1, 2, 0}}),
                    table);
  ASSERT_EQ(e.active(), 3u);
  // relabel pairs by reversing their order
  auto r = e;
  std::reverse(r.pairs.begin(), r.pairs.end());
  std::vector<std::size_t> order{2, 1, 0};
  std::vector<std::size_t> rows;
  num::Mask m;
  for (auto a : order)
    for (std::size_t n = 0; n < 3; ++n) {
      rows.push_back(a * 3 + n);
      m.push_back(e.mask[a * 3 + n]);
    }
  r.values = num::reshape(num::gather_rows(num::reshape(e.values, {9, 3}), rows), {3, 3, 3});
  r.mask = m;
  auto a = link(e), b = link(r);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(b.values[i * 3 + d], a.values[rows[i] * 3 + d], 1e-14);
}

// ---------------------------------------------------------------------------

struct MessageFixture {
  num::ParameterStore store;
  num::Initializer init{7};
  Tensor table = store.add("table", Tensor::from({2, 1}, {3, 5}));
  vgpnn::MessageStep step{store, "msg", 2, 1, init};

  MessageFixture() {
    set(step.node_proj.weight, {1, 0, 0, 1});
    set(step.edge_proj.weight, {1, -1});
    set(step.edge_proj.bias, {0.5, 0.5});
    zero(step.gate.first.weight);
    zero(step.gate.second.weight);
  }
};

TEST(Message, HandComputedWithNeutralGate) {
  MessageFixture fx;
  auto g = graph(1, 2, {1, 1}, {{0, 0, 1, 0}});
  auto nodes = Tensor::from({1, 1, 2, 2}, {1, 2, 7, 7});
  auto msg = fx.step(nodes, edges_of(g, fx.table));
  // m = f_0 + e W_e + b = [1 + 3 + 0.5, 2 - 3 + 0.5]; gate 0.5
  EXPECT_DOUBLE_EQ(msg[2], 2.25);
  EXPECT_DOUBLE_EQ(msg[3], -0.25);
  // node 0 has no incoming edge
  EXPECT_EQ(msg[0], 0.0);
  EXPECT_EQ(msg[1], 0.0);
}

TEST(Message, TwoIdenticalEdgesDoubleTheMessage) {
  MessageFixture fx;
  auto one = graph(1, 3, {1, 1, 1}, {{0, 0, 2, 0}});
  auto two = graph(1, 3, {1, 1, 1}, {{0, 0, 2, 0}, {0, 1, 2, 0}});
  auto nodes = Tensor::from({1, 1, 3, 2}, {1, 2, 1, 2, 4, 4});
  auto a = fx.step(nodes, edges_of(one, fx.table));
  auto b = fx.step(nodes, edges_of(two, fx.table));
  EXPECT_DOUBLE_EQ(b[4], 2 * a[4]);
  EXPECT_DOUBLE_EQ(b[5], 2 * a[5]);
}

TEST(Message, AggregationIsAdditiveOverEdgeSets) {
  num::ParameterStore store;
  num::Initializer init(12);
  auto table = store.add("table", init.uniform({2, 3}, 1.0));
  vgpnn::MessageStep step(store, "msg", 4, 3, init);
  std::mt19937_64 rng(5);
  const num::Mask mask(2 * 3, 1);
  auto nodes = masked_random({1, 2, 3, 4}, mask, rng);
  std::vector<ssg::Relation> left{{0, 0, 1, 0}, {1, 2, 1, 1}}, right{{0, 2, 1, 1}, {1, 0, 2, 0}};
  auto all = left;
  all.insert(all.end(), right.begin(), right.end());
  auto a = step(nodes, edges_of(graph(2, 3, mask, left), table));
  auto b = step(nodes, edges_of(graph(2, 3, mask, right), table));
  auto c = step(nodes, edges_of(graph(2, 3, mask, all), table));
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], a[i] + b[i], 1e-14);
}

TEST(Message, StackedCopiesReadTheirOwnVideo) {
  num::ParameterStore store;
  num::Initializer init(13);
  auto table = store.add("table", init.uniform({2, 3}, 1.0));
  vgpnn::MessageStep step(store, "msg", 4, 3, init);
  std::mt19937_64 rng(6);
  auto g = graph(2, 2, num::Mask(4, 1), {{0, 0, 1, 0}, {1, 1, 0, 1}});
  auto nodes = masked_random({1, 2, 2, 4}, num::Mask(4, 1), rng);
  auto e = edges_of(g, table);
  auto single = step(nodes, e);
  auto stacked = step(num::concat_rows(nodes, nodes), e);
  for (std::size_t i = 0; i < single.size(); ++i) {
    EXPECT_EQ(stacked[i], single[i]);
    EXPECT_EQ(stacked[single.size() + i], single[i]);
  }
}

// ---------------------------------------------------------------------------

TEST(Update, IdentityAtInitWithZeroMessages) {
  num::ParameterStore store;
  num::Initializer init(1);
  vgpnn::UpdateStep step(store, "upd", 3, init);
  std::mt19937_64 rng(1);
  num::Mask mask{1, 0, 1, 1};
  auto f = masked_random({1, 2, 2, 3}, mask, rng);
  auto out = step(f, Tensor::zeros(f.shape()), mask);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out[i], f[i]);
}

TEST(Update, HandSetWeights) {
  num::ParameterStore store;
  num::Initializer init(1);
  vgpnn::UpdateStep step(store, "upd", 2, init);
  // hidden = [relu(u_0), relu(-f_0)], added to u
  set(step.fuse.body.first.weight, {1, 0, 0, 0, 0, -1, 0, 0});
  set(step.fuse.body.second.weight, {1, 0, 0, 1});
  num::Mask mask{1, 1, 1, 0};
  auto f = Tensor::from({2, 2, 2}, {1, -2, 0.5, 3, -1, 1, 0, 0});
  auto msg = Tensor::from({2, 2, 2}, {0.5, 0.5, -1, 0, 2, -3, 9, 9});
  auto out = step(f, msg, mask);
  const double expected[] = {3.0, -1.5, -0.5, 3.0, 2.0, -1.0, 0.0, 0.0};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(out[i], expected[i]) << i;
}

// ---------------------------------------------------------------------------

TEST(VGNorm, MomentumArithmetic) {
  num::ParameterStore store;
  vgpnn::VGNorm norm(store, "norm", 2, 0.9, 1e-5);
  auto x = Tensor::full({1, 2, 2, 2}, 1.0);
  auto r = norm(x, num::Mask(4, 1), true);
  ASSERT_EQ(r.mu_g.size(), 2u);
  EXPECT_NEAR(r.mu_g[0], 0.1, 1e-15);
  EXPECT_NEAR(r.mu_g[1], 0.1, 1e-15);
  EXPECT_EQ(r.batch_mean[0], 1.0);
  // nothing is stored until commit
  EXPECT_EQ(norm.running_mean()[0], 0.0);
  norm.commit(r.mu_g);
  EXPECT_NEAR(norm.running_mean()[1], 0.1, 1e-15);
  auto e = norm(x, num::Mask(4, 1), false);
  EXPECT_EQ(e.mu_g[1], norm.running_mean()[1]);
}

TEST(VGNorm, ConstantInputAtCentreGivesBeta) {
  num::ParameterStore store;
  vgpnn::VGNorm norm(store, "norm", 2, 0.9, 1e-5);
  set(norm.alpha, {2.0, 0.5});
  set(norm.beta, {0.25, -1.0});
  norm.commit(std::vector<double>{1.5, 4.0});
  // alpha_n * mu_g_n = 3 and 2
  auto x = Tensor::from({1, 2, 1, 2}, {3, 3, 2, 2});
  auto out = norm(x, num::Mask(2, 1), false).values;
  EXPECT_EQ(out[0], 0.25);
  EXPECT_EQ(out[1], 0.25);
  EXPECT_EQ(out[2], -1.0);
  EXPECT_EQ(out[3], -1.0);
}

TEST(VGNorm, NormalizedStatistics) {
  std::mt19937_64 rng(31);
  const std::size_t N = 3, M = 4, D = 5;
  num::Mask mask(N * M, 1);
  mask[2] = 0;
  mask[7] = 0;
  auto x = masked_random({1, N, M, D}, mask, rng, 10.0);
  // frame means of the batch
  std::vector<double> mu(N, 0.0);
  std::vector<double> cnt(N, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t j = 0; j < M; ++j)
      if (mask[n * M + j])
        for (std::size_t d = 0; d < D; ++d) {
          mu[n] += x[(n * M + j) * D + d];
          cnt[n] += 1;
        }
  for (std::size_t n = 0; n < N; ++n) mu[n] /= cnt[n];
  num::ParameterStore store;
  vgpnn::VGNorm norm(store, "norm", N, 0.9, 1e-5);
  norm.commit(mu);
  auto out = norm(x, mask, false).values;
  for (std::size_t n = 0; n < N; ++n) {
    double in_ss = 0.0, s = 0.0, ss = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      if (!mask[n * M + j]) {
        for (std::size_t d = 0; d < D; ++d) EXPECT_EQ(out[(n * M + j) * D + d], 0.0);
        continue;
      }
      for (std::size_t d = 0; d < D; ++d) {
        const auto i = (n * M + j) * D + d;
        in_ss += (x[i] - mu[n]) * (x[i] - mu[n]);
        s += out[i];
      }
    }
    const double mean = s / cnt[n];
    for (std::size_t j = 0; j < M; ++j)
      if (mask[n * M + j])
        for (std::size_t d = 0; d < D; ++d) ss += std::pow(out[(n * M + j) * D + d] - mean, 2);
    const double sigma2 = in_ss / (cnt[n] - 1);
    const double var = ss / (cnt[n] - 1);
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(var, sigma2 / (sigma2 + 1e-5), 1e-10);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(VGNorm, ShiftInvariantWhenTrackingBatchMean) {
  std::mt19937_64 rng(8);
  num::Mask mask{1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1};
  auto x = masked_random({2, 2, 3, 4}, mask, rng);
  num::ParameterStore store;
  vgpnn::VGNorm norm(store, "norm", 2, 0.0, 1e-5);
  set(norm.gamma, {1.7, 0.4});
  set(norm.beta, {0.2, -0.3});
  auto shifted = num::reshape(num::mul(num::add_scalar(num::reshape(x, {12, 4}), 42.0),
                                       num::mask_column(mask)),
                              x.shape());
  auto a = norm(x, mask, true).values;
  auto b = norm(shifted, mask, true).values;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-8);
}

TEST(VGNorm, TooFewSamplesIsAnError) {
  num::ParameterStore store;
  vgpnn::VGNorm norm(store, "norm", 1, 0.9, 1e-5);
  auto x = Tensor::from({1, 1, 2, 1}, {1, 0});
  EXPECT_THROW(norm(x, num::Mask{1, 0}, true), ContractError);
  EXPECT_NO_THROW(norm(x, num::Mask{1, 1}, true));
}

TEST(VGNorm, GradientsMatchCentralDifferences) {
  for (bool training : {true, false}) {
    num::ParameterStore store;
    num::Initializer init(3);
    std::mt19937_64 rng(17);
    num::Mask mask{1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1};
    auto x = store.add("x", masked_random({2, 2, 3, 3}, mask, rng));
    vgpnn::VGNorm norm(store, "norm", 2, 0.7, 1e-5);
    set(norm.alpha, {0.8, 1.3});
    set(norm.gamma, {1.1, 0.9});
    set(norm.beta, {0.1, -0.2});
    norm.commit(std::vector<double>{0.3, -0.2});
    auto report = num::grad_check(
        [&] {
          auto xm = num::reshape(num::mul(num::reshape(x, {12, 3}), num::mask_column(mask)), x.shape());
          return fixtures::project(norm(xm, mask, training).values, 5);
        },
        store, 1e-5, 1e-5);
    EXPECT_TRUE(report.pass) << "training=" << training << " " << report.params.front().name << " "
                             << report.max_rel_error;
  }
}

// ---------------------------------------------------------------------------

TEST(Readout, SingleNodePerFrame) {
  num::ParameterStore store;
  num::Initializer init(2);
  vgpnn::Readout readout(store, "ro", 2, 4, init);
  auto x = Tensor::from({2, 2, 2}, {1, 2, 0, 0, 0, 0, 3, 4});
  num::Mask mask{1, 0, 0, 1};
  auto out = readout(x, mask);
  EXPECT_EQ(out.node_weights[0], 1.0);
  EXPECT_EQ(out.node_weights[1], 0.0);
  EXPECT_EQ(out.node_weights[2], 0.0);
  EXPECT_EQ(out.node_weights[3], 1.0);
  const double s0 = out.frame_weights[0], s1 = out.frame_weights[1];
  EXPECT_NEAR(out.global[0], (s0 * 1 + s1 * 3) / (s0 + s1 + 1e-5), 1e-14);
  EXPECT_NEAR(out.global[1], (s0 * 2 + s1 * 4) / (s0 + s1 + 1e-5), 1e-14);
}

TEST(Readout, ZeroFrameScorerAveragesFrames) {
  num::ParameterStore store;
  num::Initializer init(3);
  vgpnn::Readout readout(store, "ro", 3, 4, init);
  zero(readout.frame_score.second.weight);
  std::mt19937_64 rng(4);
  num::Mask mask{1, 1, 1, 0, 1, 1};
  auto x = masked_random({3, 2, 3}, mask, rng);
  auto out = readout(x, mask);
  std::vector<double> h(3 * 3, 0.0);
  for (std::size_t n = 0; n < 3; ++n) {
    EXPECT_EQ(out.frame_weights[n], 0.5);
    double wsum = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      const double w = out.node_weights[n * 2 + j];
      wsum += w;
      for (std::size_t d = 0; d < 3; ++d) h[n * 3 + d] += w * x[(n * 2 + j) * 3 + d];
    }
    EXPECT_NEAR(wsum, 1.0, 1e-15);
  }
  for (std::size_t d = 0; d < 3; ++d) {
    const double mean = (h[d] + h[3 + d] + h[6 + d]) / 3.0;
    EXPECT_NEAR(out.global[d], mean * 1.5 / (1.5 + 1e-5), 1e-14);
  }
}

TEST(Readout, IdenticalFramesGiveThatFrame) {
  num::ParameterStore store;
  num::Initializer init(5);
  vgpnn::Readout readout(store, "ro", 2, 3, init);
  auto x = Tensor::from({3, 1, 2}, {0.3, -0.7, 0.3, -0.7, 0.3, -0.7});
  auto out = readout(x, num::Mask(3, 1));
  const double s = out.frame_weights[0] * 3;
  EXPECT_NEAR(out.global[0], 0.3 * s / (s + 1e-5), 1e-14);
  EXPECT_NEAR(out.global[1], -0.7 * s / (s + 1e-5), 1e-14);
}

TEST(Readout, PermutingNodesWithinFrames) {
  num::ParameterStore store;
  num::Initializer init(6);
  vgpnn::Readout readout(store, "ro", 3, 4, init);
  std::mt19937_64 rng(7);
  num::Mask mask{1, 0, 1, 1, 1, 1};
  auto x = masked_random({2, 3, 3}, mask, rng);
  std::vector<std::size_t> perm{2, 0, 1, 4, 5, 3};
  num::Mask pmask;
  for (auto p : perm) pmask.push_back(mask[p]);
  auto px = num::reshape(num::gather_rows(num::reshape(x, {6, 3}), perm), {2, 3, 3});
  auto a = readout(x, mask), b = readout(px, pmask);
  for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(a.global[d], b.global[d], 1e-14);
  for (std::size_t n = 0; n < 2; ++n) EXPECT_NEAR(a.frame_weights[n], b.frame_weights[n], 1e-14);
}

// ---------------------------------------------------------------------------

struct StackFixture {
  num::ParameterStore store;
  num::Initializer init{9};
  Tensor table;
  vgpnn::Vgpnn net;

  explicit StackFixture(std::size_t layers, std::size_t N = 2) {
    table = store.add("table", init.uniform({2, 3}, 1.0));
    net = vgpnn::Vgpnn(store, "vgpnn", {3, 3, N, layers, 0.9, 1e-5}, init);
  }
};

TEST(Stack, IdentitySubOpsReduceToNormalization) {
  StackFixture fx(1);
  auto& layer = fx.net.layers[0];
  zero(layer.link.w_v);
  zero(layer.message.node_proj.weight);
  zero(layer.message.edge_proj.weight);
  std::mt19937_64 rng(1);
  num::Mask mask{1, 1, 1, 0};
  auto g = graph(2, 2, mask, {{0, 0, 1, 0}, {1, 0, 0, 1}});
  dpm::PromptedFeatures in{masked_random({1, 2, 2, 3}, mask, rng), mask};
  auto out = fx.net.forward(in, edges_of(g, fx.table), true);
  auto direct = layer.norm(in.values, mask, true).values;
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_NEAR(out.values[i], direct[i], 1e-14);
}

TEST(Stack, BranchesWithEqualInputsAgreeAndPaddingStaysZero) {
  StackFixture fx(2, 3);
  std::mt19937_64 rng(2);
  num::Mask mask{1, 1, 0, 1, 0, 1, 1, 1, 1};
  auto g = graph(3, 3, mask, {{0, 0, 1, 0}, {1, 0, 2, 1}, {2, 1, 2, 0}, {2, 2, 0, 1}});
  auto x = masked_random({1, 3, 3, 3}, mask, rng);
  num::Mask mask2 = mask;
  mask2.insert(mask2.end(), mask.begin(), mask.end());
  dpm::PromptedFeatures in{num::concat_rows(x, x), mask2};
  auto out = fx.net.forward(in, edges_of(g, fx.table), true);
  const auto half = x.size();
  for (std::size_t i = 0; i < half; ++i) EXPECT_EQ(out.values[i], out.values[half + i]);
  for (std::size_t r = 0; r < mask2.size(); ++r)
    if (!mask2[r])
      for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(out.values[r * 3 + d], 0.0);
  ASSERT_EQ(out.mu_g.size(), 2u);
}

TEST(Stack, CommitOnlyAfterTrainingForward) {
  StackFixture fx(2);
  std::mt19937_64 rng(3);
  num::Mask mask(4, 1);
  auto g = graph(2, 2, mask, {{0, 0, 1, 0}});
  dpm::PromptedFeatures in{masked_random({1, 2, 2, 3}, mask, rng), mask};
  auto eval = fx.net.forward(in, edges_of(g, fx.table), false);
  EXPECT_EQ(eval.mu_g[0][0], 0.0);
  auto train = fx.net.forward(in, edges_of(g, fx.table), true);
  fx.net.commit(train);
  EXPECT_EQ(fx.net.layers[1].norm.running_mean()[0], train.mu_g[1][0]);
  EXPECT_NE(train.mu_g[0][0], 0.0);
}

TEST(Stack, OneLayerGradientsMatchCentralDifferences) {
  StackFixture fx(1);
  std::mt19937_64 rng(4);
  num::Mask mask{1, 1, 1, 1};
  auto x = fx.store.add("x", masked_random({1, 2, 2, 3}, mask, rng));
  auto g = graph(2, 2, mask, {{0, 0, 1, 0}, {0, 1, 0, 1}, {1, 0, 1, 1}});
  fixtures::randomize(fx.store, 44);
  auto report = num::grad_check(
      [&] {
        dpm::PromptedFeatures in{x, mask};
        const ssg::SceneGraphSequence* one[] = {&g};
        auto e = vgpnn::build_edges(one, fx.table);
        return fixtures::project(fx.net.forward(in, e, true).values, 3);
      },
      fx.store, 1e-5, 1e-5);
  EXPECT_TRUE(report.pass) << report.params.front().name << " " << report.max_rel_error;
}

}  // namespace
