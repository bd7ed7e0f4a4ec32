#pragma once

#include <random>

#include "proda/numerics/ops.hpp"
#include "proda/numerics/parameters.hpp"
#include "proda/ssg/scene_graph.hpp"

namespace proda::fixtures {

inline num::Tensor random_const(const num::Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(num::numel(shape));
  for (auto& x : v) x = d(rng);
  return num::Tensor::from(shape, v);
}

/// Random linear functional of t, so any tensor-valued op becomes a scalar objective.
inline num::Tensor project(const num::Tensor& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return num::sum(num::mul(t, random_const(t.shape(), rng)));
}

/// Overwrites every weight (not buffers) with uniform(-scale, scale) draws, so
/// zero-initialized paths also carry gradient in checks.
inline void randomize(num::ParameterStore& store, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& p : store.all())
    if (p.kind == num::ParamKind::kWeight)
      for (auto& x : p.tensor.mutable_data()) x = d(rng);
}

/// A random record satisfying every scene-graph and annotation invariant.
inline ssg::VideoRecord random_record(std::mt19937_64& rng, std::size_t N, std::size_t M,
                                      std::size_t classes, std::size_t relation_types,
                                      std::size_t actions) {
  auto uniform = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  ssg::VideoRecord rec;
  auto& g = rec.graph;
  g.video_id = "v" + std::to_string(uniform(0, 1u << 20));
  g.num_frames = N;
  g.max_nodes = M;
  g.num_object_classes = classes;
  g.num_relation_types = relation_types;
  for (std::size_t i = 0; i < N; ++i) {
    const auto first = uniform(0, M - 1);  // guarantees one present node per frame
    for (std::size_t j = 0; j < M; ++j) {
      const bool on = j == first || uniform(0, 2) > 0;
      g.node_mask.push_back(on ? 1 : 0);
      g.node_class.push_back(on ? uniform(1, classes - 1) : 0);
    }
  }
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t k = 0; k < M; ++k)
        for (std::size_t t = 0; t < relation_types; ++t)
          if (g.present(i, j) && g.present(i, k) && uniform(0, 5) == 0) g.relations.push_back({i, j, k, t});

  auto& a = rec.annotation;
  a.labels.assign(actions, 0);
  a.labels[uniform(0, actions - 1)] = 1;
  for (auto& l : a.labels)
    if (uniform(0, 3) == 0) l = 1;
  for (std::size_t c = 0; c < actions; ++c) {
    if (!a.labels[c]) continue;
    const auto s = uniform(0, N - 1);
    a.segments.push_back({c, s, uniform(s, N - 1)});
  }
  return rec;
}

}  // namespace proda::fixtures
