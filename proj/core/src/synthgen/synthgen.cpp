#include "proda/synthgen/synthgen.hpp"

#include <algorithm>
#include <numeric>

#include "proda/errors.hpp"
#include "proda/spec/action_spec.hpp"

namespace proda::synth {

namespace {

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

std::size_t object_vocabulary(const GenConfig& cfg) { return 2 + cfg.num_actions + kFillerClasses; }

std::vector<ActionMotif> motifs(const GenConfig& cfg) {
  std::vector<ActionMotif> out;
  for (std::size_t c = 0; c < cfg.num_actions; ++c) {
    out.push_back({c, kSubjectClass, 2 + c, 2 + c % 2, c % 2, cfg.min_duration, cfg.max_duration});
  }
  return out;
}

void validate(const GenConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& what) {
    throw ContractError(field + ": " + what);
  };
  if (cfg.num_actions == 0) fail("num_actions", "must be positive");
  if (cfg.frames == 0) fail("frames", "must be positive");
  if (cfg.min_actions == 0) fail("min_actions", "must be at least 1");
  if (cfg.max_actions < cfg.min_actions) fail("max_actions", "below min_actions");
  if (cfg.max_actions > cfg.num_actions) fail("max_actions", "exceeds num_actions");
  if (cfg.max_nodes < 1 + cfg.max_actions) {
    fail("max_nodes", "need " + std::to_string(1 + cfg.max_actions) +
                          " slots for the subject and one object per action, have " +
                          std::to_string(cfg.max_nodes));
  }
  if (cfg.min_duration == 0) fail("min_duration", "must be at least 1");
  if (cfg.max_duration < cfg.min_duration) fail("max_duration", "below min_duration");
  if (cfg.max_duration > cfg.frames) fail("max_duration", "longer than the video");
  if (!(cfg.relation_noise >= 0.0 && cfg.relation_noise <= 1.0)) fail("relation_noise", "outside [0, 1]");
  if (!(cfg.feature_noise >= 0.0)) fail("feature_noise", "must be non-negative");
}

ssg::VideoRecord generate_video(const GenConfig& cfg, std::mt19937_64& rng,
                                const std::string& video_id) {
  validate(cfg);
  const auto C = cfg.num_actions, N = cfg.frames, M = cfg.max_nodes;
  const auto all_motifs = motifs(cfg);

  std::vector<std::size_t> order(C);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto L = uniform(rng, cfg.min_actions, cfg.max_actions);
  std::vector<std::size_t> present(order.begin(), order.begin() + L);

  // distractor pool: objects of absent motifs plus fillers
  std::vector<std::size_t> pool;
  for (auto it = order.begin() + L; it != order.end(); ++it) pool.push_back(2 + *it);
  for (std::size_t f = 0; f < kFillerClasses; ++f) pool.push_back(2 + C + f);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto distractors = std::min(M - 1 - L, pool.size());

  std::vector<std::size_t> slots(M);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);

  ssg::VideoRecord rec;
  auto& g = rec.graph;
  g.video_id = video_id;
  g.num_frames = N;
  g.max_nodes = M;
  g.num_object_classes = object_vocabulary(cfg);
  g.num_relation_types = kRelationTypes;
  g.node_class.assign(N * M, 0);
  g.node_mask.assign(N * M, 0);

  std::vector<std::size_t> slot_class(M, 0);
  const auto subject = slots[0];
  slot_class[subject] = kSubjectClass;
  for (std::size_t a = 0; a < L; ++a) slot_class[slots[1 + a]] = all_motifs[present[a]].object_class;
  for (std::size_t d = 0; d < distractors; ++d) slot_class[slots[1 + L + d]] = pool[d];
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < M; ++j)
      if (slot_class[j] != 0) {
        g.node_class[g.slot(i, j)] = slot_class[j];
        g.node_mask[g.slot(i, j)] = 1;
      }

  // clean relation per (frame, object slot)
  std::vector<std::size_t> relation(N * M, 0);
  rec.annotation.labels.assign(C, 0);
  for (std::size_t a = 0; a < L; ++a) {
    const auto& motif = all_motifs[present[a]];
    const auto duration = uniform(rng, motif.min_duration, motif.max_duration);
    const auto start = uniform(rng, 0, N - duration);
    const auto end = start + duration - 1;
    const auto j = slots[1 + a];
    for (std::size_t i = 0; i < N; ++i)
      relation[i * M + j] = (i >= start && i <= end) ? motif.active_relation : motif.idle_relation;
    rec.annotation.labels[motif.action] = 1;
    rec.annotation.segments.push_back({motif.action, start, end});
  }
  for (std::size_t d = 0; d < distractors; ++d) {
    const auto j = slots[1 + L + d];
    for (std::size_t i = 0; i < N; ++i) relation[i * M + j] = uniform(rng, 0, 1);
  }

  std::bernoulli_distribution flip(cfg.relation_noise);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < M; ++j) {
      if (j == subject || slot_class[j] == 0) continue;
      auto type = relation[i * M + j];
      if (flip(rng)) type = (type + uniform(rng, 1, kRelationTypes - 1)) % kRelationTypes;
      g.relations.push_back({i, subject, j, type});
    }
  }
  std::sort(g.relations.begin(), g.relations.end());
  std::sort(rec.annotation.segments.begin(), rec.annotation.segments.end());
  return rec;
}

std::vector<ssg::VideoRecord> generate_split(const GenConfig& cfg, std::size_t count,
                                             std::uint64_t split, const std::string& prefix) {
  validate(cfg);
  std::vector<ssg::VideoRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(spec::derive_seed(cfg.seed, split, i));
    auto id = std::to_string(i);
    id.insert(0, id.size() < 6 ? 6 - id.size() : 0, '0');
    out.push_back(generate_video(cfg, rng, prefix + "_" + id));
  }
  return out;
}

std::vector<std::size_t> label_counts(std::span<const ssg::VideoRecord> data) {
  std::vector<std::size_t> counts;
  for (const auto& r : data) {
    counts.resize(std::max(counts.size(), r.annotation.labels.size()), 0);
    for (std::size_t c = 0; c < r.annotation.labels.size(); ++c) counts[c] += r.annotation.labels[c];
  }
  return counts;
}

DatasetFiles generate_dataset(const GenConfig& cfg, std::size_t n_train, std::size_t n_val,
                              const std::filesystem::path& dir) {
  validate(cfg);
  std::filesystem::create_directories(dir);
  DatasetFiles files{dir / "train.jsonl", dir / "val.jsonl", {}, {}};
  const auto train = generate_split(cfg, n_train, 0, "train");
  const auto val = generate_split(cfg, n_val, 1, "val");
  ssg::write_dataset(files.train, train);
  ssg::write_dataset(files.val, val);
  files.train_label_counts = label_counts(train);
  files.val_label_counts = label_counts(val);
  files.train_label_counts.resize(cfg.num_actions, 0);
  files.val_label_counts.resize(cfg.num_actions, 0);
  return files;
}

ssg::VideoAnnotation oracle_decode(const ssg::SceneGraphSequence& g, const GenConfig& cfg) {
  const auto all_motifs = motifs(cfg);
  ssg::VideoAnnotation ann;
  ann.labels.assign(cfg.num_actions, 0);
  const auto N = g.num_frames, M = g.max_nodes;
  // relation type held by (frame, source, target); relations are unique per pair here
  std::vector<long> type(N * M * M, -1);
  for (const auto& r : g.relations) type[(r.frame * M + r.source) * M + r.target] = static_cast<long>(r.type);
  for (std::size_t s = 0; s < M; ++s) {
    for (std::size_t o = 0; o < M; ++o) {
      if (s == o) continue;
      for (const auto& motif : all_motifs) {
        std::size_t i = 0;
        while (i < N) {
          auto matches = [&](std::size_t f) {
            return g.present(f, s) && g.present(f, o) && g.class_at(f, s) == motif.subject_class &&
                   g.class_at(f, o) == motif.object_class &&
                   type[(f * M + s) * M + o] == static_cast<long>(motif.active_relation);
          };
          if (!matches(i)) {
            ++i;
            continue;
          }
          auto end = i;
          while (end + 1 < N && matches(end + 1)) ++end;
          ann.labels[motif.action] = 1;
          ann.segments.push_back({motif.action, i, end});
          i = end + 1;
        }
      }
    }
  }
  std::sort(ann.segments.begin(), ann.segments.end());
  return ann;
}

}  // namespace proda::synth
