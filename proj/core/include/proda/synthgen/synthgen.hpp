#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "proda/ssg/scene_graph.hpp"

namespace proda::synth {

/// Planted action: `subject` relates to `object` with `active_relation`
/// inside the action's segment and with `idle_relation` outside it.
struct ActionMotif {
  std::size_t action = 0;
  std::size_t subject_class = 0;
  std::size_t object_class = 0;
  std::size_t active_relation = 0;
  std::size_t idle_relation = 0;
  std::size_t min_duration = 1;
  std::size_t max_duration = 1;
};

struct GenConfig {
  std::size_t num_actions = 6;  // C
  std::size_t frames = 8;       // N
  std::size_t max_nodes = 6;    // M
  std::size_t dim = 32;         // D (model width; echoed only)
  std::size_t min_actions = 1;
  std::size_t max_actions = 3;  // L_max
  std::size_t min_duration = 2;
  std::size_t max_duration = 6;
  double feature_noise = 0.0;   // unused: node features are learned embeddings
  double relation_noise = 0.05;
  std::uint64_t seed = 7;
};

/// Vocabulary layout: class 0 is padding, 1 the shared subject ("person"),
/// 2..C+1 the motif objects, then `kFillerClasses` objects that belong to no
/// motif. Relation types: motif c idles with c % 2 and acts with 2 + c % 2.
inline constexpr std::size_t kSubjectClass = 1;
inline constexpr std::size_t kFillerClasses = 2;
inline constexpr std::size_t kRelationTypes = 4;

std::size_t object_vocabulary(const GenConfig& cfg);
std::vector<ActionMotif> motifs(const GenConfig& cfg);

/// Throws ContractError naming the offending field.
void validate(const GenConfig& cfg);

/// One video: node slot order is shuffled, every node is present in all
/// frames, unused slots hold distractor objects (absent motifs' objects or
/// fillers) that carry idle relations only.
ssg::VideoRecord generate_video(const GenConfig& cfg, std::mt19937_64& rng,
                                const std::string& video_id);

/// Video i of a split draws from derive_seed(cfg.seed, split, i).
std::vector<ssg::VideoRecord> generate_split(const GenConfig& cfg, std::size_t count,
                                             std::uint64_t split, const std::string& prefix);

struct DatasetFiles {
  std::filesystem::path train, val;
  std::vector<std::size_t> train_label_counts;  // per class
  std::vector<std::size_t> val_label_counts;
};

/// Writes train.jsonl and val.jsonl under `dir`.
DatasetFiles generate_dataset(const GenConfig& cfg, std::size_t n_train, std::size_t n_val,
                              const std::filesystem::path& dir);

std::vector<std::size_t> label_counts(std::span<const ssg::VideoRecord> data);

/// Rule-based decoder: for every motif-object node, maximal runs of frames in
/// which the subject holds the motif's active relation towards it.
ssg::VideoAnnotation oracle_decode(const ssg::SceneGraphSequence& graph, const GenConfig& cfg);

}  // namespace proda::synth
