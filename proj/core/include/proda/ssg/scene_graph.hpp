#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "proda/numerics/ops.hpp"

namespace proda::ssg {

/// Directed relation of `type` from node `source` to node `target` in `frame`.
struct Relation {
  std::size_t frame = 0;
  std::size_t source = 0;
  std::size_t target = 0;
  std::size_t type = 0;

  auto operator<=>(const Relation&) const = default;
};

/// One video as N fixed-width frames of M node slots. Slot (i, j) is padding
/// when node_mask is 0; padding slots carry class 0 and no relations.
struct SceneGraphSequence {
  std::string video_id;
  std::size_t num_frames = 0;
  std::size_t max_nodes = 0;
  std::size_t num_object_classes = 0;
  std::size_t num_relation_types = 0;
  std::vector<std::size_t> node_class;   // N*M, row-major by frame
  std::vector<std::uint8_t> node_mask;   // N*M
  std::vector<Relation> relations;       // sorted, unique

  std::size_t slot(std::size_t frame, std::size_t node) const { return frame * max_nodes + node; }
  std::size_t class_at(std::size_t frame, std::size_t node) const { return node_class[slot(frame, node)]; }
  bool present(std::size_t frame, std::size_t node) const { return node_mask[slot(frame, node)] != 0; }

  bool operator==(const SceneGraphSequence&) const = default;
};

struct ActionSegment {
  std::size_t action = 0;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // inclusive

  auto operator<=>(const ActionSegment&) const = default;
};

struct VideoAnnotation {
  std::vector<std::uint8_t> labels;     // multi-hot over C actions
  std::vector<ActionSegment> segments;  // sorted

  std::size_t num_actions() const { return labels.size(); }
  std::size_t label_count() const;
  bool operator==(const VideoAnnotation&) const = default;
};

struct VideoRecord {
  SceneGraphSequence graph;
  VideoAnnotation annotation;
  bool operator==(const VideoRecord&) const = default;
};

/// Throws ContractError whose message starts with the offending field path,
/// e.g. "node_class[1][0]".
void validate(const SceneGraphSequence& seq);
void validate(const VideoAnnotation& ann, std::size_t num_frames);

/// One JSON object per line, keys in a fixed order:
/// video_id, N, M, num_object_classes, num_relations, num_actions, node_class,
/// node_mask, relations ([frame, source, target, type]), labels, segments
/// ([action, start, end]).
std::string serialize(const VideoRecord& record);
/// `line_no` (1-based) is reported in ParseError; 0 when unknown.
VideoRecord deserialize(std::string_view line, std::size_t line_no = 0);

std::vector<VideoRecord> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, std::span<const VideoRecord> records);

struct NodeFeatures {
  num::Tensor values;   // [B, N, M, D] (B omitted for a single video)
  num::Mask mask;       // B*N*M flags
};

/// values[i][j] = table row node_class[i][j] for present nodes, zero for padding.
NodeFeatures embed_nodes(const SceneGraphSequence& seq, const num::Tensor& table);
/// Batched variant; every video must share N and M.
NodeFeatures embed_nodes(std::span<const SceneGraphSequence* const> videos,
                         const num::Tensor& table);

}  // namespace proda::ssg
