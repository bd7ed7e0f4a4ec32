#include "proda/ssg/scene_graph.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "proda/errors.hpp"

namespace proda::ssg {

namespace {

using nlohmann::ordered_json;

std::string idx2(const char* field, std::size_t i, std::size_t j) {
  return std::string(field) + "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
}

std::string idx1(const char* field, std::size_t i) {
  return std::string(field) + "[" + std::to_string(i) + "]";
}

[[noreturn]] void reject(const std::string& field, const std::string& what) {
  throw ContractError(field + ": " + what);
}

}  // namespace

std::size_t VideoAnnotation::label_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void validate(const SceneGraphSequence& seq) {
  const auto N = seq.num_frames, M = seq.max_nodes;
  if (N == 0) reject("N", "must be positive");
  if (M == 0) reject("M", "must be positive");
  if (seq.num_object_classes < 2) reject("num_object_classes", "needs padding class 0 plus one real class");
  if (seq.node_class.size() != N * M) reject("node_class", "expected N*M entries");
  if (seq.node_mask.size() != N * M) reject("node_mask", "expected N*M entries");
  for (std::size_t i = 0; i < N; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < M; ++j) {
      const auto s = seq.slot(i, j);
      if (seq.node_mask[s] > 1) reject(idx2("node_mask", i, j), "must be 0 or 1");
      const auto cls = seq.node_class[s];
      if (!seq.node_mask[s]) {
        if (cls != 0) reject(idx2("node_class", i, j), "padding slot must have class 0");
        continue;
      }
      any = true;
      if (cls == 0) reject(idx2("node_class", i, j), "present node cannot use padding class 0");
      if (cls >= seq.num_object_classes) {
        reject(idx2("node_class", i, j), "class id " + std::to_string(cls) + " >= vocabulary size " +
                                             std::to_string(seq.num_object_classes));
      }
    }
    if (!any) reject(idx1("node_mask", i), "frame has no present node");
  }
  for (std::size_t r = 0; r < seq.relations.size(); ++r) {
    const auto& rel = seq.relations[r];
    const auto field = idx1("relations", r);
    if (rel.frame >= N) reject(field, "frame out of range");
    if (rel.source >= M || rel.target >= M) reject(field, "node index out of range");
    if (rel.type >= seq.num_relation_types) reject(field, "relation type out of range");
    if (!seq.present(rel.frame, rel.source) || !seq.present(rel.frame, rel.target)) {
      reject(field, "relation touches a padding slot");
    }
    if (r > 0 && !(seq.relations[r - 1] < rel)) reject(field, "relations must be sorted and unique");
  }
}

void validate(const VideoAnnotation& ann, std::size_t num_frames) {
  if (ann.labels.empty()) reject("labels", "empty label vector");
  for (std::size_t c = 0; c < ann.labels.size(); ++c) {
    if (ann.labels[c] > 1) reject(idx1("labels", c), "must be 0 or 1");
  }
  for (std::size_t s = 0; s < ann.segments.size(); ++s) {
    const auto& seg = ann.segments[s];
    const auto field = idx1("segments", s);
    if (seg.action >= ann.labels.size()) reject(field, "action out of range");
    if (!ann.labels[seg.action]) reject(field, "segment for an action whose label is 0");
    if (seg.start > seg.end || seg.end >= num_frames) reject(field, "need 0 <= start <= end < N");
    if (s > 0 && !(ann.segments[s - 1] < seg)) reject(field, "segments must be sorted and unique");
  }
}

std::string serialize(const VideoRecord& record) {
  const auto& g = record.graph;
  const auto& a = record.annotation;
  validate(g);
  validate(a, g.num_frames);

  ordered_json j;
  j["video_id"] = g.video_id;
  j["N"] = g.num_frames;
  j["M"] = g.max_nodes;
  j["num_object_classes"] = g.num_object_classes;
  j["num_relations"] = g.num_relation_types;
  j["num_actions"] = a.labels.size();
  auto classes = ordered_json::array();
  auto masks = ordered_json::array();
  for (std::size_t i = 0; i < g.num_frames; ++i) {
    auto crow = ordered_json::array();
    auto mrow = ordered_json::array();
    for (std::size_t k = 0; k < g.max_nodes; ++k) {
      crow.push_back(g.class_at(i, k));
      mrow.push_back(static_cast<int>(g.node_mask[g.slot(i, k)]));
    }
    classes.push_back(std::move(crow));
    masks.push_back(std::move(mrow));
  }
  j["node_class"] = std::move(classes);
  j["node_mask"] = std::move(masks);
  auto rels = ordered_json::array();
  for (const auto& r : g.relations) rels.push_back({r.frame, r.source, r.target, r.type});
  j["relations"] = std::move(rels);
  auto labels = ordered_json::array();
  for (auto l : a.labels) labels.push_back(static_cast<int>(l));
  j["labels"] = std::move(labels);
  auto segs = ordered_json::array();
  for (const auto& s : a.segments) segs.push_back({s.action, s.start, s.end});
  j["segments"] = std::move(segs);
  return j.dump();
}

namespace {

class FieldReader {
 public:
  FieldReader(const ordered_json& root, std::size_t line) : root_(root), line_(line) {}

  const ordered_json& at(const char* key) const {
    if (!root_.contains(key)) throw ParseError(line_, key, "missing field");
    return root_.at(key);
  }

  std::size_t count(const ordered_json& v, const std::string& field) const {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ParseError(line_, field, "expected non-negative integer");
    }
    return v.get<std::size_t>();
  }

  std::size_t count(const char* key) const { return count(at(key), key); }

  const ordered_json& array(const ordered_json& v, const std::string& field,
                            std::size_t expected) const {
    if (!v.is_array()) throw ParseError(line_, field, "expected array");
    if (expected != kAny && v.size() != expected) {
      throw ParseError(line_, field,
                       "expected " + std::to_string(expected) + " entries, got " +
                           std::to_string(v.size()));
    }
    return v;
  }

  static constexpr std::size_t kAny = static_cast<std::size_t>(-1);

 private:
  const ordered_json& root_;
  std::size_t line_;
};

}  // namespace

VideoRecord deserialize(std::string_view line, std::size_t line_no) {
  ordered_json root;
  try {
    root = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, "record", std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw ParseError(line_no, "record", "expected JSON object");
  FieldReader in(root, line_no);

  VideoRecord rec;
  auto& g = rec.graph;
  if (!in.at("video_id").is_string()) throw ParseError(line_no, "video_id", "expected string");
  g.video_id = in.at("video_id").get<std::string>();
  g.num_frames = in.count("N");
  g.max_nodes = in.count("M");
  g.num_object_classes = in.count("num_object_classes");
  g.num_relation_types = in.count("num_relations");
  const auto C = in.count("num_actions");

  const auto& classes = in.array(in.at("node_class"), "node_class", g.num_frames);
  const auto& masks = in.array(in.at("node_mask"), "node_mask", g.num_frames);
  for (std::size_t i = 0; i < g.num_frames; ++i) {
    const auto& crow = in.array(classes[i], idx1("node_class", i), g.max_nodes);
    const auto& mrow = in.array(masks[i], idx1("node_mask", i), g.max_nodes);
    for (std::size_t k = 0; k < g.max_nodes; ++k) {
      g.node_class.push_back(in.count(crow[k], idx2("node_class", i, k)));
      const auto m = in.count(mrow[k], idx2("node_mask", i, k));
      if (m > 1) throw ParseError(line_no, idx2("node_mask", i, k), "must be 0 or 1");
      g.node_mask.push_back(static_cast<std::uint8_t>(m));
    }
  }
  const auto& rels = in.array(in.at("relations"), "relations", FieldReader::kAny);
  for (std::size_t r = 0; r < rels.size(); ++r) {
    const auto f = idx1("relations", r);
    const auto& t = in.array(rels[r], f, 4);
    g.relations.push_back({in.count(t[0], f), in.count(t[1], f), in.count(t[2], f),
                           in.count(t[3], f)});
  }

  auto& a = rec.annotation;
  const auto& labels = in.array(in.at("labels"), "labels", C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto v = in.count(labels[c], idx1("labels", c));
    if (v > 1) throw ParseError(line_no, idx1("labels", c), "must be 0 or 1");
    a.labels.push_back(static_cast<std::uint8_t>(v));
  }
  const auto& segs = in.array(in.at("segments"), "segments", FieldReader::kAny);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const auto f = idx1("segments", s);
    const auto& t = in.array(segs[s], f, 3);
    a.segments.push_back({in.count(t[0], f), in.count(t[1], f), in.count(t[2], f)});
  }

  try {
    validate(g);
    validate(a, g.num_frames);
  } catch (const ContractError& e) {
    std::string what = e.what();
    const auto colon = what.find(':');
    throw ParseError(line_no, what.substr(0, colon),
                     colon == std::string::npos ? what : what.substr(colon + 2));
  }
  return rec;
}

std::vector<VideoRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::vector<VideoRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(deserialize(line, line_no));
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const VideoRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << serialize(r) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

NodeFeatures embed_nodes(const SceneGraphSequence& seq, const num::Tensor& table) {
  const SceneGraphSequence* one[] = {&seq};
  auto out = embed_nodes(std::span<const SceneGraphSequence* const>(one), table);
  auto shape = out.values.shape();
  out.values = num::reshape(out.values, {shape[1], shape[2], shape[3]});
  return out;
}

NodeFeatures embed_nodes(std::span<const SceneGraphSequence* const> videos,
                         const num::Tensor& table) {
  if (videos.empty()) throw ContractError("embed_nodes: empty batch");
  if (table.rank() != 2) throw ContractError("embed_nodes: table must be [classes, D]");
  const auto N = videos[0]->num_frames, M = videos[0]->max_nodes;
  const auto D = table.dim(1);
  std::vector<std::size_t> ids;
  NodeFeatures out;
  ids.reserve(videos.size() * N * M);
  out.mask.reserve(videos.size() * N * M);
  for (const auto* v : videos) {
    validate(*v);
    if (v->num_frames != N || v->max_nodes != M) {
      throw ContractError("embed_nodes: video '" + v->video_id + "' has a different N or M");
    }
    for (std::size_t s = 0; s < N * M; ++s) {
      if (v->node_class[s] >= table.dim(0)) {
        throw ContractError("embed_nodes: unknown class id " + std::to_string(v->node_class[s]));
      }
      ids.push_back(v->node_class[s]);
      out.mask.push_back(v->node_mask[s]);
    }
  }
  auto rows = num::mul(num::embedding(table, ids), num::mask_column(out.mask));
  out.values = num::reshape(rows, {videos.size(), N, M, D});
  return out;
}

}  // namespace proda::ssg
