#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "proda/errors.hpp"
#include "proda/ssg/scene_graph.hpp"
#include "test_support.hpp"

namespace {

using namespace proda;
using ssg::VideoRecord;

const std::filesystem::path kFixtures = PRODA_FIXTURE_DIR;

VideoRecord toy() {
  VideoRecord r;
  r.graph.video_id = "toy";
  r.graph.num_frames = 2;
  r.graph.max_nodes = 2;
  r.graph.num_object_classes = 4;
  r.graph.num_relation_types = 1;
  r.graph.node_class = {1, 3, 1, 0};
  r.graph.node_mask = {1, 1, 1, 0};
  r.graph.relations = {{0, 0, 1, 0}};
  r.annotation.labels = {0, 1};
  r.annotation.segments = {{1, 0, 1}};
  return r;
}

TEST(SceneGraph, RoundTripRandomRecords) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto rec = fixtures::random_record(rng, 1 + trial % 5, 1 + trial % 4, 6, 3, 4);
    const auto line = ssg::serialize(rec);
    const auto back = ssg::deserialize(line);
    EXPECT_EQ(back, rec);
    EXPECT_EQ(ssg::serialize(back), line);
  }
}

TEST(SceneGraph, ToyFixtureFile) {
  const auto records = ssg::read_dataset(kFixtures / "toy_graph.jsonl");
  ASSERT_EQ(records.size(), 1u);
  const auto& g = records[0].graph;
  EXPECT_EQ(g.num_frames, 2u);
  EXPECT_EQ(g.max_nodes, 2u);
  EXPECT_EQ(g.num_relation_types, 1u);
  ASSERT_EQ(g.relations.size(), 1u);
  EXPECT_EQ(g.relations[0], (ssg::Relation{0, 0, 1, 0}));
  EXPECT_EQ(records[0].annotation.segments[0], (ssg::ActionSegment{0, 0, 1}));
}

TEST(SceneGraph, PaddingWithClassNamesTheSlot) {
  auto r = toy();
  r.graph.node_class[3] = 2;  // (1, 1) is padding
  try {
    ssg::serialize(r);
    FAIL() << "expected rejection";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("node_class[1][1]"), std::string::npos) << e.what();
  }
}

TEST(SceneGraph, CorruptedLineReportsLineAndField) {
  try {
    ssg::read_dataset(kFixtures / "corrupt.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.field(), "node_class[0][1]");
  }
}

TEST(SceneGraph, MalformedJsonAndMissingField) {
  try {
    ssg::deserialize("{not json", 4);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_EQ(e.field(), "record");
  }
  auto line = ssg::serialize(toy());
  line.replace(line.find("\"M\""), 3, "\"Q\"");
  try {
    ssg::deserialize(line, 9);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "M");
  }
}

TEST(SceneGraph, ValidationRules) {
  auto empty_frame = toy();
  empty_frame.graph.node_mask = {1, 1, 0, 0};
  empty_frame.graph.node_class = {1, 3, 0, 0};
  EXPECT_THROW(ssg::validate(empty_frame.graph), ContractError);

  auto bad_rel = toy();
  bad_rel.graph.relations = {{0, 0, 1, 1}};
  EXPECT_THROW(ssg::validate(bad_rel.graph), ContractError);

  auto to_padding = toy();
  to_padding.graph.relations = {{1, 0, 1, 0}};
  EXPECT_THROW(ssg::validate(to_padding.graph), ContractError);

  auto big_class = toy();
  big_class.graph.node_class[0] = 4;
  EXPECT_THROW(ssg::validate(big_class.graph), ContractError);

  auto seg = toy();
  seg.annotation.segments = {{0, 0, 1}};  // label 0 is off
  EXPECT_THROW(ssg::validate(seg.annotation, 2), ContractError);
  seg.annotation.segments = {{1, 1, 2}};
  EXPECT_THROW(ssg::validate(seg.annotation, 2), ContractError);
}

TEST(SceneGraph, WriteThenReadDataset) {
  std::mt19937_64 rng(3);
  std::vector<VideoRecord> recs;
  for (int i = 0; i < 5; ++i) recs.push_back(fixtures::random_record(rng, 3, 3, 5, 2, 3));
  const auto path = std::filesystem::temp_directory_path() / "proda_ssg_roundtrip.jsonl";
  ssg::write_dataset(path, recs);
  EXPECT_EQ(ssg::read_dataset(path), recs);
  std::filesystem::remove(path);
}

TEST(EmbedNodes, LookupAndPadding) {
  auto r = toy();
  auto table = num::Tensor::from({4, 2}, {0, 0, 1, 2, 3, 4, 5, 6});
  auto f = ssg::embed_nodes(r.graph, table);
  ASSERT_EQ(f.values.shape(), (num::Shape{2, 2, 2}));
  // class 3 at (0, 1) -> row 3
  EXPECT_EQ(f.values[2], 5.0);
  EXPECT_EQ(f.values[3], 6.0);
  // same class 1 at (0, 0) and (1, 0) -> identical rows
  EXPECT_EQ(f.values[0], f.values[4]);
  EXPECT_EQ(f.values[1], f.values[5]);
  // padding stays zero
  EXPECT_EQ(f.values[6], 0.0);
  EXPECT_EQ(f.values[7], 0.0);
  EXPECT_EQ(f.mask, (num::Mask{1, 1, 1, 0}));
}

TEST(EmbedNodes, Errors) {
  auto r = toy();
  auto small = num::Tensor::zeros({3, 2});
  EXPECT_THROW(ssg::embed_nodes(r.graph, small), ContractError);
  r.graph.node_mask = {1, 1, 0, 0};
  r.graph.node_class = {1, 3, 0, 0};
  EXPECT_THROW(ssg::embed_nodes(r.graph, num::Tensor::zeros({4, 2})), ContractError);
}

}  // namespace
