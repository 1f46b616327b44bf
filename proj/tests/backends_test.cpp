#include <algorithm>
#include <random>

#include "gtest/gtest.h"
#include "test_util.hpp"
#include "zoomcount/backends.hpp"
#include "zoomcount/synth.hpp"

using namespace zoomcount;
using zoomcount::testing::strip_scene;

TEST(OracleClassify, Examples) {
  const LabelThresholds th(100);
  const ScenePack empty{"e", 448, 448, {}, std::nullopt};
  EXPECT_EQ(oracle_classify(empty, th, {0, 0, 224, 224}), CrowdClass::NC);

  const auto dense = strip_scene("d", {60, 0});
  const PatchRegion half{0, 0, 448, 448, Scale::Half};
  EXPECT_EQ(oracle_classify(dense, th, half), CrowdClass::HC);
  PatchRegion one = half;
  one.scale = Scale::One;
  EXPECT_EQ(oracle_classify(dense, th, one), oracle_classify(dense, th, half));
}

TEST(OracleClassifier, AgreesWithLabelerOnRandomRegions) {
  const auto scenes = synth_suite(25, 5);
  const LabelThresholds th(150);
  const OracleClassifier oracle(scenes, th);
  std::mt19937_64 rng(3);
  for (const auto& s : scenes) {
    std::uniform_int_distribution<int> px(-50, s.width), py(-50, s.height), side(1, 600);
    for (int i = 0; i < 100; ++i) {
      const PatchRegion r{px(rng), py(rng), side(rng), side(rng), static_cast<Scale>(i % 3)};
      ASSERT_EQ(oracle.classify(s.image_id, r), label_patch(count_in_region(s, r), th));
    }
  }
  EXPECT_THROW(oracle.classify("missing", {0, 0, 1, 1}), ConsistencyError);
}

TEST(Accumulate, Examples) {
  EXPECT_EQ(accumulate({}), PatchClassCounts());
  std::vector<CrowdClass> labels = {CrowdClass::NC, CrowdClass::NC, CrowdClass::HC};
  EXPECT_EQ(accumulate(labels), PatchClassCounts(2, 0, 0, 1));

  std::mt19937 rng(1);
  std::uniform_int_distribution<int> c(0, 3);
  std::vector<CrowdClass> many(97);
  for (auto& l : many) l = static_cast<CrowdClass>(c(rng));
  const auto before = accumulate(many);
  EXPECT_EQ(before.all(), 97);
  std::shuffle(many.begin(), many.end(), rng);
  EXPECT_EQ(accumulate(many), before);
}

TEST(OracleCount, Examples) {
  const auto s = strip_scene("s", {7, 3});
  EXPECT_EQ(oracle_count(s, {0, 0, 224, 224}), 7.0);

  const PatchRegion parent{0, 0, 224, 224};
  double children = 0;
  for (int dy = 0; dy < 224; dy += 112)
    for (int dx = 0; dx < 224; dx += 112) children += oracle_count(s, {dx, dy, 112, 112, Scale::Two});
  EXPECT_EQ(children, oracle_count(s, parent));

  const NoiseModel noise{0.1, 42};
  const double a = oracle_count(s, parent, noise);
  const double b = oracle_count(s, parent, noise);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, 7.0);
  EXPECT_GE(a, 0.0);
  EXPECT_EQ(oracle_count(s, {448, 0, 224, 224}, noise), 0.0);
}

TEST(OracleRegressor, ConservesOverPartitionsAndMatchesFreeFunction) {
  const auto scenes = synth_suite(20, 12);
  const OracleRegressor exact(scenes);
  const OracleRegressor noisy(scenes, NoiseModel{0.2, 9});
  for (const auto& s : scenes) {
    double total = 0;
    for (const auto& r : tile_zoom_out(s).patches) {
      total += exact.count(s.image_id, r);
      EXPECT_EQ(noisy.count(s.image_id, r), oracle_count(s, r, NoiseModel{0.2, 9}));
    }
    EXPECT_EQ(total, static_cast<double>(s.points.size()));
  }
}

TEST(Replay, ParsesAndAnswers) {
  const auto table = parse_replay_jsonl(
      "{\"key\": \"img:0,0,224,224@1\", \"class\": \"hc\"}\n"
      "\n"
      "{\"key\": \"img:0,0,112,112@2\", \"count\": 12.5}\n");
  EXPECT_EQ(table.size(), 2u);
  EXPECT_EQ(replay_classify(table, "img", {0, 0, 224, 224}), CrowdClass::HC);
  EXPECT_EQ(replay_count(table, "img", {0, 0, 112, 112, Scale::Two}), 12.5);
  try {
    replay_classify(table, "img", {224, 0, 224, 224});
    FAIL();
  } catch (const ReplayMiss& e) {
    EXPECT_NE(std::string(e.what()).find("img:224,0,224,224@1"), std::string::npos);
  }
  // same region, different scale: a miss, not a silent answer
  EXPECT_THROW(replay_classify(table, "img", {0, 0, 224, 224, Scale::Half}), ReplayMiss);
  EXPECT_THROW(replay_count(table, "img", {0, 0, 224, 224}), ParseError);
}

TEST(Replay, RejectsBadLines) {
  EXPECT_THROW(parse_replay_jsonl("{\"key\": \"bad\", \"class\": \"hc\"}"), ParseError);
  EXPECT_THROW(parse_replay_jsonl("{\"key\": \"a:0,0,1,1@1\", \"class\": \"zz\"}"), ParseError);
  EXPECT_THROW(parse_replay_jsonl("{\"key\": \"a:0,0,1,1@1\", \"count\": -1}"), ParseError);
  EXPECT_THROW(parse_replay_jsonl("{\"key\": \"a:0,0,1,1@1\"}"), ParseError);
  EXPECT_THROW(parse_replay_jsonl("not json"), ParseError);
}

TEST(Replay, BackendsReproduceRecordedOutputs) {
  // Record an oracle's answers, replay them, and compare.
  const auto scenes = synth_suite(10, 31);
  const LabelThresholds th(90);
  const OracleClassifier oracle(scenes, th);
  std::string lines;
  for (const auto& s : scenes)
    for (const auto& r : tile_normal(s).patches)
      lines += nlohmann::json({{"key", patch_key(s.image_id, r)}, {"class", to_token(oracle.classify(s.image_id, r))}})
                   .dump() + "\n";
  const ReplayClassifier replay(parse_replay_jsonl(lines));
  for (const auto& s : scenes)
    for (const auto& r : tile_normal(s).patches) EXPECT_EQ(replay.classify(s.image_id, r), oracle.classify(s.image_id, r));
}
