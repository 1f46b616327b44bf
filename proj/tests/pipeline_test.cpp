#include <random>

#include "gtest/gtest.h"
#include "test_util.hpp"
#include "zoomcount/pipeline.hpp"
#include "zoomcount/synth.hpp"

using namespace zoomcount;
using zoomcount::testing::strip_scene;

namespace {

struct Oracles {
  explicit Oracles(std::vector<ScenePack> s, std::int64_t max = 100)
      : scenes(std::move(s)), classifier(scenes, LabelThresholds(max)), regressor(scenes) {}
  std::vector<ScenePack> scenes;
  OracleClassifier classifier;
  OracleRegressor regressor;
};

}  // namespace

TEST(CountImage, OracleIdentityOnEveryRoute) {
  Oracles o(synth_suite(60, 21));
  const auto engine = DecisionEngine::rse();
  for (const auto& s : o.scenes) {
    const auto gt = static_cast<std::int64_t>(s.gt_count());
    EXPECT_EQ(count_image(s, o.classifier, o.regressor, engine).estimate, gt) << s.image_id;
    for (auto route : kAllRoutes)
      EXPECT_EQ(count_image(s, o.classifier, o.regressor, engine, {route}).estimate, gt)
          << s.image_id << " " << to_token(route);
  }
}

TEST(CountImage, EmptySceneZoomsOut) {
  Oracles o({ScenePack{"bg", 900, 500, {}, std::nullopt}});
  const auto r = count_image(o.scenes[0], o.classifier, o.regressor, DecisionEngine::rse());
  EXPECT_EQ(r.route, RouteLabel::ZoomOut);
  EXPECT_EQ(r.fired_rule, Rule::R1);  // R4 also holds, R1 is tested first
  EXPECT_EQ(r.pcc, PatchClassCounts(15, 0, 0, 0));  // 1120 x 672 padded
  EXPECT_EQ(r.estimate, 0);
  EXPECT_TRUE(r.patch_counts.empty());
  EXPECT_EQ(r.discarded_nc, 6);  // 1344 x 896 padded
}

TEST(CountImage, PatchSetsPerRoute) {
  // two non-empty 224 patches out of four
  Oracles o({strip_scene("s", {30, 0, 90, 0})}, 100);
  const auto& s = o.scenes[0];
  const auto engine = DecisionEngine::rse();

  auto r = count_image(s, o.classifier, o.regressor, engine, {RouteLabel::Normal});
  EXPECT_EQ(r.pcc, PatchClassCounts(2, 0, 0, 2));
  EXPECT_EQ(r.patch_counts.size(), 2u);
  EXPECT_EQ(r.discarded_nc, 2);
  EXPECT_EQ(r.estimate, 120);

  r = count_image(s, o.classifier, o.regressor, engine, {RouteLabel::ZoomIn});
  EXPECT_EQ(r.patch_counts.size(), 8u);
  for (const auto& [region, c] : r.patch_counts) {
    EXPECT_EQ(region.w, 112);
    EXPECT_EQ(region.scale, Scale::Two);
  }
  EXPECT_EQ(r.discarded_nc, 2);
  EXPECT_EQ(r.estimate, 120);

  r = count_image(s, o.classifier, o.regressor, engine, {RouteLabel::ZoomOut});
  EXPECT_EQ(r.patch_counts.size(), 2u);
  EXPECT_EQ(r.discarded_nc, 0);
  EXPECT_EQ(r.estimate, 120);
}

TEST(CountImage, BlockDisableRoutesNormal) {
  Oracles o(synth_suite(40, 22));
  RuleMask mask;
  mask.zoom_in_enabled = false;
  mask.zoom_out_enabled = false;
  for (const auto& s : o.scenes) {
    const auto r = count_image(s, o.classifier, o.regressor, DecisionEngine::rse(mask));
    EXPECT_EQ(r.route, RouteLabel::Normal);
    EXPECT_FALSE(r.fired_rule.has_value());
    EXPECT_EQ(r.estimate, static_cast<std::int64_t>(s.gt_count()));
  }
}

TEST(CountImage, NoisyRegressorIsDeterministic) {
  const auto scenes = synth_suite(20, 23);
  const OracleClassifier c(scenes, LabelThresholds(100));
  const OracleRegressor noisy(scenes, NoiseModel{0.2, 9});
  const OracleRegressor again(scenes, NoiseModel{0.2, 9});
  bool differs = false;
  for (const auto& s : scenes) {
    const auto a = count_image(s, c, noisy, DecisionEngine::rse());
    const auto b = count_image(s, c, again, DecisionEngine::rse());
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_GE(a.estimate, 0);
    differs |= a.estimate != static_cast<std::int64_t>(s.gt_count());
  }
  EXPECT_TRUE(differs);
}

TEST(DecisionEngine, ForestRoutesAndGate) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> t(0, 30);
  std::vector<RfdbRow> rows;
  std::vector<PatchClassCounts> probes;
  while (rows.size() < 400) {
    const PatchClassCounts p(t(rng), t(rng), t(rng), t(rng));
    if (p.all() == 0) continue;
    rows.push_back({pcc_to_features(p), rse_decide(p).route, ""});
    probes.push_back(p);
  }
  const auto forest = forest_train(rows, ForestParams{1, 2, 4, 0, false});
  const auto engine = DecisionEngine::rfdb(forest);
  EXPECT_TRUE(engine.uses_forest());
  for (const auto& p : probes) {
    const auto d = engine.decide(p);
    EXPECT_EQ(d.route, rse_decide(p).route);
    EXPECT_FALSE(d.fired_rule.has_value());
  }
  RuleMask no_zin;
  no_zin.zoom_in_enabled = false;
  const auto gated = DecisionEngine::rfdb(forest, no_zin);
  for (const auto& p : probes) EXPECT_NE(gated.decide(p).route, RouteLabel::ZoomIn);
}

TEST(RouteStats, CountsAndJson) {
  std::vector<CountResult> rs(6);
  rs[0].route = rs[1].route = RouteLabel::ZoomIn;
  rs[2].route = RouteLabel::ZoomOut;
  const auto s = route_stats(rs);
  EXPECT_EQ(s, (RouteStats{2, 3, 1}));
  EXPECT_EQ(to_json(s).dump(), R"({"zin":2,"normal":3,"zout":1})");
}

TEST(CountResult, JsonRoundTrip) {
  Oracles o(synth_suite(10, 24));
  for (const auto& s : o.scenes) {
    const auto r = count_image(s, o.classifier, o.regressor, DecisionEngine::rse());
    const auto back = count_result_from_json(nlohmann::json::parse(to_json(r).dump()));
    EXPECT_EQ(back.image_id, r.image_id);
    EXPECT_EQ(back.route, r.route);
    EXPECT_EQ(back.fired_rule, r.fired_rule);
    EXPECT_EQ(back.pcc, r.pcc);
    EXPECT_EQ(back.patch_counts, r.patch_counts);
    EXPECT_EQ(back.estimate, r.estimate);
    EXPECT_EQ(back.discarded_nc, r.discarded_nc);
  }
  EXPECT_THROW(count_result_from_json(nlohmann::json::parse(R"({"image_id":"a"})")), ParseError);
}
