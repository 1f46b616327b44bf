#include <random>
#include <set>

#include "gtest/gtest.h"
#include "test_util.hpp"
#include "zoomcount/labeler.hpp"
#include "zoomcount/synth.hpp"

using namespace zoomcount;
using zoomcount::testing::strip_scene;

namespace {

// Straight floating-point reading of the class definitions.
CrowdClass reference_label(std::int64_t count, std::int64_t max_count) {
  if (count == 0) return CrowdClass::NC;
  const double c = static_cast<double>(count);
  if (c <= static_cast<double>(max_count) * 5 / 100) return CrowdClass::LC;
  if (c <= static_cast<double>(max_count) * 20 / 100) return CrowdClass::MC;
  return CrowdClass::HC;
}

}  // namespace

TEST(CountInRegion, Examples) {
  const ScenePack empty{"e", 448, 448, {}, std::nullopt};
  EXPECT_EQ(count_in_region(empty, {0, 0, 224, 224}), 0);

  const ScenePack edge{"e", 448, 448, {{224, 5}, {223.5, 5}}, std::nullopt};
  EXPECT_EQ(count_in_region(edge, {0, 0, 224, 224}), 1);
  EXPECT_EQ(count_in_region(edge, {224, 0, 224, 224}), 1);

  const auto ten = strip_scene("t", {4, 6});
  EXPECT_EQ(count_in_region(ten, {0, 0, 224, 224}) + count_in_region(ten, {224, 0, 224, 224}), 10);
}

TEST(LabelPatch, Thresholds) {
  const LabelThresholds th(1000);
  EXPECT_EQ(label_patch(0, th), CrowdClass::NC);
  EXPECT_EQ(label_patch(1, th), CrowdClass::LC);
  EXPECT_EQ(label_patch(50, th), CrowdClass::LC);
  EXPECT_EQ(label_patch(51, th), CrowdClass::MC);
  EXPECT_EQ(label_patch(200, th), CrowdClass::MC);
  EXPECT_EQ(label_patch(201, th), CrowdClass::HC);
  EXPECT_THROW(label_patch(-1, th), RangeError);
  EXPECT_THROW(LabelThresholds(0), RangeError);
}

TEST(LabelPatch, AgreesWithReferenceAndIsMonotone) {
  for (std::int64_t max = 1; max <= 400; ++max) {
    const LabelThresholds th(max);
    CrowdClass prev = CrowdClass::NC;
    for (std::int64_t c = 0; c <= max + 5; ++c) {
      const auto got = label_patch(c, th);
      ASSERT_EQ(got, reference_label(c, max)) << "max=" << max << " count=" << c;
      ASSERT_GE(static_cast<int>(got), static_cast<int>(prev));
      prev = got;
    }
  }
}

TEST(ScenePcc, Examples) {
  const LabelThresholds th(100);  // cut_low 5, cut_mid 20
  EXPECT_EQ(scene_pcc({"e", 448, 448, {}, std::nullopt}, th), PatchClassCounts(4, 0, 0, 0));
  EXPECT_EQ(scene_pcc(strip_scene("a", {25, 0}), th), PatchClassCounts(1, 0, 0, 1));
  EXPECT_EQ(scene_pcc(strip_scene("b", {5}), th), PatchClassCounts(0, 1, 0, 0));
}

TEST(ScenePcc, TalliesSumToGridSize) {
  const LabelThresholds th(80);
  for (const auto& s : synth_suite(40, 4, {250, 1200, 2000}))
    EXPECT_EQ(scene_pcc(s, th).all(), static_cast<std::int64_t>(tile_normal(s).patches.size()));
}

TEST(GenCdc, ImpossibleClassesReportShortfall) {
  const std::vector<ScenePack> scenes = {{"e", 500, 500, {}, std::nullopt}};
  CdcOptions opt;
  opt.attempt_budget = 2000;
  try {
    gen_cdc_dataset(scenes, LabelThresholds(100), opt);
    FAIL();
  } catch (const DatasetShortfall& e) {
    EXPECT_EQ(e.missing()[0], 0);
    EXPECT_EQ(e.missing()[1], 1);
    EXPECT_EQ(e.missing()[2], 1);
    EXPECT_EQ(e.missing()[3], 1);
    EXPECT_EQ(e.partial().size(), 1u);
  }
}

TEST(GenCdc, BalancedAndReproducible) {
  // one dense cluster with a sparse halo so every class is reachable
  ScenePack s{"c", 900, 900, {}, std::nullopt};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(450, 60);
  for (int i = 0; i < 1500; ++i) s.points.push_back({std::clamp(g(rng), 0.0, 899.0), std::clamp(g(rng), 0.0, 899.0)});
  const std::vector<ScenePack> scenes = {s};
  const LabelThresholds th(1000);

  CdcOptions opt;
  opt.per_class = 1;
  opt.seed = 17;
  const auto a = gen_cdc_dataset(scenes, th, opt);
  const auto b = gen_cdc_dataset(scenes, th, opt);
  ASSERT_EQ(a.size(), 4u);
  std::set<CrowdClass> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].region, b[i].region);
    EXPECT_EQ(a[i].label, label_patch(count_in_region(s, a[i].region), th));
    EXPECT_EQ(scaled_length(a[i].region.w, a[i].region.scale), kModelPatch);
    seen.insert(a[i].label);
  }
  EXPECT_EQ(seen.size(), 4u);

  opt.per_class = 20;
  const auto x = gen_cdc_dataset(scenes, th, opt);
  opt.seed = 18;
  const auto y = gen_cdc_dataset(scenes, th, opt);
  std::array<int, 4> hx{}, hy{};
  for (const auto& r : x) ++hx[static_cast<int>(r.label)];
  for (const auto& r : y) ++hy[static_cast<int>(r.label)];
  EXPECT_EQ(hx, (std::array<int, 4>{20, 20, 20, 20}));
  EXPECT_EQ(hx, hy);
  int differing = 0;
  for (std::size_t i = 0; i < x.size(); ++i) differing += x[i].region == y[i].region ? 0 : 1;
  EXPECT_GT(differing, 40);
}

TEST(GenRfdb, RseOraclePolicy) {
  const LabelThresholds th(100);
  // {NC:5, LC:3} and {LC:2, MC:5, HC:3}
  const std::vector<ScenePack> scenes = {strip_scene("low", {1, 1, 1, 0, 0, 0, 0, 0}),
                                         strip_scene("mid", {1, 1, 10, 10, 10, 10, 10, 30, 30, 30})};
  const auto rows = gen_rfdb_dataset(scenes, th, RseOraclePolicy{});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].features.value, (std::array<double, 4>{62.5, 37.5, 0, 0}));
  EXPECT_EQ(rows[0].label, RouteLabel::ZoomOut);
  EXPECT_EQ(rows[1].label, RouteLabel::Normal);
  EXPECT_EQ(rows[1].source_image, "mid");
}

TEST(GenRfdb, ExternalPolicy) {
  const LabelThresholds th(100);
  const std::vector<ScenePack> scenes = {strip_scene("low", {1, 0})};
  ExternalPolicy ext;
  ext.labels["low"] = RouteLabel::ZoomIn;
  EXPECT_EQ(gen_rfdb_dataset(scenes, th, ext)[0].label, RouteLabel::ZoomIn);
  ext.labels.clear();
  try {
    gen_rfdb_dataset(scenes, th, ext);
    FAIL();
  } catch (const LabelingError& e) {
    EXPECT_NE(std::string(e.what()).find("low"), std::string::npos);
  }
}

TEST(GenRfdb, OracleLabelsMatchRuleEngine) {
  const LabelThresholds th(60);
  const auto scenes = synth_suite(60, 8, {224, 1500, 3000});
  const auto rows = gen_rfdb_dataset(scenes, th, RseOraclePolicy{});
  for (std::size_t i = 0; i < rows.size(); ++i)
    EXPECT_EQ(rows[i].label, rse_decide(scene_pcc(scenes[i], th)).route);
}

TEST(RfdbCsv, RoundTripAndErrors) {
  const LabelThresholds th(60);
  const auto rows = gen_rfdb_dataset(synth_suite(30, 2, {224, 1500, 3000}), th, RseOraclePolicy{});
  const auto text = rfdb_to_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), "f_nc,f_lc,f_mc,f_hc,label,image_id");
  EXPECT_EQ(parse_rfdb_csv(text), rows);
  EXPECT_THROW(parse_rfdb_csv("a,b\n"), ParseError);
  EXPECT_THROW(parse_rfdb_csv("f_nc,f_lc,f_mc,f_hc,label,image_id\n1,2,3\n"), ParseError);
  EXPECT_THROW(parse_rfdb_csv("f_nc,f_lc,f_mc,f_hc,label,image_id\n1,2,3,x,zin,a\n"), ParseError);
  EXPECT_THROW(parse_rfdb_csv("f_nc,f_lc,f_mc,f_hc,label,image_id\n1,2,3,4,up,a\n"), ParseError);
}
