#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zoomcount/backends.hpp"
#include "zoomcount/core.hpp"
#include "zoomcount/rfdb.hpp"
#include "zoomcount/rse.hpp"
#include "zoomcount/tiler.hpp"

namespace zoomcount {

/// Route decision from either the rule engine or a trained forest. The mask's
/// block switches apply to both; its rule switches only to the rule engine.
class DecisionEngine {
 public:
  static DecisionEngine rse(RuleMask mask = {}) { return DecisionEngine(mask, nullptr); }
  static DecisionEngine rfdb(const DecisionForest& forest, RuleMask mask = {}) {
    return DecisionEngine(mask, &forest);
  }

  bool uses_forest() const { return forest_ != nullptr; }
  const RuleMask& mask() const { return mask_; }

  RseDecision decide(const PatchClassCounts& pcc) const {
    if (!forest_) return rse_decide(pcc, mask_);
    const RouteLabel route = mask_.gate(forest_predict(*forest_, pcc_to_features(pcc)).label);
    return {route, std::nullopt};
  }

 private:
  DecisionEngine(RuleMask mask, const DecisionForest* forest) : mask_(mask), forest_(forest) {}

  RuleMask mask_;
  const DecisionForest* forest_;
};

struct CountResult {
  std::string image_id;
  RouteLabel route = RouteLabel::Normal;
  std::optional<Rule> fired_rule;
  PatchClassCounts pcc;
  std::vector<std::pair<PatchRegion, double>> patch_counts;
  std::int64_t estimate = 0;
  std::int64_t discarded_nc = 0;
};

struct CountOptions {
  /// Bypass the decision engine (used to check every tiling path).
  std::optional<RouteLabel> force_route;
};

inline CountResult count_image(const ScenePack& scene, const ClassifierBackend& classifier,
                               const RegressorBackend& regressor, const DecisionEngine& engine,
                               const CountOptions& opt = {}) {
  CountResult res;
  res.image_id = scene.image_id;

  // Stage 1: classify the 224 grid and accumulate class tallies.
  const TilePlan normal = tile_normal(scene);
  std::vector<std::pair<PatchRegion, CrowdClass>> labeled;
  labeled.reserve(normal.patches.size());
  std::vector<CrowdClass> labels;
  labels.reserve(normal.patches.size());
  for (const auto& r : normal.patches) {
    labeled.emplace_back(r, classifier.classify(scene.image_id, r));
    labels.push_back(labeled.back().second);
  }
  res.pcc = accumulate(labels);

  // Stage 2: route.
  if (opt.force_route) {
    res.route = *opt.force_route;
  } else {
    const RseDecision d = engine.decide(res.pcc);
    res.route = d.route;
    res.fired_rule = d.fired_rule;
  }

  // Stage 3: route-specific patches, regressed.
  const auto regress = [&](const PatchRegion& r) {
    res.patch_counts.emplace_back(r, regressor.count(scene.image_id, r));
  };
  switch (res.route) {
    case RouteLabel::Normal:
      res.discarded_nc = res.pcc.nc();
      for (const auto& [r, label] : labeled)
        if (label != CrowdClass::NC) regress(r);
      break;
    case RouteLabel::ZoomIn:
      res.discarded_nc = res.pcc.nc();
      for (const auto& r : tile_zoom_in(scene, labeled).patches) regress(r);
      break;
    case RouteLabel::ZoomOut:
      for (const auto& r : tile_zoom_out(scene).patches) {
        if (classifier.classify(scene.image_id, r) == CrowdClass::NC)
          ++res.discarded_nc;
        else
          regress(r);
      }
      break;
  }

  double total = 0;
  for (const auto& [r, c] : res.patch_counts) total += c;
  res.estimate = round_count(total);
  return res;
}

struct RouteStats {
  std::int64_t zoom_in = 0;
  std::int64_t normal = 0;
  std::int64_t zoom_out = 0;

  friend bool operator==(const RouteStats&, const RouteStats&) = default;
};

inline RouteStats route_stats(std::span<const CountResult> results) {
  RouteStats s;
  for (const auto& r : results) {
    switch (r.route) {
      case RouteLabel::ZoomIn: ++s.zoom_in; break;
      case RouteLabel::Normal: ++s.normal; break;
      case RouteLabel::ZoomOut: ++s.zoom_out; break;
    }
  }
  return s;
}

inline nlohmann::ordered_json to_json(const PatchClassCounts& pcc) {
  return {{"nc", pcc.nc()}, {"lc", pcc.lc()}, {"mc", pcc.mc()}, {"hc", pcc.hc()}};
}

inline nlohmann::ordered_json to_json(const RouteStats& s) {
  return {{"zin", s.zoom_in}, {"normal", s.normal}, {"zout", s.zoom_out}};
}

inline nlohmann::ordered_json to_json(const CountResult& r) {
  nlohmann::ordered_json j;
  j["image_id"] = r.image_id;
  j["route"] = to_token(r.route);
  j["fired_rule"] = r.fired_rule ? nlohmann::ordered_json(to_token(*r.fired_rule)) : nullptr;
  j["pcc"] = to_json(r.pcc);
  auto patches = nlohmann::ordered_json::array();
  for (const auto& [region, count] : r.patch_counts)
    patches.push_back({{"key", patch_key(r.image_id, region)}, {"count", count}});
  j["patch_counts"] = std::move(patches);
  j["estimate"] = r.estimate;
  j["discarded_nc"] = r.discarded_nc;
  return j;
}

inline CountResult count_result_from_json(const nlohmann::json& j) {
  CountResult r;
  try {
    r.image_id = j.at("image_id").get<std::string>();
    r.route = parse_route(j.at("route").get<std::string>());
    if (const auto& fr = j.at("fired_rule"); !fr.is_null()) r.fired_rule = parse_rule(fr.get<std::string>());
    const auto& p = j.at("pcc");
    r.pcc = {p.at("nc").get<std::int64_t>(), p.at("lc").get<std::int64_t>(), p.at("mc").get<std::int64_t>(),
             p.at("hc").get<std::int64_t>()};
    for (const auto& pc : j.at("patch_counts"))
      r.patch_counts.emplace_back(parse_patch_key(pc.at("key").get<std::string>()).region,
                                  pc.at("count").get<double>());
    r.estimate = j.at("estimate").get<std::int64_t>();
    r.discarded_nc = j.at("discarded_nc").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("count result: ") + e.what());
  }
  return r;
}

}  // namespace zoomcount
