#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "zoomcount/core.hpp"
#include "zoomcount/parallel.hpp"
#include "zoomcount/pipeline.hpp"

namespace zoomcount {

namespace detail {

inline void check_paired(std::span<const double> gt, std::span<const double> pred) {
  if (gt.size() != pred.size()) throw RangeError("metric: length mismatch");
  if (gt.empty()) throw RangeError("metric: empty input");
}

}  // namespace detail

inline double mae(std::span<const double> gt, std::span<const double> pred) {
  detail::check_paired(gt, pred);
  double s = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) s += std::abs(gt[i] - pred[i]);
  return s / static_cast<double>(gt.size());
}

inline double mnae(std::span<const double> gt, std::span<const double> pred) {
  detail::check_paired(gt, pred);
  double s = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0) throw RangeError("MNAE undefined for zero ground truth");
    s += std::abs(gt[i] - pred[i]) / gt[i];
  }
  return s / static_cast<double>(gt.size());
}

inline double mse_loss(std::span<const double> gt, std::span<const double> pred) {
  detail::check_paired(gt, pred);
  double s = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) s += (pred[i] - gt[i]) * (pred[i] - gt[i]);
  return s / static_cast<double>(gt.size());
}

inline double rmse(std::span<const double> gt, std::span<const double> pred) {
  return std::sqrt(mse_loss(gt, pred));
}

inline double dm_accuracy(std::span<const RouteLabel> pred, std::span<const RouteLabel> gt) {
  if (pred.size() != gt.size()) throw RangeError("dm_accuracy: length mismatch");
  if (pred.empty()) throw RangeError("dm_accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == gt[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Evaluation harness
// ---------------------------------------------------------------------------

struct EvalReport {
  std::size_t n_images = 0;
  double mae = 0;
  double mnae = 0;
  double rmse = 0;
  RouteStats stats;
  std::string engine;
  std::string ablation;
  std::vector<std::int64_t> gt;          // aligned with results
  std::vector<CountResult> results;      // sorted by image_id
};

struct EvalOptions {
  unsigned workers = 1;
  std::optional<RouteLabel> force_route;
};

inline std::string describe(const DecisionEngine& engine) { return engine.uses_forest() ? "rfdb" : "rse"; }

inline std::string describe(const RuleMask& mask) {
  std::string s;
  for (int i = 1; i <= 8; ++i)
    if (!mask.enabled(static_cast<Rule>(i))) s += (s.empty() ? "-" : ",-") + to_token(static_cast<Rule>(i));
  if (!mask.zoom_in_enabled) s += s.empty() ? "-zin" : ",-zin";
  if (!mask.zoom_out_enabled) s += s.empty() ? "-zout" : ",-zout";
  return s.empty() ? "full" : s;
}

/// Runs the pipeline on every scene and reduces the metrics. Results are
/// ordered by image_id, so the report does not depend on `workers`.
inline EvalReport run_eval(std::span<const ScenePack> scenes, const ClassifierBackend& classifier,
                           const RegressorBackend& regressor, const DecisionEngine& engine,
                           const EvalOptions& opt = {}) {
  if (scenes.empty()) throw RangeError("run_eval: no scenes");
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scenes[a].image_id < scenes[b].image_id; });

  EvalReport rep;
  rep.n_images = scenes.size();
  rep.engine = describe(engine);
  rep.ablation = describe(engine.mask());
  rep.results.resize(scenes.size());
  parallel_for(scenes.size(), opt.workers, [&](std::size_t i) {
    rep.results[i] = count_image(scenes[order[i]], classifier, regressor, engine, {opt.force_route});
  });

  std::vector<double> gt, pred;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    rep.gt.push_back(static_cast<std::int64_t>(scenes[order[i]].gt_count()));
    gt.push_back(static_cast<double>(rep.gt.back()));
    pred.push_back(static_cast<double>(rep.results[i].estimate));
  }
  rep.mae = mae(gt, pred);
  rep.mnae = mnae(gt, pred);
  rep.rmse = rmse(gt, pred);
  rep.stats = route_stats(rep.results);
  return rep;
}

inline nlohmann::ordered_json to_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["n_images"] = rep.n_images;
  j["mae"] = rep.mae;
  j["mnae"] = rep.mnae;
  j["rmse"] = rep.rmse;
  j["route_stats"] = to_json(rep.stats);
  j["engine"] = rep.engine;
  j["ablation"] = rep.ablation;
  auto images = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rep.results.size(); ++i) {
    const auto& r = rep.results[i];
    images.push_back({{"image_id", r.image_id},
                      {"gt", rep.gt[i]},
                      {"estimate", r.estimate},
                      {"residual", r.estimate - rep.gt[i]},
                      {"route", to_token(r.route)},
                      {"fired_rule", r.fired_rule ? nlohmann::ordered_json(to_token(*r.fired_rule)) : nullptr}});
  }
  j["images"] = std::move(images);
  return j;
}

inline std::string report_to_csv(const EvalReport& rep) {
  std::string out = "image_id,gt,estimate,route,fired_rule\n";
  for (std::size_t i = 0; i < rep.results.size(); ++i) {
    const auto& r = rep.results[i];
    out += r.image_id + ',' + std::to_string(rep.gt[i]) + ',' + std::to_string(r.estimate) + ',' +
           std::string(to_token(r.route)) + ',' + (r.fired_rule ? to_token(*r.fired_rule) : "") + '\n';
  }
  return out;
}

}  // namespace zoomcount
