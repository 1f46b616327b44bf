#pragma once

#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "zoomcount/core.hpp"

namespace zoomcount {

inline constexpr int kNormalTile = 224;
inline constexpr int kZoomInTile = 112;
inline constexpr int kZoomOutTile = 448;

struct TilePlan {
  RouteLabel route = RouteLabel::Normal;
  int padded_width = 0;
  int padded_height = 0;
  std::vector<PatchRegion> patches;  // row-major
};

/// Rounds each dimension up to the next multiple of `tile`.
constexpr std::pair<int, int> pad_dims(int width, int height, int tile) {
  const auto up = [tile](int v) { return ((v + tile - 1) / tile) * tile; };
  return {up(width), up(height)};
}

namespace detail {

inline TilePlan grid_plan(const ScenePack& scene, int tile, Scale scale, RouteLabel route) {
  TilePlan plan;
  plan.route = route;
  std::tie(plan.padded_width, plan.padded_height) = pad_dims(scene.width, scene.height, tile);
  plan.patches.reserve(static_cast<std::size_t>(plan.padded_width / tile) *
                       (plan.padded_height / tile));
  for (int y = 0; y < plan.padded_height; y += tile)
    for (int x = 0; x < plan.padded_width; x += tile) plan.patches.push_back({x, y, tile, tile, scale});
  return plan;
}

}  // namespace detail

inline TilePlan tile_normal(const ScenePack& scene) {
  return detail::grid_plan(scene, kNormalTile, Scale::One, RouteLabel::Normal);
}

/// 448 grid over the 448-padded canvas, delivered at 1/2. Every patch is
/// returned; NC elimination happens when the caller re-classifies them.
inline TilePlan tile_zoom_out(const ScenePack& scene) {
  return detail::grid_plan(scene, kZoomOutTile, Scale::Half, RouteLabel::ZoomOut);
}

/// Splits every non-NC parent of the Normal grid into four 112 quarters at 2x.
/// `parent_labels` must list the Normal grid in order.
inline TilePlan tile_zoom_in(const ScenePack& scene,
                             std::span<const std::pair<PatchRegion, CrowdClass>> parent_labels) {
  const TilePlan normal = tile_normal(scene);
  if (parent_labels.size() != normal.patches.size())
    throw ConsistencyError("zoom-in: expected " + std::to_string(normal.patches.size()) +
                           " parent labels for '" + scene.image_id + "', got " +
                           std::to_string(parent_labels.size()));
  TilePlan plan;
  plan.route = RouteLabel::ZoomIn;
  plan.padded_width = normal.padded_width;
  plan.padded_height = normal.padded_height;
  for (std::size_t i = 0; i < parent_labels.size(); ++i) {
    const auto& [parent, label] = parent_labels[i];
    if (!(parent == normal.patches[i]))
      throw ConsistencyError("zoom-in: parent label " + std::to_string(i) +
                             " does not match the normal grid of '" + scene.image_id + "'");
    if (label == CrowdClass::NC) continue;
    for (int dy = 0; dy < kNormalTile; dy += kZoomInTile)
      for (int dx = 0; dx < kNormalTile; dx += kZoomInTile)
        plan.patches.push_back(
            {parent.x0 + dx, parent.y0 + dy, kZoomInTile, kZoomInTile, Scale::Two});
  }
  return plan;
}

}  // namespace zoomcount
