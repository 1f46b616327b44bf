#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "zoomcount/core.hpp"

namespace zoomcount {

// Seeded synthetic scenes with a mix of crowd layouts, for exercising the
// pipeline without real imagery.

enum class SynthLayout { Empty, Uniform, Clusters, Mixed, Corner, GridAligned };

struct SynthOptions {
  int min_side = 250;
  int max_side = 2000;
  int max_points = 5000;
};

namespace detail {

inline void push_clamped(ScenePack& s, double x, double y) {
  // keep strictly inside [0, w) x [0, h)
  x = std::clamp(x, 0.0, std::nextafter(static_cast<double>(s.width), 0.0));
  y = std::clamp(y, 0.0, std::nextafter(static_cast<double>(s.height), 0.0));
  s.points.push_back({x, y});
}

}  // namespace detail

inline ScenePack synth_scene(const std::string& image_id, std::uint64_t seed, const SynthOptions& opt = {},
                             std::optional<SynthLayout> layout = std::nullopt) {
  std::mt19937_64 rng(detail::derive_seed(seed, image_id));
  std::uniform_int_distribution<int> side(opt.min_side, opt.max_side);
  ScenePack s;
  s.image_id = image_id;
  s.width = side(rng);
  s.height = side(rng);
  const auto kind = layout ? *layout : static_cast<SynthLayout>(std::uniform_int_distribution<int>(0, 5)(rng));
  const int n = kind == SynthLayout::Empty ? 0 : std::uniform_int_distribution<int>(1, opt.max_points)(rng);
  std::uniform_real_distribution<double> ux(0, s.width), uy(0, s.height);

  switch (kind) {
    case SynthLayout::Empty:
      break;
    case SynthLayout::Uniform:
      for (int i = 0; i < n; ++i) detail::push_clamped(s, ux(rng), uy(rng));
      break;
    case SynthLayout::Clusters:
    case SynthLayout::Mixed: {
      const int blobs = std::uniform_int_distribution<int>(1, 6)(rng);
      std::vector<std::pair<Point, double>> centers;
      for (int b = 0; b < blobs; ++b)
        centers.push_back({{ux(rng), uy(rng)}, std::uniform_real_distribution<double>(10, 150)(rng)});
      const int background = kind == SynthLayout::Mixed ? n / 5 : 0;
      for (int i = 0; i < background; ++i) detail::push_clamped(s, ux(rng), uy(rng));
      std::uniform_int_distribution<int> which(0, blobs - 1);
      for (int i = background; i < n; ++i) {
        const auto& [c, sd] = centers[which(rng)];
        std::normal_distribution<double> gx(c.x, sd), gy(c.y, sd);
        detail::push_clamped(s, gx(rng), gy(rng));
      }
      break;
    }
    case SynthLayout::Corner: {
      std::uniform_real_distribution<double> cx(0, s.width / 3.0), cy(0, s.height / 3.0);
      for (int i = 0; i < n; ++i) detail::push_clamped(s, cx(rng), cy(rng));
      break;
    }
    case SynthLayout::GridAligned: {
      // heads exactly on 112-px lattice lines probe half-open membership
      std::uniform_int_distribution<int> gx(0, (s.width - 1) / 112), gy(0, (s.height - 1) / 112);
      for (int i = 0; i < n; ++i) {
        if (i % 2 == 0)
          detail::push_clamped(s, 112.0 * gx(rng), 112.0 * gy(rng));
        else
          detail::push_clamped(s, ux(rng), uy(rng));
      }
      break;
    }
  }
  return s;
}

inline std::vector<ScenePack> synth_suite(std::size_t count, std::uint64_t seed, const SynthOptions& opt = {}) {
  std::vector<ScenePack> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05zu", i);
    out.push_back(synth_scene(id, seed, opt));
  }
  return out;
}

}  // namespace zoomcount
