#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace zoomcount {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (manifest, raster, replay, CSV, forest).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Region or index outside its valid domain.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied inputs disagree with each other (e.g. label grid vs plan).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

enum class CrowdClass : std::uint8_t { NC = 0, LC = 1, MC = 2, HC = 3 };

inline constexpr std::array<CrowdClass, 4> kAllCrowdClasses = {
    CrowdClass::NC, CrowdClass::LC, CrowdClass::MC, CrowdClass::HC};

inline std::string_view to_token(CrowdClass c) {
  switch (c) {
    case CrowdClass::NC: return "nc";
    case CrowdClass::LC: return "lc";
    case CrowdClass::MC: return "mc";
    case CrowdClass::HC: return "hc";
  }
  return "?";
}

inline CrowdClass parse_crowd_class(std::string_view s) {
  if (s == "nc") return CrowdClass::NC;
  if (s == "lc") return CrowdClass::LC;
  if (s == "mc") return CrowdClass::MC;
  if (s == "hc") return CrowdClass::HC;
  throw ParseError("unknown crowd class '" + std::string(s) + "'");
}

// The enumerator order is the tie-break order used wherever votes or
// histograms are resolved.
enum class RouteLabel : std::uint8_t { Normal = 0, ZoomOut = 1, ZoomIn = 2 };

inline constexpr std::array<RouteLabel, 3> kAllRoutes = {
    RouteLabel::Normal, RouteLabel::ZoomOut, RouteLabel::ZoomIn};

inline std::string_view to_token(RouteLabel r) {
  switch (r) {
    case RouteLabel::Normal: return "normal";
    case RouteLabel::ZoomOut: return "zout";
    case RouteLabel::ZoomIn: return "zin";
  }
  return "?";
}

inline RouteLabel parse_route(std::string_view s) {
  if (s == "normal") return RouteLabel::Normal;
  if (s == "zout") return RouteLabel::ZoomOut;
  if (s == "zin") return RouteLabel::ZoomIn;
  throw ParseError("unknown route label '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Scenes and patches
// ---------------------------------------------------------------------------

struct Point {
  double x = 0;
  double y = 0;
};

struct ScenePack {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Point> points;
  std::optional<std::filesystem::path> raster_path;

  std::size_t gt_count() const { return points.size(); }

  void validate() const {
    if (image_id.empty()) throw ParseError("scene: empty image_id");
    if (width < 1 || height < 1)
      throw ParseError("scene '" + image_id + "': width and height must be positive");
    for (const auto& p : points) {
      if (!(p.x >= 0 && p.x < width && p.y >= 0 && p.y < height)) {
        std::ostringstream os;
        os << "scene '" << image_id << "': point (" << p.x << ", " << p.y
           << ") outside " << width << "x" << height;
        throw ParseError(os.str());
      }
    }
  }
};

/// Rescale factor applied to a region before a model sees it.
enum class Scale : std::uint8_t { Half, One, Two };

inline std::string_view to_token(Scale s) {
  switch (s) {
    case Scale::Half: return "0.5";
    case Scale::One: return "1";
    case Scale::Two: return "2";
  }
  return "?";
}

inline Scale parse_scale(std::string_view s) {
  if (s == "0.5") return Scale::Half;
  if (s == "1") return Scale::One;
  if (s == "2") return Scale::Two;
  throw ParseError("unknown scale '" + std::string(s) + "'");
}

/// Edge length after applying `s`.
constexpr int scaled_length(int len, Scale s) {
  switch (s) {
    case Scale::Half: return len / 2;
    case Scale::One: return len;
    case Scale::Two: return len * 2;
  }
  return len;
}

/// Axis-aligned rectangle in original-image pixels. Membership is half-open.
struct PatchRegion {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
  Scale scale = Scale::One;

  bool contains(const Point& p) const {
    return p.x >= x0 && p.x < static_cast<double>(x0) + w && p.y >= y0 &&
           p.y < static_cast<double>(y0) + h;
  }

  friend bool operator==(const PatchRegion&, const PatchRegion&) = default;
};

/// Model-facing edge length every plan delivers.
inline constexpr int kModelPatch = 224;

inline std::string patch_key(std::string_view image_id, const PatchRegion& r) {
  std::string key(image_id);
  key += ':';
  key += std::to_string(r.x0) + ',' + std::to_string(r.y0) + ',' +
         std::to_string(r.w) + ',' + std::to_string(r.h);
  key += '@';
  key += to_token(r.scale);
  return key;
}

struct ParsedKey {
  std::string image_id;
  PatchRegion region;
};

inline ParsedKey parse_patch_key(std::string_view key) {
  const auto bad = [&] { return ParseError("malformed patch key '" + std::string(key) + "'"); };
  const auto colon = key.rfind(':');
  const auto at = key.rfind('@');
  if (colon == std::string_view::npos || colon == 0 || at == std::string_view::npos || at < colon)
    throw bad();
  ParsedKey out;
  out.image_id = std::string(key.substr(0, colon));
  std::array<int, 4> v{};
  std::string_view body = key.substr(colon + 1, at - colon - 1);
  for (int i = 0; i < 4; ++i) {
    const auto comma = body.find(',');
    const bool last = i == 3;
    if (last != (comma == std::string_view::npos)) throw bad();
    const std::string tok(body.substr(0, comma));
    if (tok.empty()) throw bad();
    std::size_t used = 0;
    try {
      v[i] = std::stoi(tok, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != tok.size()) throw bad();
    if (!last) body.remove_prefix(comma + 1);
  }
  out.region = {v[0], v[1], v[2], v[3], parse_scale(key.substr(at + 1))};
  if (out.region.w < 1 || out.region.h < 1) throw bad();
  return out;
}

// ---------------------------------------------------------------------------
// Per-image class tallies and percentage features
// ---------------------------------------------------------------------------

struct PatchClassCounts {
  std::array<std::int64_t, 4> tally{};

  PatchClassCounts() = default;
  PatchClassCounts(std::int64_t nc, std::int64_t lc, std::int64_t mc, std::int64_t hc)
      : tally{nc, lc, mc, hc} {}

  std::int64_t nc() const { return tally[0]; }
  std::int64_t lc() const { return tally[1]; }
  std::int64_t mc() const { return tally[2]; }
  std::int64_t hc() const { return tally[3]; }
  std::int64_t all() const { return tally[0] + tally[1] + tally[2] + tally[3]; }

  std::int64_t& operator[](CrowdClass c) { return tally[static_cast<int>(c)]; }
  std::int64_t operator[](CrowdClass c) const { return tally[static_cast<int>(c)]; }

  friend bool operator==(const PatchClassCounts&, const PatchClassCounts&) = default;
};

/// Class percentages (NC, LC, MC, HC), summing to 100.
struct FeatureVector {
  std::array<double, 4> value{};

  double nc() const { return value[0]; }
  double lc() const { return value[1]; }
  double mc() const { return value[2]; }
  double hc() const { return value[3]; }
  double operator[](std::size_t i) const { return value[i]; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline FeatureVector pcc_to_features(const PatchClassCounts& pcc) {
  const auto all = pcc.all();
  if (all <= 0) throw Error("empty image: no patches");
  FeatureVector f;
  for (std::size_t i = 0; i < 4; ++i) {
    if (pcc.tally[i] < 0) throw RangeError("negative patch tally");
    f.value[i] = 100.0 * static_cast<double>(pcc.tally[i]) / static_cast<double>(all);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Scene manifest
// ---------------------------------------------------------------------------

inline std::vector<ScenePack> parse_manifest(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir = {}) {
  if (!doc.is_array()) throw ParseError("manifest: top level must be a JSON array");
  std::vector<ScenePack> scenes;
  scenes.reserve(doc.size());
  for (const auto& item : doc) {
    if (!item.is_object()) throw ParseError("manifest: entries must be objects");
    ScenePack s;
    try {
      s.image_id = item.at("image_id").get<std::string>();
      const auto w = item.at("width").get<std::int64_t>();
      const auto h = item.at("height").get<std::int64_t>();
      if (w < 1 || h < 1 || w > (1 << 24) || h > (1 << 24))
        throw ParseError("manifest: scene '" + s.image_id + "' has invalid dimensions");
      s.width = static_cast<int>(w);
      s.height = static_cast<int>(h);
      for (const auto& pt : item.at("points")) {
        if (!pt.is_array() || pt.size() != 2) throw ParseError("manifest: point must be [x, y]");
        s.points.push_back({pt[0].get<double>(), pt[1].get<double>()});
      }
      if (auto it = item.find("raster"); it != item.end() && !it->is_null()) {
        std::filesystem::path p = it->get<std::string>();
        s.raster_path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("manifest: ") + e.what());
    }
    s.validate();
    scenes.push_back(std::move(s));
  }
  return scenes;
}

inline std::vector<ScenePack> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

inline nlohmann::ordered_json manifest_to_json(std::span<const ScenePack> scenes) {
  auto doc = nlohmann::ordered_json::array();
  for (const auto& s : scenes) {
    nlohmann::ordered_json item;
    item["image_id"] = s.image_id;
    item["width"] = s.width;
    item["height"] = s.height;
    auto pts = nlohmann::ordered_json::array();
    for (const auto& p : s.points) pts.push_back({p.x, p.y});
    item["points"] = std::move(pts);
    if (s.raster_path) item["raster"] = s.raster_path->string();
    doc.push_back(std::move(item));
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Small shared helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for an independent stream identified by (base seed, label).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return splitmix64(seed ^ fnv1a(label));
}

}  // namespace detail

/// Round half away from zero.
inline std::int64_t round_count(double v) { return static_cast<std::int64_t>(std::llround(v)); }

}  // namespace zoomcount
