#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "zoomcount/core.hpp"
#include "zoomcount/io.hpp"
#include "zoomcount/labeler.hpp"

namespace zoomcount {

// Stand-ins for the patch classifier and the patch count regressor. All
// implementations must be safe for concurrent const calls.

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual CrowdClass classify(std::string_view image_id, const PatchRegion& region) const = 0;
};

class RegressorBackend {
 public:
  virtual ~RegressorBackend() = default;
  /// Non-negative (real-valued) people count for one patch.
  virtual double count(std::string_view image_id, const PatchRegion& region) const = 0;
};

inline PatchClassCounts accumulate(std::span<const CrowdClass> labels) {
  PatchClassCounts pcc;
  for (CrowdClass c : labels) ++pcc[c];
  return pcc;
}

/// Relative Gaussian perturbation: count * (1 + sigma * z), clamped at 0.
/// Each patch draws from its own stream keyed by (seed, patch key).
struct NoiseModel {
  double sigma = 0;
  std::uint64_t seed = 0;
};

inline double apply_noise(double exact, const NoiseModel& noise, std::string_view key) {
  if (noise.sigma == 0 || exact == 0) return exact;
  std::mt19937_64 rng(detail::derive_seed(noise.seed, key));
  std::normal_distribution<double> z(0.0, 1.0);
  return std::max(0.0, exact * (1.0 + noise.sigma * z(rng)));
}

inline CrowdClass oracle_classify(const ScenePack& scene, const LabelThresholds& th,
                                  const PatchRegion& region) {
  return label_patch(count_in_region(scene, region), th);
}

inline double oracle_count(const ScenePack& scene, const PatchRegion& region,
                           const std::optional<NoiseModel>& noise = std::nullopt) {
  const auto exact = static_cast<double>(count_in_region(scene, region));
  return noise ? apply_noise(exact, *noise, patch_key(scene.image_id, region)) : exact;
}

/// Points sorted by x for fast half-open rectangle counts.
class PointIndex {
 public:
  explicit PointIndex(const ScenePack& scene) : points_(scene.points) {
    std::sort(points_.begin(), points_.end(),
              [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  }

  std::int64_t count(const PatchRegion& r) const {
    const auto by_x = [](const Point& p, double v) { return p.x < v; };
    auto lo = std::lower_bound(points_.begin(), points_.end(), static_cast<double>(r.x0), by_x);
    auto hi = std::lower_bound(lo, points_.end(), static_cast<double>(r.x0) + r.w, by_x);
    const double y_end = static_cast<double>(r.y0) + r.h;
    return std::count_if(lo, hi, [&](const Point& p) { return p.y >= r.y0 && p.y < y_end; });
  }

 private:
  std::vector<Point> points_;
};

namespace detail {

class SceneIndexMap {
 public:
  explicit SceneIndexMap(std::span<const ScenePack> scenes) {
    for (const auto& s : scenes) index_.try_emplace(s.image_id, s);
  }

  const PointIndex& at(std::string_view image_id) const {
    const auto it = index_.find(std::string(image_id));
    if (it == index_.end()) throw ConsistencyError("oracle: unknown image '" + std::string(image_id) + "'");
    return it->second;
  }

 private:
  std::unordered_map<std::string, PointIndex> index_;
};

}  // namespace detail

/// Labels a patch by its true head count; independent of the patch scale.
class OracleClassifier final : public ClassifierBackend {
 public:
  OracleClassifier(std::span<const ScenePack> scenes, LabelThresholds th)
      : index_(scenes), th_(th) {}

  CrowdClass classify(std::string_view image_id, const PatchRegion& region) const override {
    return label_patch(index_.at(image_id).count(region), th_);
  }

 private:
  detail::SceneIndexMap index_;
  LabelThresholds th_;
};

class OracleRegressor final : public RegressorBackend {
 public:
  explicit OracleRegressor(std::span<const ScenePack> scenes,
                           std::optional<NoiseModel> noise = std::nullopt)
      : index_(scenes), noise_(noise) {}

  double count(std::string_view image_id, const PatchRegion& region) const override {
    const auto exact = static_cast<double>(index_.at(image_id).count(region));
    return noise_ ? apply_noise(exact, *noise_, patch_key(image_id, region)) : exact;
  }

 private:
  detail::SceneIndexMap index_;
  std::optional<NoiseModel> noise_;
};

// ---------------------------------------------------------------------------
// Replay of externally produced model outputs
// ---------------------------------------------------------------------------

class ReplayMiss : public Error {
 public:
  explicit ReplayMiss(const std::string& key) : Error("replay miss: no entry for key '" + key + "'") {}
};

class ReplayTable {
 public:
  using Entry = std::variant<CrowdClass, double>;

  void insert(std::string key, Entry e) {
    parse_patch_key(key);
    if (const auto* c = std::get_if<double>(&e); c && !(*c >= 0))
      throw ParseError("replay: negative count for key '" + key + "'");
    entries_.insert_or_assign(std::move(key), e);
  }

  const Entry& at(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ReplayMiss(key);
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, Entry> entries_;
};

/// One JSON object per line: {"key": ..., "class": "nc|lc|mc|hc"} or
/// {"key": ..., "count": real}.
inline ReplayTable parse_replay_jsonl(std::string_view text) {
  ReplayTable table;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(text)) {
    ++line_no;
    try {
      const auto obj = nlohmann::json::parse(line);
      auto key = obj.at("key").get<std::string>();
      if (auto it = obj.find("class"); it != obj.end())
        table.insert(std::move(key), parse_crowd_class(it->get<std::string>()));
      else if (auto jt = obj.find("count"); jt != obj.end())
        table.insert(std::move(key), jt->get<double>());
      else
        throw ParseError("entry has neither 'class' nor 'count'");
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("replay line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("replay line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

inline ReplayTable load_replay(const std::filesystem::path& path) {
  return parse_replay_jsonl(read_text_file(path));
}

inline CrowdClass replay_classify(const ReplayTable& table, std::string_view image_id,
                                  const PatchRegion& region) {
  const auto key = patch_key(image_id, region);
  const auto* c = std::get_if<CrowdClass>(&table.at(key));
  if (!c) throw ParseError("replay: key '" + key + "' holds a count, expected a class");
  return *c;
}

inline double replay_count(const ReplayTable& table, std::string_view image_id,
                           const PatchRegion& region) {
  const auto key = patch_key(image_id, region);
  const auto* v = std::get_if<double>(&table.at(key));
  if (!v) throw ParseError("replay: key '" + key + "' holds a class, expected a count");
  return *v;
}

class ReplayClassifier final : public ClassifierBackend {
 public:
  explicit ReplayClassifier(ReplayTable table) : table_(std::move(table)) {}
  CrowdClass classify(std::string_view image_id, const PatchRegion& region) const override {
    return replay_classify(table_, image_id, region);
  }

 private:
  ReplayTable table_;
};

class ReplayRegressor final : public RegressorBackend {
 public:
  explicit ReplayRegressor(ReplayTable table) : table_(std::move(table)) {}
  double count(std::string_view image_id, const PatchRegion& region) const override {
    return replay_count(table_, image_id, region);
  }

 private:
  ReplayTable table_;
};

}  // namespace zoomcount
