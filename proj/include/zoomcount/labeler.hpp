#pragma once

#include <array>
#include <charconv>
#include <map>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "zoomcount/core.hpp"
#include "zoomcount/io.hpp"
#include "zoomcount/rse.hpp"
#include "zoomcount/tiler.hpp"

namespace zoomcount {

/// Per-dataset class cut points: LC is (0, 5%], MC is (5%, 20%], HC is above
/// 20% of `max_count`. Comparisons are exact in integer arithmetic.
struct LabelThresholds {
  std::int64_t max_count = 1;

  explicit LabelThresholds(std::int64_t max) : max_count(max) {
    if (max < 1) throw RangeError("max_count must be >= 1");
  }

  double cut_low() const { return 0.05 * static_cast<double>(max_count); }
  double cut_mid() const { return 0.20 * static_cast<double>(max_count); }
};

inline std::int64_t count_in_region(const ScenePack& scene, const PatchRegion& region) {
  std::int64_t n = 0;
  for (const auto& p : scene.points) n += region.contains(p) ? 1 : 0;
  return n;
}

inline CrowdClass label_patch(std::int64_t count, const LabelThresholds& th) {
  if (count < 0) throw RangeError("negative people count");
  if (count == 0) return CrowdClass::NC;
  if (100 * count <= 5 * th.max_count) return CrowdClass::LC;
  if (100 * count <= 20 * th.max_count) return CrowdClass::MC;
  return CrowdClass::HC;
}

/// Ground-truth class of every Normal-grid patch, in plan order.
inline std::vector<std::pair<PatchRegion, CrowdClass>> label_normal_grid(
    const ScenePack& scene, const LabelThresholds& th) {
  std::vector<std::pair<PatchRegion, CrowdClass>> out;
  for (const auto& r : tile_normal(scene).patches)
    out.emplace_back(r, label_patch(count_in_region(scene, r), th));
  return out;
}

inline PatchClassCounts scene_pcc(const ScenePack& scene, const LabelThresholds& th) {
  PatchClassCounts pcc;
  for (const auto& [region, label] : label_normal_grid(scene, th)) ++pcc[label];
  return pcc;
}

// ---------------------------------------------------------------------------
// CDC patch dataset
// ---------------------------------------------------------------------------

struct CdcSample {
  std::string image_id;
  PatchRegion region;
  CrowdClass label = CrowdClass::NC;
};

/// Thrown when rejection sampling runs out of attempts; carries what was
/// collected so far.
class DatasetShortfall : public Error {
 public:
  DatasetShortfall(std::array<std::int64_t, 4> missing, std::vector<CdcSample> partial)
      : Error(describe(missing)), missing_(missing), partial_(std::move(partial)) {}

  const std::array<std::int64_t, 4>& missing() const { return missing_; }
  const std::vector<CdcSample>& partial() const { return partial_; }

 private:
  static std::string describe(const std::array<std::int64_t, 4>& missing) {
    std::string s = "attempt budget exhausted; shortfall:";
    for (CrowdClass c : kAllCrowdClasses)
      if (missing[static_cast<int>(c)] > 0)
        s += " " + std::string(to_token(c)) + "=" + std::to_string(missing[static_cast<int>(c)]);
    return s;
  }

  std::array<std::int64_t, 4> missing_;
  std::vector<CdcSample> partial_;
};

inline Scale scale_for_size(int size) {
  switch (size) {
    case kZoomInTile: return Scale::Two;
    case kNormalTile: return Scale::One;
    case kZoomOutTile: return Scale::Half;
    default: throw RangeError("patch size must be 112, 224 or 448");
  }
}

struct CdcOptions {
  std::int64_t per_class = 1;
  std::vector<int> sizes = {kZoomInTile, kNormalTile, kZoomOutTile};
  std::uint64_t seed = 0;
  std::int64_t attempt_budget = 1'000'000;
};

/// Rejection-samples randomly placed square patches until every class has
/// `per_class` examples. Output is in acceptance order.
inline std::vector<CdcSample> gen_cdc_dataset(std::span<const ScenePack> scenes,
                                              const LabelThresholds& th, const CdcOptions& opt) {
  if (opt.per_class < 1) throw RangeError("per_class must be >= 1");
  if (scenes.empty()) throw RangeError("gen_cdc_dataset: no scenes");
  if (opt.sizes.empty()) throw RangeError("gen_cdc_dataset: no patch sizes");
  for (int s : opt.sizes) scale_for_size(s);

  std::mt19937_64 rng(detail::derive_seed(opt.seed, "cdc"));
  std::uniform_int_distribution<std::size_t> pick_scene(0, scenes.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_size(0, opt.sizes.size() - 1);

  std::array<std::int64_t, 4> have{};
  std::vector<CdcSample> out;
  const auto done = [&] {
    for (auto h : have)
      if (h < opt.per_class) return false;
    return true;
  };
  for (std::int64_t attempt = 0; attempt < opt.attempt_budget && !done(); ++attempt) {
    const ScenePack& scene = scenes[pick_scene(rng)];
    const int size = opt.sizes[pick_size(rng)];
    std::uniform_int_distribution<int> px(0, std::max(0, scene.width - size));
    std::uniform_int_distribution<int> py(0, std::max(0, scene.height - size));
    const int x0 = px(rng);
    const int y0 = py(rng);
    const PatchRegion region{x0, y0, size, size, scale_for_size(size)};
    const CrowdClass label = label_patch(count_in_region(scene, region), th);
    auto& slot = have[static_cast<int>(label)];
    if (slot >= opt.per_class) continue;
    ++slot;
    out.push_back({scene.image_id, region, label});
  }
  if (!done()) {
    std::array<std::int64_t, 4> missing{};
    for (int i = 0; i < 4; ++i) missing[i] = opt.per_class - have[i];
    throw DatasetShortfall(missing, std::move(out));
  }
  return out;
}

// ---------------------------------------------------------------------------
// RFDB decision dataset
// ---------------------------------------------------------------------------

struct RfdbRow {
  FeatureVector features;
  RouteLabel label = RouteLabel::Normal;
  std::string source_image;

  friend bool operator==(const RfdbRow&, const RfdbRow&) = default;
};

/// Route labels from the Rule-Set Engine applied to ground-truth tallies.
struct RseOraclePolicy {
  RuleMask mask;
};

/// Route labels from an externally curated image_id -> label map.
struct ExternalPolicy {
  std::map<std::string, RouteLabel> labels;
};

using RouteLabelPolicy = std::variant<RseOraclePolicy, ExternalPolicy>;

class LabelingError : public Error {
 public:
  using Error::Error;
};

inline ExternalPolicy load_external_policy(const std::filesystem::path& path) {
  ExternalPolicy policy;
  try {
    const auto doc = nlohmann::json::parse(read_text_file(path));
    if (!doc.is_object()) throw ParseError("external labels: expected a JSON object");
    for (const auto& [id, v] : doc.items()) policy.labels[id] = parse_route(v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("external labels " + path.string() + ": " + e.what());
  }
  return policy;
}

inline std::vector<RfdbRow> gen_rfdb_dataset(std::span<const ScenePack> scenes,
                                             const LabelThresholds& th,
                                             const RouteLabelPolicy& policy) {
  std::vector<RfdbRow> rows;
  rows.reserve(scenes.size());
  for (const auto& scene : scenes) {
    const PatchClassCounts pcc = scene_pcc(scene, th);
    RfdbRow row{pcc_to_features(pcc), RouteLabel::Normal, scene.image_id};
    if (const auto* rse = std::get_if<RseOraclePolicy>(&policy)) {
      row.label = rse_decide(pcc, rse->mask).route;
    } else {
      const auto& ext = std::get<ExternalPolicy>(policy);
      const auto it = ext.labels.find(scene.image_id);
      if (it == ext.labels.end())
        throw LabelingError("external policy has no label for image '" + scene.image_id + "'");
      row.label = it->second;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline double parse_double(std::string_view s, const char* what) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ParseError(std::string("malformed ") + what + " '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline constexpr std::string_view kRfdbCsvHeader = "f_nc,f_lc,f_mc,f_hc,label,image_id";

inline std::string rfdb_to_csv(std::span<const RfdbRow> rows) {
  std::string out(kRfdbCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    for (double f : r.features.value) out += detail::format_double(f) + ',';
    out += std::string(to_token(r.label)) + ',' + r.source_image + '\n';
  }
  return out;
}

inline std::vector<RfdbRow> parse_rfdb_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines.front() != kRfdbCsvHeader)
    throw ParseError("rfdb csv: missing header '" + std::string(kRfdbCsvHeader) + "'");
  std::vector<RfdbRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string_view> cells;
    std::string_view line = lines[i];
    // image_id is last and may itself contain commas
    for (int c = 0; c < 5; ++c) {
      const auto comma = line.find(',');
      if (comma == std::string_view::npos)
        throw ParseError("rfdb csv: line " + std::to_string(i + 1) + " has too few fields");
      cells.push_back(line.substr(0, comma));
      line.remove_prefix(comma + 1);
    }
    if (line.empty()) throw ParseError("rfdb csv: line " + std::to_string(i + 1) + " lacks image_id");
    RfdbRow row;
    for (int c = 0; c < 4; ++c) row.features.value[c] = detail::parse_double(cells[c], "feature");
    row.label = parse_route(cells[4]);
    row.source_image = std::string(line);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace zoomcount
