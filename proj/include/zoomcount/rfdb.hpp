#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "zoomcount/core.hpp"
#include "zoomcount/labeler.hpp"
#include "zoomcount/parallel.hpp"

namespace zoomcount {

// Random-forest route classifier over the four class-percentage features.
//
// Trees are grown CART-style on Gini impurity. Split quality is compared in
// exact integer arithmetic (weighted child Gini is a ratio of class-count sums),
// so the chosen split, and therefore the serialized forest, does not depend on
// floating-point evaluation order.

inline constexpr int kNumFeatures = 4;
inline constexpr int kNumRoutes = 3;

using RouteHistogram = std::array<std::int64_t, kNumRoutes>;

/// Gini impurity sum_i F_i (1 - F_i) of a class histogram.
inline double gini(std::span<const std::int64_t, kNumRoutes> hist) {
  std::int64_t total = 0;
  for (auto c : hist) {
    if (c < 0) throw RangeError("gini: negative class count");
    total += c;
  }
  if (total == 0) throw RangeError("gini: empty histogram");
  double g = 0;
  for (auto c : hist) {
    const double f = static_cast<double>(c) / static_cast<double>(total);
    g += f * (1.0 - f);
  }
  return g;
}

/// Majority label; ties go to the earlier RouteLabel.
inline RouteLabel majority(const RouteHistogram& hist) {
  int best = 0;
  for (int i = 1; i < kNumRoutes; ++i)
    if (hist[i] > hist[best]) best = i;
  return static_cast<RouteLabel>(best);
}

struct ForestParams {
  int n_trees = 100;
  int min_samples = 2;
  int features_per_split = 2;
  std::uint64_t seed = 0;
  bool bootstrap = true;

  void validate() const {
    if (n_trees < 1) throw RangeError("n_trees must be >= 1");
    if (min_samples < 2) throw RangeError("min_samples must be >= 2");
    if (features_per_split < 1 || features_per_split > kNumFeatures)
      throw RangeError("features_per_split must be in 1..4");
  }

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  RouteHistogram hist{};
  RouteLabel label = RouteLabel::Normal;

  bool is_leaf() const { return feature < 0; }
  std::int64_t samples() const { return hist[0] + hist[1] + hist[2]; }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Flattened binary tree; node 0 is the root. A sample goes left iff
/// features[feature] <= threshold.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(const FeatureVector& x) const {
    int i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[i];
  }

  RouteLabel predict(const FeatureVector& x) const { return leaf_for(x).label; }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct DecisionForest {
  ForestParams params;
  std::vector<DecisionTree> trees;
  std::string dataset_fingerprint;
  std::vector<std::uint64_t> tree_seeds;

  friend bool operator==(const DecisionForest&, const DecisionForest&) = default;
};

/// Indices of a with-replacement resample of size n.
inline std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw RangeError("bootstrap: no rows");
  std::mt19937_64 rng(detail::derive_seed(seed, "bootstrap"));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

inline std::vector<RfdbRow> bootstrap_sample(std::span<const RfdbRow> rows, std::uint64_t seed) {
  std::vector<RfdbRow> out;
  out.reserve(rows.size());
  for (auto i : bootstrap_indices(rows.size(), seed)) out.push_back(rows[i]);
  return out;
}

namespace detail {

using i128 = __int128;

// Split score sum_c(n_l,c^2)/n_l + sum_c(n_r,c^2)/n_r held as a fraction;
// maximizing it minimizes the weighted mean child Gini.
struct SplitScore {
  i128 num = 0;
  i128 den = 1;

  static SplitScore of(const RouteHistogram& l, const RouteHistogram& r) {
    i128 sl = 0, sr = 0, nl = 0, nr = 0;
    for (int c = 0; c < kNumRoutes; ++c) {
      sl += static_cast<i128>(l[c]) * l[c];
      sr += static_cast<i128>(r[c]) * r[c];
      nl += l[c];
      nr += r[c];
    }
    return {sl * nr + sr * nl, nl * nr};
  }

  static SplitScore parent(const RouteHistogram& h) {
    i128 s = 0, n = 0;
    for (int c = 0; c < kNumRoutes; ++c) {
      s += static_cast<i128>(h[c]) * h[c];
      n += h[c];
    }
    return {s, n};
  }

  friend bool operator>(const SplitScore& a, const SplitScore& b) { return a.num * b.den > b.num * a.den; }
  friend bool operator==(const SplitScore& a, const SplitScore& b) { return a.num * b.den == b.num * a.den; }
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const RfdbRow> rows, const ForestParams& params, std::uint64_t seed)
      : rows_(rows), params_(params), rng_(derive_seed(seed, "split")) {}

  DecisionTree build(std::vector<std::size_t> idx) {
    grow(idx);
    return std::move(tree_);
  }

 private:
  struct Candidate {
    int feature = -1;
    double threshold = 0;
    SplitScore score;
  };

  RouteHistogram histogram(std::span<const std::size_t> idx) const {
    RouteHistogram h{};
    for (auto i : idx) ++h[static_cast<int>(rows_[i].label)];
    return h;
  }

  double value(std::size_t row, int f) const { return rows_[row].features[f]; }

  // Best threshold on one feature, or nullopt if the feature is constant here.
  std::optional<Candidate> best_on_feature(std::vector<std::size_t>& idx, int f,
                                           const RouteHistogram& total) const {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return value(a, f) < value(b, f); });
    std::optional<Candidate> best;
    RouteHistogram left{};
    for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
      ++left[static_cast<int>(rows_[idx[k]].label)];
      const double a = value(idx[k], f);
      const double b = value(idx[k + 1], f);
      if (!(a < b)) continue;
      RouteHistogram right{};
      for (int c = 0; c < kNumRoutes; ++c) right[c] = total[c] - left[c];
      const SplitScore s = SplitScore::of(left, right);
      if (!best || s > best->score) {
        double mid = a + (b - a) / 2;
        if (!(mid < b)) mid = a;
        best = Candidate{f, mid, s};
      }
    }
    return best;
  }

  int emit_leaf(const RouteHistogram& h) {
    TreeNode n;
    n.hist = h;
    n.label = majority(h);
    tree_.nodes.push_back(n);
    return static_cast<int>(tree_.nodes.size()) - 1;
  }

  int grow(std::vector<std::size_t>& idx) {
    const RouteHistogram h = histogram(idx);
    const int nonzero = static_cast<int>(std::count_if(h.begin(), h.end(), [](auto c) { return c > 0; }));
    if (nonzero <= 1 || static_cast<std::int64_t>(idx.size()) < params_.min_samples) return emit_leaf(h);

    std::array<int, kNumFeatures> order{0, 1, 2, 3};
    std::shuffle(order.begin(), order.end(), rng_);

    // Examine features_per_split features; if none yields an impurity
    // decrease, keep drawing from the remaining ones.
    const SplitScore parent = SplitScore::parent(h);
    std::optional<Candidate> best;
    for (int k = 0; k < kNumFeatures; ++k) {
      if (k >= params_.features_per_split && best) break;
      const int f = order[k];
      auto c = best_on_feature(idx, f, h);
      if (!c || !(c->score > parent)) continue;
      if (!best || c->score > best->score ||
          (c->score == best->score &&
           (c->feature < best->feature || (c->feature == best->feature && c->threshold < best->threshold))))
        best = c;
    }
    if (!best) return emit_leaf(h);

    std::vector<std::size_t> left, right;
    for (auto i : idx) (value(i, best->feature) <= best->threshold ? left : right).push_back(i);

    const int self = static_cast<int>(tree_.nodes.size());
    TreeNode node;
    node.feature = best->feature;
    node.threshold = best->threshold;
    node.hist = h;
    node.label = majority(h);
    tree_.nodes.push_back(node);
    idx.clear();
    idx.shrink_to_fit();
    const int l = grow(left);
    const int r = grow(right);
    tree_.nodes[self].left = l;
    tree_.nodes[self].right = r;
    return self;
  }

  std::span<const RfdbRow> rows_;
  const ForestParams& params_;
  std::mt19937_64 rng_;
  DecisionTree tree_;
};

}  // namespace detail

/// Grows one CART tree on `rows` (no resampling).
inline DecisionTree build_tree(std::span<const RfdbRow> rows, const ForestParams& params,
                               std::uint64_t seed) {
  if (rows.empty()) throw RangeError("build_tree: no rows");
  params.validate();
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  return detail::TreeBuilder(rows, params, seed).build(std::move(idx));
}

inline std::string dataset_fingerprint(std::span<const RfdbRow> rows) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(rfdb_to_csv(rows))));
  return buf;
}

/// Tree k uses seed params.seed + k for both its bootstrap draw and its split
/// feature draws, so the result is independent of `workers`.
inline DecisionForest forest_train(std::span<const RfdbRow> dataset, const ForestParams& params,
                                   unsigned workers = 1) {
  if (dataset.empty()) throw RangeError("forest_train: empty dataset");
  params.validate();
  DecisionForest forest;
  forest.params = params;
  forest.dataset_fingerprint = dataset_fingerprint(dataset);
  forest.tree_seeds.resize(params.n_trees);
  for (int k = 0; k < params.n_trees; ++k) forest.tree_seeds[k] = params.seed + static_cast<std::uint64_t>(k);
  forest.trees.resize(params.n_trees);
  parallel_for(static_cast<std::size_t>(params.n_trees), workers, [&](std::size_t k) {
    const auto seed = forest.tree_seeds[k];
    std::vector<std::size_t> idx(dataset.size());
    if (params.bootstrap)
      idx = bootstrap_indices(dataset.size(), seed);
    else
      std::iota(idx.begin(), idx.end(), 0);
    forest.trees[k] = detail::TreeBuilder(dataset, params, seed).build(std::move(idx));
  });
  return forest;
}

struct ForestVote {
  RouteLabel label = RouteLabel::Normal;
  std::array<int, kNumRoutes> votes{};  // indexed by RouteLabel
};

inline ForestVote forest_predict(const DecisionForest& forest, const FeatureVector& x) {
  if (forest.trees.empty()) throw RangeError("forest_predict: untrained forest");
  ForestVote v;
  for (const auto& t : forest.trees) ++v.votes[static_cast<int>(t.predict(x))];
  int best = 0;
  for (int i = 1; i < kNumRoutes; ++i)
    if (v.votes[i] > v.votes[best]) best = i;
  v.label = static_cast<RouteLabel>(best);
  return v;
}

struct FeatureImportance {
  std::array<double, kNumFeatures> fi{};
  bool has_splits = false;
};

/// Mean decrease in impurity, averaged over trees and normalized to sum 1.
inline FeatureImportance feature_importance(const DecisionForest& forest) {
  FeatureImportance out;
  if (forest.trees.empty()) return out;
  std::array<double, kNumFeatures> sum{};
  for (const auto& tree : forest.trees) {
    const double root = static_cast<double>(tree.nodes.front().samples());
    std::array<double, kNumFeatures> per_tree{};
    for (const auto& n : tree.nodes) {
      if (n.is_leaf()) continue;
      const auto& l = tree.nodes[n.left];
      const auto& r = tree.nodes[n.right];
      const auto weighted = [&](const TreeNode& m) {
        return static_cast<double>(m.samples()) / root * gini(m.hist);
      };
      per_tree[n.feature] += weighted(n) - weighted(l) - weighted(r);
      out.has_splits = true;
    }
    for (int f = 0; f < kNumFeatures; ++f) sum[f] += per_tree[f];
  }
  if (!out.has_splits) return out;
  double total = 0;
  for (int f = 0; f < kNumFeatures; ++f) {
    sum[f] = std::max(0.0, sum[f] / static_cast<double>(forest.trees.size()));
    total += sum[f];
  }
  for (int f = 0; f < kNumFeatures; ++f) out.fi[f] = total > 0 ? sum[f] / total : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

inline double forest_accuracy(const DecisionForest& forest, std::span<const RfdbRow> rows) {
  if (rows.empty()) throw RangeError("accuracy: no rows");
  std::size_t hit = 0;
  for (const auto& r : rows) hit += forest_predict(forest, r.features).label == r.label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

inline RouteLabel majority_label(std::span<const RfdbRow> rows) {
  RouteHistogram h{};
  for (const auto& r : rows) ++h[static_cast<int>(r.label)];
  return majority(h);
}

struct TrainValidationSplit {
  std::vector<RfdbRow> train;
  std::vector<RfdbRow> validation;
};

/// Seeded hold-out split; both halves keep the original row order.
inline TrainValidationSplit split_train_validation(std::span<const RfdbRow> rows, double fraction,
                                                   std::uint64_t seed) {
  if (!(fraction >= 0 && fraction < 1)) throw RangeError("validation fraction must be in [0, 1)");
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(detail::derive_seed(seed, "validation"));
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
  if (fraction > 0 && rows.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, rows.size() - 1);
  std::vector<char> is_val(rows.size(), 0);
  for (std::size_t i = 0; i < n_val; ++i) is_val[idx[i]] = 1;
  TrainValidationSplit out;
  for (std::size_t i = 0; i < rows.size(); ++i) (is_val[i] ? out.validation : out.train).push_back(rows[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json forest_to_json(const DecisionForest& forest) {
  using oj = nlohmann::ordered_json;
  oj doc;
  doc["format"] = "zoomcount-forest/1";
  doc["params"] = {{"n_trees", forest.params.n_trees},
                   {"min_samples", forest.params.min_samples},
                   {"features_per_split", forest.params.features_per_split},
                   {"bootstrap", forest.params.bootstrap},
                   {"seed", forest.params.seed}};
  doc["metadata"] = {{"dataset_fingerprint", forest.dataset_fingerprint},
                     {"tree_seeds", forest.tree_seeds}};
  auto trees = oj::array();
  for (const auto& t : forest.trees) {
    auto nodes = oj::array();
    for (const auto& n : t.nodes) {
      oj j;
      if (n.is_leaf()) {
        j["label"] = to_token(n.label);
      } else {
        j["feature"] = n.feature;
        j["threshold"] = n.threshold;
        j["left"] = n.left;
        j["right"] = n.right;
      }
      j["hist"] = n.hist;
      nodes.push_back(std::move(j));
    }
    trees.push_back(std::move(nodes));
  }
  doc["trees"] = std::move(trees);
  return doc;
}

inline DecisionForest forest_from_json(const nlohmann::json& doc) {
  DecisionForest f;
  try {
    if (doc.at("format").get<std::string>() != "zoomcount-forest/1")
      throw ParseError("forest: unsupported format");
    const auto& p = doc.at("params");
    f.params.n_trees = p.at("n_trees").get<int>();
    f.params.min_samples = p.at("min_samples").get<int>();
    f.params.features_per_split = p.at("features_per_split").get<int>();
    f.params.bootstrap = p.at("bootstrap").get<bool>();
    f.params.seed = p.at("seed").get<std::uint64_t>();
    f.params.validate();
    const auto& m = doc.at("metadata");
    f.dataset_fingerprint = m.at("dataset_fingerprint").get<std::string>();
    f.tree_seeds = m.at("tree_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& jt : doc.at("trees")) {
      DecisionTree t;
      for (const auto& jn : jt) {
        TreeNode n;
        n.hist = jn.at("hist").get<RouteHistogram>();
        if (auto it = jn.find("label"); it != jn.end()) {
          n.label = parse_route(it->get<std::string>());
        } else {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
          n.label = majority(n.hist);
        }
        t.nodes.push_back(n);
      }
      const auto size = static_cast<int>(t.nodes.size());
      if (size == 0) throw ParseError("forest: empty tree");
      for (int i = 0; i < size; ++i) {
        const auto& n = t.nodes[i];
        if (n.is_leaf()) continue;
        if (n.feature >= kNumFeatures || n.left <= i || n.right <= i || n.left >= size || n.right >= size)
          throw ParseError("forest: invalid node " + std::to_string(i));
      }
      f.trees.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("forest: ") + e.what());
  }
  if (f.trees.empty()) throw ParseError("forest: no trees");
  return f;
}

inline DecisionForest load_forest(const std::filesystem::path& path) {
  try {
    return forest_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("forest " + path.string() + ": " + e.what());
  }
}

inline std::string forest_to_string(const DecisionForest& forest) { return forest_to_json(forest).dump() + "\n"; }

}  // namespace zoomcount
