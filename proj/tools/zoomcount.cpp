// zoomcount: command-line driver for the crowd-counting pipeline.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "zoomcount/zoomcount.hpp"

namespace fs = std::filesystem;
using namespace zoomcount;

namespace {

struct Config {
  std::string manifest;
  std::int64_t max_count = 0;
  std::string engine = "rse";
  std::string forest;
  std::string classifier = "oracle";
  std::string regressor = "oracle";
  std::string replay_class;
  std::string replay_count;
  double noise_sigma = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> disable_rules;
  std::vector<std::string> disable_blocks;
  unsigned workers = 1;
  std::string out;
};

std::vector<ScenePack> sorted_scenes(const std::string& manifest) {
  if (manifest.empty()) throw Error("--manifest is required");
  auto scenes = load_manifest(manifest);
  std::sort(scenes.begin(), scenes.end(),
            [](const ScenePack& a, const ScenePack& b) { return a.image_id < b.image_id; });
  for (std::size_t i = 1; i < scenes.size(); ++i)
    if (scenes[i].image_id == scenes[i - 1].image_id)
      throw ParseError("manifest: duplicate image_id '" + scenes[i].image_id + "'");
  return scenes;
}

LabelThresholds thresholds(const Config& c) {
  if (c.max_count < 1) throw Error("--max-count is required and must be >= 1");
  return LabelThresholds(c.max_count);
}

RuleMask rule_mask(const Config& c) {
  RuleMask m;
  for (const auto& r : c.disable_rules) m.disable(parse_rule(r));
  for (const auto& b : c.disable_blocks) {
    if (b == "zin")
      m.zoom_in_enabled = false;
    else if (b == "zout")
      m.zoom_out_enabled = false;
    else
      throw Error("--disable-block expects zin or zout, got '" + b + "'");
  }
  return m;
}

std::unique_ptr<ClassifierBackend> make_classifier(const Config& c, std::span<const ScenePack> scenes) {
  if (c.classifier == "oracle") return std::make_unique<OracleClassifier>(scenes, thresholds(c));
  if (c.classifier == "replay") {
    if (c.replay_class.empty()) throw Error("--classifier replay requires --replay-class");
    return std::make_unique<ReplayClassifier>(load_replay(c.replay_class));
  }
  throw Error("--classifier expects oracle or replay");
}

std::unique_ptr<RegressorBackend> make_regressor(const Config& c, std::span<const ScenePack> scenes) {
  if (c.regressor == "oracle") {
    std::optional<NoiseModel> noise;
    if (c.noise_sigma != 0) noise = NoiseModel{c.noise_sigma, c.seed};
    return std::make_unique<OracleRegressor>(scenes, noise);
  }
  if (c.regressor == "replay") {
    if (c.replay_count.empty()) throw Error("--regressor replay requires --replay-count");
    return std::make_unique<ReplayRegressor>(load_replay(c.replay_count));
  }
  throw Error("--regressor expects oracle or replay");
}

// The engine keeps a pointer to the forest, so the forest lives here.
struct EngineHolder {
  std::optional<DecisionForest> forest;
  std::optional<DecisionEngine> engine;
};

void make_engine(const Config& c, EngineHolder& h) {
  const RuleMask mask = rule_mask(c);
  if (c.engine == "rse") {
    h.engine = DecisionEngine::rse(mask);
  } else if (c.engine == "rfdb") {
    if (c.forest.empty()) throw Error("--engine rfdb requires --forest");
    h.forest = load_forest(c.forest);
    h.engine = DecisionEngine::rfdb(*h.forest, mask);
  } else {
    throw Error("--engine expects rse or rfdb");
  }
}

void require_out(const Config& c) {
  if (c.out.empty()) throw Error("--out is required");
}

std::string to_jsonl(const std::vector<nlohmann::ordered_json>& lines) {
  std::string s;
  for (const auto& l : lines) s += l.dump() + "\n";
  return s;
}

std::string file_safe(std::string key) {
  for (auto& ch : key)
    if (ch == '/' || ch == '\\') ch = '_';
  return key;
}

// ---------------------------------------------------------------------------

void cmd_label(const Config& c) {
  require_out(c);
  const auto scenes = sorted_scenes(c.manifest);
  const auto th = thresholds(c);
  std::vector<nlohmann::ordered_json> lines;
  for (const auto& s : scenes)
    for (const auto& [region, label] : label_normal_grid(s, th))
      lines.push_back({{"key", patch_key(s.image_id, region)}, {"class", to_token(label)}});
  write_file_atomic(c.out, to_jsonl(lines));
  std::cerr << "labeled " << lines.size() << " patches from " << scenes.size() << " scenes\n";
}

void cmd_gen_cdc(const Config& c, const CdcOptions& opt) {
  require_out(c);
  const auto scenes = sorted_scenes(c.manifest);
  const auto rows = gen_cdc_dataset(scenes, thresholds(c), opt);
  std::vector<nlohmann::ordered_json> lines;
  for (const auto& r : rows)
    lines.push_back({{"key", patch_key(r.image_id, r.region)}, {"class", to_token(r.label)}});
  write_file_atomic(c.out, to_jsonl(lines));
  std::cerr << "sampled " << rows.size() << " patches (" << opt.per_class << " per class)\n";
}

void print_label_summary(std::span<const RfdbRow> rows) {
  std::array<std::int64_t, 3> h{};
  for (const auto& r : rows) ++h[static_cast<int>(r.label)];
  nlohmann::ordered_json j;
  j["rows"] = rows.size();
  for (RouteLabel l : kAllRoutes)
    j["percent"][std::string(to_token(l))] =
        rows.empty() ? 0.0 : 100.0 * static_cast<double>(h[static_cast<int>(l)]) / static_cast<double>(rows.size());
  std::cout << j.dump() << "\n";
}

void cmd_gen_rfdb(const Config& c, const std::string& policy, const std::string& labels) {
  require_out(c);
  const auto scenes = sorted_scenes(c.manifest);
  RouteLabelPolicy p;
  if (policy == "rse-oracle") {
    p = RseOraclePolicy{};
  } else if (policy == "external") {
    if (labels.empty()) throw Error("--policy external requires --labels");
    p = load_external_policy(labels);
  } else {
    throw Error("--policy expects rse-oracle or external");
  }
  const auto rows = gen_rfdb_dataset(scenes, thresholds(c), p);
  write_file_atomic(c.out, rfdb_to_csv(rows));
  print_label_summary(rows);
}

void cmd_train_rfdb(const Config& c, const std::string& csv, ForestParams params, double val_fraction) {
  require_out(c);
  if (csv.empty()) throw Error("--csv is required");
  const auto rows = parse_rfdb_csv(read_text_file(csv));
  params.seed = c.seed;
  const auto split = split_train_validation(rows, val_fraction, c.seed);
  if (split.train.empty()) throw Error("no training rows after validation split");
  const auto forest = forest_train(split.train, params, c.workers);
  write_file_atomic(c.out, forest_to_string(forest));

  nlohmann::ordered_json j;
  j["train_rows"] = split.train.size();
  j["validation_rows"] = split.validation.size();
  j["train_accuracy"] = forest_accuracy(forest, split.train);
  if (!split.validation.empty()) {
    const RouteLabel base = majority_label(split.train);
    const auto hits = std::count_if(split.validation.begin(), split.validation.end(),
                                    [&](const RfdbRow& r) { return r.label == base; });
    j["validation_accuracy"] = forest_accuracy(forest, split.validation);
    j["majority_baseline"] = static_cast<double>(hits) / static_cast<double>(split.validation.size());
  }
  const auto fi = feature_importance(forest);
  j["feature_importance"] = {{"f_nc", fi.fi[0]}, {"f_lc", fi.fi[1]}, {"f_mc", fi.fi[2]}, {"f_hc", fi.fi[3]}};
  j["has_splits"] = fi.has_splits;
  std::cout << j.dump() << "\n";
}

void cmd_export(const Config& c, const std::string& route_arg) {
  require_out(c);
  const auto scenes = sorted_scenes(c.manifest);
  std::unique_ptr<ClassifierBackend> classifier;
  EngineHolder engine;
  if (route_arg == "auto" || route_arg == "zin") classifier = make_classifier(c, scenes);
  if (route_arg == "auto") make_engine(c, engine);

  std::vector<nlohmann::ordered_json> index;
  for (const auto& s : scenes) {
    if (!s.raster_path) throw Error("scene '" + s.image_id + "' has no raster");
    const Raster raster = read_raster(*s.raster_path);
    if (raster.width() != s.width || raster.height() != s.height)
      throw Error("raster size of '" + s.image_id + "' does not match manifest");

    const TilePlan normal = tile_normal(s);
    std::vector<std::pair<PatchRegion, CrowdClass>> labeled;
    if (classifier)
      for (const auto& r : normal.patches) labeled.emplace_back(r, classifier->classify(s.image_id, r));

    RouteLabel route;
    if (route_arg == "auto") {
      std::vector<CrowdClass> labels;
      for (const auto& [r, l] : labeled) labels.push_back(l);
      route = engine.engine->decide(accumulate(labels)).route;
    } else {
      route = parse_route(route_arg);
    }
    TilePlan plan;
    switch (route) {
      case RouteLabel::Normal: plan = normal; break;
      case RouteLabel::ZoomIn: plan = tile_zoom_in(s, labeled); break;
      case RouteLabel::ZoomOut: plan = tile_zoom_out(s); break;
    }
    const Raster canvas = pad_edge(raster, plan.padded_width, plan.padded_height);
    for (const auto& region : plan.patches) {
      const auto key = patch_key(s.image_id, region);
      const std::string file = file_safe(key) + (raster.channels() == 1 ? ".pgm" : ".ppm");
      write_raster(fs::path(c.out) / file, rescale(crop(canvas, region), region.scale));
      index.push_back({{"key", key}, {"file", file}, {"route", to_token(route)}});
    }
  }
  write_file_atomic(fs::path(c.out) / "index.jsonl", to_jsonl(index));
  std::cerr << "exported " << index.size() << " patches\n";
}

void cmd_eval(const Config& c, const std::string& csv_out, const std::string& results_out,
              const std::string& force, bool drop_zero_gt) {
  require_out(c);
  auto scenes = sorted_scenes(c.manifest);
  if (drop_zero_gt) {
    const auto before = scenes.size();
    std::erase_if(scenes, [](const ScenePack& s) { return s.points.empty(); });
    std::cerr << "dropped " << before - scenes.size() << " zero-count scenes\n";
  }
  const auto classifier = make_classifier(c, scenes);
  const auto regressor = make_regressor(c, scenes);
  EngineHolder engine;
  make_engine(c, engine);
  EvalOptions opt;
  opt.workers = c.workers;
  if (!force.empty()) opt.force_route = parse_route(force);

  const EvalReport rep = run_eval(scenes, *classifier, *regressor, *engine.engine, opt);
  write_file_atomic(c.out, to_json(rep).dump(2) + "\n");
  if (!csv_out.empty()) write_file_atomic(csv_out, report_to_csv(rep));
  if (!results_out.empty()) {
    std::vector<nlohmann::ordered_json> lines;
    for (const auto& r : rep.results) lines.push_back(to_json(r));
    write_file_atomic(results_out, to_jsonl(lines));
  }
  std::cout << "MAE " << rep.mae << "  MNAE " << rep.mnae << "  RMSE " << rep.rmse << "  routes zin/normal/zout "
            << rep.stats.zoom_in << "/" << rep.stats.normal << "/" << rep.stats.zoom_out << "\n";
}

void cmd_decide(const Config& c) {
  require_out(c);
  const auto scenes = sorted_scenes(c.manifest);
  const auto classifier = make_classifier(c, scenes);
  EngineHolder engine;
  make_engine(c, engine);
  std::vector<nlohmann::ordered_json> lines;
  for (const auto& s : scenes) {
    std::vector<CrowdClass> labels;
    for (const auto& r : tile_normal(s).patches) labels.push_back(classifier->classify(s.image_id, r));
    const auto pcc = accumulate(labels);
    const auto d = engine.engine->decide(pcc);
    const auto f = pcc_to_features(pcc);
    lines.push_back({{"image_id", s.image_id},
                     {"pcc", to_json(pcc)},
                     {"features", f.value},
                     {"route", to_token(d.route)},
                     {"fired_rule", d.fired_rule ? nlohmann::ordered_json(to_token(*d.fired_rule)) : nullptr}});
  }
  write_file_atomic(c.out, to_jsonl(lines));
}

void cmd_stats(const std::string& results, const std::string& rfdb) {
  if (results.empty() == rfdb.empty()) throw Error("stats needs exactly one of --results or --rfdb");
  if (!rfdb.empty()) {
    print_label_summary(parse_rfdb_csv(read_text_file(rfdb)));
    return;
  }
  std::vector<CountResult> rs;
  for (const auto& line : split_lines(read_text_file(results)))
    rs.push_back(count_result_from_json(nlohmann::json::parse(line)));
  std::cout << to_json(route_stats(rs)).dump() << "\n";
}

// Draws each head as a bright dot on a dark background.
Raster render_scene(const ScenePack& s) {
  Raster r(s.width, s.height, 1, 16);
  for (const auto& p : s.points) r.at(static_cast<int>(p.x), static_cast<int>(p.y)) = 255;
  return r;
}

void cmd_synth(const Config& c, std::size_t count, const SynthOptions& opt, const std::string& raster_dir) {
  require_out(c);
  auto scenes = synth_suite(count, c.seed, opt);
  if (!raster_dir.empty()) {
    for (auto& s : scenes) {
      const fs::path file = fs::path(raster_dir) / (s.image_id + ".pgm");
      write_raster(file, render_scene(s));
      s.raster_path = fs::absolute(file);
    }
  }
  write_file_atomic(c.out, manifest_to_json(scenes).dump() + "\n");
}

// Expands "--config file.json" into ordinary flags for keys not already given
// on the command line, so explicit flags win over the file.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string cfg;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      cfg = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      cfg = args[i].substr(9);
    }
  }
  if (cfg.empty()) return args;
  const auto doc = nlohmann::json::parse(read_text_file(cfg));
  if (!doc.is_object()) throw ParseError("config: expected a flat JSON object");
  const auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : doc.items()) {
    const std::string flag = "--" + key;
    if (given(flag)) continue;
    const auto push = [&](const nlohmann::json& v) {
      if (v.is_boolean()) {
        if (v.get<bool>()) extra.push_back(flag);
        return;
      }
      extra.push_back(flag);
      extra.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    };
    if (value.is_array())
      for (const auto& v : value) push(v);
    else
      push(value);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-routed crowd counting pipeline", "zoomcount"};
  app.require_subcommand(1);
  Config cfg;
  std::string config_path;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Flat JSON config (flags override it)");
    sub->add_option("--manifest", cfg.manifest, "Scene manifest (JSON)");
    sub->add_option("--max-count", cfg.max_count, "Maximum people count per patch for the dataset");
    sub->add_option("--seed", cfg.seed, "Global seed")->envname("ZOOMCOUNT_SEED");
    sub->add_option("--workers", cfg.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", cfg.out, "Output path");
  };
  const auto backends = [&](CLI::App* sub) {
    sub->add_option("--classifier", cfg.classifier, "oracle|replay");
    sub->add_option("--regressor", cfg.regressor, "oracle|replay");
    sub->add_option("--replay-class", cfg.replay_class, "Replay file with patch classes (JSONL)");
    sub->add_option("--replay-count", cfg.replay_count, "Replay file with patch counts (JSONL)");
    sub->add_option("--noise-sigma", cfg.noise_sigma, "Relative Gaussian noise on oracle counts");
  };
  const auto engine = [&](CLI::App* sub) {
    sub->add_option("--engine", cfg.engine, "rse|rfdb");
    sub->add_option("--forest", cfg.forest, "Forest file for --engine rfdb");
    sub->add_option("--disable-rule", cfg.disable_rules, "Disable rule R1..R8 (repeatable)");
    sub->add_option("--disable-block", cfg.disable_blocks, "Disable zin|zout block (repeatable)");
  };

  auto* label = app.add_subcommand("label", "Ground-truth class of every 224 patch");
  common(label);

  auto* gen_cdc = app.add_subcommand("gen-cdc", "Class-balanced random patch dataset");
  common(gen_cdc);
  CdcOptions cdc;
  gen_cdc->add_option("--per-class", cdc.per_class)->default_val(1);
  gen_cdc->add_option("--sizes", cdc.sizes, "Patch sizes from {112,224,448}")->default_str("112 224 448");
  gen_cdc->add_option("--attempts", cdc.attempt_budget)->default_val(1000000);

  auto* gen_rfdb = app.add_subcommand("gen-rfdb", "Per-image route dataset (CSV)");
  common(gen_rfdb);
  std::string policy = "rse-oracle", ext_labels;
  gen_rfdb->add_option("--policy", policy, "rse-oracle|external");
  gen_rfdb->add_option("--labels", ext_labels, "JSON map image_id -> zin|normal|zout");

  auto* train = app.add_subcommand("train-rfdb", "Train the decision forest");
  common(train);
  std::string csv_in;
  ForestParams params;
  double val_fraction = 0.1;
  bool no_bootstrap = false;
  train->add_option("--csv", csv_in, "RFDB dataset CSV");
  train->add_option("--trees", params.n_trees)->default_val(100);
  train->add_option("--min-samples", params.min_samples)->default_val(2);
  train->add_option("--features-per-split", params.features_per_split)->default_val(2);
  train->add_option("--val-fraction", val_fraction)->default_val(0.1);
  train->add_flag("--no-bootstrap", no_bootstrap);

  auto* exp = app.add_subcommand("export-patches", "Write model-facing 224x224 patch rasters");
  common(exp);
  backends(exp);
  engine(exp);
  std::string route_arg = "auto";
  exp->add_option("--route", route_arg, "normal|zin|zout|auto");

  auto* eval = app.add_subcommand("eval", "Run the pipeline and report MAE/MNAE/RMSE");
  common(eval);
  backends(eval);
  engine(eval);
  std::string csv_out, results_out, force;
  bool drop_zero = false;
  eval->add_option("--csv", csv_out, "Also write a flat per-image CSV");
  eval->add_option("--results", results_out, "Also write per-image CountResults (JSONL)");
  eval->add_option("--force-route", force, "Bypass the decision engine: normal|zin|zout");
  eval->add_flag("--drop-zero-gt", drop_zero, "Exclude scenes with no annotations");

  auto* decide = app.add_subcommand("decide", "Per-image class tallies and route");
  common(decide);
  backends(decide);
  engine(decide);

  auto* stats = app.add_subcommand("stats", "Route or label tallies of an output file");
  std::string stats_results, stats_rfdb;
  stats->add_option("--results", stats_results, "CountResult JSONL");
  stats->add_option("--rfdb", stats_rfdb, "RFDB CSV");

  auto* synth = app.add_subcommand("synth", "Write a synthetic scene manifest");
  common(synth);
  std::size_t synth_count = 10;
  SynthOptions synth_opt;
  std::string raster_dir;
  synth->add_option("--count", synth_count)->default_val(10);
  synth->add_option("--min-side", synth_opt.min_side)->default_val(250);
  synth->add_option("--max-side", synth_opt.max_side)->default_val(2000);
  synth->add_option("--max-points", synth_opt.max_points)->default_val(5000);
  synth->add_option("--rasters", raster_dir, "Also render PGM rasters into this directory");

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    args.pop_back();  // program name
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*label) cmd_label(cfg);
    else if (*gen_cdc) {
      cdc.seed = cfg.seed;
      cmd_gen_cdc(cfg, cdc);
    } else if (*gen_rfdb) cmd_gen_rfdb(cfg, policy, ext_labels);
    else if (*train) {
      params.bootstrap = !no_bootstrap;
      cmd_train_rfdb(cfg, csv_in, params, val_fraction);
    } else if (*exp) cmd_export(cfg, route_arg);
    else if (*eval) cmd_eval(cfg, csv_out, results_out, force, drop_zero);
    else if (*decide) cmd_decide(cfg);
    else if (*stats) cmd_stats(stats_results, stats_rfdb);
    else if (*synth) cmd_synth(cfg, synth_count, synth_opt, raster_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
