#include "vl/cli/commands.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <optional>

#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/common/parallel.h"
#include "vl/common/rng.h"
#include "vl/distill/distill.h"
#include "vl/synth_eval/scene.h"

namespace vl::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kQueryManifest = "queries/manifest.json";

fs::path index_path(const RunConfig& c) { return c.scene_dir / "index.vlix"; }
fs::path store_path(const RunConfig& c) { return c.scene_dir / "virtual.vlvf"; }
fs::path gt_path(const RunConfig& c) { return c.scene_dir / "gt.csv"; }
fs::path student_path(const RunConfig& c) {
  return c.distill.student.empty() ? c.output_dir / "student.vlst" : c.distill.student;
}

bool needs_student(const RunConfig& c) {
  return c.feature_mode == FeatureMode::distilled || c.localize.local_mode == FeatureMode::distilled;
}

PairParams pair_params(const RunConfig& c) {
  PairParams p = c.distill.pairs;
  p.gem_p = c.localize.features.gem_p;
  p.render = c.augmentation.view.render;
  return p;
}

StudentParams train_student(const RunConfig& c, const SceneDatabase& db, std::vector<HistoryRow>* history) {
  const std::vector<TrainingPair> pairs = keyframe_training_pairs(db, pair_params(c));
  if (pairs.empty()) throw Error(ErrorCode::no_overlap, "no keyframe yields a training pair");
  const int n = pairs.front().input.feature_grid.dim;
  const int m = static_cast<int>(pairs.front().target_global.size());
  const StudentParams initial = make_student(n, m, c.distill.hidden, mix64(c.seed ^ 0x5354554445ull));
  TrainParams tp = c.distill.train;
  tp.seed = c.seed;
  TrainResult r = train(initial, pairs, tp);
  if (history != nullptr) *history = std::move(r.history);
  return std::move(r.student);
}

SceneDatabase load_scene_db(const RunConfig& c) {
  SceneDatabase db = SceneDatabase::load(c.scene_dir);
  db.compute_features(c.localize.features);
  return db;
}

std::optional<StudentParams> load_student_if_needed(const RunConfig& c) {
  if (!needs_student(c)) return std::nullopt;
  if (c.distill.student.empty()) throw Error(ErrorCode::missing_student, "distilled mode needs distill.student");
  return read_student(c.distill.student);
}

struct QuerySet {
  Intrinsics intrinsics;
  std::vector<QueryInput> queries;
};

void write_queries(const fs::path& dir, const synth::SyntheticScene& s) {
  fs::create_directories(dir / "queries");
  ordered_json j;
  const Intrinsics& k = s.params.intrinsics;
  j["intrinsics"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
  j["queries"] = ordered_json::array();
  for (const synth::QueryRecord& q : s.queries) {
    const std::string name = std::to_string(q.id) + ".ppm";
    write_ppm(dir / "queries" / name, q.image);
    j["queries"].push_back({{"id", q.id}, {"image", name}});
  }
  io::write_text(dir / kQueryManifest, j.dump(2) + "\n");
}

QuerySet read_queries(const fs::path& dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(io::read_text(dir / kQueryManifest));
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorCode::io, std::string("bad query manifest: ") + e.what());
  }
  QuerySet out;
  try {
    const auto& k = j.at("intrinsics");
    out.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                      k.at("cy").get<double>(), k.at("width").get<int>(),   k.at("height").get<int>()};
    for (const auto& q : j.at("queries")) {
      out.queries.push_back({q.at("id").get<std::uint32_t>(), read_ppm(dir / "queries" / q.at("image").get<std::string>())});
    }
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorCode::io, std::string("bad query manifest: ") + e.what());
  }
  return out;
}

std::vector<GroundTruth> ground_truth(const synth::SyntheticScene& s) {
  std::vector<GroundTruth> gts;
  for (const synth::QueryRecord& q : s.queries) gts.push_back({q.id, q.pose});
  return gts;
}

// Subcommands. Each receives the fully resolved configuration.

int cmd_synth(const RunConfig& c, std::ostream& out) {
  synth::SyntheticScene s = synth::generate_scene(c.seed, c.scene);
  s.db.name = "synthetic";
  s.db.creation_params["seed"] = std::to_string(c.seed);
  s.db.creation_params["regime"] = c.scene.regime == synth::OverlapRegime::low ? "low" : "high";
  s.db.save(c.scene_dir);
  write_queries(c.scene_dir, s);
  const std::vector<GroundTruth> gts = ground_truth(s);
  write_ground_truth(gt_path(c), gts);
  out << "wrote " << s.db.size() << " keyframes and " << s.queries.size() << " queries to " << c.scene_dir.string()
      << "\n";
  return 0;
}

int cmd_build_db(const RunConfig& c, std::ostream& out) {
  SceneDatabase db = load_scene_db(c);
  db.save(c.scene_dir);
  build_real_index(db, c.whiten_dims).save(index_path(c));
  fs::remove(store_path(c));
  out << "indexed " << db.size() << " keyframes\n";
  return 0;
}

int cmd_augment(const RunConfig& c, std::ostream& out) {
  const SceneDatabase db = load_scene_db(c);
  const std::optional<StudentParams> student = load_student_if_needed(c);
  const std::vector<Pose> grid = generate_augmentation_grid(db, c.augmentation);
  const AugmentedIndex aug =
      augment_database(db, grid, c.augmentation.view, c.feature_mode, student ? &*student : nullptr, c.whiten_dims);
  aug.store.save(store_path(c));
  aug.index.save(index_path(c));
  out << "grid " << aug.grid_size << ", kept " << aug.store.size() << ", rejected " << aug.rejected_free_space
      << " (free space) + " << aug.rejected_validity << " (validity)\n";
  return 0;
}

int cmd_localize(const RunConfig& c, const fs::path& output, std::ostream& out) {
  const SceneDatabase db = load_scene_db(c);
  if (!fs::exists(index_path(c))) throw Error(ErrorCode::io, "no index in " + c.scene_dir.string() + ", run build-db");
  const RetrievalIndex index = RetrievalIndex::load(index_path(c));
  std::optional<VirtualViewStore> store;
  if (fs::exists(store_path(c))) store = VirtualViewStore::load(store_path(c));
  const std::optional<StudentParams> student = load_student_if_needed(c);
  const QuerySet qs = read_queries(c.scene_dir);
  const Localizer loc(db, index, store ? &*store : nullptr, qs.intrinsics, c.localize, student ? &*student : nullptr);
  const std::vector<LocalizationResult> results = loc.localize_batch(qs.queries);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_results(output, results);
  const auto ok = std::count_if(results.begin(), results.end(),
                                [](const LocalizationResult& r) { return r.final_estimate().ok(); });
  out << "localized " << ok << " / " << results.size() << " queries -> " << output.string() << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& results, const fs::path& gt, std::ostream& out) {
  const AccuracyTriple a = evaluate_accuracy(read_results(results), read_ground_truth(gt));
  out << "(0.25m, 2deg) / (0.5m, 5deg) / (5m, 10deg)\n" << format_triple(a) << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& c, std::ostream& out) {
  const Report r = ablation_report(run_ablation(c));
  fs::create_directories(c.output_dir);
  io::write_text(c.output_dir / "report.csv", r.csv);
  out << r.text;
  return 0;
}

int cmd_distill(const RunConfig& c, std::ostream& out) {
  const SceneDatabase db = load_scene_db(c);
  std::vector<HistoryRow> history;
  const StudentParams s = train_student(c, db, &history);
  const fs::path path = student_path(c);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_student(path, s);
  fs::create_directories(c.output_dir);
  io::write_text(c.output_dir / "distill_history.csv", history_csv(history));
  if (!history.empty()) {
    char line[160];
    std::snprintf(line, sizeof line, "loss_g %.6g -> %.6g, loss_l %.6g -> %.6g over %zu steps\n",
                  history.front().loss_g, history.back().loss_g, history.front().loss_l, history.back().loss_l,
                  history.size());
    out << line;
  }
  out << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out, std::ostream& err) {
  SceneDatabase db;
  if (fs::exists(c.scene_dir / "manifest.json")) {
    db = load_scene_db(c);
  } else {
    synth::SceneParams sp = c.scene;
    sp.num_db = std::min(sp.num_db, 8);
    sp.num_queries = 0;
    sp.regime = synth::OverlapRegime::high;
    db = synth::generate_scene(c.seed, sp).db;
  }
  const std::vector<TrainingPair> pairs = keyframe_training_pairs(db, pair_params(c));
  if (pairs.empty()) throw Error(ErrorCode::no_overlap, "no keyframe yields a training pair");
  const TrainingPair& pair = pairs.front();
  const int n = pair.input.feature_grid.dim;
  const int m = static_cast<int>(pair.target_global.size());
  double worst = 0;
  char line[96];
  for (int i = 0; i < c.distill.gradcheck_inits; ++i) {
    const std::uint64_t seed = mix64(c.seed + static_cast<std::uint64_t>(i));
    const StudentParams s = make_student(n, m, c.distill.hidden, seed);
    const double e = gradient_check(s, pair, 1e-5, seed, c.distill.train.lambda);
    worst = std::max(worst, e);
    std::snprintf(line, sizeof line, "init %d: max relative error %.3e\n", i, e);
    out << line;
  }
  std::snprintf(line, sizeof line, "worst %.3e\n", worst);
  out << line;
  if (!(worst < 1e-4)) {
    err << "vl: gradient check failed\n";
    return 2;
  }
  return 0;
}

// Flags override the config file, which overrides the defaults.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<int> refine_iters;
  std::optional<std::size_t> top_k;
  std::optional<std::string> scene_dir, output_dir, feature_mode, student;
  std::string config;
};

void apply_overrides(RunConfig& c, const Overrides& o) {
  if (!o.config.empty()) apply_config_file(c, o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.refine_iters) {
    c.localize.refine = *o.refine_iters > 0;
    if (*o.refine_iters > 0) c.localize.refine_iters = *o.refine_iters;
  }
  if (o.top_k) c.localize.top_k = *o.top_k;
  if (o.scene_dir) c.scene_dir = *o.scene_dir;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.feature_mode) c.feature_mode = c.localize.local_mode = parse_feature_mode(*o.feature_mode);
  if (o.student) c.distill.student = *o.student;
  c.localize.seed = c.seed;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage:
    case ErrorCode::config:
    case ErrorCode::invalid_params:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

Ablation run_ablation(const RunConfig& c) {
  synth::SyntheticScene scene = synth::generate_scene(c.seed, c.scene);
  scene.db.compute_features(c.localize.features);
  std::vector<QueryInput> queries;
  for (const synth::QueryRecord& q : scene.queries) queries.push_back({q.id, q.image});
  const std::vector<GroundTruth> gts = ground_truth(scene);

  std::optional<StudentParams> student;
  if (needs_student(c)) {
    student = c.distill.student.empty() ? train_student(c, scene.db, nullptr) : read_student(c.distill.student);
  }
  const StudentParams* sp = student ? &*student : nullptr;

  Ablation out;
  const std::vector<Pose> grid = generate_augmentation_grid(scene.db, c.augmentation);
  const AugmentedIndex aug = augment_database(scene.db, grid, c.augmentation.view, c.feature_mode, sp, c.whiten_dims);
  const RetrievalIndex base = build_real_index(scene.db, c.whiten_dims);
  out.grid_size = aug.grid_size;
  out.virtual_views = aug.store.size();

  auto evaluate = [&](const char* name, const RetrievalIndex& index, const VirtualViewStore* store, bool refine,
                      FeatureMode local_mode) {
    LocalizeParams lp = c.localize;
    lp.refine = refine;
    lp.local_mode = local_mode;
    const Localizer loc(scene.db, index, store, scene.params.intrinsics, lp, sp);
    const std::vector<LocalizationResult> results = loc.localize_batch(queries);
    AblationRow row{name, evaluate_accuracy(to_records(results), gts), 0, results.size()};
    for (const LocalizationResult& r : results) row.solvable += r.pooled >= 4 ? 1 : 0;
    out.rows.push_back(row);
  };
  const FeatureMode local = c.localize.local_mode;
  evaluate("baseline", base, nullptr, false, FeatureMode::deterministic);
  evaluate("+VA", aug.index, &aug.store, false, local);
  evaluate("+VA+PR", aug.index, &aug.store, true, local);
  evaluate("VA w/o local", aug.index, &aug.store, true, FeatureMode::deterministic);
  return out;
}

Report ablation_report(const Ablation& a) {
  std::vector<NamedRun> runs;
  for (const AblationRow& r : a.rows) runs.push_back({r.name, r.accuracy});
  Report report = make_report(runs);
  report.text += "\nqueries with >= 4 pooled correspondences:";
  for (const AblationRow& r : a.rows) {
    report.text += " " + r.name + " " + std::to_string(r.solvable) + "/" + std::to_string(r.queries) + ";";
  }
  report.text.back() = '\n';
  report.text += "virtual views: " + std::to_string(a.virtual_views) + " of " + std::to_string(a.grid_size) + "\n";
  return report;
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual relocalization with virtual views", "vl"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Expand all help");

  Overrides o;
  app.add_option("--config", o.config, "TOML configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Seed for every random choice");
  app.add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  app.add_option("--refine-iters", o.refine_iters, "Pose refinement rounds (0 disables)");
  app.add_option("-k,--top-k", o.top_k, "Retrieved entries per query");
  app.add_option("--scene", o.scene_dir, "Scene directory");
  app.add_option("--output-dir", o.output_dir, "Directory for reports and checkpoints");
  app.add_option("--feature-mode", o.feature_mode, "deterministic or distilled")
      ->check(CLI::IsMember({"deterministic", "distilled"}));
  app.add_option("--student", o.student, "Student checkpoint");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene, its queries and ground truth");
  auto* build_db = app.add_subcommand("build-db", "Extract features and index the keyframes");
  auto* augment = app.add_subcommand("augment", "Render virtual views and index them with the keyframes");
  auto* localize = app.add_subcommand("localize", "Localize the scene's queries");
  std::string results_out;
  localize->add_option("-o,--output", results_out, "Results file (JSON lines)");
  auto* evaluate = app.add_subcommand("evaluate", "Accuracy of a results file against ground truth");
  std::string results_in, gt_in;
  evaluate->add_option("--results", results_in, "Results file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--gt", gt_in, "Ground-truth CSV")->required()->check(CLI::ExistingFile);
  auto* ablate = app.add_subcommand("ablate", "Baseline / +VA / +VA+PR / VA w/o local on a synthetic scene");
  auto* distill = app.add_subcommand("distill", "Train the student renderer on the scene's keyframes");
  auto* gradcheck = app.add_subcommand("gradcheck", "Check the student's analytic gradients");
  auto* dump = app.add_subcommand("config", "Print the resolved configuration");

  std::vector<std::string> argv(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "vl: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    RunConfig c;
    apply_overrides(c, o);
    set_thread_count(c.threads);
    if (synth->parsed()) return cmd_synth(c, out);
    if (build_db->parsed()) return cmd_build_db(c, out);
    if (augment->parsed()) return cmd_augment(c, out);
    if (localize->parsed()) {
      return cmd_localize(c, results_out.empty() ? c.output_dir / "results.jsonl" : fs::path(results_out), out);
    }
    if (evaluate->parsed()) return cmd_evaluate(results_in, gt_in, out);
    if (ablate->parsed()) return cmd_ablate(c, out);
    if (distill->parsed()) return cmd_distill(c, out);
    if (gradcheck->parsed()) return cmd_gradcheck(c, out, err);
    if (dump->parsed()) {
      out << dump_config(c);
      return 0;
    }
  } catch (const Error& e) {
    err << "vl: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "vl: " << e.what() << "\n";
    return 2;
  }
  err << "vl: no subcommand\n";
  return 1;
}

}  // namespace vl::cli
