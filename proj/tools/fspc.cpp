// fspc: data preparation, training, evaluation, gradient checks and reports.

#include "fspc/checkpoint.hpp"
#include "fspc/config.hpp"
#include "fspc/dataset.hpp"
#include "fspc/report.hpp"
#include "fspc/rng.hpp"
#include "fspc/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string profile = "desk";
  std::optional<int> way, shot, query, k1, k2;
  std::string backbone, sci, cif;
  std::vector<std::string> sets;
};

fs::path out_root() {
  const char* env = std::getenv("FSPC_OUT_DIR");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

fs::path resolve_out(const Globals& g, const std::string& fallback) {
  return g.out.empty() ? out_root() / fallback : fs::path(g.out);
}

fspc::TrainConfig build_config(const Globals& g) {
  std::vector<std::string> overrides;
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  if (g.way) overrides.push_back("episode.n_way=" + std::to_string(*g.way));
  if (g.shot) overrides.push_back("episode.k_shot=" + std::to_string(*g.shot));
  if (g.query) overrides.push_back("episode.q_query=" + std::to_string(*g.query));
  if (g.k1) overrides.push_back("model.cia.k1=" + std::to_string(*g.k1));
  if (g.k2) overrides.push_back("model.cia.k2=" + std::to_string(*g.k2));
  if (!g.backbone.empty()) overrides.push_back("model.backbone.kind=\"" + g.backbone + "\"");
  if (!g.sci.empty()) overrides.push_back(std::string("model.cia.sci=") + (g.sci == "on" ? "true" : "false"));
  if (!g.cif.empty()) overrides.push_back(std::string("model.cia.cif=") + (g.cif == "on" ? "true" : "false"));
  overrides.insert(overrides.end(), g.sets.begin(), g.sets.end());
  return fspc::resolve_config(g.profile, g.config_file, overrides);
}

struct Split {
  fspc::SplitManifest manifest;
  std::vector<fspc::LabeledExample> base;
  std::vector<fspc::LabeledExample> novel;
};

Split load_split(const fs::path& data) {
  if (!fs::is_directory(data)) fspc::throw_usage("dataset directory not found: " + data.string());
  const fs::path manifest_path = data / "manifest.json";
  if (!fs::exists(manifest_path)) fspc::throw_usage("manifest not found: " + manifest_path.string());
  Split s;
  s.manifest = fspc::read_manifest(manifest_path);
  fspc::validate_split(s.manifest);
  s.base = fspc::load_examples(data, s.manifest, fspc::SplitSide::Base);
  s.novel = fspc::load_examples(data, s.manifest, fspc::SplitSide::Novel);
  return s;
}

std::string run_name(const fspc::TrainConfig& cfg) {
  std::string setting = fspc::setting_label(cfg.model);
  if (setting[0] == '+') setting = setting.substr(1);
  return std::string(fspc::to_string(cfg.model.backbone.kind)) + "-" + setting + "-" +
         std::to_string(cfg.episode.n_way) + "w" + std::to_string(cfg.episode.k_shot) + "s-seed" +
         std::to_string(cfg.seed);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fspc::throw_data("cannot write " + path.string());
  out << text;
}

int cmd_prepare(const Globals& g, const std::string& synthetic, int points, std::optional<int> novel) {
  const auto x = synthetic.find('x');
  int classes = 0;
  int per_class = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(synthetic);
    std::size_t used = 0;
    classes = std::stoi(synthetic.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(synthetic);
    per_class = std::stoi(synthetic.substr(x + 1), &used);
    if (used != synthetic.size() - x - 1) throw std::invalid_argument(synthetic);
  } catch (const std::exception&) {
    fspc::throw_usage("--synthetic expects CLASSESxEXAMPLES, got " + synthetic);
  }
  if (classes < 2 || per_class < 1) fspc::throw_usage("--synthetic needs at least 2 classes and 1 example");
  if (points < 1) fspc::throw_usage("--points must be at least 1");
  const int n_novel = novel.value_or(std::max(1, classes / 4));
  if (n_novel < 1 || n_novel >= classes) fspc::throw_usage("--novel must leave at least one base class");
  const std::uint64_t seed = g.seed.value_or(0);
  const fs::path out = resolve_out(g, "data");

  const auto catalogue = fspc::synthetic_catalogue(classes);
  std::vector<fspc::LabeledExample> examples;
  std::string names = "class_id,name\n";
  for (int c = 0; c < classes; ++c) {
    const auto& spec = catalogue[static_cast<std::size_t>(c)];
    auto cls = fspc::generate_synthetic_class(spec.family, spec.params, c, per_class, points,
                                              fspc::derive_seed(seed, static_cast<std::uint64_t>(c)),
                                              static_cast<std::int64_t>(c) * per_class);
    examples.insert(examples.end(), cls.begin(), cls.end());
    names += std::to_string(c) + "," + spec.name + "\n";
  }
  std::vector<int> novel_ids;
  for (int c = classes - n_novel; c < classes; ++c) novel_ids.push_back(c);
  const fspc::SplitManifest manifest = fspc::manifest_from_examples(examples, novel_ids);
  fspc::validate_split(manifest);

  try {
    fs::create_directories(out);
  } catch (const fs::filesystem_error& e) {
    fspc::throw_data("cannot create output directory " + out.string() + ": " + e.what());
  }
  fspc::write_examples(out, examples);
  fspc::write_manifest(manifest, out / "manifest.json");
  write_text(out / "classes.csv", names);
  std::printf("wrote %zu examples (%d base / %d novel classes) to %s\n", examples.size(), classes - n_novel, n_novel,
              out.string().c_str());
  return 0;
}

int cmd_train(const Globals& g, const std::string& data) {
  const fspc::TrainConfig cfg = build_config(g);
  const Split split = load_split(data);
  const fs::path out = resolve_out(g, run_name(cfg));
  auto progress = [](const fspc::HistoryRow& r) {
    std::fprintf(stderr, "epoch %d  lr %.6g  loss %.4f  train_acc %.4f  val_acc %.4f\n", r.epoch, r.lr, r.train_loss,
                 r.train_acc, r.val_acc);
  };
  if (cfg.folds >= 2) {
    const auto cv = fspc::cross_validate(cfg, split.base, split.novel, out, progress);
    std::printf("cross-validation over %zu folds: mean accuracy %.4f\n", cv.folds.size(), cv.aggregate_mean);
  } else {
    const auto o = fspc::fit(cfg, split.base, split.base, split.novel, out, progress);
    std::printf("best epoch %d: test accuracy %.4f +/- %.4f over %zu episodes\n", o.best_epoch, o.test.mean_accuracy,
                o.test.ci95_halfwidth, o.test.per_episode_accuracies.size());
  }
  std::printf("run directory: %s\n", out.string().c_str());
  return 0;
}

int cmd_eval(const Globals& g, const std::string& run, const std::string& data, int episodes) {
  const fs::path dir(run);
  if (!fs::is_directory(dir)) fspc::throw_usage("run directory not found: " + dir.string());
  std::ifstream rin(dir / "report.json");
  if (!rin) fspc::throw_data("report not found: " + (dir / "report.json").string());
  json report;
  try {
    report = json::parse(rin);
  } catch (const json::parse_error& e) {
    fspc::throw_data(std::string("malformed report: ") + e.what());
  }
  if (!report.contains("best_epoch")) fspc::throw_usage("eval needs a single-fold run directory");
  const int best = report.at("best_epoch").get<int>();
  if (best < 0) fspc::throw_data("run has no trained checkpoint");
  const fs::path ck_path = dir / "checkpoints" / ("epoch_" + std::to_string(best) + ".bin");
  const fspc::Checkpoint ck = fspc::load_checkpoint(ck_path);

  std::ifstream cin_(dir / "config.json");
  if (!cin_) fspc::throw_data("config not found in " + dir.string());
  const fspc::TrainConfig cfg = fspc::train_config_from_json(json::parse(cin_));
  const Split split = load_split(data);
  const std::size_t count = episodes > 0 ? static_cast<std::size_t>(episodes)
                                         : static_cast<std::size_t>(cfg.test_episodes);
  const std::uint64_t seed = g.seed ? *g.seed : cfg.seed;
  fspc::RunReport r = fspc::evaluate(ck.config, ck.params, split.novel, cfg.episode, count,
                                     fspc::derive_seed(seed, "test"), cfg.n_points);
  r.config = fspc::to_json(cfg);
  const fs::path out = g.out.empty() ? dir / "eval.json" : fs::path(g.out);
  write_text(out, fspc::to_json(r).dump(2) + "\n");
  std::printf("checkpoint %s: accuracy %.4f +/- %.4f over %zu episodes\n", ck_path.string().c_str(), r.mean_accuracy,
              r.ci95_halfwidth, count);
  return 0;
}

int cmd_gradcheck(const Globals& g, double tolerance, double step) {
  fspc::TrainConfig cfg = build_config(g);
  const auto s = fspc::tiny_gradcheck_setup(cfg.model.backbone.kind, cfg.model.cia, cfg.model.with_cia,
                                            g.seed.value_or(0));
  const auto r = fspc::grad_check(s.config, s.params, s.batch, step);
  std::printf("%s %s: %zu scalars, max relative error %.3e (worst %s)\n",
              std::string(fspc::to_string(s.config.backbone.kind)).c_str(), fspc::setting_label(s.config).c_str(),
              r.scalars, r.max_rel_error, r.worst_tensor.empty() ? "-" : r.worst_tensor.c_str());
  if (r.max_rel_error >= tolerance) fspc::throw_numeric("gradient check above tolerance");
  return 0;
}

int cmd_report(const Globals& g, const std::vector<std::string>& runs) {
  std::vector<fs::path> dirs(runs.begin(), runs.end());
  const auto rows = fspc::collect_rows(dirs);
  const fs::path out = resolve_out(g, "report");
  write_text(out / "table.csv", fspc::table_csv(rows));
  const std::string text = fspc::table_text(rows);
  write_text(out / "table.txt", text);
  for (const fs::path& d : dirs) {
    if (fs::exists(d / "history.csv")) {
      write_text(out / "curves" / (d.filename().string() + ".svg"),
                 fspc::history_svg(fspc::read_history_csv(d / "history.csv")));
    }
  }
  std::fputs(text.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot point cloud classification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_file, "JSON config file layered over the profile");
  app.add_option("--seed", g.seed, "Root seed");
  app.add_option("--out", g.out, "Output path (default under $FSPC_OUT_DIR or ./runs)");
  app.add_option("--profile", g.profile, "Default settings")->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--way", g.way, "Classes per episode")->check(CLI::PositiveNumber);
  app.add_option("--shot", g.shot, "Support examples per class")->check(CLI::PositiveNumber);
  app.add_option("--query", g.query, "Query examples per class")->check(CLI::NonNegativeNumber);
  app.add_option("--backbone", g.backbone, "Embedding network")->check(CLI::IsMember({"pointnet", "dgcnn"}));
  app.add_option("--sci", g.sci, "Self-channel interaction")->check(CLI::IsMember({"on", "off"}));
  app.add_option("--cif", g.cif, "Cross-instance fusion")->check(CLI::IsMember({"on", "off"}));
  app.add_option("--k1", g.k1, "Queries fused into each prototype")->check(CLI::NonNegativeNumber);
  app.add_option("--k2", g.k2, "Prototypes fused into each query")->check(CLI::NonNegativeNumber);
  app.add_option("--set", g.sets, "Config override key=value (dotted key, repeatable)");

  auto* prep = app.add_subcommand("prepare-data", "Generate a synthetic dataset and split manifest");
  std::string synthetic;
  int points = 512;
  std::optional<int> novel;
  prep->add_option("--synthetic", synthetic, "CLASSESxEXAMPLES, e.g. 8x40")->required();
  prep->add_option("--points", points, "Points per cloud");
  prep->add_option("--novel", novel, "Number of novel (held-out) classes");

  auto* train = app.add_subcommand("train", "Meta-train and test; writes a run directory");
  std::string data;
  train->add_option("--data", data, "Dataset directory")->required();

  auto* eval = app.add_subcommand("eval", "Re-score a run's selected checkpoint on novel episodes");
  std::string run;
  int episodes = 0;
  eval->add_option("--run", run, "Run directory")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--episodes", episodes, "Episode count (default: the run's test count)");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check on a tiny model");
  double tolerance = 1e-4;
  double step = 1e-5;
  grad->add_option("--tolerance", tolerance, "Largest accepted relative error");
  grad->add_option("--step", step, "Central-difference step");

  auto* report = app.add_subcommand("report", "Ablation table and training curves");
  std::vector<std::string> runs;
  report->add_option("runs", runs, "Run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fspc::exit_code(fspc::ErrorKind::Usage);
  }

  try {
    if (*prep) return cmd_prepare(g, synthetic, points, novel);
    if (*train) return cmd_train(g, data);
    if (*eval) return cmd_eval(g, run, data, episodes);
    if (*grad) return cmd_gradcheck(g, tolerance, step);
    if (*report) return cmd_report(g, runs);
  } catch (const fspc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return fspc::exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return fspc::exit_code(fspc::ErrorKind::Data);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
