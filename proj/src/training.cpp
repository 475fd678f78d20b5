#include "fspc/training.hpp"

#include "fspc/checkpoint.hpp"
#include "fspc/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

namespace fspc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw_data("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

bool gradients_finite(const ModelParameters& grads) {
  bool ok = true;
  visit_model_tensors(grads, [&](const std::string&, const Matrix& m, bool trainable) {
    if (trainable && !m.allFinite()) ok = false;
  });
  return ok;
}

std::vector<int> class_ids(std::span<const LabeledExample> pool) {
  std::set<int> ids;
  for (const auto& ex : pool) ids.insert(ex.class_id);
  return {ids.begin(), ids.end()};
}

}  // namespace

EpisodeBatch prepare_batch(const Episode& episode, int n_points, const AugmentationConfig* aug,
                           std::uint64_t seed) {
  EpisodeBatch b = make_batch(episode);
  std::uint64_t r = 0;
  auto prep = [&](PointCloud& cloud) {
    cloud = normalize_cloud(sample_points(cloud, n_points, derive_seed(seed, 2 * r)));
    if (aug != nullptr) cloud = augment(cloud, *aug, derive_seed(seed, 2 * r + 1));
    ++r;
  };
  for (auto& c : b.support) prep(c);
  for (auto& c : b.query) prep(c);
  return b;
}

RunReport summarize(std::vector<double> accuracies) {
  if (accuracies.empty()) throw_usage("cannot summarise an empty episode stream");
  RunReport r;
  const double e = static_cast<double>(accuracies.size());
  r.mean_accuracy = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / e;
  if (accuracies.size() > 1) {
    double ss = 0.0;
    for (double a : accuracies) ss += (a - r.mean_accuracy) * (a - r.mean_accuracy);
    r.ci95_halfwidth = 1.96 * std::sqrt(ss / (e - 1.0)) / std::sqrt(e);
  }
  r.per_episode_accuracies = std::move(accuracies);
  return r;
}

json to_json(const RunReport& report) {
  return json{{"mean_accuracy", report.mean_accuracy},
              {"ci95_halfwidth", report.ci95_halfwidth},
              {"per_episode_accuracies", report.per_episode_accuracies},
              {"config", report.config},
              {"wall_time_s", report.wall_time_s}};
}

RunReport run_report_from_json(const json& j) {
  RunReport r;
  try {
    r.mean_accuracy = j.at("mean_accuracy").get<double>();
    r.ci95_halfwidth = j.at("ci95_halfwidth").get<double>();
    r.per_episode_accuracies = j.at("per_episode_accuracies").get<std::vector<double>>();
    r.config = j.value("config", json::object());
    r.wall_time_s = j.value("wall_time_s", 0.0);
  } catch (const json::exception& e) {
    throw_data(std::string("malformed run report: ") + e.what());
  }
  return r;
}

StepResult train_episode(const ModelConfig& config, TrainerState& state, const EpisodeBatch& batch, double lr) {
  ModelTape tape;
  const EpisodeResult res = forward_episode(config, state.params, batch, Mode::Train, &tape);
  if (!std::isfinite(res.loss)) throw_numeric("non-finite training loss");
  ModelParameters grads = zeros_like(state.params);
  backward_episode(config, state.params, batch, res, tape, grads);
  if (!gradients_finite(grads)) throw_numeric("non-finite gradient");
  state.optimizer.step(state.params, grads, lr);
  update_running_stats(state.params.backbone, tape.backbone);
  return {res.loss, res.accuracy};
}

RunReport evaluate(const ModelConfig& config, const ModelParameters& params, std::span<const EpisodeBatch> batches) {
  if (batches.empty()) throw_usage("cannot evaluate an empty episode stream");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> acc(batches.size());
  std::exception_ptr failure;
  const auto n = static_cast<long>(batches.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      acc[static_cast<std::size_t>(i)] =
          forward_episode(config, params, batches[static_cast<std::size_t>(i)], Mode::Eval).accuracy;
    } catch (...) {
#pragma omp critical(fspc_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  RunReport r = summarize(std::move(acc));
  r.wall_time_s = seconds_since(t0);
  return r;
}

RunReport evaluate(const ModelConfig& config, const ModelParameters& params, std::span<const LabeledExample> pool,
                   const EpisodeSpec& spec, std::size_t count, std::uint64_t seed, int n_points) {
  if (count == 0) throw_usage("cannot evaluate an empty episode stream");
  const auto t0 = std::chrono::steady_clock::now();
  const EpisodeStream stream(pool, spec, count, derive_seed(seed, "episodes"));
  const std::uint64_t prep_seed = derive_seed(seed, "prepare");
  std::vector<double> acc(count);
  std::exception_ptr failure;
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      const auto idx = static_cast<std::size_t>(i);
      const EpisodeBatch batch = prepare_batch(stream.at(idx), n_points, nullptr, derive_seed(prep_seed, idx));
      acc[idx] = forward_episode(config, params, batch, Mode::Eval).accuracy;
    } catch (...) {
#pragma omp critical(fspc_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  RunReport r = summarize(std::move(acc));
  r.wall_time_s = seconds_since(t0);
  return r;
}

TrainOutcome fit(const TrainConfig& cfg, std::span<const LabeledExample> train_pool,
                 std::span<const LabeledExample> val_pool, std::span<const LabeledExample> test_pool,
                 const std::optional<fs::path>& run_dir, const ProgressFn& progress) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const json config_doc = to_json(cfg);
  if (run_dir) {
    fs::create_directories(*run_dir / "checkpoints");
    write_json(*run_dir / "config.json", config_doc);
  }

  TrainerState state(init_model(cfg.model, derive_seed(cfg.seed, "init")), cfg.optimizer);
  TrainOutcome out;
  out.best = state.params;
  double best_val = -std::numeric_limits<double>::infinity();

  const std::uint64_t train_seed = derive_seed(cfg.seed, "train");
  const std::uint64_t prep_seed = derive_seed(cfg.seed, "train-prepare");
  const std::uint64_t val_seed = derive_seed(cfg.seed, "val");
  const AugmentationConfig* aug = cfg.augment ? &cfg.augmentation : nullptr;
  const auto per_epoch = static_cast<std::size_t>(cfg.train_episodes);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    HistoryRow row;
    row.epoch = epoch;
    row.lr = lr_at(epoch, cfg.optimizer);
    const EpisodeStream stream(train_pool, cfg.episode, per_epoch, derive_seed(train_seed, epoch));
    double loss_sum = 0.0;
    double acc_sum = 0.0;
    for (std::size_t i = 0; i < per_epoch; ++i) {
      const EpisodeBatch batch =
          prepare_batch(stream.at(i), cfg.n_points, aug, derive_seed(prep_seed, epoch * per_epoch + i));
      const StepResult s = train_episode(cfg.model, state, batch, row.lr);
      loss_sum += s.loss;
      acc_sum += s.accuracy;
    }
    const double denom = per_epoch > 0 ? static_cast<double>(per_epoch) : std::numeric_limits<double>::quiet_NaN();
    row.train_loss = loss_sum / denom;
    row.train_acc = acc_sum / denom;
    row.val_acc = std::numeric_limits<double>::quiet_NaN();
    if (cfg.val_episodes > 0) {
      row.val_acc = evaluate(cfg.model, state.params, val_pool, cfg.episode,
                             static_cast<std::size_t>(cfg.val_episodes), val_seed, cfg.n_points)
                        .mean_accuracy;
    }
    const bool better = cfg.val_episodes > 0 ? row.val_acc > best_val : true;
    if (better) {
      best_val = row.val_acc;
      out.best = state.params;
      out.best_epoch = epoch;
    }
    out.history.push_back(row);
    if (run_dir) {
      save_checkpoint(*run_dir / "checkpoints" / ("epoch_" + std::to_string(epoch) + ".bin"), cfg.model,
                      state.params, json{{"epoch", epoch}, {"seed", cfg.seed}});
      write_history_csv(*run_dir / "history.csv", out.history);
    }
    if (progress) progress(row);
  }

  if (cfg.test_episodes > 0) {
    out.test = evaluate(cfg.model, out.best, test_pool, cfg.episode, static_cast<std::size_t>(cfg.test_episodes),
                        derive_seed(cfg.seed, "test"), cfg.n_points);
  }
  out.test.config = config_doc;
  out.test.wall_time_s = seconds_since(t0);
  if (run_dir) {
    json report = to_json(out.test);
    report["best_epoch"] = out.best_epoch;
    write_json(*run_dir / "report.json", report);
  }
  return out;
}

std::vector<std::vector<int>> partition_classes(std::vector<int> classes, int folds, std::uint64_t seed) {
  if (folds < 1) throw_usage("folds must be at least 1");
  std::sort(classes.begin(), classes.end());
  if (std::adjacent_find(classes.begin(), classes.end()) != classes.end()) throw_usage("duplicate class id");
  if (classes.size() < static_cast<std::size_t>(folds)) throw_data("fewer classes than folds");
  Rng rng = make_rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);
  std::vector<std::vector<int>> parts(static_cast<std::size_t>(folds));
  const std::size_t base = classes.size() / parts.size();
  const std::size_t extra = classes.size() % parts.size();
  std::size_t pos = 0;
  for (std::size_t f = 0; f < parts.size(); ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    parts[f].assign(classes.begin() + static_cast<std::ptrdiff_t>(pos),
                    classes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(parts[f].begin(), parts[f].end());
    pos += len;
  }
  return parts;
}

CrossValidationReport cross_validate(const TrainConfig& cfg, std::span<const LabeledExample> base_pool,
                                     std::span<const LabeledExample> novel_pool,
                                     const std::optional<fs::path>& run_dir, const ProgressFn& progress) {
  cfg.validate();
  if (cfg.folds < 2) throw_usage("cross-validation needs at least 2 folds");
  const std::vector<int> classes = class_ids(base_pool);
  const std::size_t need = static_cast<std::size_t>(cfg.folds) * static_cast<std::size_t>(cfg.episode.n_way);
  if (classes.size() < need) {
    throw_data("cross-validation needs " + std::to_string(need) + " base classes, found " +
               std::to_string(classes.size()));
  }
  const auto parts = partition_classes(classes, cfg.folds, derive_seed(cfg.seed, "folds"));

  CrossValidationReport report;
  json folds_doc = json::array();
  for (std::size_t f = 0; f < parts.size(); ++f) {
    std::vector<int> train_classes;
    for (std::size_t g = 0; g < parts.size(); ++g) {
      if (g != f) train_classes.insert(train_classes.end(), parts[g].begin(), parts[g].end());
    }
    const auto train = filter_classes(base_pool, train_classes);
    const auto val = filter_classes(base_pool, parts[f]);
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(derive_seed(cfg.seed, "fold"), f);
    std::optional<fs::path> fold_dir;
    if (run_dir) fold_dir = *run_dir / ("fold_" + std::to_string(f));
    TrainOutcome o = fit(fold_cfg, train, val, novel_pool, fold_dir, progress);
    report.folds.push_back({parts[f], o.best_epoch, std::move(o.test)});
    json fd = to_json(report.folds.back().test);
    fd.erase("config");
    fd["val_classes"] = parts[f];
    fd["best_epoch"] = o.best_epoch;
    folds_doc.push_back(std::move(fd));
  }
  double sum = 0.0;
  for (const auto& f : report.folds) sum += f.test.mean_accuracy;
  report.aggregate_mean = sum / static_cast<double>(report.folds.size());
  if (run_dir) {
    fs::create_directories(*run_dir);
    write_json(*run_dir / "config.json", to_json(cfg));
    write_json(*run_dir / "report.json",
               json{{"aggregate_mean_accuracy", report.aggregate_mean}, {"folds", folds_doc}, {"config", to_json(cfg)}});
  }
  return report;
}

GradCheckReport grad_check(const ModelConfig& config, const ModelParameters& params, const EpisodeBatch& batch,
                           double step, const std::function<void(ModelParameters&)>& tamper) {
  if (!(step > 0.0)) throw_usage("finite-difference step must be positive");
  ModelTape tape;
  const EpisodeResult res = forward_episode(config, params, batch, Mode::Train, &tape);
  ModelParameters analytic = zeros_like(params);
  backward_episode(config, params, batch, res, tape, analytic);
  if (!gradients_finite(analytic)) throw_numeric("non-finite analytic gradient");
  if (tamper) tamper(analytic);

  std::vector<std::string> names;
  visit_model_tensors(params, [&](const std::string& name, const Matrix&, bool trainable) {
    if (trainable) names.push_back(name);
  });
  ModelParameters probe = params;
  const std::vector<Matrix*> p = trainable_tensors(probe);
  const std::vector<const Matrix*> a = trainable_tensors(std::as_const(analytic));

  GradCheckReport report;
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (Eigen::Index i = 0; i < p[t]->size(); ++i) {
      double& theta = p[t]->data()[i];
      const double keep = theta;
      theta = keep + step;
      const double up = forward_episode(config, probe, batch, Mode::Train).loss;
      theta = keep - step;
      const double down = forward_episode(config, probe, batch, Mode::Train).loss;
      theta = keep;
      const double numeric = (up - down) / (2.0 * step);
      if (!std::isfinite(numeric)) throw_numeric("non-finite finite-difference loss");
      const double an = a[t]->data()[i];
      const double err = std::abs(an - numeric) / std::max({std::abs(an), std::abs(numeric), 1e-8});
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_tensor = names[t];
      }
      ++report.scalars;
    }
  }
  return report;
}

GradCheckSetup tiny_gradcheck_setup(BackboneKind kind, const CiaConfig& cia, bool with_cia, std::uint64_t seed) {
  GradCheckSetup s;
  s.config.backbone.kind = kind;
  s.config.backbone.layer_widths = {8, 8};
  s.config.backbone.k_neighbors = 4;
  s.config.backbone.embed_dim = 8;
  s.config.backbone.normalization = false;
  s.config.cia = cia;
  s.config.cia.hidden = std::min(cia.hidden, 8);
  s.config.with_cia = with_cia;
  s.params = init_model(s.config, derive_seed(seed, "init"));

  const ShapeFamily families[] = {ShapeFamily::Sphere, ShapeFamily::Cube};
  std::vector<LabeledExample> pool;
  for (int c = 0; c < 2; ++c) {
    const auto params = default_family_params(families[c]);
    auto cls = generate_synthetic_class(families[c], params, c, 3, 8, derive_seed(seed, c), 3 * c);
    pool.insert(pool.end(), cls.begin(), cls.end());
  }
  const Episode ep = sample_episode(pool, EpisodeSpec{2, 1, 2}, derive_seed(seed, "episode"));
  s.batch = prepare_batch(ep, 8, nullptr, derive_seed(seed, "prepare"));
  return s;
}

void write_history_csv(const fs::path& path, std::span<const HistoryRow> rows) {
  std::ofstream out(path);
  if (!out) throw_data("cannot write " + path.string());
  out << "epoch,lr,train_loss,train_acc,val_acc\n";
  char line[256];
  for (const HistoryRow& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.lr, r.train_loss, r.train_acc,
                  r.val_acc);
    out << line;
  }
}

std::vector<HistoryRow> read_history_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_data("history not found: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("epoch,lr,train_loss,train_acc,val_acc", 0) != 0) throw_data("malformed history header");
  std::vector<HistoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw_data("malformed history row: " + line);
      }
    }
    if (v.size() != 5) throw_data("malformed history row: " + line);
    rows.push_back({static_cast<int>(v[0]), v[1], v[2], v[3], v[4]});
  }
  return rows;
}

}  // namespace fspc
