#pragma once

#include "fspc/config.hpp"
#include "fspc/model.hpp"
#include "fspc/optimizer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fspc {

/// Resamples every cloud to n_points, normalises it and, when `aug` is given,
/// augments it. Cloud r uses child seeds 2r and 2r + 1 of `seed`.
EpisodeBatch prepare_batch(const Episode& episode, int n_points, const AugmentationConfig* aug,
                           std::uint64_t seed);

struct RunReport {
  double mean_accuracy = 0.0;
  double ci95_halfwidth = 0.0;  // 1.96 * sample sd / sqrt(E)
  std::vector<double> per_episode_accuracies;
  nlohmann::json config = nlohmann::json::object();
  double wall_time_s = 0.0;
};

/// Mean and confidence half-width of per-episode accuracies. Throws Usage on
/// an empty list.
RunReport summarize(std::vector<double> accuracies);
nlohmann::json to_json(const RunReport& report);
RunReport run_report_from_json(const nlohmann::json& j);

struct TrainerState {
  ModelParameters params;
  Adam optimizer;

  TrainerState(ModelParameters p, const OptimizerConfig& cfg) : params(std::move(p)), optimizer(params, cfg) {}
};

struct StepResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// One forward pass in training mode, one Adam step at `lr`, and a running
/// statistics update. Throws Numeric on a non-finite loss or gradient.
StepResult train_episode(const ModelConfig& config, TrainerState& state, const EpisodeBatch& batch, double lr);

/// Scores prepared batches without touching the parameters.
RunReport evaluate(const ModelConfig& config, const ModelParameters& params, std::span<const EpisodeBatch> batches);

/// Scores `count` episodes of the stream (pool, spec, seed); clouds are
/// prepared without augmentation. Episodes run in parallel and are reduced by
/// index.
RunReport evaluate(const ModelConfig& config, const ModelParameters& params, std::span<const LabeledExample> pool,
                   const EpisodeSpec& spec, std::size_t count, std::uint64_t seed, int n_points);

struct HistoryRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;  // NaN without validation episodes
};

struct TrainOutcome {
  ModelParameters best;
  int best_epoch = -1;  // -1: no epochs were run
  std::vector<HistoryRow> history;
  RunReport test;
};

using ProgressFn = std::function<void(const HistoryRow&)>;

/// Trains on `train_pool`, selects the epoch with the best validation
/// accuracy on `val_pool` (ties keep the earlier epoch, no validation keeps
/// the last), then tests it on `test_pool`. With `run_dir` set, writes
/// config.json, checkpoints/epoch_<k>.bin, history.csv and report.json.
TrainOutcome fit(const TrainConfig& cfg, std::span<const LabeledExample> train_pool,
                 std::span<const LabeledExample> val_pool, std::span<const LabeledExample> test_pool,
                 const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                 const ProgressFn& progress = nullptr);

/// Near-even partition of shuffled class ids into `folds` subsets, each
/// sorted ascending.
std::vector<std::vector<int>> partition_classes(std::vector<int> classes, int folds, std::uint64_t seed);

struct FoldResult {
  std::vector<int> val_classes;
  int best_epoch = -1;
  RunReport test;
};

struct CrossValidationReport {
  std::vector<FoldResult> folds;
  double aggregate_mean = 0.0;  // mean of fold test accuracies
};

/// Each fold trains on the other subsets, validates on its own and tests on
/// the novel pool. Throws Data with fewer than folds * n_way base classes.
CrossValidationReport cross_validate(const TrainConfig& cfg, std::span<const LabeledExample> base_pool,
                                     std::span<const LabeledExample> novel_pool,
                                     const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                                     const ProgressFn& progress = nullptr);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t scalars = 0;
};

/// Central differences of the episode loss against the analytic gradient
/// for every trainable scalar; relative error |a - n| / max(|a|, |n|, 1e-8).
/// `tamper`, when set, edits the analytic gradient before the comparison.
GradCheckReport grad_check(const ModelConfig& config, const ModelParameters& params, const EpisodeBatch& batch,
                           double step = 1e-5, const std::function<void(ModelParameters&)>& tamper = nullptr);

struct GradCheckSetup {
  ModelConfig config;
  ModelParameters params;
  EpisodeBatch batch;
};

/// A tiny 2-way 1-shot 2-query problem on 8-point synthetic clouds: widths
/// (8, 8), d = 8, no normalisation.
GradCheckSetup tiny_gradcheck_setup(BackboneKind kind, const CiaConfig& cia, bool with_cia, std::uint64_t seed);

void write_history_csv(const std::filesystem::path& path, std::span<const HistoryRow> rows);
std::vector<HistoryRow> read_history_csv(const std::filesystem::path& path);

}  // namespace fspc
