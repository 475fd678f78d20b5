#pragma once

#include "fspc/model.hpp"
#include "fspc/training.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fspc {

/// Ablation settings in table order.
inline constexpr const char* kAblationSettings[] = {"ProtoNet", "+SCI", "+CIF", "+CIA"};

/// Label of a model configuration: ProtoNet, +SCI, +CIF or +CIA.
std::string setting_label(const ModelConfig& config);
/// `base` with the CIA toggles of `setting`; throws Usage on an unknown label.
ModelConfig ablation_model(const ModelConfig& base, const std::string& setting);

struct TableRow {
  std::string setting;
  std::string backbone;
  int n_way = 0;
  int k_shot = 0;
  double mean_pct = 0.0;
  double ci95_pct = 0.0;
  std::string run;
};

/// Reads report.json (and its config) from each run directory; rows come out
/// ordered by backbone, shot, then setting in table order.
std::vector<TableRow> collect_rows(std::span<const std::filesystem::path> run_dirs);

std::string table_csv(std::span<const TableRow> rows);
std::string table_text(std::span<const TableRow> rows);

/// Line plot of training loss, training accuracy and validation accuracy.
std::string history_svg(std::span<const HistoryRow> rows);

}  // namespace fspc
