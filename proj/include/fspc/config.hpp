#pragma once

#include "fspc/dataset.hpp"
#include "fspc/episode.hpp"
#include "fspc/model.hpp"
#include "fspc/optimizer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace fspc {

inline constexpr int kConfigSchemaVersion = 1;

struct TrainConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  int epochs = 10;
  int train_episodes = 100;
  int val_episodes = 50;
  int test_episodes = 200;
  int folds = 1;  // 1 uses the manifest's base/novel split as is
  int n_points = 128;
  bool augment = true;
  EpisodeSpec episode;
  AugmentationConfig augmentation;
  ModelConfig model;
  OptimizerConfig optimizer;

  void validate() const;
};

/// Full-size settings: 80 epochs, 400/600/700 episodes, 512 points,
/// DGCNN (64, 64, 128, 256), k = 20, d = 256, 5 folds.
TrainConfig paper_profile();
/// Scaled down to finish on a single core in minutes.
TrainConfig desk_profile();
TrainConfig profile_by_name(const std::string& name);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Sets one dotted key ("model.cia.k1=4") in a config document. The key must
/// already exist; the value is parsed as JSON when possible, else taken as a
/// string, and must match the existing value's type.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Merges `layer` into `doc`, rejecting keys that `doc` does not have.
void merge_config(nlohmann::json& doc, const nlohmann::json& layer, const std::string& path = "");

/// profile defaults <- config file (optional) <- overrides, then validated.
TrainConfig resolve_config(const std::string& profile, const std::string& config_file,
                           const std::vector<std::string>& overrides);

}  // namespace fspc
