#include "fspc/config.hpp"

#include <fstream>
#include <sstream>

namespace fspc {

using nlohmann::json;

namespace {

std::string axis_name(Axis a) {
  switch (a) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "z";
}

Axis parse_axis(const std::string& s) {
  if (s == "x") return Axis::X;
  if (s == "y") return Axis::Y;
  if (s == "z") return Axis::Z;
  throw_usage("unknown rotation axis: " + s);
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw_usage(std::string("missing config key: ") + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw_usage(std::string("wrong type for config key: ") + key);
  }
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integers may not silently become fractions.
    return !(a.is_number_integer() && b.is_number_float());
  }
  return a.type() == b.type();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw_usage("epochs must be at least 1");
  if (train_episodes < 1 || test_episodes < 1) throw_usage("train and test episode counts must be at least 1");
  if (val_episodes < 0) throw_usage("val_episodes must be non-negative");
  if (folds < 1) throw_usage("folds must be at least 1");
  if (n_points < 1) throw_usage("n_points must be at least 1");
  episode.validate();
  augmentation.validate();
  model.validate();
  optimizer.validate();
}

TrainConfig paper_profile() {
  TrainConfig c;
  c.profile = "paper";
  c.epochs = 80;
  c.train_episodes = 400;
  c.val_episodes = 600;
  c.test_episodes = 700;
  c.folds = 5;
  c.n_points = 512;
  c.model.backbone.layer_widths = {64, 64, 128, 256};
  c.model.backbone.k_neighbors = 20;
  c.model.backbone.embed_dim = 256;
  return c;
}

TrainConfig desk_profile() {
  TrainConfig c;
  c.profile = "desk";
  c.epochs = 10;
  c.train_episodes = 100;
  c.val_episodes = 50;
  c.test_episodes = 200;
  c.folds = 1;
  c.n_points = 128;
  c.model.backbone.layer_widths = {32, 32, 64};
  c.model.backbone.k_neighbors = 12;
  c.model.backbone.embed_dim = 128;
  c.episode.q_query = 10;
  return c;
}

TrainConfig profile_by_name(const std::string& name) {
  if (name == "paper") return paper_profile();
  if (name == "desk") return desk_profile();
  throw_usage("unknown profile: " + name + " (expected paper or desk)");
}

json to_json(const ModelConfig& cfg) {
  const BackboneConfig& b = cfg.backbone;
  return json{
      {"backbone",
       {{"kind", std::string(to_string(b.kind))},
        {"layer_widths", b.layer_widths},
        {"k_neighbors", b.k_neighbors},
        {"embed_dim", b.embed_dim},
        {"normalization", b.normalization},
        {"norm_momentum", b.norm_momentum},
        {"norm_eps", b.norm_eps}}},
      {"with_cia", cfg.with_cia},
      {"cia",
       {{"sci", cfg.cia.sci}, {"cif", cfg.cia.cif}, {"k1", cfg.cia.k1}, {"k2", cfg.cia.k2},
        {"hidden", cfg.cia.hidden}}},
  };
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  const json& b = j.at("backbone");
  c.backbone.kind = parse_backbone_kind(field<std::string>(b, "kind"));
  c.backbone.layer_widths = field<std::vector<int>>(b, "layer_widths");
  c.backbone.k_neighbors = field<int>(b, "k_neighbors");
  c.backbone.embed_dim = field<int>(b, "embed_dim");
  c.backbone.normalization = field<bool>(b, "normalization");
  c.backbone.norm_momentum = field<double>(b, "norm_momentum");
  c.backbone.norm_eps = field<double>(b, "norm_eps");
  c.with_cia = field<bool>(j, "with_cia");
  const json& a = j.at("cia");
  c.cia.sci = field<bool>(a, "sci");
  c.cia.cif = field<bool>(a, "cif");
  c.cia.k1 = field<int>(a, "k1");
  c.cia.k2 = field<int>(a, "k2");
  c.cia.hidden = field<int>(a, "hidden");
  return c;
}

json to_json(const TrainConfig& cfg) {
  const AugmentationConfig& a = cfg.augmentation;
  const OptimizerConfig& o = cfg.optimizer;
  return json{
      {"schema_version", kConfigSchemaVersion},
      {"profile", cfg.profile},
      {"seed", cfg.seed},
      {"epochs", cfg.epochs},
      {"train_episodes", cfg.train_episodes},
      {"val_episodes", cfg.val_episodes},
      {"test_episodes", cfg.test_episodes},
      {"folds", cfg.folds},
      {"n_points", cfg.n_points},
      {"augment", cfg.augment},
      {"episode", {{"n_way", cfg.episode.n_way}, {"k_shot", cfg.episode.k_shot}, {"q_query", cfg.episode.q_query}}},
      {"augmentation",
       {{"jitter_sigma", a.jitter_sigma},
        {"jitter_clip", a.jitter_clip},
        {"axis", axis_name(a.axis)},
        {"angle_min", a.angle_min},
        {"angle_max", a.angle_max}}},
      {"model", to_json(cfg.model)},
      {"optimizer",
       {{"lr0", o.lr0},
        {"gamma", o.gamma},
        {"step_epochs", o.step_epochs},
        {"beta1", o.beta1},
        {"beta2", o.beta2},
        {"epsilon", o.epsilon}}},
  };
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw_usage("config must be a JSON object");
  const int version = field<int>(j, "schema_version");
  if (version != kConfigSchemaVersion) {
    throw_usage("unsupported config schema_version " + std::to_string(version));
  }
  TrainConfig c;
  c.profile = field<std::string>(j, "profile");
  c.seed = field<std::uint64_t>(j, "seed");
  c.epochs = field<int>(j, "epochs");
  c.train_episodes = field<int>(j, "train_episodes");
  c.val_episodes = field<int>(j, "val_episodes");
  c.test_episodes = field<int>(j, "test_episodes");
  c.folds = field<int>(j, "folds");
  c.n_points = field<int>(j, "n_points");
  c.augment = field<bool>(j, "augment");
  const json& e = j.at("episode");
  c.episode.n_way = field<int>(e, "n_way");
  c.episode.k_shot = field<int>(e, "k_shot");
  c.episode.q_query = field<int>(e, "q_query");
  const json& a = j.at("augmentation");
  c.augmentation.jitter_sigma = field<double>(a, "jitter_sigma");
  c.augmentation.jitter_clip = field<double>(a, "jitter_clip");
  c.augmentation.axis = parse_axis(field<std::string>(a, "axis"));
  c.augmentation.angle_min = field<double>(a, "angle_min");
  c.augmentation.angle_max = field<double>(a, "angle_max");
  c.model = model_config_from_json(j.at("model"));
  const json& o = j.at("optimizer");
  c.optimizer.lr0 = field<double>(o, "lr0");
  c.optimizer.gamma = field<double>(o, "gamma");
  c.optimizer.step_epochs = field<int>(o, "step_epochs");
  c.optimizer.beta1 = field<double>(o, "beta1");
  c.optimizer.beta2 = field<double>(o, "beta2");
  c.optimizer.epsilon = field<double>(o, "epsilon");
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw_usage("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw_usage("unknown config key: " + key);
    node = &(*node)[part];
  }
  if (node->is_object()) throw_usage("config key is a section, not a value: " + key);

  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  if (!same_kind(*node, value)) throw_usage("type mismatch for config key " + key + ": " + text);
  *node = value;
}

void merge_config(json& doc, const json& layer, const std::string& path) {
  if (!layer.is_object()) throw_usage("config section must be an object: " + (path.empty() ? "<root>" : path));
  for (const auto& [key, value] : layer.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!doc.contains(key)) throw_usage("unknown config key: " + full);
    json& target = doc[key];
    if (target.is_object()) {
      merge_config(target, value, full);
    } else {
      if (!same_kind(target, value)) throw_usage("type mismatch for config key: " + full);
      target = value;
    }
  }
}

TrainConfig resolve_config(const std::string& profile, const std::string& config_file,
                           const std::vector<std::string>& overrides) {
  json doc = to_json(profile_by_name(profile));
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) throw_usage("config file not found: " + config_file);
    json layer;
    try {
      layer = json::parse(in);
    } catch (const json::parse_error& e) {
      throw_usage("malformed config file " + config_file + ": " + e.what());
    }
    if (layer.contains("schema_version") && layer["schema_version"] != kConfigSchemaVersion) {
      throw_usage("unsupported config schema_version in " + config_file);
    }
    merge_config(doc, layer);
  }
  for (const std::string& o : overrides) apply_override(doc, o);
  TrainConfig cfg = train_config_from_json(doc);
  cfg.validate();
  return cfg;
}

}  // namespace fspc
