#pragma once

// The full few-shot model: backbone -> prototypes -> CIA -> distance softmax.

#include "fspc/backbone.hpp"
#include "fspc/cia.hpp"
#include "fspc/episode.hpp"

#include <optional>
#include <vector>

namespace fspc {

struct ModelConfig {
  BackboneConfig backbone;
  CiaConfig cia;
  bool with_cia = true;  // false builds a plain prototypical network with no CIA tensors

  void validate() const;
};

struct ModelParameters {
  BackboneParameters backbone;
  std::optional<CiaParameters> cia;
};

/// Backbone and CIA are seeded from independent child seeds, so the backbone
/// initialisation does not depend on whether CIA is present.
ModelParameters init_model(const ModelConfig& config, std::uint64_t seed);
ModelParameters zeros_like(const ModelParameters& params);

template <class Params, class Fn>
void visit_model_tensors(Params& params, Fn&& fn) {
  visit_backbone_tensors(params.backbone, "backbone.", fn);
  if (params.cia) visit_cia_tensors(*params.cia, "cia.", fn);
}

/// Number of trainable scalars.
std::size_t trainable_size(const ModelParameters& params);

/// Clouds of one episode after preprocessing, with episode-local labels.
struct EpisodeBatch {
  std::vector<PointCloud> support;
  std::vector<PointCloud> query;
  std::vector<int> support_labels;
  std::vector<int> query_labels;
  int n_way = 0;
};

/// Uses the episode's clouds as they are.
EpisodeBatch make_batch(const Episode& episode);

struct EpisodeResult {
  Matrix probs;
  double loss = 0.0;      // NaN when the episode has no queries
  double accuracy = 0.0;  // NaN when the episode has no queries
};

struct ModelTape {
  BackboneTape backbone;
  CiaTape cia;
  Matrix prototypes;  // after CIA
  Matrix queries;     // after CIA
};

EpisodeResult forward_episode(const ModelConfig& config, const ModelParameters& params,
                              const EpisodeBatch& batch, Mode mode, ModelTape* tape = nullptr);

/// Accumulates d(episode loss)/d(params) into grads.
void backward_episode(const ModelConfig& config, const ModelParameters& params, const EpisodeBatch& batch,
                      const EpisodeResult& result, const ModelTape& tape, ModelParameters& grads);

}  // namespace fspc
