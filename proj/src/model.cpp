#include "fspc/model.hpp"

#include "fspc/protonet.hpp"
#include "fspc/rng.hpp"

#include <cmath>
#include <limits>

namespace fspc {

void ModelConfig::validate() const {
  backbone.validate();
  cia.validate();
}

ModelParameters init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParameters p;
  p.backbone = init_backbone(config.backbone, derive_seed(seed, "backbone"));
  if (config.with_cia) p.cia = init_cia(config.backbone.embed_dim, config.cia, derive_seed(seed, "cia"));
  return p;
}

ModelParameters zeros_like(const ModelParameters& params) {
  ModelParameters g;
  g.backbone = zeros_like(params.backbone);
  if (params.cia) g.cia = zeros_like(*params.cia);
  return g;
}

std::size_t trainable_size(const ModelParameters& params) {
  std::size_t n = 0;
  visit_model_tensors(params, [&](const std::string&, const Matrix& m, bool trainable) {
    if (trainable) n += static_cast<std::size_t>(m.size());
  });
  return n;
}

EpisodeBatch make_batch(const Episode& episode) {
  EpisodeBatch b;
  for (const auto& ex : episode.support) b.support.push_back(ex.cloud);
  for (const auto& ex : episode.query) b.query.push_back(ex.cloud);
  b.support_labels = episode.support_labels();
  b.query_labels = episode.query_labels();
  b.n_way = episode.n_way();
  return b;
}

EpisodeResult forward_episode(const ModelConfig& config, const ModelParameters& params,
                              const EpisodeBatch& batch, Mode mode, ModelTape* tape) {
  std::vector<PointCloud> clouds = batch.support;
  clouds.insert(clouds.end(), batch.query.begin(), batch.query.end());
  const auto n_support = static_cast<Eigen::Index>(batch.support.size());
  const auto n_query = static_cast<Eigen::Index>(batch.query.size());

  ModelTape local;
  ModelTape& t = tape != nullptr ? *tape : local;
  const Matrix emb = embed(clouds, params.backbone, mode, &t.backbone);
  if (!emb.allFinite()) throw_numeric("non-finite embedding");

  const Matrix protos = compute_prototypes(emb.topRows(n_support), batch.support_labels, batch.n_way);
  const Matrix queries = emb.bottomRows(n_query);
  if (params.cia) {
    CiaOutput adapted = cia_forward(protos, queries, *params.cia, config.cia, &t.cia);
    t.prototypes = std::move(adapted.prototypes);
    t.queries = std::move(adapted.queries);
  } else {
    t.prototypes = protos;
    t.queries = queries;
  }

  EpisodeResult r;
  r.probs = classify(t.prototypes, t.queries);
  if (n_query == 0) {
    r.loss = r.accuracy = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.loss = episode_loss(r.probs, batch.query_labels);
  r.accuracy = episode_accuracy(r.probs, batch.query_labels);
  if (!std::isfinite(r.loss)) throw_numeric("non-finite episode loss");
  return r;
}

void backward_episode(const ModelConfig& config, const ModelParameters& params, const EpisodeBatch& batch,
                      const EpisodeResult& result, const ModelTape& tape, ModelParameters& grads) {
  if (batch.query.empty()) throw_usage("cannot back-propagate an episode without queries");
  const HeadGradients head = episode_loss_backward(tape.prototypes, tape.queries, result.probs, batch.query_labels);

  Matrix d_protos = head.prototypes;
  Matrix d_queries = head.queries;
  if (params.cia) {
    CiaOutput d_in = cia_backward(*params.cia, config.cia, tape.cia, head.prototypes, head.queries, *grads.cia);
    d_protos = std::move(d_in.prototypes);
    d_queries = std::move(d_in.queries);
  }
  const auto n_support = static_cast<Eigen::Index>(batch.support.size());
  Matrix d_embed(n_support + d_queries.rows(), d_protos.cols());
  d_embed.topRows(n_support) = prototypes_backward(d_protos, batch.support_labels);
  d_embed.bottomRows(d_queries.rows()) = d_queries;
  backward_embed(params.backbone, tape.backbone, d_embed, grads.backbone);
}

}  // namespace fspc
