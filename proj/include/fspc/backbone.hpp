#pragma once

#include "fspc/core.hpp"
#include "fspc/dataset.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fspc {

enum class BackboneKind { PointNet, Dgcnn };

std::string_view to_string(BackboneKind kind) noexcept;
BackboneKind parse_backbone_kind(std::string_view name);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::Dgcnn;
  std::vector<int> layer_widths{64, 64, 128, 256};
  int k_neighbors = 20;  // dgcnn only; clamped to n - 1 at run time
  int embed_dim = 256;
  bool normalization = true;
  double norm_momentum = 0.1;
  double norm_eps = 1e-5;

  /// Throws Usage on an inconsistent configuration.
  void validate() const;
};

/// Per-channel normalisation: learnable scale/shift plus tracked statistics.
struct NormParams {
  Matrix gamma;  // 1 x c
  Matrix beta;
  Matrix running_mean;
  Matrix running_var;
};

/// A shared (per point) linear map. `bias` is empty when `norm` is in use;
/// `norm` tensors are empty otherwise. EdgeConv layers store
/// weight = [W_self | W_diff], acting on concat(x_i, x_j - x_i).
struct LinearParams {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
  NormParams norm;

  bool normalized() const noexcept { return norm.gamma.size() > 0; }
};

struct BackboneParameters {
  BackboneConfig config;
  std::vector<LinearParams> layers;
  LinearParams head;
};

/// Calls fn(name, tensor, trainable) for every non-empty tensor in a fixed
/// order. Running statistics are reported with trainable == false.
template <class Linear, class Fn>
void visit_linear(Linear& layer, const std::string& prefix, Fn&& fn) {
  auto visit = [&](const char* name, auto& m, bool trainable) {
    if (m.size() > 0) fn(prefix + name, m, trainable);
  };
  visit("weight", layer.weight, true);
  visit("bias", layer.bias, true);
  visit("norm.gamma", layer.norm.gamma, true);
  visit("norm.beta", layer.norm.beta, true);
  visit("norm.running_mean", layer.norm.running_mean, false);
  visit("norm.running_var", layer.norm.running_var, false);
}

template <class Params, class Fn>
void visit_backbone_tensors(Params& params, const std::string& prefix, Fn&& fn) {
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    visit_linear(params.layers[i], prefix + "layer" + std::to_string(i) + ".", fn);
  }
  visit_linear(params.head, prefix + "head.", fn);
}

/// Fan-in scaled uniform weights (He bound for the leaky rectifier), zero biases,
/// unit scales. Deterministic given seed.
BackboneParameters init_backbone(const BackboneConfig& config, std::uint64_t seed);

/// Gradient storage with the shape of `params` (all zeros).
BackboneParameters zeros_like(const BackboneParameters& params);

/// kNN graph of the rows of `points`; see kernels::knn.
IndexMatrix knn_graph(const Matrix& points, int k);

/// One EdgeConv layer on a single cloud using the layer's own bias/normalisation
/// in evaluation mode (running statistics).
Matrix edgeconv_layer(const Matrix& features, const IndexMatrix& neighbors, const LinearParams& layer,
                      double norm_eps = 1e-5);

// ---------------------------------------------------------------------------

/// Everything the backward pass needs from a batched forward pass.
struct BackboneTape {
  struct Layer {
    Matrix input;
    IndexMatrix neighbors;  // EdgeConv only
    Matrix self_term;       // EdgeConv: x (W_self - W_diff)^T [+ b]
    Matrix other_term;      // EdgeConv: x W_diff^T
    IndexMatrix slot;       // EdgeConv: selected edge per (row, channel)
    Matrix pre;             // input to the activation (after normalisation)
    Matrix xhat;            // normalised values (selected edge for EdgeConv)
    RowVector mean;         // statistics used by the normalisation
    RowVector var;
    bool activated = true;
  };
  Mode mode = Mode::Eval;
  int clouds = 0;
  int points = 0;
  int k = 0;
  std::vector<Layer> layers;
  Layer head;
  IndexMatrix pool_arg;
};

/// Embeds B clouds (all with the same point count) as a B x d matrix. In Train
/// mode normalisation uses batch statistics; Eval uses the tracked statistics.
/// When `tape` is non-null it receives what backward_embed needs.
Matrix embed(std::span<const PointCloud> clouds, const BackboneParameters& params,
             Mode mode = Mode::Eval, BackboneTape* tape = nullptr);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(embeddings).
void backward_embed(const BackboneParameters& params, const BackboneTape& tape,
                    const Matrix& d_embed, BackboneParameters& grads);

/// Folds the batch statistics recorded in a Train-mode tape into the running
/// statistics (exponential moving average with config.norm_momentum).
void update_running_stats(BackboneParameters& params, const BackboneTape& tape);

}  // namespace fspc
