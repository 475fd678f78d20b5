#pragma once

#include "fspc/core.hpp"

#include <span>

namespace fspc {

/// Floor applied inside the log of the episode loss.
inline constexpr double kLogFloor = 1e-12;

/// Row c is the mean of the support embeddings labelled c. Every class in
/// 0..n_way-1 must have the same, non-zero number of shots.
Matrix compute_prototypes(const Matrix& support, std::span<const int> labels, int n_way);

/// probs(j, i) = exp(-|q_j - p_i|^2) / sum_i' exp(-|q_j - p_i'|^2), stabilised
/// by subtracting the row maximum of the logits.
Matrix classify(const Matrix& prototypes, const Matrix& queries);

/// -1/(N * N_q) * sum_j log max(probs(j, y_j), 1e-12), with N = probs.cols().
double episode_loss(const Matrix& probs, std::span<const int> labels);

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double episode_accuracy(const Matrix& probs, std::span<const int> labels);

/// Gradient of episode_loss with respect to the prototypes and the queries.
struct HeadGradients {
  Matrix prototypes;
  Matrix queries;
};
HeadGradients episode_loss_backward(const Matrix& prototypes, const Matrix& queries, const Matrix& probs,
                                    std::span<const int> labels);

/// Spreads prototype gradients back onto the support rows (each gets 1/K).
Matrix prototypes_backward(const Matrix& d_prototypes, std::span<const int> labels);

}  // namespace fspc
