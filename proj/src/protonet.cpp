#include "fspc/protonet.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fspc {

namespace {

void check_labels(const Matrix& probs, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw_usage("label count does not match the number of queries");
  }
  for (int y : labels) {
    if (y < 0 || y >= probs.cols()) throw_usage("label out of range: " + std::to_string(y));
  }
}

std::vector<int> shot_counts(std::span<const int> labels, int n_way) {
  std::vector<int> counts(static_cast<std::size_t>(n_way), 0);
  for (int y : labels) {
    if (y < 0 || y >= n_way) throw_usage("support label out of range: " + std::to_string(y));
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < n_way; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) throw_usage("missing class " + std::to_string(c) + " in support");
    if (counts[static_cast<std::size_t>(c)] != counts[0]) throw_usage("unequal shots across classes");
  }
  return counts;
}

}  // namespace

Matrix compute_prototypes(const Matrix& support, std::span<const int> labels, int n_way) {
  if (static_cast<Eigen::Index>(labels.size()) != support.rows()) {
    throw_usage("support label count does not match the number of embeddings");
  }
  if (n_way < 1) throw_usage("n_way must be positive");
  const std::vector<int> counts = shot_counts(labels, n_way);
  Matrix protos = Matrix::Zero(n_way, support.cols());
  for (std::size_t r = 0; r < labels.size(); ++r) protos.row(labels[r]) += support.row(static_cast<Eigen::Index>(r));
  return protos / static_cast<double>(counts[0]);
}

Matrix classify(const Matrix& prototypes, const Matrix& queries) {
  if (queries.rows() > 0 && queries.cols() != prototypes.cols()) {
    throw_usage("query and prototype widths differ");
  }
  Matrix probs(queries.rows(), prototypes.rows());
  for (Eigen::Index j = 0; j < queries.rows(); ++j) {
    for (Eigen::Index i = 0; i < prototypes.rows(); ++i) {
      probs(j, i) = -(queries.row(j) - prototypes.row(i)).squaredNorm();
    }
    const double hi = probs.row(j).maxCoeff();
    probs.row(j) = (probs.row(j).array() - hi).exp().matrix();
    probs.row(j) /= probs.row(j).sum();
  }
  return probs;
}

double episode_loss(const Matrix& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  if (probs.rows() == 0) throw_usage("episode loss needs at least one query");
  double total = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    total += std::log(std::max(probs(static_cast<Eigen::Index>(j), labels[j]), kLogFloor));
  }
  return -total / (static_cast<double>(probs.cols()) * static_cast<double>(probs.rows()));
}

double episode_accuracy(const Matrix& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  if (probs.rows() == 0) throw_usage("episode accuracy needs at least one query");
  int correct = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    Eigen::Index best = 0;
    probs.row(static_cast<Eigen::Index>(j)).maxCoeff(&best);  // first maximum
    if (best == labels[j]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

HeadGradients episode_loss_backward(const Matrix& prototypes, const Matrix& queries, const Matrix& probs,
                                    std::span<const int> labels) {
  check_labels(probs, labels);
  const double scale = 1.0 / (static_cast<double>(probs.cols()) * static_cast<double>(probs.rows()));
  HeadGradients g{Matrix::Zero(prototypes.rows(), prototypes.cols()),
                  Matrix::Zero(queries.rows(), queries.cols())};
  for (Eigen::Index j = 0; j < queries.rows(); ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    // Below the floor the loss term is constant.
    if (probs(j, y) < kLogFloor) continue;
    for (Eigen::Index i = 0; i < prototypes.rows(); ++i) {
      // d loss / d logit_ji, logit_ji = -|q_j - p_i|^2
      const double d_logit = scale * (probs(j, i) - (i == y ? 1.0 : 0.0));
      const RowVector diff = queries.row(j) - prototypes.row(i);
      g.queries.row(j) -= 2.0 * d_logit * diff;
      g.prototypes.row(i) += 2.0 * d_logit * diff;
    }
  }
  return g;
}

Matrix prototypes_backward(const Matrix& d_prototypes, std::span<const int> labels) {
  const auto n_way = static_cast<int>(d_prototypes.rows());
  const std::vector<int> counts = shot_counts(labels, n_way);
  Matrix d_support(static_cast<Eigen::Index>(labels.size()), d_prototypes.cols());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    d_support.row(static_cast<Eigen::Index>(r)) = d_prototypes.row(labels[r]) / static_cast<double>(counts[0]);
  }
  return d_support;
}

}  // namespace fspc
