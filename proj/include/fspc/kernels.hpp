#pragma once

// Inner loops of the point-set backbones. Every parallel kernel here has a
// plain serial counterpart (suffix _reference) that evaluates the same quantity
// the direct way; tests compare the two and bench/ times them.
//
// Batched layouts stack B clouds of n points as a (B*n) x c row-major matrix.
// Neighbour indices are cloud-local (0..n-1).

#include "fspc/core.hpp"

#include <span>
#include <vector>

namespace fspc::kernels {

/// k nearest rows by squared Euclidean distance, self excluded, ties to the
/// lower index. Full stable sort per row; serial.
IndexMatrix knn_reference(const Matrix& x, int k);

/// Same result as knn_reference, partial selection, OpenMP over rows.
IndexMatrix knn(const Matrix& x, int k);

/// kNN inside each of `clouds` equal blocks of rows. OpenMP over clouds.
IndexMatrix knn_batched(const Matrix& x, int clouds, int k);

/// Per-channel batch-normalisation description used by the reference kernel.
struct NormSpec {
  RowVector gamma;
  RowVector beta;
  RowVector running_mean;
  RowVector running_var;
  double eps = 1e-5;
  bool batch_statistics = true;  // Train mode: statistics over every edge of the batch
};

/// EdgeConv evaluated edge by edge: e_ij = W [x_i ; x_j - x_i] + b, optional
/// normalisation over all edges, leaky rectifier, max over the k edges of i.
/// `bias` may be empty. Serial; materialises every edge.
Matrix edgeconv_reference(const Matrix& x, const IndexMatrix& nbrs, int points_per_cloud,
                          const Matrix& weight, const RowVector& bias, const NormSpec* norm);

/// Selected edge per (row, channel): value(i,c) = extreme_j (self(i,c) + other(nbr(i,j),c))
/// where the extreme is max when use_max[c] != 0 and min otherwise.
struct EdgeSelection {
  Matrix value;
  IndexMatrix slot;
};

EdgeSelection edge_select(const Matrix& self, const Matrix& other, const IndexMatrix& nbrs,
                          int points_per_cloud, std::span<const char> use_max);

/// Per-channel sum over every edge of e_ij = self(i) + other(nbr(i,j)).
RowVector edge_sum(const Matrix& self, const Matrix& other, const IndexMatrix& nbrs,
                   int points_per_cloud);

/// Per-channel sum over every edge of (e_ij - mean)^2.
RowVector edge_centered_sq_sum(const Matrix& self, const Matrix& other, const IndexMatrix& nbrs,
                               int points_per_cloud, const RowVector& mean);

/// Backward pass of a normalised max-edge aggregation. For edge (i,j) and channel c
///   dE_ij = scale_c * ( d_sel(i,c) [j == slot(i,c)] - m1_c - xhat_ij * m2_c ),
///   xhat_ij = (e_ij - mean_c) * inv_std_c,
/// accumulated into d_self(i) and d_other(nbr(i,j)). With dense == false the
/// m1/m2 terms are skipped and only the selected edges receive gradient.
struct EdgeBackwardTerms {
  RowVector scale;
  RowVector mean;
  RowVector inv_std;
  RowVector m1;
  RowVector m2;
  bool dense = false;
};

void edge_backward(const Matrix& self, const Matrix& other, const IndexMatrix& nbrs,
                   int points_per_cloud, const IndexMatrix& slot, const Matrix& d_sel,
                   const EdgeBackwardTerms& terms, Matrix& d_self, Matrix& d_other);

/// Channel-wise max over the points of each cloud; arg holds the winning row
/// (global index, first maximum on ties).
void max_pool(const Matrix& x, int clouds, Matrix& out, IndexMatrix& arg);
void max_pool_backward(const Matrix& d_out, const IndexMatrix& arg, Matrix& d_x);

}  // namespace fspc::kernels
