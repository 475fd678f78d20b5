#include "fspc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace fspc::kernels {

namespace {

double row_sq_dist(const double* a, const double* b, Eigen::Index c) {
  double s = 0.0;
  for (Eigen::Index t = 0; t < c; ++t) {
    const double d = a[t] - b[t];
    s += d * d;
  }
  return s;
}

void check_knn_args(const Matrix& x, Eigen::Index rows, int k) {
  if (k < 1) throw_usage("k must be at least 1");
  if (k >= rows) {
    throw_usage("k (" + std::to_string(k) + ") must be smaller than the point count (" +
                std::to_string(rows) + ")");
  }
  if (!x.allFinite()) throw_numeric("kNN input contains non-finite values");
}

// kNN over rows [begin, begin + n) of x, writing local indices into out rows.
void knn_block(const Matrix& x, Eigen::Index begin, Eigen::Index n, int k, IndexMatrix& out,
               std::vector<std::pair<double, int>>& scratch) {
  const Eigen::Index c = x.cols();
  scratch.resize(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* xi = x.data() + (begin + i) * c;
    std::size_t w = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      scratch[w++] = {row_sq_dist(xi, x.data() + (begin + j) * c, c), static_cast<int>(j)};
    }
    std::partial_sort(scratch.begin(), scratch.begin() + k, scratch.end());
    for (int t = 0; t < k; ++t) out(begin + i, t) = scratch[static_cast<std::size_t>(t)].second;
  }
}

}  // namespace

IndexMatrix knn_reference(const Matrix& x, int k) {
  const Eigen::Index n = x.rows();
  check_knn_args(x, n, k);
  IndexMatrix out(n, k);
  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      dist[static_cast<std::size_t>(j)] = row_sq_dist(x.row(i).data(), x.row(j).data(), x.cols());
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
    });
    int t = 0;
    for (int j : order) {
      if (j == i) continue;
      out(i, t++) = j;
      if (t == k) break;
    }
  }
  return out;
}

IndexMatrix knn(const Matrix& x, int k) {
  const Eigen::Index n = x.rows();
  check_knn_args(x, n, k);
  IndexMatrix out(n, k);
  const Eigen::Index c = x.cols();
#pragma omp parallel
  {
    std::vector<std::pair<double, int>> scratch(static_cast<std::size_t>(n - 1));
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double* xi = x.data() + i * c;
      std::size_t w = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        scratch[w++] = {row_sq_dist(xi, x.data() + j * c, c), static_cast<int>(j)};
      }
      std::partial_sort(scratch.begin(), scratch.begin() + k, scratch.end());
      for (int t = 0; t < k; ++t) out(i, t) = scratch[static_cast<std::size_t>(t)].second;
    }
  }
  return out;
}

IndexMatrix knn_batched(const Matrix& x, int clouds, int k) {
  if (clouds < 1 || x.rows() % clouds != 0) throw_usage("row count is not a multiple of the cloud count");
  const Eigen::Index n = x.rows() / clouds;
  check_knn_args(x, n, k);
  IndexMatrix out(x.rows(), k);
#pragma omp parallel
  {
    std::vector<std::pair<double, int>> scratch;
#pragma omp for schedule(static)
    for (int b = 0; b < clouds; ++b) knn_block(x, b * n, n, k, out, scratch);
  }
  return out;
}

Matrix edgeconv_reference(const Matrix& x, const IndexMatrix& nbrs, int points_per_cloud,
                          const Matrix& weight, const RowVector& bias, const NormSpec* norm) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cin = x.cols();
  const Eigen::Index cout = weight.rows();
  const Eigen::Index k = nbrs.cols();
  if (weight.cols() != 2 * cin || nbrs.rows() != rows) throw_usage("edgeconv shape mismatch");

  // edges(i * k + j, c)
  Matrix edges(rows * k, cout);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Index base = (i / points_per_cloud) * points_per_cloud;
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index m = base + nbrs(i, j);
      for (Eigen::Index c = 0; c < cout; ++c) {
        double e = bias.size() > 0 ? bias(c) : 0.0;
        for (Eigen::Index t = 0; t < cin; ++t) {
          e += weight(c, t) * x(i, t) + weight(c, cin + t) * (x(m, t) - x(i, t));
        }
        edges(i * k + j, c) = e;
      }
    }
  }
  if (norm != nullptr) {
    for (Eigen::Index c = 0; c < cout; ++c) {
      double mean = norm->running_mean(c);
      double var = norm->running_var(c);
      if (norm->batch_statistics) {
        mean = edges.col(c).mean();
        var = (edges.col(c).array() - mean).square().mean();
      }
      const double inv = 1.0 / std::sqrt(var + norm->eps);
      edges.col(c) = ((edges.col(c).array() - mean) * inv * norm->gamma(c) + norm->beta(c)).matrix();
    }
  }
  Matrix out(rows, cout);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cout; ++c) {
      double best = leaky(edges(i * k, c));
      for (Eigen::Index j = 1; j < k; ++j) best = std::max(best, leaky(edges(i * k + j, c)));
      out(i, c) = best;
    }
  }
  return out;
}

EdgeSelection edge_select(const Matrix& self, const Matrix& other, const IndexMatrix& nbrs,
                          int points_per_cloud, std::span<const char> use_max) {
  const Eigen::Index rows = self.rows();
  const Eigen::Index cout = self.cols();
  const Eigen::Index k = nbrs.cols();
  EdgeSelection sel{Matrix(rows, cout), IndexMatrix(rows, cout)};
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Index base = (i / points_per_cloud) * points_per_cloud;
    const double* s = self.data() + i * cout;
    double* best = sel.value.data() + i * cout;
    int* slot = sel.slot.data() + i * cout;
    const double* o0 = other.data() + (base + nbrs(i, 0)) * cout;
    for (Eigen::Index c = 0; c < cout; ++c) {
      best[c] = s[c] + o0[c];
      slot[c] = 0;
    }
    for (Eigen::Index j = 1; j < k; ++j) {
      const double* o = other.data() + (base + nbrs(i, j)) * cout;
      for (Eigen::Index c = 0; c < cout; ++c) {
        const double e = s[c] + o[c];
        const bool better = use_max[static_cast<std::size_t>(c)] ? e > best[c] : e < best[c];
        if (better) {
          best[c] = e;
          slot[c] = static_cast<int>(j);
        }
      }
    }
  }
  return sel;
}

namespace {

// Per-cloud partial sums reduced in cloud order, so the result does not depend
// on the thread count.
template <class EdgeFn>
RowVector reduce_edges(const Matrix& self, const Matrix& other, const IndexMatrix& nbrs,
                       int points_per_cloud, EdgeFn fn) {
  const Eigen::Index rows = self.rows();
  const Eigen::Index cout = self.cols();
  const Eigen::Index k = nbrs.cols();
  const int clouds = static_cast<int>(rows / points_per_cloud);
  Matrix partial = Matrix::Zero(clouds, cout);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < clouds; ++b) {
    double* acc = partial.data() + b * cout;
    const Eigen::Index base = static_cast<Eigen::Index>(b) * points_per_cloud;
    for (Eigen::Index i = base; i < base + points_per_cloud; ++i) {
      const double* s = self.data() + i * cout;
      for (Eigen::Index j = 0; j < k; ++j) {
        const double* o = other.data() + (base + nbrs(i, j)) * cout;
        for (Eigen::Index c = 0; c < cout; ++c) acc[c] += fn(s[c] + o[c], c);
      }
    }
  }
  RowVector total = RowVector::Zero(cout);
  for (int b = 0; b < clouds; ++b) total += partial.row(b);
  return total;
}

}  // namespace

RowVector edge_sum(const Matrix& self, const Matrix& other, const IndexMatrix& nbrs,
                   int points_per_cloud) {
  return reduce_edges(self, other, nbrs, points_per_cloud,
                      [](double e, Eigen::Index) { return e; });
}

RowVector edge_centered_sq_sum(const Matrix& self, const Matrix& other, const IndexMatrix& nbrs,
                               int points_per_cloud, const RowVector& mean) {
  return reduce_edges(self, other, nbrs, points_per_cloud, [&mean](double e, Eigen::Index c) {
    const double d = e - mean(c);
    return d * d;
  });
}

void edge_backward(const Matrix& self, const Matrix& other, const IndexMatrix& nbrs,
                   int points_per_cloud, const IndexMatrix& slot, const Matrix& d_sel,
                   const EdgeBackwardTerms& terms, Matrix& d_self, Matrix& d_other) {
  const Eigen::Index rows = self.rows();
  const Eigen::Index cout = self.cols();
  const Eigen::Index k = nbrs.cols();
  const int clouds = static_cast<int>(rows / points_per_cloud);
  d_self.setZero(rows, cout);
  d_other.setZero(rows, cout);
  // Scatter targets stay inside one cloud, so clouds are independent.
#pragma omp parallel for schedule(static)
  for (int b = 0; b < clouds; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * points_per_cloud;
    for (Eigen::Index i = base; i < base + points_per_cloud; ++i) {
      const double* s = self.data() + i * cout;
      double* ds = d_self.data() + i * cout;
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::Index m = base + nbrs(i, j);
        const double* o = other.data() + m * cout;
        double* dout = d_other.data() + m * cout;
        for (Eigen::Index c = 0; c < cout; ++c) {
          double g = slot(i, c) == j ? d_sel(i, c) : 0.0;
          if (terms.dense) {
            const double xhat = (s[c] + o[c] - terms.mean(c)) * terms.inv_std(c);
            g -= terms.m1(c) + xhat * terms.m2(c);
          }
          g *= terms.scale(c);
          ds[c] += g;
          dout[c] += g;
        }
      }
    }
  }
}

void max_pool(const Matrix& x, int clouds, Matrix& out, IndexMatrix& arg) {
  const Eigen::Index n = x.rows() / clouds;
  const Eigen::Index c = x.cols();
  out.resize(clouds, c);
  arg.resize(clouds, c);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < clouds; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * n;
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      out(b, ch) = x(base, ch);
      arg(b, ch) = static_cast<int>(base);
    }
    for (Eigen::Index i = base + 1; i < base + n; ++i) {
      for (Eigen::Index ch = 0; ch < c; ++ch) {
        if (x(i, ch) > out(b, ch)) {
          out(b, ch) = x(i, ch);
          arg(b, ch) = static_cast<int>(i);
        }
      }
    }
  }
}

void max_pool_backward(const Matrix& d_out, const IndexMatrix& arg, Matrix& d_x) {
  for (Eigen::Index b = 0; b < d_out.rows(); ++b) {
    for (Eigen::Index ch = 0; ch < d_out.cols(); ++ch) d_x(arg(b, ch), ch) += d_out(b, ch);
  }
}

}  // namespace fspc::kernels
