#include "fspc/cia.hpp"

#include "fspc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fspc {

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> unif(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unif(rng);
  return m;
}

CifBranch make_branch(int slots, int hidden, Rng& rng) {
  CifBranch b;
  b.w1 = uniform_matrix(hidden, slots, 1.0 / std::sqrt(static_cast<double>(slots)), rng);
  b.b1 = Matrix::Zero(1, hidden);
  b.w2 = uniform_matrix(slots, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  b.b2 = Matrix::Zero(1, slots);
  return b;
}

void check_sci(const RowVector& f, const SciParameters& p) {
  const Eigen::Index d = f.size();
  if (p.w_query.rows() != d || p.w_query.cols() != d || p.w_key.rows() != d || p.w_key.cols() != d) {
    throw_usage("SCI dimension mismatch: feature width " + std::to_string(d) + ", projections " +
                std::to_string(p.w_query.rows()) + "x" + std::to_string(p.w_query.cols()));
  }
}

// Column-wise softmax of -R, stabilised by the per-column minimum of R.
Matrix column_softmax_neg(const Matrix& r) {
  Matrix out(r.rows(), r.cols());
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    const double lo = r.col(j).minCoeff();
    double total = 0.0;
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      out(i, j) = std::exp(lo - r(i, j));
      total += out(i, j);
    }
    out.col(j) /= total;
  }
  return out;
}

// Row-wise softmax.
Matrix row_softmax(const Matrix& w) {
  Matrix out(w.rows(), w.cols());
  for (Eigen::Index c = 0; c < w.rows(); ++c) {
    const double hi = w.row(c).maxCoeff();
    double total = 0.0;
    for (Eigen::Index s = 0; s < w.cols(); ++s) {
      out(c, s) = std::exp(w(c, s) - hi);
      total += out(c, s);
    }
    out.row(c) /= total;
  }
  return out;
}

struct FuseTrace {
  Matrix z;           // d x m
  Matrix hidden_pre;  // d x h
  Matrix alpha;       // d x m
};

FuseTrace fuse_trace(const RowVector& anchor, const Matrix& selected, const CifBranch& b) {
  const Eigen::Index d = anchor.size();
  const auto m = static_cast<int>(selected.rows()) + 1;
  if (m > b.slots()) {
    throw_usage("CIF slot-count mismatch: " + std::to_string(m) + " slots for a branch sized " +
                std::to_string(b.slots()));
  }
  if (selected.rows() > 0 && selected.cols() != d) throw_usage("CIF feature width mismatch");
  FuseTrace t;
  t.z.resize(d, m);
  t.z.col(0) = anchor.transpose();
  for (int s = 1; s < m; ++s) t.z.col(s) = selected.row(s - 1).transpose();
  t.hidden_pre = t.z * b.w1.leftCols(m).transpose();
  t.hidden_pre.rowwise() += b.b1.row(0);
  const Matrix hidden = t.hidden_pre.unaryExpr([](double v) { return leaky(v); });
  Matrix w = hidden * b.w2.topRows(m).transpose();
  w.rowwise() += b.b2.row(0).leftCols(m);
  t.alpha = row_softmax(w);
  return t;
}

RowVector fuse_output(const FuseTrace& t) {
  return t.alpha.cwiseProduct(t.z).rowwise().sum().transpose();
}

// Returns d(loss)/dZ (d x m); accumulates branch gradients.
Matrix fuse_backward(const Matrix& z, const Matrix& hidden_pre, const Matrix& alpha,
                     const RowVector& d_out, const CifBranch& b, CifBranch& g) {
  const auto m = z.cols();
  const Eigen::VectorXd out = alpha.cwiseProduct(z).rowwise().sum();
  const Eigen::VectorXd gc = d_out.transpose();
  Matrix d_z = alpha.array().colwise() * gc.array();
  // dW_cs = alpha_cs * g_c * (Z_cs - out_c)
  const Matrix d_w = (alpha.array() * (z.array().colwise() - out.array())).colwise() * gc.array();
  const Matrix hidden = hidden_pre.unaryExpr([](double v) { return leaky(v); });
  g.w2.topRows(m) += d_w.transpose() * hidden;
  g.b2.row(0).leftCols(m) += d_w.colwise().sum();
  const Matrix d_hidden = d_w * b.w2.topRows(m);
  const Matrix d_pre = d_hidden.cwiseProduct(hidden_pre.unaryExpr([](double v) { return leaky_grad(v); }));
  g.w1.leftCols(m) += d_pre.transpose() * z;
  g.b1.row(0) += d_pre.colwise().sum();
  d_z += d_pre * b.w1.leftCols(m);
  return d_z;
}

// d(loss)/df for one SCI row; accumulates projection gradients.
RowVector sci_backward(const RowVector& f, const Matrix& rmap, const RowVector& d_out,
                       const SciParameters& p, SciParameters& g) {
  const RowVector q = f * p.w_query;
  const RowVector k = f * p.w_key;
  const RowVector v = f * rmap;
  RowVector d_f = d_out;
  d_f += (rmap * d_out.transpose()).transpose();
  // dR_ij = -R'_ij g_j (f_i - v_j)
  const Eigen::Index d = f.size();
  Matrix d_r(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) d_r(i, j) = -rmap(i, j) * d_out(j) * (f(i) - v(j));
  }
  const RowVector d_q = (d_r * k.transpose()).transpose();
  const RowVector d_k = q * d_r;
  g.w_query.noalias() += f.transpose() * d_q;
  g.w_key.noalias() += f.transpose() * d_k;
  d_f += d_q * p.w_query.transpose() + d_k * p.w_key.transpose();
  return d_f;
}

Matrix select_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

void CiaConfig::validate() const {
  if (k1 < 0 || k2 < 0) throw_usage("k1 and k2 must be non-negative");
  if (hidden < 1) throw_usage("CIF hidden width must be at least 1");
}

CiaParameters init_cia(int dim, const CiaConfig& config, std::uint64_t seed) {
  config.validate();
  if (dim < 1) throw_usage("CIA feature width must be at least 1");
  Rng rng = make_rng(seed);
  CiaParameters p;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  p.sci.w_query = uniform_matrix(dim, dim, bound, rng);
  p.sci.w_key = uniform_matrix(dim, dim, bound, rng);
  p.cif.proto = make_branch(config.k1 + 1, config.hidden, rng);
  p.cif.query = make_branch(config.k2 + 1, config.hidden, rng);
  return p;
}

CiaParameters zeros_like(const CiaParameters& params) {
  CiaParameters g = params;
  visit_cia_tensors(g, "", [](const std::string&, Matrix& m, bool) { m.setZero(); });
  return g;
}

RelationMap sci_relation(const RowVector& f, const SciParameters& params) {
  check_sci(f, params);
  const RowVector q = f * params.w_query;
  const RowVector k = f * params.w_key;
  RelationMap map;
  map.relation = q.transpose() * k;
  map.normalized = column_softmax_neg(map.relation);
  return map;
}

RowVector sci_forward(const RowVector& f, const SciParameters& params) {
  const RelationMap map = sci_relation(f, params);
  return f * map.normalized + f;
}

std::vector<int> cosine_topk(const RowVector& anchor, const Matrix& candidates, int k) {
  if (k < 0) throw_usage("K must be non-negative");
  const auto count = static_cast<int>(candidates.rows());
  const int take = std::min(k, count);
  if (take == 0) return {};
  if (candidates.cols() != anchor.size()) throw_usage("cosine_topk dimension mismatch");
  const double an = anchor.norm();
  std::vector<double> score(static_cast<std::size_t>(count), 0.0);
  for (int i = 0; i < count; ++i) {
    const double cn = candidates.row(i).norm();
    if (an > 0.0 && cn > 0.0) score[static_cast<std::size_t>(i)] = anchor.dot(candidates.row(i)) / (an * cn);
  }
  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(take));
  return order;
}

Matrix cif_weights(const RowVector& anchor, const Matrix& selected, const CifBranch& branch) {
  return fuse_trace(anchor, selected, branch).alpha;
}

RowVector cif_fuse(const RowVector& anchor, const Matrix& selected, const CifBranch& branch) {
  return fuse_output(fuse_trace(anchor, selected, branch));
}

CiaOutput cia_forward(const Matrix& prototypes, const Matrix& queries, const CiaParameters& params,
                      const CiaConfig& config, CiaTape* tape) {
  if (queries.rows() > 0 && queries.cols() != prototypes.cols()) {
    throw_usage("prototype and query widths differ");
  }
  CiaTape local;
  CiaTape& t = tape != nullptr ? *tape : local;
  t = CiaTape{};
  t.proto_in = prototypes;
  t.query_in = queries;

  t.proto_mid = prototypes;
  t.query_mid = queries;
  if (config.sci) {
    t.proto_rmaps.resize(static_cast<std::size_t>(prototypes.rows()));
    t.query_rmaps.resize(static_cast<std::size_t>(queries.rows()));
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < prototypes.rows(); ++i) {
      const RowVector f = prototypes.row(i);
      RelationMap map = sci_relation(f, params.sci);
      t.proto_mid.row(i) = f * map.normalized + f;
      t.proto_rmaps[static_cast<std::size_t>(i)] = std::move(map.normalized);
    }
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < queries.rows(); ++j) {
      const RowVector f = queries.row(j);
      RelationMap map = sci_relation(f, params.sci);
      t.query_mid.row(j) = f * map.normalized + f;
      t.query_rmaps[static_cast<std::size_t>(j)] = std::move(map.normalized);
    }
  }

  CiaOutput out{t.proto_mid, t.query_mid};
  if (!config.cif) return out;

  const int k1 = std::min(config.k1, static_cast<int>(queries.rows()));
  const int k2 = std::min(config.k2, static_cast<int>(prototypes.rows()));
  const auto n_proto = static_cast<std::size_t>(prototypes.rows());
  const auto n_query = static_cast<std::size_t>(queries.rows());
  t.proto_sel.resize(n_proto);
  t.proto_hidden_pre.resize(n_proto);
  t.proto_alpha.resize(n_proto);
  t.query_sel.resize(n_query);
  t.query_hidden_pre.resize(n_query);
  t.query_alpha.resize(n_query);

  for (std::size_t i = 0; i < n_proto; ++i) {
    const RowVector anchor = t.proto_mid.row(static_cast<Eigen::Index>(i));
    t.proto_sel[i] = cosine_topk(anchor, t.query_mid, k1);
    FuseTrace tr = fuse_trace(anchor, select_rows(t.query_mid, t.proto_sel[i]), params.cif.proto);
    out.prototypes.row(static_cast<Eigen::Index>(i)) = fuse_output(tr);
    t.proto_hidden_pre[i] = std::move(tr.hidden_pre);
    t.proto_alpha[i] = std::move(tr.alpha);
  }
  for (std::size_t j = 0; j < n_query; ++j) {
    const RowVector anchor = t.query_mid.row(static_cast<Eigen::Index>(j));
    t.query_sel[j] = cosine_topk(anchor, t.proto_mid, k2);
    FuseTrace tr = fuse_trace(anchor, select_rows(t.proto_mid, t.query_sel[j]), params.cif.query);
    out.queries.row(static_cast<Eigen::Index>(j)) = fuse_output(tr);
    t.query_hidden_pre[j] = std::move(tr.hidden_pre);
    t.query_alpha[j] = std::move(tr.alpha);
  }
  return out;
}

CiaOutput cia_backward(const CiaParameters& params, const CiaConfig& config, const CiaTape& tape,
                       const Matrix& d_prototypes, const Matrix& d_queries, CiaParameters& grads) {
  Matrix d_proto_mid = d_prototypes;
  Matrix d_query_mid = d_queries;

  if (config.cif) {
    d_proto_mid.setZero();
    d_query_mid.setZero();
    auto build_z = [](const RowVector& anchor, const Matrix& pool, const std::vector<int>& sel) {
      Matrix z(anchor.size(), static_cast<Eigen::Index>(sel.size()) + 1);
      z.col(0) = anchor.transpose();
      for (std::size_t s = 0; s < sel.size(); ++s) z.col(static_cast<Eigen::Index>(s) + 1) = pool.row(sel[s]).transpose();
      return z;
    };
    for (std::size_t i = 0; i < tape.proto_sel.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const Matrix z = build_z(tape.proto_mid.row(row), tape.query_mid, tape.proto_sel[i]);
      const Matrix d_z = fuse_backward(z, tape.proto_hidden_pre[i], tape.proto_alpha[i],
                                       d_prototypes.row(row), params.cif.proto, grads.cif.proto);
      d_proto_mid.row(row) += d_z.col(0).transpose();
      for (std::size_t s = 0; s < tape.proto_sel[i].size(); ++s) {
        d_query_mid.row(tape.proto_sel[i][s]) += d_z.col(static_cast<Eigen::Index>(s) + 1).transpose();
      }
    }
    for (std::size_t j = 0; j < tape.query_sel.size(); ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      const Matrix z = build_z(tape.query_mid.row(row), tape.proto_mid, tape.query_sel[j]);
      const Matrix d_z = fuse_backward(z, tape.query_hidden_pre[j], tape.query_alpha[j],
                                       d_queries.row(row), params.cif.query, grads.cif.query);
      d_query_mid.row(row) += d_z.col(0).transpose();
      for (std::size_t s = 0; s < tape.query_sel[j].size(); ++s) {
        d_proto_mid.row(tape.query_sel[j][s]) += d_z.col(static_cast<Eigen::Index>(s) + 1).transpose();
      }
    }
  }

  if (!config.sci) return {d_proto_mid, d_query_mid};

  CiaOutput d_in{Matrix(d_proto_mid.rows(), d_proto_mid.cols()), Matrix(d_query_mid.rows(), d_query_mid.cols())};
  for (Eigen::Index i = 0; i < d_proto_mid.rows(); ++i) {
    d_in.prototypes.row(i) = sci_backward(tape.proto_in.row(i), tape.proto_rmaps[static_cast<std::size_t>(i)],
                                          d_proto_mid.row(i), params.sci, grads.sci);
  }
  for (Eigen::Index j = 0; j < d_query_mid.rows(); ++j) {
    d_in.queries.row(j) = sci_backward(tape.query_in.row(j), tape.query_rmaps[static_cast<std::size_t>(j)],
                                       d_query_mid.row(j), params.sci, grads.sci);
  }
  return d_in;
}

}  // namespace fspc
