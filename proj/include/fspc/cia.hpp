#pragma once

// Cross-instance adaptation of pooled embeddings.
//
// Self-channel interaction (SCI), for a row feature f of width d:
//   q = f Wq,  k = f Wk,  R = q^T k  (d x d),
//   R'_ij = exp(-R_ij) / sum_t exp(-R_tj)  (each column sums to one),
//   f' = f R' + f.
//
// Cross-instance fusion (CIF), for an anchor a and selected features s_1..s_K:
//   Z = [a, s_1, ..., s_K]  (d x (K+1), one row per channel),
//   W = leaky(Z W1^T + b1) W2^T + b2  (two 1x1 convolutions over slots),
//   f'_c = sum_s softmax_s(W_c)_s Z_cs.

#include "fspc/core.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fspc {

struct SciParameters {
  Matrix w_query;  // d x d
  Matrix w_key;    // d x d
};

struct RelationMap {
  Matrix relation;    // R
  Matrix normalized;  // R', column-stochastic
};

/// One CIF branch sized for `slots` = K + 1 slots and a hidden width h.
struct CifBranch {
  Matrix w1;  // h x slots
  Matrix b1;  // 1 x h
  Matrix w2;  // slots x h
  Matrix b2;  // 1 x slots

  int slots() const noexcept { return static_cast<int>(w1.cols()); }
  int hidden() const noexcept { return static_cast<int>(w1.rows()); }
};

/// Prototype and query branches never share storage.
struct CifParameters {
  CifBranch proto;
  CifBranch query;
};

struct CiaConfig {
  bool sci = true;
  bool cif = true;
  int k1 = 3;       // queries fused into each prototype
  int k2 = 2;       // prototypes fused into each query
  int hidden = 32;  // h

  void validate() const;
};

struct CiaParameters {
  SciParameters sci;
  CifParameters cif;
};

CiaParameters init_cia(int dim, const CiaConfig& config, std::uint64_t seed);
CiaParameters zeros_like(const CiaParameters& params);

template <class Params, class Fn>
void visit_cia_tensors(Params& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + "sci.w_query", p.sci.w_query, true);
  fn(prefix + "sci.w_key", p.sci.w_key, true);
  auto branch = [&](auto& b, const std::string& name) {
    fn(prefix + name + "w1", b.w1, true);
    fn(prefix + name + "b1", b.b1, true);
    fn(prefix + name + "w2", b.w2, true);
    fn(prefix + name + "b2", b.b2, true);
  };
  branch(p.cif.proto, "cif.proto.");
  branch(p.cif.query, "cif.query.");
}

RelationMap sci_relation(const RowVector& f, const SciParameters& params);
RowVector sci_forward(const RowVector& f, const SciParameters& params);

/// Indices of the K candidate rows with the highest cosine similarity to
/// `anchor`, best first, ties to the lower index; zero vectors score 0.
std::vector<int> cosine_topk(const RowVector& anchor, const Matrix& candidates, int k);

/// Slot weights softmax_s(W) (d x (K+1)) for Z = [anchor, selected rows].
Matrix cif_weights(const RowVector& anchor, const Matrix& selected, const CifBranch& branch);

/// Fuses the anchor with `selected` (K x d). K may be smaller than
/// branch.slots() - 1, in which case the leading slot block of the branch is
/// used; a larger K is an error.
RowVector cif_fuse(const RowVector& anchor, const Matrix& selected, const CifBranch& branch);

struct CiaOutput {
  Matrix prototypes;
  Matrix queries;
};

/// Everything the backward pass needs from cia_forward.
struct CiaTape {
  Matrix proto_in, query_in;    // inputs
  Matrix proto_mid, query_mid;  // after SCI (inputs when SCI is off)
  std::vector<Matrix> proto_rmaps, query_rmaps;  // R' per row
  std::vector<std::vector<int>> proto_sel, query_sel;
  std::vector<Matrix> proto_hidden_pre, query_hidden_pre;  // Z W1^T + b1
  std::vector<Matrix> proto_alpha, query_alpha;            // slot weights
};

/// SCI on every row (shared parameters), then CIF: each prototype fuses its
/// top-K1 queries, each query its top-K2 prototypes, both selected on the
/// post-SCI features. K1/K2 are clamped to the available rows.
CiaOutput cia_forward(const Matrix& prototypes, const Matrix& queries, const CiaParameters& params,
                      const CiaConfig& config, CiaTape* tape = nullptr);

/// Accumulates parameter gradients into `grads`; returns d(loss)/d(inputs).
CiaOutput cia_backward(const CiaParameters& params, const CiaConfig& config, const CiaTape& tape,
                       const Matrix& d_prototypes, const Matrix& d_queries, CiaParameters& grads);

}  // namespace fspc
