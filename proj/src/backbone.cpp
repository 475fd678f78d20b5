#include "fspc/backbone.hpp"

#include "fspc/kernels.hpp"
#include "fspc/rng.hpp"

#include <algorithm>
#include <cmath>

namespace fspc {

namespace {

using Layer = BackboneTape::Layer;

Matrix leaky_of(const Matrix& x) {
  return x.unaryExpr([](double v) { return leaky(v); });
}

Matrix leaky_grad_of(const Matrix& x) {
  return x.unaryExpr([](double v) { return leaky_grad(v); });
}

RowVector inv_std_of(const RowVector& var, double eps) {
  return (var.array() + eps).rsqrt().matrix();
}

LinearParams make_linear(int out, int in, bool normalized, Rng& rng) {
  LinearParams p;
  const double bound = std::sqrt(6.0 / ((1.0 + kLeakySlope * kLeakySlope) * in));
  std::uniform_real_distribution<double> unif(-bound, bound);
  p.weight.resize(out, in);
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = unif(rng);
  if (normalized) {
    p.norm.gamma = Matrix::Ones(1, out);
    p.norm.beta = Matrix::Zero(1, out);
    p.norm.running_mean = Matrix::Zero(1, out);
    p.norm.running_var = Matrix::Ones(1, out);
  } else {
    p.bias = Matrix::Zero(1, out);
  }
  return p;
}

// Shared per-row linear map with optional normalisation and activation.
Matrix dense_forward(const Matrix& x, const LinearParams& p, Mode mode, double eps, bool activated,
                     Layer& tape) {
  Matrix y = x * p.weight.transpose();
  if (p.bias.size() > 0) y.rowwise() += p.bias.row(0);
  tape.input = x;
  tape.activated = activated;
  if (p.normalized()) {
    if (mode == Mode::Train) {
      tape.mean = y.colwise().mean();
      tape.var = (y.rowwise() - tape.mean).array().square().colwise().mean().matrix();
    } else {
      tape.mean = p.norm.running_mean.row(0);
      tape.var = p.norm.running_var.row(0);
    }
    const RowVector inv = inv_std_of(tape.var, eps);
    tape.xhat = ((y.rowwise() - tape.mean).array().rowwise() * inv.array()).matrix();
    tape.pre = ((tape.xhat.array().rowwise() * p.norm.gamma.row(0).array()).rowwise() +
                p.norm.beta.row(0).array())
                   .matrix();
  } else {
    tape.pre = std::move(y);
  }
  return activated ? leaky_of(tape.pre) : tape.pre;
}

Matrix dense_backward(const Layer& tape, const LinearParams& p, Mode mode, double eps,
                      const Matrix& d_out, LinearParams& g) {
  Matrix d_pre = tape.activated ? Matrix(d_out.cwiseProduct(leaky_grad_of(tape.pre))) : d_out;
  Matrix d_y;
  if (p.normalized()) {
    g.norm.gamma.row(0) += d_pre.cwiseProduct(tape.xhat).colwise().sum();
    g.norm.beta.row(0) += d_pre.colwise().sum();
    const Matrix d_xhat = (d_pre.array().rowwise() * p.norm.gamma.row(0).array()).matrix();
    const RowVector inv = inv_std_of(tape.var, eps);
    if (mode == Mode::Train) {
      const RowVector m1 = d_xhat.colwise().mean();
      const RowVector m2 = d_xhat.cwiseProduct(tape.xhat).colwise().mean();
      d_y = d_xhat;
      d_y.rowwise() -= m1;
      d_y -= (tape.xhat.array().rowwise() * m2.array()).matrix();
      d_y = (d_y.array().rowwise() * inv.array()).matrix();
    } else {
      d_y = (d_xhat.array().rowwise() * inv.array()).matrix();
    }
  } else {
    d_y = std::move(d_pre);
    g.bias.row(0) += d_y.colwise().sum();
  }
  g.weight.noalias() += d_y.transpose() * tape.input;
  return d_y * p.weight;
}

Matrix edgeconv_forward(const Matrix& x, const IndexMatrix& nbrs, int points, const LinearParams& p,
                        Mode mode, double eps, Layer& tape) {
  const Eigen::Index cin = x.cols();
  const Eigen::Index cout = p.weight.rows();
  if (p.weight.cols() != 2 * cin) throw_usage("edgeconv weight does not match the input width");
  const Matrix w_self = p.weight.leftCols(cin);
  const Matrix w_diff = p.weight.rightCols(cin);

  tape.input = x;
  tape.neighbors = nbrs;
  tape.activated = true;
  tape.self_term = x * (w_self - w_diff).transpose();
  if (p.bias.size() > 0) tape.self_term.rowwise() += p.bias.row(0);
  tape.other_term = x * w_diff.transpose();

  std::vector<char> use_max(static_cast<std::size_t>(cout), 1);
  RowVector inv;
  if (p.normalized()) {
    if (mode == Mode::Train) {
      const double edges = static_cast<double>(x.rows() * nbrs.cols());
      tape.mean = kernels::edge_sum(tape.self_term, tape.other_term, nbrs, points) / edges;
      tape.var =
          kernels::edge_centered_sq_sum(tape.self_term, tape.other_term, nbrs, points, tape.mean) / edges;
    } else {
      tape.mean = p.norm.running_mean.row(0);
      tape.var = p.norm.running_var.row(0);
    }
    inv = inv_std_of(tape.var, eps);
    // A negative scale turns the max of the normalised edges into a min of the raw ones.
    for (Eigen::Index c = 0; c < cout; ++c) {
      use_max[static_cast<std::size_t>(c)] = p.norm.gamma(0, c) * inv(c) >= 0.0 ? 1 : 0;
    }
  }
  kernels::EdgeSelection sel =
      kernels::edge_select(tape.self_term, tape.other_term, nbrs, points, use_max);
  tape.slot = std::move(sel.slot);
  if (p.normalized()) {
    tape.xhat = ((sel.value.rowwise() - tape.mean).array().rowwise() * inv.array()).matrix();
    tape.pre = ((tape.xhat.array().rowwise() * p.norm.gamma.row(0).array()).rowwise() +
                p.norm.beta.row(0).array())
                   .matrix();
  } else {
    tape.pre = std::move(sel.value);
  }
  return leaky_of(tape.pre);
}

Matrix edgeconv_backward(const Layer& tape, const LinearParams& p, Mode mode, double eps,
                         int points, const Matrix& d_out, LinearParams& g) {
  const Eigen::Index cin = tape.input.cols();
  const Eigen::Index cout = p.weight.rows();
  const Matrix d_pre = d_out.cwiseProduct(leaky_grad_of(tape.pre));

  kernels::EdgeBackwardTerms terms;
  Matrix d_sel;
  if (p.normalized()) {
    g.norm.gamma.row(0) += d_pre.cwiseProduct(tape.xhat).colwise().sum();
    g.norm.beta.row(0) += d_pre.colwise().sum();
    d_sel = (d_pre.array().rowwise() * p.norm.gamma.row(0).array()).matrix();
    terms.scale = inv_std_of(tape.var, eps);
    terms.mean = tape.mean;
    terms.inv_std = terms.scale;
    if (mode == Mode::Train) {
      const double edges = static_cast<double>(tape.input.rows() * tape.neighbors.cols());
      terms.m1 = d_sel.colwise().sum() / edges;
      terms.m2 = d_sel.cwiseProduct(tape.xhat).colwise().sum() / edges;
      terms.dense = true;
    }
  } else {
    d_sel = d_pre;
    terms.scale = RowVector::Ones(cout);
  }

  Matrix d_self, d_other;
  kernels::edge_backward(tape.self_term, tape.other_term, tape.neighbors, points, tape.slot, d_sel,
                         terms, d_self, d_other);
  if (p.bias.size() > 0) g.bias.row(0) += d_self.colwise().sum();

  const Matrix w_self = p.weight.leftCols(cin);
  const Matrix w_diff = p.weight.rightCols(cin);
  const Matrix d_combined = d_self.transpose() * tape.input;  // d(W_self - W_diff)
  g.weight.leftCols(cin) += d_combined;
  g.weight.rightCols(cin) += d_other.transpose() * tape.input - d_combined;
  return d_self * (w_self - w_diff) + d_other * w_diff;
}

void update_norm(NormParams& norm, const Layer& tape, double momentum, double samples) {
  const double unbias = samples > 1.0 ? samples / (samples - 1.0) : 1.0;
  norm.running_mean.row(0) = (1.0 - momentum) * norm.running_mean.row(0) + momentum * tape.mean;
  norm.running_var.row(0) = (1.0 - momentum) * norm.running_var.row(0) + momentum * unbias * tape.var;
}

}  // namespace

std::string_view to_string(BackboneKind kind) noexcept {
  return kind == BackboneKind::PointNet ? "pointnet" : "dgcnn";
}

BackboneKind parse_backbone_kind(std::string_view name) {
  if (name == "pointnet") return BackboneKind::PointNet;
  if (name == "dgcnn") return BackboneKind::Dgcnn;
  throw_usage("unknown backbone: " + std::string(name));
}

void BackboneConfig::validate() const {
  if (layer_widths.empty()) throw_usage("layer_widths must not be empty");
  for (int w : layer_widths) {
    if (w < 1) throw_usage("layer widths must be positive");
  }
  if (kind == BackboneKind::Dgcnn && k_neighbors < 1) throw_usage("k_neighbors must be at least 1");
  if (embed_dim < 1) throw_usage("embed_dim must be at least 1");
  if (!(norm_momentum > 0.0 && norm_momentum <= 1.0)) throw_usage("norm_momentum must lie in (0, 1]");
  if (!(norm_eps > 0.0)) throw_usage("norm_eps must be positive");
}

BackboneParameters init_backbone(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed);
  BackboneParameters p;
  p.config = config;
  int in = 3;
  int concat = 0;
  for (int w : config.layer_widths) {
    const int fan_in = config.kind == BackboneKind::Dgcnn ? 2 * in : in;
    p.layers.push_back(make_linear(w, fan_in, config.normalization, rng));
    in = w;
    concat += w;
  }
  if (config.kind == BackboneKind::PointNet) {
    p.head = make_linear(config.embed_dim, in, false, rng);
  } else {
    p.head = make_linear(config.embed_dim, concat, config.normalization, rng);
  }
  return p;
}

BackboneParameters zeros_like(const BackboneParameters& params) {
  BackboneParameters g = params;
  visit_backbone_tensors(g, "", [](const std::string&, Matrix& m, bool) { m.setZero(); });
  return g;
}

IndexMatrix knn_graph(const Matrix& points, int k) { return kernels::knn(points, k); }

Matrix edgeconv_layer(const Matrix& features, const IndexMatrix& neighbors, const LinearParams& layer,
                      double norm_eps) {
  if (neighbors.rows() != features.rows()) throw_usage("neighbour rows do not match feature rows");
  Layer tape;
  return edgeconv_forward(features, neighbors, static_cast<int>(features.rows()), layer, Mode::Eval,
                          norm_eps, tape);
}

Matrix embed(std::span<const PointCloud> clouds, const BackboneParameters& params, Mode mode,
             BackboneTape* tape) {
  const BackboneConfig& cfg = params.config;
  if (clouds.empty()) throw_usage("cannot embed an empty batch");
  const auto n = static_cast<int>(clouds.front().size());
  for (const auto& c : clouds) {
    if (c.size() != n) throw_usage("all clouds in a batch must have the same point count");
  }
  if (params.layers.size() != cfg.layer_widths.size()) throw_usage("parameters do not match config");
  const auto batch = static_cast<int>(clouds.size());

  Matrix x(static_cast<Eigen::Index>(batch) * n, 3);
  for (int b = 0; b < batch; ++b) x.middleRows(static_cast<Eigen::Index>(b) * n, n) = clouds[b].points();

  BackboneTape local;
  BackboneTape& t = tape != nullptr ? *tape : local;
  t.mode = mode;
  t.clouds = batch;
  t.points = n;
  t.layers.assign(params.layers.size(), Layer{});

  Matrix pooled;
  if (cfg.kind == BackboneKind::PointNet) {
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      x = dense_forward(x, params.layers[l], mode, cfg.norm_eps, true, t.layers[l]);
    }
    kernels::max_pool(x, batch, pooled, t.pool_arg);
    return dense_forward(pooled, params.head, mode, cfg.norm_eps, false, t.head);
  }

  if (n < 2) throw_usage("dgcnn needs at least two points per cloud");
  t.k = std::min(cfg.k_neighbors, n - 1);
  std::vector<Matrix> outputs;
  outputs.reserve(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const IndexMatrix nbrs = kernels::knn_batched(x, batch, t.k);
    x = edgeconv_forward(x, nbrs, n, params.layers[l], mode, cfg.norm_eps, t.layers[l]);
    outputs.push_back(x);
  }
  Eigen::Index total = 0;
  for (const auto& o : outputs) total += o.cols();
  Matrix concat(x.rows(), total);
  Eigen::Index offset = 0;
  for (const auto& o : outputs) {
    concat.middleCols(offset, o.cols()) = o;
    offset += o.cols();
  }
  const Matrix head = dense_forward(concat, params.head, mode, cfg.norm_eps, true, t.head);
  kernels::max_pool(head, batch, pooled, t.pool_arg);
  return pooled;
}

void backward_embed(const BackboneParameters& params, const BackboneTape& tape,
                    const Matrix& d_embed, BackboneParameters& grads) {
  const BackboneConfig& cfg = params.config;
  const Eigen::Index rows = static_cast<Eigen::Index>(tape.clouds) * tape.points;
  if (d_embed.rows() != tape.clouds || d_embed.cols() != cfg.embed_dim) {
    throw_usage("embedding gradient has the wrong shape");
  }

  if (cfg.kind == BackboneKind::PointNet) {
    const Matrix d_pooled = dense_backward(tape.head, params.head, tape.mode, cfg.norm_eps, d_embed, grads.head);
    Matrix d_x = Matrix::Zero(rows, d_pooled.cols());
    kernels::max_pool_backward(d_pooled, tape.pool_arg, d_x);
    for (std::size_t l = params.layers.size(); l-- > 0;) {
      d_x = dense_backward(tape.layers[l], params.layers[l], tape.mode, cfg.norm_eps, d_x, grads.layers[l]);
    }
    return;
  }

  Matrix d_head = Matrix::Zero(rows, cfg.embed_dim);
  kernels::max_pool_backward(d_embed, tape.pool_arg, d_head);
  const Matrix d_concat = dense_backward(tape.head, params.head, tape.mode, cfg.norm_eps, d_head, grads.head);

  std::vector<Eigen::Index> offsets;
  Eigen::Index offset = 0;
  for (int w : cfg.layer_widths) {
    offsets.push_back(offset);
    offset += w;
  }
  Matrix d_x;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const int w = cfg.layer_widths[l];
    Matrix d_out = d_concat.middleCols(offsets[l], w);
    if (d_x.size() > 0) d_out += d_x;
    d_x = edgeconv_backward(tape.layers[l], params.layers[l], tape.mode, cfg.norm_eps, tape.points, d_out,
                            grads.layers[l]);
  }
}

void update_running_stats(BackboneParameters& params, const BackboneTape& tape) {
  if (tape.mode != Mode::Train) return;
  const BackboneConfig& cfg = params.config;
  const double rows = static_cast<double>(tape.clouds) * tape.points;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (!params.layers[l].normalized()) continue;
    const double samples = cfg.kind == BackboneKind::Dgcnn ? rows * tape.k : rows;
    update_norm(params.layers[l].norm, tape.layers[l], cfg.norm_momentum, samples);
  }
  if (params.head.normalized()) update_norm(params.head.norm, tape.head, cfg.norm_momentum, rows);
}

}  // namespace fspc
