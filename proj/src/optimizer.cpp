#include "fspc/optimizer.hpp"

#include <cmath>

namespace fspc {

void OptimizerConfig::validate() const {
  if (!(lr0 > 0.0)) throw_usage("lr0 must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw_usage("gamma must lie in (0, 1]");
  if (step_epochs < 1) throw_usage("step_epochs must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw_usage("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw_usage("Adam epsilon must be positive");
}

double lr_at(int epoch, const OptimizerConfig& cfg) {
  if (epoch < 0) throw_usage("epoch must be non-negative");
  return cfg.lr0 * std::pow(cfg.gamma, epoch / cfg.step_epochs);
}

std::vector<Matrix*> trainable_tensors(ModelParameters& params) {
  std::vector<Matrix*> out;
  visit_model_tensors(params, [&](const std::string&, Matrix& m, bool trainable) {
    if (trainable) out.push_back(&m);
  });
  return out;
}

std::vector<const Matrix*> trainable_tensors(const ModelParameters& params) {
  std::vector<const Matrix*> out;
  visit_model_tensors(params, [&](const std::string&, const Matrix& m, bool trainable) {
    if (trainable) out.push_back(&m);
  });
  return out;
}

Adam::Adam(const ModelParameters& like, const OptimizerConfig& cfg)
    : cfg_(cfg), first_(zeros_like(like)), second_(zeros_like(like)) {
  cfg_.validate();
}

void Adam::step(ModelParameters& params, const ModelParameters& grads, double lr) {
  const std::vector<Matrix*> p = trainable_tensors(params);
  const std::vector<const Matrix*> g = trainable_tensors(grads);
  const std::vector<Matrix*> m = trainable_tensors(first_);
  const std::vector<Matrix*> v = trainable_tensors(second_);
  if (p.size() != g.size() || p.size() != m.size()) throw_usage("gradient structure does not match parameters");

  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, steps_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, steps_);
  for (std::size_t t = 0; t < p.size(); ++t) {
    m[t]->array() = cfg_.beta1 * m[t]->array() + (1.0 - cfg_.beta1) * g[t]->array();
    v[t]->array() = cfg_.beta2 * v[t]->array() + (1.0 - cfg_.beta2) * g[t]->array().square();
    p[t]->array() -= lr * (m[t]->array() / c1) / ((v[t]->array() / c2).sqrt() + cfg_.epsilon);
  }
}

}  // namespace fspc
