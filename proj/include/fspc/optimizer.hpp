#pragma once

#include "fspc/model.hpp"

#include <vector>

namespace fspc {

struct OptimizerConfig {
  double lr0 = 0.0008;
  double gamma = 0.5;
  int step_epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Step decay: lr0 * gamma^floor(epoch / step_epochs).
double lr_at(int epoch, const OptimizerConfig& cfg);

/// Trainable tensors in visiting order; the same order for any two parameter
/// sets with the same structure.
std::vector<Matrix*> trainable_tensors(ModelParameters& params);
std::vector<const Matrix*> trainable_tensors(const ModelParameters& params);

/// Adam with bias correction over every trainable tensor of a model.
class Adam {
 public:
  Adam(const ModelParameters& like, const OptimizerConfig& cfg);

  void step(ModelParameters& params, const ModelParameters& grads, double lr);
  int steps() const noexcept { return steps_; }

 private:
  OptimizerConfig cfg_;
  ModelParameters first_;
  ModelParameters second_;
  int steps_ = 0;
};

}  // namespace fspc
