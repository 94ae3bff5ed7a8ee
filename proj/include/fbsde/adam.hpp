#pragma once

#include <cstdint>
#include <vector>

#include "fbsde/tensor.hpp"

namespace fbsde {

struct OptimConfig {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool plain_sgd = false;   // ablation switch: theta -= lr * grad, no moments
  double clip_norm = 0.0;   // > 0 enables global-norm gradient clipping
};

/// Adam with standard bias correction. Parameters and gradients are vectors
/// indexed by slot — the same slot numbering the tape's backward() reports.
/// Moment accumulators are lazily shaped from the first apply().
class Adam {
 public:
  explicit Adam(OptimConfig cfg = {});

  /// In-place update of params. grads must hold one tensor per parameter
  /// slot, each matching the parameter's shape; anything else is an error,
  /// as is any non-finite gradient entry (reported with its slot).
  void apply(std::vector<Tensor>& params, std::vector<Tensor> grads);

  std::int64_t step_count() const { return t_; }
  const OptimConfig& config() const { return cfg_; }

 private:
  OptimConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace fbsde
