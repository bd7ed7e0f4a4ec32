#pragma once

#include <vector>

#include "proda/numerics/parameters.hpp"

namespace proda::num {

/// Momentum-free adaptive step: each scalar moves by
/// lr * g / (sqrt(v_hat) + eps) where v is an exponential average of g^2
/// with bias correction. Non-trainable parameters and buffers are skipped.
class AdaptiveStep {
 public:
  explicit AdaptiveStep(double lr, double decay = 0.99, double eps = 1e-8)
      : lr_(lr), decay_(decay), eps_(eps) {}

  void step(ParameterStore& store);
  double learning_rate() const { return lr_; }

 private:
  double lr_, decay_, eps_;
  long steps_ = 0;
  std::vector<std::vector<double>> second_moment_;
};

/// Euclidean norm of the accumulated gradient of one parameter (0 when none).
double grad_norm(const Tensor& t);

}  // namespace proda::num
