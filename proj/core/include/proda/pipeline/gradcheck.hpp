#pragma once

#include <cstdint>

#include "proda/numerics/grad_check.hpp"
#include "proda/pipeline/model.hpp"

namespace proda::pipeline {

struct TinyGradCheckConfig {
  std::uint64_t seed = 1;
  double eps = 1e-5;
  double tolerance = 1e-5;
  /// Weights are redrawn uniformly in [-scale, scale] so no path sits at its
  /// zero initialization. Draws that saturate a sigmoid or softmax leave some
  /// scalars with gradients near 1e-8, where central differences at eps=1e-5
  /// are roundoff-bound; the default draw keeps every gradient well above that.
  double scale = 1.0;
  bool learned_projection = false;
};

/// Central-difference check of the whole model (N=2, M=2, D=4, T=2, C=3, one
/// graph layer) on a hand-built two-video batch in training mode. The objective sums the
/// stage-1 loss with margins 0, so every term is active, and the a_m BCE.
num::GradReport tiny_model_gradcheck(const TinyGradCheckConfig& config = {});

/// The model configuration used by tiny_model_gradcheck.
ModelConfig tiny_model_config();

}  // namespace proda::pipeline
