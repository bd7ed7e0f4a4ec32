#pragma once

#include <functional>
#include <string>
#include <vector>

#include "proda/numerics/parameters.hpp"

namespace proda::num {

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradReport {
  double eps = 0.0;
  double tolerance = 0.0;
  /// Sorted by descending max_rel_error.
  std::vector<ParamGradError> params;
  double max_rel_error = 0.0;
  bool pass = false;
};

/// |a - n| / max(1e-8, |a| + |n|).
double relative_error(double analytic, double numeric);

/// Compares the analytic gradient of `objective` (a scalar-valued closure
/// rebuilt on every call) with central differences for every scalar of every
/// trainable weight in `store`. The closure must be a pure function of the
/// parameter values.
GradReport grad_check(const std::function<Tensor()>& objective, ParameterStore& store,
                      double eps, double tolerance);

}  // namespace proda::num
