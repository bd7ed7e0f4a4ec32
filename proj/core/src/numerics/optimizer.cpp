#include "proda/numerics/optimizer.hpp"

#include <cmath>

namespace proda::num {

void AdaptiveStep::step(ParameterStore& store) {
  auto& params = store.all();
  if (second_moment_.size() != params.size()) {
    second_moment_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      second_moment_[i].assign(params[i].tensor.size(), 0.0);
  }
  ++steps_;
  const double correction = 1.0 - std::pow(decay_, static_cast<double>(steps_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    if (!param.trainable || param.kind == ParamKind::kBuffer) continue;
    auto g = param.tensor.grad();
    if (g.empty()) continue;
    auto values = param.tensor.mutable_data();
    auto& v = second_moment_[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = decay_ * v[i] + (1.0 - decay_) * g[i] * g[i];
      values[i] -= lr_ * g[i] / (std::sqrt(v[i] / correction) + eps_);
    }
  }
}

double grad_norm(const Tensor& t) {
  double acc = 0.0;
  for (double g : t.grad()) acc += g * g;
  return std::sqrt(acc);
}

}  // namespace proda::num
