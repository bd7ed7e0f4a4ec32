#include "proda/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "proda/errors.hpp"

namespace proda::num {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradReport grad_check(const std::function<Tensor()>& objective, ParameterStore& store,
                      double eps, double tolerance) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("grad_check: eps " + std::to_string(eps) + " outside [1e-7, 1e-3]");
  }
  store.zero_grad();
  Tensor loss = objective();
  backward(loss);

  GradReport report;
  report.eps = eps;
  report.tolerance = tolerance;
  for (auto& p : store.all()) {
    if (!p.trainable || p.kind == ParamKind::kBuffer) continue;
    std::vector<double> analytic(p.tensor.size(), 0.0);
    auto g = p.tensor.grad();
    std::copy(g.begin(), g.end(), analytic.begin());

    ParamGradError err{p.name};
    auto values = p.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = objective().item();
      values[i] = saved - eps;
      const double down = objective().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double rel = relative_error(analytic[i], numeric);
      if (rel >= err.max_rel_error) {
        err.max_rel_error = rel;
        err.worst_index = i;
        err.analytic = analytic[i];
        err.numeric = numeric;
      }
    }
    report.params.push_back(std::move(err));
  }
  store.zero_grad();

  std::stable_sort(report.params.begin(), report.params.end(),
                   [](const auto& a, const auto& b) { return a.max_rel_error > b.max_rel_error; });
  report.max_rel_error = report.params.empty() ? 0.0 : report.params.front().max_rel_error;
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace proda::num
