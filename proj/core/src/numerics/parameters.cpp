#include "proda/numerics/parameters.hpp"

#include <cmath>

#include "proda/errors.hpp"

namespace proda::num {

Tensor& ParameterStore::add(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw ContractError("parameter '" + name + "' registered twice");
  init.set_requires_grad(true);
  index_[name] = params_.size();
  params_.push_back({name, std::move(init), true, ParamKind::kWeight});
  return params_.back().tensor;
}

Tensor& ParameterStore::add_buffer(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw ContractError("parameter '" + name + "' registered twice");
  init.set_requires_grad(false);
  index_[name] = params_.size();
  params_.push_back({name, std::move(init), false, ParamKind::kBuffer});
  return params_.back().tensor;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return params_[it->second].tensor;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return params_[it->second].tensor;
}

bool ParameterStore::contains(const std::string& name) const { return index_.contains(name); }

void ParameterStore::train_only(const std::vector<std::string>& prefixes) {
  for (auto& p : params_) {
    if (p.kind == ParamKind::kBuffer) continue;
    bool hit = false;
    for (const auto& prefix : prefixes) hit = hit || p.name.starts_with(prefix);
    p.trainable = hit;
    p.tensor.set_requires_grad(hit);
  }
}

void ParameterStore::set_all_trainable(bool flag) {
  for (auto& p : params_) {
    if (p.kind == ParamKind::kBuffer) continue;
    p.trainable = flag;
    p.tensor.set_requires_grad(flag);
  }
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

Tensor Initializer::glorot(std::size_t fan_in, std::size_t fan_out) {
  return uniform({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

Tensor Initializer::uniform(Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng_);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor Initializer::normal(Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng_);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor Initializer::identity(std::size_t rows, std::size_t cols) {
  std::vector<double> values(rows * cols, 0.0);
  for (std::size_t i = 0; i < std::min(rows, cols); ++i) values[i * cols + i] = 1.0;
  return Tensor::from({rows, cols}, std::move(values), true);
}

}  // namespace proda::num
