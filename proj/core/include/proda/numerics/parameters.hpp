#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "proda/numerics/tensor.hpp"

namespace proda::num {

enum class ParamKind { kWeight, kBuffer };

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
  ParamKind kind = ParamKind::kWeight;
};

/// Owns every named tensor of a model, in registration order.
///
/// Buffers (running statistics) are stored alongside weights so checkpoints
/// capture them, but they never require gradients.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  Tensor& add_buffer(const std::string& name, Tensor init);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  /// Trainable flag for every weight whose name starts with one of the
  /// prefixes; all other weights get the opposite flag.
  void train_only(const std::vector<std::string>& prefixes);
  void set_all_trainable(bool flag);
  void zero_grad();

  std::size_t scalar_count() const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Seeded initializers. Uniform Glorot for matrices; the rng advances
/// deterministically so a seed fixes every initial value.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor glorot(std::size_t fan_in, std::size_t fan_out);
  Tensor uniform(Shape shape, double bound);
  Tensor normal(Shape shape, double stddev);
  Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
  Tensor constant(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }
  /// [rows, cols] matrix with ones on the leading diagonal.
  Tensor identity(std::size_t rows, std::size_t cols);

 private:
  std::mt19937_64 rng_;
};

}  // namespace proda::num
