#pragma once

#include <string>

#include "proda/numerics/ops.hpp"
#include "proda/numerics/parameters.hpp"

namespace proda::num {

/// y = x W + b over the last axis.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         Initializer& init, bool bias = true);

  Tensor operator()(const Tensor& x) const;

  Tensor weight;
  Tensor bias;  // undefined when constructed without bias
};

/// Two-layer perceptron: Linear -> ReLU -> Linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
      std::size_t out, Initializer& init);

  Tensor operator()(const Tensor& x) const;

  Linear first, second;
};

/// x W_skip + Mlp(x). W_skip starts as the [I; 0] selector of the first `out`
/// input features and the MLP's output layer starts at zero, so a fresh
/// instance passes its leading `out` features through unchanged.
class ResidualMlp {
 public:
  ResidualMlp() = default;
  ResidualMlp(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
              std::size_t out, Initializer& init);

  Tensor operator()(const Tensor& x) const;

  Tensor skip;
  Mlp body;
};

}  // namespace proda::num
