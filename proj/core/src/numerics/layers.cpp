#include "proda/numerics/layers.hpp"

namespace proda::num {

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               Initializer& init, bool with_bias)
    : weight(store.add(name + ".w", init.glorot(in, out))) {
  if (with_bias) bias = store.add(name + ".b", init.zeros({out}));
}

Tensor Linear::operator()(const Tensor& x) const {
  auto y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

Mlp::Mlp(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
         std::size_t out, Initializer& init)
    : first(store, name + ".fc1", in, hidden, init), second(store, name + ".fc2", hidden, out, init) {}

Tensor Mlp::operator()(const Tensor& x) const { return second(relu(first(x))); }

ResidualMlp::ResidualMlp(ParameterStore& store, const std::string& name, std::size_t in,
                         std::size_t hidden, std::size_t out, Initializer& init)
    : skip(store.add(name + ".skip", init.identity(in, out))),
      body(store, name + ".mlp", in, hidden, out, init) {
  for (auto& v : body.second.weight.mutable_data()) v = 0.0;
}

Tensor ResidualMlp::operator()(const Tensor& x) const { return add(matmul(x, skip), body(x)); }

}  // namespace proda::num
