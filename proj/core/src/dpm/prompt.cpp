#include "proda/dpm/prompt.hpp"

#include "proda/errors.hpp"

namespace proda::dpm {

namespace {

std::vector<std::size_t> repeat_rows(std::size_t batch, std::size_t each) {
  std::vector<std::size_t> idx(batch * each);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = 0; r < each; ++r) idx[b * each + r] = b;
  return idx;
}

num::Tensor as_batch(const num::Tensor& v, std::size_t C) {
  if (v.rank() == 1 && v.dim(0) == C) return num::reshape(v, {1, C});
  if (v.rank() == 2 && v.dim(1) == C) return v;
  throw ContractError("prompt: spec vector must be [C] or [B, C] with C = " + std::to_string(C) +
                      ", got " + num::to_string(v.shape()));
}

}  // namespace

PromptBank::PromptBank(num::ParameterStore& store, const std::string& prefix,
                       const PromptConfig& config, num::Initializer& init)
    : config_(config) {
  const auto C = config.num_actions, D = config.dim, T = config.candidates;
  if (C == 0 || D == 0) throw ContractError("PromptBank: C and D must be positive");
  if (T == 0) throw ContractError("PromptBank: need T >= 1 candidate prompts");
  if (config.kind == PromptKind::kDynamic) {
    w_q = store.add(prefix + ".w_q", init.glorot(C, T * D));
    b_q = store.add(prefix + ".b_q", init.zeros({T * D}));
    w_y = store.add(prefix + ".w_y", init.glorot(C, D));
    w_w = store.add(prefix + ".w_w", init.glorot(D, T));
  } else {
    w_s = store.add(prefix + ".w_s", init.glorot(C, D));
    b_s = store.add(prefix + ".b_s", init.zeros({D}));
  }
}

void PromptBank::require_dynamic(const char* op) const {
  if (config_.kind != PromptKind::kDynamic) {
    throw ContractError(std::string(op) + ": not available for the simple prompt");
  }
}

num::Tensor PromptBank::candidates(const num::Tensor& v) const {
  require_dynamic("candidates");
  const auto vb = as_batch(v, config_.num_actions);
  auto q = num::add(num::matmul(vb, w_q), b_q);
  if (v.rank() == 1) return num::reshape(q, {config_.candidates, config_.dim});
  return num::reshape(q, {vb.dim(0), config_.candidates, config_.dim});
}

num::Tensor PromptBank::weights_rows(const num::Tensor& v, const num::Tensor& f,
                                     std::size_t rows_per_video) const {
  const auto B = v.dim(0);
  auto y = num::matmul(v, w_y);  // [B, D]
  auto y_rows = num::gather_rows(y, repeat_rows(B, rows_per_video));
  auto logits = num::matmul(num::add(y_rows, f), w_w);  // [B*R, T]
  return config_.weighting == PromptWeighting::kSoftmax ? num::softmax_last(logits)
                                                        : num::sigmoid(logits);
}

num::Tensor PromptBank::prompt_weights(const num::Tensor& v, const num::Tensor& f) const {
  require_dynamic("prompt_weights");
  const auto C = config_.num_actions, D = config_.dim, T = config_.candidates;
  if (v.rank() == 1) {
    if (f.rank() != 1 || f.dim(0) != D) {
      throw ContractError("prompt_weights: node feature must be [" + std::to_string(D) + "], got " +
                          num::to_string(f.shape()));
    }
    return num::reshape(weights_rows(as_batch(v, C), num::reshape(f, {1, D}), 1), {T});
  }
  const auto vb = as_batch(v, C);
  if (f.rank() != 3 || f.dim(0) != vb.dim(0) || f.dim(2) != D) {
    throw ContractError("prompt_weights: node features must be [B, R, D], got " +
                        num::to_string(f.shape()));
  }
  const auto B = f.dim(0), R = f.dim(1);
  return num::reshape(weights_rows(vb, num::reshape(f, {B * R, D}), R), {B, R, T});
}

num::Tensor PromptBank::mix(const num::Tensor& v, const num::Tensor& f,
                            std::size_t rows_per_video) const {
  const auto B = v.dim(0);
  const auto owners = repeat_rows(B, rows_per_video);
  if (config_.kind == PromptKind::kSimple) {
    return num::gather_rows(num::add(num::matmul(v, w_s), b_s), owners);
  }
  auto q = num::add(num::matmul(v, w_q), b_q);  // [B, T*D]
  auto q_rows = num::gather_rows(q, owners);    // [B*R, T*D]
  auto alpha = weights_rows(v, f, rows_per_video);
  return num::weighted_sum(alpha, q_rows, B * rows_per_video);
}

PromptedFeatures PromptBank::apply(const ssg::NodeFeatures& features, const num::Tensor& v) const {
  const auto& x = features.values;
  const auto D = config_.dim;
  const bool single = x.rank() == 3;
  if ((x.rank() != 3 && x.rank() != 4) || x.shape().back() != D) {
    throw ContractError("apply: features must be [N, M, D] or [B, N, M, D] with D = " +
                        std::to_string(D) + ", got " + num::to_string(x.shape()));
  }
  const auto vb = as_batch(v, config_.num_actions);
  const std::size_t B = single ? 1 : x.dim(0);
  if (vb.dim(0) != B || (single && v.rank() != 1)) {
    throw ContractError("apply: " + std::to_string(B) + " videos but spec batch " +
                        num::to_string(v.shape()));
  }
  const auto rows = x.size() / D;
  if (features.mask.size() != rows) throw ContractError("apply: mask does not match features");
  auto f = num::reshape(x, {rows, D});
  auto p = mix(vb, f, rows / B);
  auto out = num::mul(num::add(f, p), num::mask_column(features.mask));
  return {num::reshape(out, x.shape()), features.mask};
}

}  // namespace proda::dpm
