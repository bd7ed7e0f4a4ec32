#pragma once

#include <string>

#include "proda/numerics/ops.hpp"
#include "proda/numerics/parameters.hpp"
#include "proda/ssg/scene_graph.hpp"

namespace proda::dpm {

enum class PromptWeighting { kSoftmax, kSigmoid };
enum class PromptKind { kDynamic, kSimple };

struct PromptConfig {
  std::size_t num_actions = 0;  // C
  std::size_t dim = 0;          // D
  std::size_t candidates = 8;   // T
  PromptWeighting weighting = PromptWeighting::kSoftmax;
  PromptKind kind = PromptKind::kDynamic;
};

/// Node features with the prompt added. Padding slots stay zero.
struct PromptedFeatures {
  num::Tensor values;
  num::Mask mask;
};

/// Generates T candidate prompts from an action specification v and mixes
/// them per node with weights that depend on both v and the node feature.
///
/// With PromptKind::kSimple the bank holds one projected prompt v W_s + b_s
/// that is added to every node; candidates() and prompt_weights() are then
/// unavailable.
class PromptBank {
 public:
  PromptBank() = default;
  PromptBank(num::ParameterStore& store, const std::string& prefix, const PromptConfig& config,
             num::Initializer& init);

  /// v [C] -> [T, D], or v [B, C] -> [B, T, D].
  num::Tensor candidates(const num::Tensor& v) const;

  /// v [C] with f [D] -> [T]. Batched: v [B, C] with f [B, R, D] -> [B, R, T].
  num::Tensor prompt_weights(const num::Tensor& v, const num::Tensor& f) const;

  /// features [N, M, D] with v [C], or [B, N, M, D] with v [B, C].
  PromptedFeatures apply(const ssg::NodeFeatures& features, const num::Tensor& v) const;

  const PromptConfig& config() const { return config_; }

  num::Tensor w_q, b_q;  // C -> T*D
  num::Tensor w_y;       // C -> D
  num::Tensor w_w;       // D -> T
  num::Tensor w_s, b_s;  // C -> D, simple variant only

 private:
  // v [B, C], f [B*R, D] -> mixed prompts [B*R, D].
  num::Tensor mix(const num::Tensor& v, const num::Tensor& f, std::size_t rows_per_video) const;
  num::Tensor weights_rows(const num::Tensor& v, const num::Tensor& f,
                           std::size_t rows_per_video) const;
  void require_dynamic(const char* op) const;

  PromptConfig config_;
};

}  // namespace proda::dpm
