#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "proda/dpm/prompt.hpp"
#include "proda/numerics/layers.hpp"
#include "proda/numerics/parameters.hpp"
#include "proda/objective/losses.hpp"
#include "proda/spec/action_spec.hpp"
#include "proda/ssg/scene_graph.hpp"
#include "proda/vgpnn/vgpnn.hpp"

namespace proda::pipeline {

struct ModelConfig {
  std::size_t num_actions = 6;         // C
  std::size_t num_object_classes = 10;
  std::size_t num_relation_types = 4;
  std::size_t frames = 8;              // N
  std::size_t dim = 32;                // D, also the edge feature width
  std::size_t candidates = 8;          // T
  std::size_t layers = 2;
  double momentum = 0.9;               // VGNorm alpha_m
  double eps = 1e-5;
  dpm::PromptKind prompt_kind = dpm::PromptKind::kDynamic;
  dpm::PromptWeighting prompt_weighting = dpm::PromptWeighting::kSoftmax;
  bool learned_projection = false;     // phi/psi as learned D -> 1 maps instead of flatten
  std::uint64_t init_seed = 1;
};

/// One training or evaluation sample.
struct Sample {
  const ssg::VideoRecord* video = nullptr;
  const spec::ActionSpecPair* pair = nullptr;
};

struct ForwardOptions {
  bool training = false;   // VGNorm batch statistics
  bool pre_head = false;   // also compute a_m
};

struct ForwardOutput {
  num::Tensor f_o, f_s, f_u, f_r;  // [B, N, M, D]
  num::Tensor dis_u, dis_s;        // inputs of the correlation penalty; f_u/f_s or [B, N, M, 1]
  num::Tensor delta;               // [B*N*M, 1]
  num::Tensor a_s, a_u, a_t, a_m;  // [B, C+1] logits; a_m only with pre_head
  num::Tensor frame_weights;       // [B, N] from the specified branch
  num::Mask mask;                  // B*N*M
  vgpnn::VgpnnOutput graph;        // running-mean proposals
};

/// Encoder, prompt module, graph network, fusion and the readout/classifier
/// heads. The specified and unspecified branches share the prompt module and
/// graph network; they run as one stacked batch of 2B graphs.
///
/// Parameter name prefixes: "encoder.", "prompt.", "vgpnn.", "readout.",
/// "fusion." for the backbone and "heads." for the four classifiers plus the
/// pre-disentanglement readout.
class ProdaModel {
 public:
  explicit ProdaModel(const ModelConfig& config);
  ProdaModel(const ProdaModel&) = delete;
  ProdaModel& operator=(const ProdaModel&) = delete;

  ForwardOutput forward(std::span<const Sample> batch, const ForwardOptions& options) const;
  ForwardOutput forward(const ssg::VideoRecord& video, const spec::ActionSpecPair& pair,
                        const ForwardOptions& options) const;

  /// Stores the VGNorm running means of a training forward.
  void commit(const ForwardOutput& out);

  /// Encoder output only, [B, N, M, D].
  num::Tensor encode(std::span<const ssg::SceneGraphSequence* const> videos,
                     num::Mask* mask_out = nullptr) const;

  /// Resets the "heads." parameters to a fresh initialization.
  void reinitialize_heads(std::uint64_t seed);

  num::ParameterStore& parameters() { return store_; }
  const num::ParameterStore& parameters() const { return store_; }
  const ModelConfig& config() const { return config_; }

  static constexpr const char* kHeadPrefix = "heads.";

 private:
  void build_heads(num::Initializer& init);

  ModelConfig config_;
  num::ParameterStore store_;

  num::Tensor object_table_;
  num::Tensor spatial_q_, spatial_k_, spatial_v_;
  num::Tensor temporal_q_, temporal_k_, temporal_v_;
  num::Tensor relation_table_;
  dpm::PromptBank prompt_;
  vgpnn::Vgpnn graph_;
  objective::FusionNets fusion_;
  num::Linear phi_, psi_;  // only with learned_projection
  vgpnn::Readout readout_s_, readout_u_, readout_t_, readout_m_;
  num::Linear head_s_, head_u_, head_t_, head_m_;
};

/// Check a dataset against a model configuration (N, vocabularies, C).
void check_compatible(const ModelConfig& config, std::span<const ssg::VideoRecord> data);

}  // namespace proda::pipeline
