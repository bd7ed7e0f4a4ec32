#pragma once
// Graph network over scene-graph sequences: per layer a temporal link step on
// edges, gated message passing along ordered node pairs, a fusing update and
// a frame-wise normalization, followed by an attention readout.
//
// Node tensors are [G, N, M, D] where G may stack several copies of the same
// B videos (the specified and unspecified prompt branches). Edge features are
// per video, so a copy g reads the edges of video g % B.

#include <string>
#include <vector>

#include "proda/dpm/prompt.hpp"
#include "proda/numerics/layers.hpp"
#include "proda/numerics/ops.hpp"
#include "proda/numerics/parameters.hpp"
#include "proda/ssg/scene_graph.hpp"

namespace proda::vgpnn {

struct PairIndex {
  std::size_t video = 0;
  std::size_t source = 0;
  std::size_t target = 0;
  bool operator==(const PairIndex&) const = default;
};

/// Temporal edge features, stored only for ordered pairs (j != k) that carry
/// a relation in at least one frame. Pairs with no relation anywhere are
/// implicitly zero and masked.
struct EdgeFeatures {
  std::size_t batch = 0;   // B
  std::size_t frames = 0;  // N
  std::size_t nodes = 0;   // M
  std::size_t dim = 0;     // D_e
  std::vector<PairIndex> pairs;
  num::Tensor values;  // [A, N, D_e], A = pairs.size()
  num::Mask mask;      // A*N; set when a relation is present at that frame

  std::size_t active() const { return pairs.size(); }
  /// Full layout [B, N, M*M, D_e] with pair p = j*M + k.
  num::Tensor dense() const;
  /// B*N*M*M flags matching dense().
  num::Mask dense_mask() const;
};

/// e_i^{j,k} = sum of the embeddings of every relation type present on j -> k
/// at frame i. Self-loops are skipped.
EdgeFeatures build_edges(std::span<const ssg::SceneGraphSequence* const> videos,
                         const num::Tensor& relation_table);

class LinkStep {
 public:
  LinkStep() = default;
  LinkStep(num::ParameterStore& store, const std::string& prefix, std::size_t edge_dim,
           num::Initializer& init);
  /// Single-head self-attention with residual over each pair's N frames.
  /// w_v starts at zero, so a fresh step is the identity and frames stay
  /// distinguishable until training asks for temporal mixing.
  EdgeFeatures operator()(const EdgeFeatures& edges) const;

  num::Tensor w_q, w_k, w_v;
};

class MessageStep {
 public:
  MessageStep() = default;
  MessageStep(num::ParameterStore& store, const std::string& prefix, std::size_t dim,
              std::size_t edge_dim, num::Initializer& init);
  /// Sum over incoming j of sigmoid(gate(e)) * proj(concat(f^j, e)). The
  /// projection is applied as f W_f + e W_e + b, which is the same linear map.
  num::Tensor operator()(const num::Tensor& nodes, const EdgeFeatures& edges) const;

  num::Linear node_proj;
  num::Linear edge_proj;
  num::Mlp gate;
};

class UpdateStep {
 public:
  UpdateStep() = default;
  UpdateStep(num::ParameterStore& store, const std::string& prefix, std::size_t dim,
             num::Initializer& init);
  /// fuse(concat(f + msg, f)), padding rows zeroed.
  num::Tensor operator()(const num::Tensor& nodes, const num::Tensor& messages,
                         const num::Mask& mask) const;

  num::ResidualMlp fuse;
};

struct VGNormResult {
  num::Tensor values;
  std::vector<double> mu_g;        // running mean after this batch (unchanged in eval)
  std::vector<double> batch_mean;  // frame means of this batch (training only)
};

/// Frame-wise normalization. In training the batch frame mean feeds the
/// momentum update and the updated mean is used to centre the batch, so the
/// gradient also flows through the batch mean. Per (copy, frame) the
/// variance is the Bessel-corrected spread around alpha_n * mu_g_n.
/// Padding entries are excluded from every statistic and stay zero.
VGNormResult vgnorm(const num::Tensor& x, const num::Mask& mask, const num::Tensor& alpha,
                    const num::Tensor& gamma, const num::Tensor& beta,
                    std::span<const double> mu_g, double momentum, double eps, bool training);

class VGNorm {
 public:
  VGNorm() = default;
  VGNorm(num::ParameterStore& store, const std::string& prefix, std::size_t frames,
         double momentum, double eps);

  VGNormResult operator()(const num::Tensor& x, const num::Mask& mask, bool training) const;
  /// Stores a running mean returned by a training forward.
  void commit(std::span<const double> mu_g);
  std::span<const double> running_mean() const { return mu_g.data(); }

  num::Tensor alpha, gamma, beta;
  num::Tensor mu_g;  // buffer
  double momentum = 0.9;
  double eps = 1e-5;
};

struct ReadoutOutput {
  num::Tensor global;         // [G, D]
  num::Tensor frame_weights;  // [G, N], in [0, 1]
  num::Tensor node_weights;   // [G, N, M], rows sum to 1 over present nodes
};

class Readout {
 public:
  Readout() = default;
  Readout(num::ParameterStore& store, const std::string& prefix, std::size_t dim,
          std::size_t hidden, num::Initializer& init, double eps = 1e-5);
  /// x is [G, N, M, D] or [N, M, D].
  ReadoutOutput operator()(const num::Tensor& x, const num::Mask& mask) const;

  num::Mlp node_score;
  num::Mlp frame_score;
  double eps = 1e-5;
};

struct VgpnnConfig {
  std::size_t dim = 32;
  std::size_t edge_dim = 32;
  std::size_t frames = 0;
  std::size_t layers = 2;
  double momentum = 0.9;
  double eps = 1e-5;
};

struct VgpnnOutput {
  num::Tensor values;                        // [G, N, M, D]
  std::vector<std::vector<double>> mu_g;     // one proposal per layer
};

class Vgpnn {
 public:
  struct Layer {
    LinkStep link;
    MessageStep message;
    UpdateStep update;
    VGNorm norm;
  };

  Vgpnn() = default;
  Vgpnn(num::ParameterStore& store, const std::string& prefix, const VgpnnConfig& config,
        num::Initializer& init);

  VgpnnOutput forward(const dpm::PromptedFeatures& prompted, const EdgeFeatures& edges,
                      bool training) const;
  /// Applies the running means of a training forward, once per batch.
  void commit(const VgpnnOutput& out);

  const VgpnnConfig& config() const { return config_; }
  std::vector<Layer> layers;

 private:
  VgpnnConfig config_;
};

}  // namespace proda::vgpnn
