#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "proda/numerics/layers.hpp"
#include "proda/numerics/ops.hpp"
#include "proda/numerics/parameters.hpp"
#include "proda/spec/action_spec.hpp"

namespace proda::objective {

struct LossWeights {
  double lambda_u = 1.0;
  double lambda_s = 1.0;
  double lambda_t = 1.0;
  double lambda_dis = 0.5;  // applied to l_dis + l_rec
  double m1 = 0.1;
  double m2 = 0.01;
};

struct LossBreakdown {
  double l_bce_u = 0.0;
  double l_bce_s = 0.0;
  double l_bce_t = 0.0;
  double l_dis = 0.0;
  double l_rec = 0.0;
  double total = 0.0;
  LossWeights weights;
};

/// Scalar loss tensors before weighting.
struct LossTerms {
  num::Tensor bce_u, bce_s, bce_t, dis, rec;
};

struct TotalLoss {
  num::Tensor total;
  LossBreakdown breakdown;
};

/// Per-video Pearson correlation between the unmasked entries of a and b.
/// Both are [B, ...] with `mask` holding one flag per D-wide row; returns [B].
/// A video where either side has zero variance gets rho = 0 and no gradient.
num::Tensor pearson(const num::Tensor& a, const num::Tensor& b, const num::Mask& mask);

/// Number of zero-variance videos seen by pearson() since process start.
std::size_t zero_variance_events();

/// mean_b ReLU(|rho_b| - m1).
num::Tensor disentangle_loss(const num::Tensor& f_u, const num::Tensor& f_s,
                             const num::Mask& mask, double m1);

struct Reconstruction {
  num::Tensor f_r;    // same shape as the inputs
  num::Tensor delta;  // one fusion weight per row, [rows, 1]
};

/// delta = sigmoid(net2(concat(F_u, F_s))); F_r = net1(delta F_u + (1 - delta) F_s).
/// net1 starts as the identity map.
class FusionNets {
 public:
  FusionNets() = default;
  FusionNets(num::ParameterStore& store, const std::string& prefix, std::size_t dim,
             std::size_t hidden, num::Initializer& init);

  Reconstruction operator()(const num::Tensor& f_u, const num::Tensor& f_s,
                            const num::Mask& mask) const;

  num::ResidualMlp net1;
  num::Mlp net2;
};

/// mean_b ReLU(mse_b - m2), with mse_b over the unmasked entries of video b.
num::Tensor reconstruction_loss(const num::Tensor& f_o, const num::Tensor& f_r,
                                const num::Mask& mask, double m2);

/// Mean BCE-with-logits of [B, C+1] logits against 0/1 targets.
num::Tensor classification_loss(const num::Tensor& logits,
                                 const std::vector<spec::MultiHot>& targets);

/// total = l_u*bce_u + l_s*bce_s + l_t*bce_t + l_dis*(dis + rec).
TotalLoss combine(const LossTerms& terms, const LossWeights& weights);

/// Video labels padded with the no-action entry (always 0).
spec::MultiHot pad_no_action(const spec::MultiHot& labels);

}  // namespace proda::objective
