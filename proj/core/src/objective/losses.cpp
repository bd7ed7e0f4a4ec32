#include "proda/objective/losses.hpp"

#include <cmath>
#include <memory>

#include "proda/errors.hpp"

namespace proda::objective {

using num::Tensor;

namespace {

std::atomic<std::size_t> g_zero_variance{0};

struct Groups {
  std::size_t videos, rows_per_video, width;
};

Groups grouping(const char* op, const Tensor& x, const num::Mask& mask) {
  if (x.rank() < 2) throw ContractError(std::string(op) + ": expected a batched tensor");
  const auto B = x.dim(0);
  if (mask.empty() || x.size() % mask.size() != 0 || mask.size() % B != 0) {
    throw ContractError(std::string(op) + ": mask of " + std::to_string(mask.size()) +
                        " flags does not fit " + num::to_string(x.shape()));
  }
  return {B, mask.size() / B, x.size() / mask.size()};
}

}  // namespace

std::size_t zero_variance_events() { return g_zero_variance.load(); }

Tensor pearson(const Tensor& a, const Tensor& b, const num::Mask& mask) {
  num::expect_same_shape("pearson", a.shape(), b.shape());
  const auto [B, R, D] = grouping("pearson", a, mask);
  std::vector<double> rho(B, 0.0);
  // per video: mean_a, mean_b, sxx, syy, and whether the gradient is live
  auto stats = std::make_shared<std::vector<double>>(B * 5, 0.0);
  auto m = std::make_shared<num::Mask>(mask);
  for (std::size_t v = 0; v < B; ++v) {
    double n = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      if (!mask[v * R + r]) continue;
      for (std::size_t d = 0; d < D; ++d) {
        const auto i = (v * R + r) * D + d;
        sa += a[i];
        sb += b[i];
        n += 1.0;
      }
    }
    if (n < 2.0) throw ContractError("pearson: video " + std::to_string(v) + " has fewer than 2 samples");
    const double ma = sa / n, mb = sb / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      if (!mask[v * R + r]) continue;
      for (std::size_t d = 0; d < D; ++d) {
        const auto i = (v * R + r) * D + d;
        const double x = a[i] - ma, y = b[i] - mb;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
      }
    }
    auto* s = stats->data() + v * 5;
    s[0] = ma;
    s[1] = mb;
    s[2] = sxx;
    s[3] = syy;
    if (sxx > 0.0 && syy > 0.0) {
      rho[v] = sxy / std::sqrt(sxx * syy);
      s[4] = 1.0;
    } else {
      g_zero_variance.fetch_add(1);
    }
  }
  return num::make_op("pearson", {B}, std::move(rho), {a, b}, [B, R, D, stats, m](num::detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t v = 0; v < B; ++v) {
      const auto* s = stats->data() + v * 5;
      if (s[4] == 0.0) continue;
      const double g = self.grad[v], r = self.value[v];
      const double norm = std::sqrt(s[2] * s[3]);
      for (std::size_t row = 0; row < R; ++row) {
        if (!(*m)[v * R + row]) continue;
        for (std::size_t d = 0; d < D; ++d) {
          const auto i = (v * R + row) * D + d;
          const double x = pa.value[i] - s[0], y = pb.value[i] - s[1];
          if (pa.requires_grad) pa.grad_buffer()[i] += g * (y / norm - r * x / s[2]);
          if (pb.requires_grad) pb.grad_buffer()[i] += g * (x / norm - r * y / s[3]);
        }
      }
    }
  });
}

Tensor disentangle_loss(const Tensor& f_u, const Tensor& f_s, const num::Mask& mask, double m1) {
  auto rho = pearson(f_u, f_s, mask);
  return num::mean(num::relu(num::add_scalar(num::abs_value(rho), -m1)));
}

FusionNets::FusionNets(num::ParameterStore& store, const std::string& prefix, std::size_t dim,
                       std::size_t hidden, num::Initializer& init)
    : net1(store, prefix + ".net1", dim, hidden, dim, init),
      net2(store, prefix + ".net2", 2 * dim, hidden, 1, init) {}

Reconstruction FusionNets::operator()(const Tensor& f_u, const Tensor& f_s,
                                      const num::Mask& mask) const {
  num::expect_same_shape("reconstruct", f_u.shape(), f_s.shape());
  const auto rows = mask.size();
  if (rows == 0 || f_u.size() % rows != 0) {
    throw ContractError("reconstruct: mask does not fit " + num::to_string(f_u.shape()));
  }
  const auto D = f_u.size() / rows;
  const auto u = num::reshape(f_u, {rows, D});
  const auto s = num::reshape(f_s, {rows, D});
  const auto keep = num::mask_column(mask);
  Reconstruction out;
  out.delta = num::mul(num::sigmoid(net2(num::concat_last(u, s))), keep);
  const auto mixed = num::add(s, num::mul(num::sub(u, s), out.delta));
  out.f_r = num::reshape(num::mul(net1(mixed), keep), f_u.shape());
  return out;
}

Tensor reconstruction_loss(const Tensor& f_o, const Tensor& f_r, const num::Mask& mask, double m2) {
  num::expect_same_shape("reconstruction_loss", f_o.shape(), f_r.shape());
  const auto [B, R, D] = grouping("reconstruction_loss", f_o, mask);
  std::vector<double> inv(B, 0.0);
  for (std::size_t v = 0; v < B; ++v) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < R; ++r) n += mask[v * R + r] ? D : 0;
    if (n == 0) throw ContractError("reconstruction_loss: video " + std::to_string(v) + " is fully masked");
    inv[v] = 1.0 / static_cast<double>(n);
  }
  const auto keep = num::mask_column(mask);
  auto diff = num::mul(num::reshape(num::sub(f_o, f_r), {B * R, D}), keep);
  auto per_video = num::group_sum(num::mul(diff, diff), B);
  auto mse = num::mul(per_video, Tensor::from({B}, std::move(inv)));
  return num::mean(num::relu(num::add_scalar(mse, -m2)));
}

Tensor classification_loss(const Tensor& logits, const std::vector<spec::MultiHot>& targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw ContractError("classification_loss: logits " + num::to_string(logits.shape()) + " for " +
                        std::to_string(targets.size()) + " target vectors");
  }
  const auto width = logits.dim(1);
  std::vector<double> y;
  y.reserve(logits.size());
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (targets[b].size() != width) {
      throw ContractError("classification_loss: target " + std::to_string(b) + " has " +
                          std::to_string(targets[b].size()) + " entries, logits " +
                          std::to_string(width));
    }
    for (auto t : targets[b]) {
      if (t > 1) throw ContractError("classification_loss: target entries must be 0 or 1");
      y.push_back(t);
    }
  }
  return num::bce_with_logits(logits, Tensor::from(logits.shape(), std::move(y)));
}

TotalLoss combine(const LossTerms& t, const LossWeights& w) {
  for (const auto* term : {&t.bce_u, &t.bce_s, &t.bce_t, &t.dis, &t.rec}) {
    if (!term->defined() || term->size() != 1) throw ContractError("combine: every term must be a scalar");
  }
  auto total = num::add(
      num::add(num::add(num::scale(t.bce_u, w.lambda_u), num::scale(t.bce_s, w.lambda_s)),
               num::scale(t.bce_t, w.lambda_t)),
      num::scale(num::add(t.dis, t.rec), w.lambda_dis));
  TotalLoss out;
  out.total = total;
  auto& b = out.breakdown;
  b.l_bce_u = t.bce_u.item();
  b.l_bce_s = t.bce_s.item();
  b.l_bce_t = t.bce_t.item();
  b.l_dis = t.dis.item();
  b.l_rec = t.rec.item();
  b.total = total.item();
  b.weights = w;
  return out;
}

spec::MultiHot pad_no_action(const spec::MultiHot& labels) {
  auto out = labels;
  out.push_back(0);
  return out;
}

}  // namespace proda::objective
