#include "proda/vgpnn/vgpnn.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <tuple>

#include "proda/errors.hpp"

namespace proda::vgpnn {

using num::Tensor;

namespace {

struct Layout {
  std::size_t G, N, M, D;
};

Layout node_layout(const char* op, const Tensor& x) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  throw ContractError(std::string(op) + ": expected [G, N, M, D] or [N, M, D], got " +
                      num::to_string(x.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Edges

Tensor EdgeFeatures::dense() const {
  const auto P = nodes * nodes;
  if (pairs.empty()) return Tensor::zeros({batch, frames, P, dim});
  std::vector<std::size_t> idx(pairs.size() * frames);
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    const auto& p = pairs[a];
    for (std::size_t n = 0; n < frames; ++n)
      idx[a * frames + n] = (p.video * frames + n) * P + p.source * nodes + p.target;
  }
  auto rows = num::scatter_add_rows(num::reshape(values, {pairs.size() * frames, dim}), idx,
                                    batch * frames * P);
  return num::reshape(rows, {batch, frames, P, dim});
}

num::Mask EdgeFeatures::dense_mask() const {
  const auto P = nodes * nodes;
  num::Mask out(batch * frames * P, 0);
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    const auto& p = pairs[a];
    for (std::size_t n = 0; n < frames; ++n)
      out[(p.video * frames + n) * P + p.source * nodes + p.target] = mask[a * frames + n];
  }
  return out;
}

EdgeFeatures build_edges(std::span<const ssg::SceneGraphSequence* const> videos,
                         const Tensor& relation_table) {
  if (videos.empty()) throw ContractError("build_edges: empty batch");
  if (relation_table.rank() != 2) throw ContractError("build_edges: table must be [|R|, D_e]");
  EdgeFeatures e;
  e.batch = videos.size();
  e.frames = videos[0]->num_frames;
  e.nodes = videos[0]->max_nodes;
  e.dim = relation_table.dim(1);
  const auto types = relation_table.dim(0);

  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> slot;
  for (std::size_t b = 0; b < videos.size(); ++b) {
    const auto& v = *videos[b];
    if (v.num_frames != e.frames || v.max_nodes != e.nodes) {
      throw ContractError("build_edges: video '" + v.video_id + "' has a different N or M");
    }
    if (v.num_relation_types > types) {
      throw ContractError("build_edges: video '" + v.video_id + "' uses " +
                          std::to_string(v.num_relation_types) + " relation types, table has " +
                          std::to_string(types));
    }
    for (const auto& r : v.relations)
      if (r.source != r.target) slot.emplace(std::make_tuple(b, r.source, r.target), 0);
  }
  std::size_t a = 0;
  for (auto& [key, index] : slot) {
    index = a++;
    e.pairs.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key)});
  }
  if (e.pairs.empty()) return e;

  const auto rows = e.pairs.size() * e.frames;
  std::vector<double> counts(rows * types, 0.0);
  e.mask.assign(rows, 0);
  for (std::size_t b = 0; b < videos.size(); ++b) {
    for (const auto& r : videos[b]->relations) {
      if (r.source == r.target) continue;
      const auto row = slot.at({b, r.source, r.target}) * e.frames + r.frame;
      counts[row * types + r.type] += 1.0;
      e.mask[row] = 1;
    }
  }
  auto hot = Tensor::from({rows, types}, std::move(counts));
  e.values = num::reshape(num::matmul(hot, relation_table), {e.pairs.size(), e.frames, e.dim});
  return e;
}

// ---------------------------------------------------------------------------
// Link / message / update

LinkStep::LinkStep(num::ParameterStore& store, const std::string& prefix, std::size_t edge_dim,
                   num::Initializer& init)
    : w_q(store.add(prefix + ".w_q", init.glorot(edge_dim, edge_dim))),
      w_k(store.add(prefix + ".w_k", init.glorot(edge_dim, edge_dim))),
      w_v(store.add(prefix + ".w_v", init.zeros({edge_dim, edge_dim}))) {}

EdgeFeatures LinkStep::operator()(const EdgeFeatures& edges) const {
  if (edges.pairs.empty()) return edges;
  EdgeFeatures out = edges;
  out.values = num::self_attention(edges.values, edges.mask, w_q, w_k, w_v);
  return out;
}

MessageStep::MessageStep(num::ParameterStore& store, const std::string& prefix, std::size_t dim,
                         std::size_t edge_dim, num::Initializer& init)
    : node_proj(store, prefix + ".node", dim, dim, init, false),
      edge_proj(store, prefix + ".edge", edge_dim, dim, init),
      gate(store, prefix + ".gate", edge_dim, dim, dim, init) {}

Tensor MessageStep::operator()(const Tensor& nodes, const EdgeFeatures& edges) const {
  const auto [G, N, M, D] = node_layout("message", nodes);
  if (edges.batch == 0 || G % edges.batch != 0 || edges.frames != N || edges.nodes != M) {
    throw ContractError("message: nodes " + num::to_string(nodes.shape()) + " do not match " +
                        std::to_string(edges.batch) + " edge videos of N = " +
                        std::to_string(edges.frames) + ", M = " + std::to_string(edges.nodes));
  }
  const auto rows = G * N * M;
  const auto copies = G / edges.batch;
  std::vector<std::size_t> src, dst, eid;
  for (std::size_t r = 0; r < copies; ++r) {
    for (std::size_t a = 0; a < edges.pairs.size(); ++a) {
      const auto& p = edges.pairs[a];
      const auto g = r * edges.batch + p.video;
      for (std::size_t n = 0; n < N; ++n) {
        if (!edges.mask[a * N + n]) continue;
        src.push_back((g * N + n) * M + p.source);
        dst.push_back((g * N + n) * M + p.target);
        eid.push_back(a * N + n);
      }
    }
  }
  if (src.empty()) return Tensor::zeros(nodes.shape());

  const auto f = num::reshape(nodes, {rows, D});
  const auto e = num::reshape(edges.values, {edges.pairs.size() * N, edges.dim});
  auto raw = num::add(num::gather_rows(node_proj(f), src), num::gather_rows(edge_proj(e), eid));
  auto w = num::gather_rows(num::sigmoid(gate(e)), eid);
  auto msg = num::scatter_add_rows(num::mul(w, raw), dst, rows);
  return num::reshape(msg, nodes.shape());
}

UpdateStep::UpdateStep(num::ParameterStore& store, const std::string& prefix, std::size_t dim,
                       num::Initializer& init)
    : fuse(store, prefix + ".fuse", 2 * dim, dim, dim, init) {}

Tensor UpdateStep::operator()(const Tensor& nodes, const Tensor& messages,
                              const num::Mask& mask) const {
  num::expect_same_shape("update", nodes.shape(), messages.shape());
  const auto [G, N, M, D] = node_layout("update", nodes);
  const auto rows = G * N * M;
  if (mask.size() != rows) throw ContractError("update: mask does not match nodes");
  const auto f = num::reshape(nodes, {rows, D});
  const auto u = num::add(f, num::reshape(messages, {rows, D}));
  auto out = num::mul(fuse(num::concat_last(u, f)), num::mask_column(mask));
  return num::reshape(out, nodes.shape());
}

// ---------------------------------------------------------------------------
// VGNorm

VGNormResult vgnorm(const Tensor& x, const num::Mask& mask, const Tensor& alpha,
                    const Tensor& gamma, const Tensor& beta, std::span<const double> mu_g,
                    double momentum, double eps, bool training) {
  const auto [G, N, M, D] = node_layout("vgnorm", x);
  if (mask.size() != G * N * M) throw ContractError("vgnorm: mask does not match features");
  for (const auto* t : {&alpha, &gamma, &beta}) {
    if (t->rank() != 1 || t->dim(0) != N) {
      throw ContractError("vgnorm: frame parameters must be [" + std::to_string(N) + "], got " +
                          num::to_string(t->shape()));
    }
  }
  if (mu_g.size() != N) throw ContractError("vgnorm: running mean must have N entries");
  if (!(eps > 0.0)) throw ContractError("vgnorm: eps must be positive");

  const auto xs = x.data();
  // unmasked (node, dim) samples per (copy, frame) and per frame
  std::vector<std::size_t> count(G * N, 0);
  std::vector<std::size_t> frame_count(N, 0);
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t j = 0; j < M; ++j) count[g * N + n] += mask[(g * N + n) * M + j] ? D : 0;
      if (count[g * N + n] < 2) {
        throw ContractError("vgnorm: video " + std::to_string(g) + " frame " + std::to_string(n) +
                            " has " + std::to_string(count[g * N + n]) +
                            " unmasked samples, need at least 2");
      }
      frame_count[n] += count[g * N + n];
    }

  VGNormResult result;
  std::vector<double> centre(mu_g.begin(), mu_g.end());
  if (training) {
    result.batch_mean.assign(N, 0.0);
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t j = 0; j < M; ++j) {
          const auto row = (g * N + n) * M + j;
          if (!mask[row]) continue;
          for (std::size_t d = 0; d < D; ++d) result.batch_mean[n] += xs[row * D + d];
        }
    for (std::size_t n = 0; n < N; ++n) {
      result.batch_mean[n] /= static_cast<double>(frame_count[n]);
      centre[n] = momentum * mu_g[n] + (1.0 - momentum) * result.batch_mean[n];
    }
  }
  result.mu_g = centre;

  // c_n = alpha_n * centre_n; inv[g, n] = 1 / sqrt(var + eps)
  auto inv = std::make_shared<std::vector<double>>(G * N);
  auto shift = std::make_shared<std::vector<double>>(N);
  for (std::size_t n = 0; n < N; ++n) (*shift)[n] = alpha[n] * centre[n];
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t n = 0; n < N; ++n) {
      const auto c = (*shift)[n];
      double ss = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        const auto row = (g * N + n) * M + j;
        if (!mask[row]) continue;
        for (std::size_t d = 0; d < D; ++d) {
          const double z = xs[row * D + d] - c;
          ss += z * z;
        }
      }
      const double var = ss / static_cast<double>(count[g * N + n] - 1);
      const double r = 1.0 / std::sqrt(var + eps);
      (*inv)[g * N + n] = r;
      for (std::size_t j = 0; j < M; ++j) {
        const auto row = (g * N + n) * M + j;
        if (!mask[row]) continue;
        for (std::size_t d = 0; d < D; ++d)
          out[row * D + d] = gamma[n] * (xs[row * D + d] - c) * r + beta[n];
      }
    }

  auto m = std::make_shared<num::Mask>(mask);
  auto counts = std::make_shared<std::vector<std::size_t>>(std::move(count));
  auto fcounts = std::make_shared<std::vector<std::size_t>>(std::move(frame_count));
  auto centres = std::make_shared<std::vector<double>>(centre);
  result.values = num::make_op(
      "vgnorm", x.shape(), std::move(out), {x, alpha, gamma, beta},
      [G, N, M, D, m, counts, fcounts, centres, inv, shift, momentum, training](
          num::detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pa = *self.parents[1];
        auto& pg = *self.parents[2];
        auto& pb = *self.parents[3];
        std::vector<double> d_shift(N, 0.0);
        std::vector<double> d_gamma(N, 0.0), d_beta(N, 0.0);
        std::span<double> gx;
        if (px.requires_grad) gx = px.grad_buffer();
        for (std::size_t g = 0; g < G; ++g)
          for (std::size_t n = 0; n < N; ++n) {
            const double c = (*shift)[n], r = (*inv)[g * N + n];
            const double gam = pg.value[n];
            const double k1 = static_cast<double>((*counts)[g * N + n] - 1);
            // first pass: sum of upstream * z
            double gz_sum = 0.0;
            for (std::size_t j = 0; j < M; ++j) {
              const auto row = (g * N + n) * M + j;
              if (!(*m)[row]) continue;
              for (std::size_t d = 0; d < D; ++d) {
                const auto i = row * D + d;
                const double gy = self.grad[i];
                gz_sum += gy * (px.value[i] - c);
                d_beta[n] += gy;
              }
            }
            d_gamma[n] += gz_sum * r;
            const double d_var = -0.5 * gam * r * r * r * gz_sum;
            for (std::size_t j = 0; j < M; ++j) {
              const auto row = (g * N + n) * M + j;
              if (!(*m)[row]) continue;
              for (std::size_t d = 0; d < D; ++d) {
                const auto i = row * D + d;
                const double z = px.value[i] - c;
                const double gz = gam * r * self.grad[i] + d_var * 2.0 * z / k1;
                d_shift[n] -= gz;
                if (px.requires_grad) gx[i] += gz;
              }
            }
          }
        if (pa.requires_grad) {
          auto ga = pa.grad_buffer();
          for (std::size_t n = 0; n < N; ++n) ga[n] += d_shift[n] * (*centres)[n];
        }
        if (pg.requires_grad) {
          auto gg = pg.grad_buffer();
          for (std::size_t n = 0; n < N; ++n) gg[n] += d_gamma[n];
        }
        if (pb.requires_grad) {
          auto gb = pb.grad_buffer();
          for (std::size_t n = 0; n < N; ++n) gb[n] += d_beta[n];
        }
        if (training && px.requires_grad) {
          // centre_n = momentum * mu_g_n + (1 - momentum) * mean of frame n
          for (std::size_t n = 0; n < N; ++n) {
            const double d_mean =
                d_shift[n] * pa.value[n] * (1.0 - momentum) / static_cast<double>((*fcounts)[n]);
            for (std::size_t g = 0; g < G; ++g)
              for (std::size_t j = 0; j < M; ++j) {
                const auto row = (g * N + n) * M + j;
                if (!(*m)[row]) continue;
                for (std::size_t d = 0; d < D; ++d) gx[row * D + d] += d_mean;
              }
          }
        }
      });
  return result;
}

VGNorm::VGNorm(num::ParameterStore& store, const std::string& prefix, std::size_t frames,
               double momentum_, double eps_)
    : alpha(store.add(prefix + ".alpha", Tensor::full({frames}, 1.0, true))),
      gamma(store.add(prefix + ".gamma", Tensor::full({frames}, 1.0, true))),
      beta(store.add(prefix + ".beta", Tensor::zeros({frames}, true))),
      mu_g(store.add_buffer(prefix + ".mu_g", Tensor::zeros({frames}))),
      momentum(momentum_),
      eps(eps_) {
  if (momentum < 0.0 || momentum > 1.0) throw ContractError("VGNorm: momentum must be in [0, 1]");
}

VGNormResult VGNorm::operator()(const Tensor& x, const num::Mask& mask, bool training) const {
  return vgnorm(x, mask, alpha, gamma, beta, mu_g.data(), momentum, eps, training);
}

void VGNorm::commit(std::span<const double> values) {
  auto dst = mu_g.mutable_data();
  if (values.size() != dst.size()) throw ContractError("VGNorm::commit: size mismatch");
  for (auto v : values)
    if (!std::isfinite(v)) throw NumericError("vgnorm", "VGNorm::commit: non-finite running mean");
  std::copy(values.begin(), values.end(), dst.begin());
}

// ---------------------------------------------------------------------------
// Readout

Readout::Readout(num::ParameterStore& store, const std::string& prefix, std::size_t dim,
                 std::size_t hidden, num::Initializer& init, double eps_)
    : node_score(store, prefix + ".node", dim, hidden, 1, init),
      frame_score(store, prefix + ".frame", dim, hidden, 1, init),
      eps(eps_) {}

ReadoutOutput Readout::operator()(const Tensor& x, const num::Mask& mask) const {
  const auto [G, N, M, D] = node_layout("readout", x);
  const auto rows = G * N * M;
  if (mask.size() != rows) throw ContractError("readout: mask does not match features");
  const auto f = num::reshape(x, {rows, D});
  auto w = num::softmax_last(num::reshape(node_score(f), {G * N, M}), mask);
  auto h = num::weighted_sum(w, f, G * N);
  auto s = num::sigmoid(frame_score(h));  // [G*N, 1]
  ReadoutOutput out;
  out.global = num::normalized_weighted_sum(s, h, G, eps);
  if (x.rank() == 3) {
    out.global = num::reshape(out.global, {D});
    out.frame_weights = num::reshape(s, {N});
    out.node_weights = num::reshape(w, {N, M});
  } else {
    out.frame_weights = num::reshape(s, {G, N});
    out.node_weights = num::reshape(w, {G, N, M});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stack

Vgpnn::Vgpnn(num::ParameterStore& store, const std::string& prefix, const VgpnnConfig& config,
             num::Initializer& init)
    : config_(config) {
  if (config.layers == 0) throw ContractError("Vgpnn: need at least one layer");
  if (config.frames == 0) throw ContractError("Vgpnn: frames must be positive");
  for (std::size_t l = 0; l < config.layers; ++l) {
    const auto p = prefix + ".layer" + std::to_string(l);
    layers.push_back({LinkStep(store, p + ".link", config.edge_dim, init),
                      MessageStep(store, p + ".message", config.dim, config.edge_dim, init),
                      UpdateStep(store, p + ".update", config.dim, init),
                      VGNorm(store, p + ".norm", config.frames, config.momentum, config.eps)});
  }
}

VgpnnOutput Vgpnn::forward(const dpm::PromptedFeatures& prompted, const EdgeFeatures& edges,
                           bool training) const {
  VgpnnOutput out;
  auto x = prompted.values;
  auto e = edges;
  for (const auto& layer : layers) {
    e = layer.link(e);
    auto msg = layer.message(x, e);
    x = layer.update(x, msg, prompted.mask);
    auto norm = layer.norm(x, prompted.mask, training);
    x = norm.values;
    out.mu_g.push_back(std::move(norm.mu_g));
  }
  out.values = x;
  return out;
}

void Vgpnn::commit(const VgpnnOutput& out) {
  if (out.mu_g.size() != layers.size()) throw ContractError("Vgpnn::commit: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].norm.commit(out.mu_g[l]);
}

}  // namespace proda::vgpnn
