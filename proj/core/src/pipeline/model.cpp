#include "proda/pipeline/model.hpp"

#include "proda/errors.hpp"

namespace proda::pipeline {

using num::Tensor;

namespace {

constexpr std::uint64_t kHeadSeedSalt = 0x68656164ULL;

void register_heads(num::ParameterStore& store, num::Initializer& init, const ModelConfig& c,
                    vgpnn::Readout& readout_m, num::Linear& s, num::Linear& u, num::Linear& t,
                    num::Linear& m) {
  const auto out = c.num_actions + 1;
  s = num::Linear(store, "heads.s", c.dim, out, init);
  u = num::Linear(store, "heads.u", c.dim, out, init);
  t = num::Linear(store, "heads.t", c.dim, out, init);
  m = num::Linear(store, "heads.m", c.dim, out, init);
  readout_m = vgpnn::Readout(store, "heads.m.readout", c.dim, c.dim, init, c.eps);
}

num::Mask transpose_mask(const num::Mask& mask, std::size_t B, std::size_t N, std::size_t M) {
  num::Mask out(mask.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < M; ++j) out[(b * M + j) * N + n] = mask[(b * N + n) * M + j];
  return out;
}

}  // namespace

ProdaModel::ProdaModel(const ModelConfig& c) : config_(c) {
  if (c.num_actions == 0 || c.frames == 0 || c.dim == 0 || c.layers == 0) {
    throw ContractError("ProdaModel: C, N, D and layers must be positive");
  }
  if (c.num_object_classes < 2 || c.num_relation_types == 0) {
    throw ContractError("ProdaModel: need at least one object class besides padding and one relation type");
  }
  num::Initializer init(c.init_seed);
  const auto D = c.dim;
  object_table_ = store_.add("encoder.objects", init.normal({c.num_object_classes, D}, 1.0));
  spatial_q_ = store_.add("encoder.spatial.w_q", init.glorot(D, D));
  spatial_k_ = store_.add("encoder.spatial.w_k", init.glorot(D, D));
  spatial_v_ = store_.add("encoder.spatial.w_v", init.glorot(D, D));
  temporal_q_ = store_.add("encoder.temporal.w_q", init.glorot(D, D));
  temporal_k_ = store_.add("encoder.temporal.w_k", init.glorot(D, D));
  temporal_v_ = store_.add("encoder.temporal.w_v", init.glorot(D, D));
  relation_table_ = store_.add("vgpnn.relations", init.normal({c.num_relation_types, D}, 1.0));
  prompt_ = dpm::PromptBank(store_, "prompt",
                            {c.num_actions, D, c.candidates, c.prompt_weighting, c.prompt_kind}, init);
  graph_ = vgpnn::Vgpnn(store_, "vgpnn", {D, D, c.frames, c.layers, c.momentum, c.eps}, init);
  fusion_ = objective::FusionNets(store_, "fusion", D, D, init);
  if (c.learned_projection) {
    phi_ = num::Linear(store_, "fusion.phi", D, 1, init, false);
    psi_ = num::Linear(store_, "fusion.psi", D, 1, init, false);
  }
  readout_s_ = vgpnn::Readout(store_, "readout.s", D, D, init, c.eps);
  readout_u_ = vgpnn::Readout(store_, "readout.u", D, D, init, c.eps);
  readout_t_ = vgpnn::Readout(store_, "readout.t", D, D, init, c.eps);
  build_heads(init);
}

void ProdaModel::build_heads(num::Initializer& init) {
  register_heads(store_, init, config_, readout_m_, head_s_, head_u_, head_t_, head_m_);
}

void ProdaModel::reinitialize_heads(std::uint64_t seed) {
  num::ParameterStore fresh;
  num::Initializer init(seed ^ kHeadSeedSalt);
  vgpnn::Readout r;
  num::Linear s, u, t, m;
  register_heads(fresh, init, config_, r, s, u, t, m);
  for (const auto& p : fresh.all()) {
    auto dst = store_.get(p.name).mutable_data();
    const auto src = p.tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

Tensor ProdaModel::encode(std::span<const ssg::SceneGraphSequence* const> videos,
                          num::Mask* mask_out) const {
  auto f0 = ssg::embed_nodes(videos, object_table_);
  const auto B = videos.size(), N = config_.frames, M = videos[0]->max_nodes, D = config_.dim;
  if (videos[0]->num_frames != N) {
    throw ContractError("encode: model expects N = " + std::to_string(N) + ", video has " +
                        std::to_string(videos[0]->num_frames));
  }
  auto spatial = num::self_attention(num::reshape(f0.values, {B * N, M, D}), f0.mask, spatial_q_,
                                     spatial_k_, spatial_v_);
  auto by_node = num::swap_axes12(num::reshape(spatial, {B, N, M, D}));  // [B, M, N, D]
  auto temporal = num::self_attention(num::reshape(by_node, {B * M, N, D}),
                                      transpose_mask(f0.mask, B, N, M), temporal_q_, temporal_k_,
                                      temporal_v_);
  if (mask_out) *mask_out = f0.mask;
  return num::swap_axes12(num::reshape(temporal, {B, M, N, D}));
}

ForwardOutput ProdaModel::forward(std::span<const Sample> batch,
                                  const ForwardOptions& options) const {
  if (batch.empty()) throw ContractError("forward: empty batch");
  const auto B = batch.size(), C = config_.num_actions;
  std::vector<const ssg::SceneGraphSequence*> videos;
  std::vector<double> v(2 * B * C);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& s = batch[b];
    if (!s.video || !s.pair) throw ContractError("forward: sample without video or pair");
    if (s.pair->sap.size() != C || s.pair->uap.size() != C) {
      throw ContractError("forward: spec pair has " + std::to_string(s.pair->sap.size()) +
                          " classes, model " + std::to_string(C));
    }
    videos.push_back(&s.video->graph);
    for (std::size_t c = 0; c < C; ++c) {
      if ((s.pair->sap[c] ^ s.pair->uap[c]) != 1) {
        throw ContractError("forward: UAP is not the complement of SAP");
      }
      v[b * C + c] = s.pair->sap[c];
      v[(B + b) * C + c] = s.pair->uap[c];
    }
  }

  ForwardOutput out;
  out.f_o = encode(videos, &out.mask);

  num::Mask stacked_mask = out.mask;
  stacked_mask.insert(stacked_mask.end(), out.mask.begin(), out.mask.end());
  ssg::NodeFeatures stacked{num::concat_rows(out.f_o, out.f_o), stacked_mask};
  auto prompted = prompt_.apply(stacked, Tensor::from({2 * B, C}, std::move(v)));
  auto edges = vgpnn::build_edges(videos, relation_table_);
  out.graph = graph_.forward(prompted, edges, options.training);
  out.f_s = num::slice_rows(out.graph.values, 0, B);
  out.f_u = num::slice_rows(out.graph.values, B, B);

  auto rec = fusion_(out.f_u, out.f_s, out.mask);
  out.f_r = rec.f_r;
  out.delta = rec.delta;
  out.dis_u = out.f_u;
  out.dis_s = out.f_s;
  if (config_.learned_projection) {
    const auto rows = out.mask.size();
    const num::Shape one{B, config_.frames, rows / (B * config_.frames), 1};
    out.dis_u = num::reshape(phi_(num::reshape(out.f_u, {rows, config_.dim})), one);
    out.dis_s = num::reshape(psi_(num::reshape(out.f_s, {rows, config_.dim})), one);
  }

  auto ro_s = readout_s_(out.f_s, out.mask);
  out.a_s = head_s_(ro_s.global);
  out.a_u = head_u_(readout_u_(out.f_u, out.mask).global);
  out.a_t = head_t_(readout_t_(out.f_r, out.mask).global);
  out.frame_weights = ro_s.frame_weights;
  if (options.pre_head) out.a_m = head_m_(readout_m_(out.f_o, out.mask).global);
  return out;
}

ForwardOutput ProdaModel::forward(const ssg::VideoRecord& video, const spec::ActionSpecPair& pair,
                                  const ForwardOptions& options) const {
  const Sample one[] = {{&video, &pair}};
  return forward(one, options);
}

void ProdaModel::commit(const ForwardOutput& out) { graph_.commit(out.graph); }

void check_compatible(const ModelConfig& c, std::span<const ssg::VideoRecord> data) {
  for (const auto& r : data) {
    const auto& g = r.graph;
    const auto where = "video '" + g.video_id + "': ";
    if (g.num_frames != c.frames) {
      throw ContractError(where + "N = " + std::to_string(g.num_frames) + ", model expects " +
                          std::to_string(c.frames));
    }
    if (g.num_object_classes > c.num_object_classes) {
      throw ContractError(where + "object vocabulary larger than the model's");
    }
    if (g.num_relation_types > c.num_relation_types) {
      throw ContractError(where + "relation vocabulary larger than the model's");
    }
    if (r.annotation.labels.size() != c.num_actions) {
      throw ContractError(where + std::to_string(r.annotation.labels.size()) +
                          " action classes, model expects " + std::to_string(c.num_actions));
    }
  }
}

}  // namespace proda::pipeline
