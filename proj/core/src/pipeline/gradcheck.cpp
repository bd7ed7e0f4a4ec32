#include "proda/pipeline/gradcheck.hpp"

#include <random>

#include "proda/pipeline/trainer.hpp"

namespace proda::pipeline {

namespace {

constexpr std::size_t kClasses = 6, kRelations = 4;

// Frames differ in classes, presence and relations, so frame-level paths
// (readout frame scores, temporal attention) carry real gradient.
std::vector<ssg::VideoRecord> tiny_videos() {
  std::vector<ssg::VideoRecord> out(2);
  auto& a = out[0];
  a.graph = {"tiny_a", 2, 2, kClasses, kRelations, {1, 2, 3, 1}, {1, 1, 1, 1},
             {{0, 0, 1, 2}, {1, 0, 1, 1}, {1, 1, 0, 3}}};
  a.annotation = {{1, 0, 0}, {{0, 0, 0}}};
  auto& b = out[1];
  b.graph = {"tiny_b", 2, 2, kClasses, kRelations, {4, 0, 5, 2}, {1, 0, 1, 1}, {{1, 1, 0, 0}}};
  b.annotation = {{0, 1, 1}, {{1, 1, 1}, {2, 0, 1}}};
  for (const auto& v : out) {
    ssg::validate(v.graph);
    ssg::validate(v.annotation, v.graph.num_frames);
  }
  return out;
}

}  // namespace

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.num_actions = 3;
  c.num_object_classes = kClasses;
  c.num_relation_types = kRelations;
  c.frames = 2;
  c.dim = 4;
  c.candidates = 2;
  c.layers = 1;
  return c;
}

num::GradReport tiny_model_gradcheck(const TinyGradCheckConfig& cfg) {
  const auto videos = tiny_videos();

  auto mc = tiny_model_config();
  mc.init_seed = cfg.seed;
  mc.learned_projection = cfg.learned_projection;
  ProdaModel model(mc);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> draw(-cfg.scale, cfg.scale);
  for (auto& p : model.parameters().all())
    if (p.kind == num::ParamKind::kWeight)
      for (auto& x : p.tensor.mutable_data()) x = draw(rng);
  model.parameters().set_all_trainable(true);

  const spec::ActionSpecPair pairs[] = {
      spec::make_pair({1, 1, 0}, videos[0].annotation.labels, true),
      spec::make_pair({0, 1, 0}, videos[1].annotation.labels, false)};
  const Sample batch[] = {{&videos[0], &pairs[0]}, {&videos[1], &pairs[1]}};

  objective::LossWeights w;
  w.m1 = 0.0;
  w.m2 = 0.0;
  return num::grad_check(
      [&] {
        auto out = model.forward(batch, {.training = true, .pre_head = true});
        auto loss = stage1_loss(out, batch, w).total.total;
        std::vector<spec::MultiHot> labels;
        for (const auto& s : batch) labels.push_back(objective::pad_no_action(s.video->annotation.labels));
        return num::add(loss, objective::classification_loss(out.a_m, labels));
      },
      model.parameters(), cfg.eps, cfg.tolerance);
}

}  // namespace proda::pipeline
