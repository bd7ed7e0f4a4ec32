#include "proda/pipeline/trainer.hpp"

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "proda/errors.hpp"
#include "proda/numerics/checkpoint.hpp"
#include "proda/numerics/optimizer.hpp"

namespace proda::pipeline {

namespace {

constexpr std::uint64_t kShuffleStream = 0xffffffffULL;

std::vector<spec::MultiHot> targets(std::span<const Sample> batch, bool specified) {
  std::vector<spec::MultiHot> out;
  for (const auto& s : batch) out.push_back(specified ? s.pair->y_s : s.pair->y_u);
  return out;
}

std::vector<spec::MultiHot> video_targets(std::span<const Sample> batch) {
  std::vector<spec::MultiHot> out;
  for (const auto& s : batch) out.push_back(objective::pad_no_action(s.video->annotation.labels));
  return out;
}

struct Accumulator {
  objective::LossBreakdown sum;
  double m = 0.0;
  std::size_t batches = 0;

  void add(const BatchLoss& l) {
    const auto& b = l.total.breakdown;
    sum.l_bce_u += b.l_bce_u;
    sum.l_bce_s += b.l_bce_s;
    sum.l_bce_t += b.l_bce_t;
    sum.l_dis += b.l_dis;
    sum.l_rec += b.l_rec;
    sum.total += b.total;
    if (l.bce_m.defined()) m += l.bce_m.item();
    ++batches;
  }

  void finish(EpochRecord& r, const objective::LossWeights& w) const {
    const double n = static_cast<double>(std::max<std::size_t>(batches, 1));
    r.loss.l_bce_u = sum.l_bce_u / n;
    r.loss.l_bce_s = sum.l_bce_s / n;
    r.loss.l_bce_t = sum.l_bce_t / n;
    r.loss.l_dis = sum.l_dis / n;
    r.loss.l_rec = sum.l_rec / n;
    r.loss.total = sum.total / n;
    r.loss.weights = w;
    r.l_bce_m = m / n;
    r.batches = batches;
  }
};

nlohmann::ordered_json to_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["stage"] = r.stage;
  j["epoch"] = r.epoch;
  j["samples"] = r.samples;
  j["batches"] = r.batches;
  j["l_bce_u"] = r.loss.l_bce_u;
  j["l_bce_s"] = r.loss.l_bce_s;
  j["l_bce_t"] = r.loss.l_bce_t;
  j["l_dis"] = r.loss.l_dis;
  j["l_rec"] = r.loss.l_rec;
  if (r.stage == 2) j["l_bce_m"] = r.l_bce_m;
  j["total"] = r.loss.total;
  return j;
}

std::string manifest(const TrainConfig& cfg, int stage, const std::vector<EpochRecord>& history,
                     const std::filesystem::path& checkpoint) {
  std::ostringstream out;
  out << "# checkpoint manifest\n";
  if (!cfg.config_echo.empty()) {
    out << cfg.config_echo;
    if (cfg.config_echo.back() != '\n') out << '\n';
  }
  out << "stage=" << stage << "\n";
  out << "checkpoint=" << checkpoint.filename().string() << "\n";
  out << "epochs_completed=" << history.size() << "\n";
  for (const auto& r : history) out << "history=" << to_json(r).dump() << "\n";
  return out.str();
}

class Outputs {
 public:
  Outputs(const TrainConfig& cfg, int stage) : cfg_(cfg), stage_(stage) {
    if (cfg.out_dir.empty()) return;
    std::filesystem::create_directories(cfg.out_dir);
    const auto tag = "stage" + std::to_string(stage);
    checkpoint_ = cfg.out_dir / (tag + ".ckpt");
    manifest_ = cfg.out_dir / (tag + ".manifest");
    metrics_ = cfg.out_dir / (tag + "_metrics.jsonl");
  }

  void epoch_done(const num::ParameterStore& store, const std::vector<EpochRecord>& history) {
    if (checkpoint_.empty()) return;
    num::save_checkpoint(store, checkpoint_);
    std::string log;
    for (const auto& r : history) log += to_json(r).dump() + "\n";
    num::write_file_atomic(metrics_, log);
    num::write_file_atomic(manifest_, manifest(cfg_, stage_, history, checkpoint_));
    saved_ = true;
  }

  [[noreturn]] void diverged(num::ParameterStore& store, const std::string& what) {
    std::string msg = "training diverged: " + what;
    if (saved_) {
      num::load_into(store, num::read_checkpoint(checkpoint_));
      msg += "; restored " + checkpoint_.string();
    }
    throw DivergenceError(msg);
  }

  const std::filesystem::path& checkpoint() const { return checkpoint_; }

 private:
  const TrainConfig& cfg_;
  int stage_;
  std::filesystem::path checkpoint_, manifest_, metrics_;
  bool saved_ = false;
};

void check_config(const TrainConfig& cfg, std::span<const ssg::VideoRecord> data,
                  const ProdaModel& model) {
  if (cfg.batch_size == 0) throw ContractError("train: batch size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ContractError("train: learning rate must be positive");
  if (data.empty()) throw ContractError("train: empty dataset");
  check_compatible(model.config(), data);
}

template <typename StepFn>
TrainResult run(ProdaModel& model, std::span<const ssg::VideoRecord> data, const TrainConfig& cfg,
                int stage, StepFn&& step) {
  check_config(cfg, data, model);
  Outputs files(cfg, stage);
  num::AdaptiveStep optimizer(cfg.learning_rate);
  TrainResult result;
  result.checkpoint = files.checkpoint();
  auto& store = model.parameters();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    auto plan = plan_epoch(data, cfg.K, cfg.seed, epoch);
    Accumulator acc;
    for (std::size_t begin = 0; begin < plan.samples.size(); begin += cfg.batch_size) {
      const auto count = std::min(cfg.batch_size, plan.samples.size() - begin);
      std::span<const Sample> batch(plan.samples.data() + begin, count);
      try {
        store.zero_grad();
        auto loss = step(batch);
        if (!std::isfinite(loss.total.breakdown.total)) {
          files.diverged(store, "non-finite loss at epoch " + std::to_string(epoch));
        }
        num::backward(loss.total.total);
        optimizer.step(store);
        acc.add(loss);
      } catch (const NumericError& e) {
        files.diverged(store, std::string(e.what()) + " (op " + e.op() + ") at epoch " +
                                  std::to_string(epoch));
      }
      if (stage == 2) {
        for (const auto& p : store.all()) {
          if (p.kind == num::ParamKind::kBuffer || p.name.starts_with(ProdaModel::kHeadPrefix)) continue;
          result.frozen_grad_norm = std::max(result.frozen_grad_norm, num::grad_norm(p.tensor));
        }
      }
    }
    EpochRecord rec;
    rec.stage = stage;
    rec.epoch = epoch;
    rec.samples = plan.samples.size();
    acc.finish(rec, cfg.weights);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    files.epoch_done(store, result.history);
    if (cfg.on_epoch) cfg.on_epoch(rec);
  }
  return result;
}

}  // namespace

EpochPlan plan_epoch(std::span<const ssg::VideoRecord> data, std::size_t K, std::uint64_t seed,
                     std::size_t epoch) {
  EpochPlan plan;
  plan.pairs.resize(data.size());
  for (std::size_t v = 0; v < data.size(); ++v) {
    std::mt19937_64 rng(spec::derive_seed(seed, epoch, v));
    plan.pairs[v] = spec::build_pairs(data[v].annotation.labels, K, rng).pairs;
  }
  for (std::size_t v = 0; v < data.size(); ++v)
    for (const auto& p : plan.pairs[v]) plan.samples.push_back({&data[v], &p});
  std::mt19937_64 rng(spec::derive_seed(seed, epoch, kShuffleStream));
  std::shuffle(plan.samples.begin(), plan.samples.end(), rng);
  return plan;
}

BatchLoss stage1_loss(const ForwardOutput& out, std::span<const Sample> batch,
                      const objective::LossWeights& w) {
  objective::LossTerms terms{
      objective::classification_loss(out.a_u, targets(batch, false)),
      objective::classification_loss(out.a_s, targets(batch, true)),
      objective::classification_loss(out.a_t, video_targets(batch)),
      objective::disentangle_loss(out.dis_u, out.dis_s, out.mask, w.m1),
      objective::reconstruction_loss(out.f_o, out.f_r, out.mask, w.m2)};
  return {objective::combine(terms, w), {}};
}

BatchLoss stage2_loss(const ForwardOutput& out, std::span<const Sample> batch,
                      const objective::LossWeights& w) {
  if (!out.a_m.defined()) throw ContractError("stage2_loss: forward ran without the pre-head");
  const auto zero = num::Tensor::scalar(0.0);
  objective::LossTerms terms{objective::classification_loss(out.a_u, targets(batch, false)),
                             objective::classification_loss(out.a_s, targets(batch, true)),
                             objective::classification_loss(out.a_t, video_targets(batch)), zero,
                             zero};
  auto w2 = w;
  w2.lambda_dis = 0.0;
  auto bce_m = objective::classification_loss(out.a_m, video_targets(batch));
  auto combined = objective::combine(terms, w2);
  combined.total = num::add(combined.total, bce_m);
  combined.breakdown.total += bce_m.item();
  return {combined, bce_m};
}

TrainResult train_stage1(ProdaModel& model, std::span<const ssg::VideoRecord> data,
                         const TrainConfig& cfg) {
  model.parameters().set_all_trainable(true);
  for (auto& p : model.parameters().all())
    if (p.name.starts_with("heads.m")) {
      p.trainable = false;
      p.tensor.set_requires_grad(false);
    }
  return run(model, data, cfg, 1, [&](std::span<const Sample> batch) {
    auto out = model.forward(batch, {.training = true, .pre_head = false});
    auto loss = stage1_loss(out, batch, cfg.weights);
    model.commit(out);
    return loss;
  });
}

TrainResult train_stage2(ProdaModel& model, std::span<const ssg::VideoRecord> data,
                         const TrainConfig& cfg) {
  if (cfg.reinit_heads) model.reinitialize_heads(cfg.seed);
  model.parameters().train_only({ProdaModel::kHeadPrefix});
  auto result = run(model, data, cfg, 2, [&](std::span<const Sample> batch) {
    auto out = model.forward(batch, {.training = false, .pre_head = true});
    return stage2_loss(out, batch, cfg.weights);
  });
  model.parameters().set_all_trainable(true);
  return result;
}

EpochRecord measure_epoch(const ProdaModel& model, std::span<const ssg::VideoRecord> data,
                          const TrainConfig& cfg, int stage, std::size_t epoch) {
  auto plan = plan_epoch(data, cfg.K, cfg.seed, epoch);
  Accumulator acc;
  for (std::size_t begin = 0; begin < plan.samples.size(); begin += cfg.batch_size) {
    const auto count = std::min(cfg.batch_size, plan.samples.size() - begin);
    std::span<const Sample> batch(plan.samples.data() + begin, count);
    if (stage == 1) {
      acc.add(stage1_loss(model.forward(batch, {.training = false}), batch, cfg.weights));
    } else {
      acc.add(stage2_loss(model.forward(batch, {.training = false, .pre_head = true}), batch,
                          cfg.weights));
    }
  }
  EpochRecord rec;
  rec.stage = stage;
  rec.epoch = epoch;
  rec.samples = plan.samples.size();
  acc.finish(rec, cfg.weights);
  return rec;
}

}  // namespace proda::pipeline
