#include "proda/spec/action_spec.hpp"

#include <algorithm>
#include <string>

#include "proda/errors.hpp"

namespace proda::spec {

namespace {

std::vector<std::size_t> indices_where(const MultiHot& v, std::uint8_t value) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < v.size(); ++c)
    if (v[c] == value) out.push_back(c);
  return out;
}

// First `count` entries of a partial Fisher-Yates shuffle.
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t count,
                              std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

void check_truth(const MultiHot& truth) {
  if (truth.empty()) throw ContractError("action spec: empty label vector");
  for (auto t : truth)
    if (t > 1) throw ContractError("action spec: labels must be 0/1");
}

}  // namespace

MultiHot complement(const MultiHot& spec) {
  MultiHot out(spec.size());
  for (std::size_t c = 0; c < spec.size(); ++c) out[c] = spec[c] ? 0 : 1;
  return out;
}

MultiHot targets_for(const MultiHot& spec, const MultiHot& truth) {
  if (spec.size() != truth.size()) {
    throw ContractError("targets_for: spec has " + std::to_string(spec.size()) +
                        " entries, truth " + std::to_string(truth.size()));
  }
  MultiHot out(spec.size() + 1, 0);
  bool any = false;
  for (std::size_t c = 0; c < spec.size(); ++c) {
    out[c] = (spec[c] && truth[c]) ? 1 : 0;
    any = any || out[c];
  }
  out.back() = any ? 0 : 1;
  return out;
}

ActionSpecPair make_pair(MultiHot sap, const MultiHot& truth, bool distractor_injected) {
  ActionSpecPair p;
  p.uap = complement(sap);
  p.y_s = targets_for(sap, truth);
  p.y_u = targets_for(p.uap, truth);
  p.sap = std::move(sap);
  p.distractor_injected = distractor_injected;
  return p;
}

MultiHot sample_spec(const MultiHot& truth, std::size_t present, std::size_t absent,
                     std::mt19937_64& rng) {
  auto pos = indices_where(truth, 1);
  auto neg = indices_where(truth, 0);
  if (present > pos.size() || absent > neg.size()) {
    throw ContractError("sample_spec: asked for " + std::to_string(present) + " present and " +
                        std::to_string(absent) + " absent labels, video has " +
                        std::to_string(pos.size()) + " and " + std::to_string(neg.size()));
  }
  MultiHot sap(truth.size(), 0);
  for (auto c : draw(std::move(pos), present, rng)) sap[c] = 1;
  for (auto c : draw(std::move(neg), absent, rng)) sap[c] = 1;
  return sap;
}

std::vector<ActionSpecPair> distractor_family(const MultiHot& truth, std::size_t K,
                                              std::mt19937_64& rng) {
  check_truth(truth);
  const auto C = truth.size();
  const auto L = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 1));
  if (L == 0) throw ContractError("build_pairs: video has no labels (L = 0)");
  if (K > C) throw ContractError("build_pairs: K = " + std::to_string(K) + " exceeds C = " + std::to_string(C));
  if (K < L) throw ContractError("build_pairs: K = " + std::to_string(K) + " below L = " + std::to_string(L));
  if (K > C - L) {
    throw ContractError("build_pairs: K = " + std::to_string(K) + " needs " + std::to_string(K) +
                        " absent labels, video has only " + std::to_string(C - L));
  }
  std::vector<ActionSpecPair> out;
  for (std::size_t i = 0; i <= L; ++i) {
    out.push_back(make_pair(sample_spec(truth, i, K - i, rng), truth, true));
  }
  return out;
}

std::vector<ActionSpecPair> present_only_family(const MultiHot& truth, std::mt19937_64& rng) {
  check_truth(truth);
  const auto L = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 1));
  if (L == 0) throw ContractError("build_pairs: video has no labels (L = 0)");
  std::vector<ActionSpecPair> out;
  for (std::size_t i = 1; i <= L; ++i) {
    out.push_back(make_pair(sample_spec(truth, i, 0, rng), truth, false));
  }
  return out;
}

SpecBatch build_pairs(const MultiHot& truth, std::size_t K, std::mt19937_64& rng) {
  SpecBatch batch;
  batch.pairs = distractor_family(truth, K, rng);
  batch.label_count = batch.pairs.size() - 1;
  for (auto& p : present_only_family(truth, rng)) batch.pairs.push_back(std::move(p));
  return batch;
}

num::Tensor encode_spec(const MultiHot& spec) {
  std::vector<double> v(spec.size());
  for (std::size_t c = 0; c < spec.size(); ++c) {
    if (spec[c] > 1) throw ContractError("encode_spec: entries must be 0/1");
    v[c] = spec[c];
  }
  return num::Tensor::from({spec.size()}, std::move(v));
}

MultiHot decode_spec(const num::Tensor& v) {
  MultiHot out(v.size());
  for (std::size_t c = 0; c < v.size(); ++c) out[c] = v[c] >= 0.5 ? 1 : 0;
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 over the three words
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

}  // namespace proda::spec
