#include "conure/losses.hpp"

#include <algorithm>
#include <cmath>

#include "conure/errors.hpp"
#include "conure/ops.hpp"

namespace conure {

AutoregressiveTargets autoregressive_targets(const std::vector<int>& ids) {
  AutoregressiveTargets out;
  const std::size_t n = ids.size();
  out.targets.assign(n, 0);
  out.active.assign(n, 0);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (ids[t] != 0 && ids[t + 1] != 0) {
      out.targets[t] = ids[t + 1];
      out.active[t] = 1;
      ++out.active_count;
    }
  }
  return out;
}

std::vector<int> sample_softmax_candidates(int vocab, double ratio, Rng& rng) {
  if (vocab < 1) throw ContractError("empty vocabulary");
  if (ratio <= 0.0 || ratio > 1.0) throw ConfigError("sampled-softmax ratio must lie in (0, 1]");
  const auto want = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::floor(ratio * static_cast<double>(vocab) + 0.5)));
  // partial Fisher-Yates over 1..vocab gives a distinct uniform sample
  std::vector<int> pool(static_cast<std::size_t>(vocab));
  for (int i = 0; i < vocab; ++i) pool[static_cast<std::size_t>(i)] = i + 1;
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(want));
  for (std::int64_t i = 0; i < want; ++i) {
    const auto j = i + rng.below(vocab - i);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    picked.push_back(pool[static_cast<std::size_t>(i)]);
  }
  return picked;
}

Var autoregressive_loss(Tape& tape, Var states, const BoundHead& head,
                        const std::vector<int>& ids, const std::vector<int>& candidates) {
  const AutoregressiveTargets plan = autoregressive_targets(ids);
  if (plan.active_count == 0) throw ContractError("window has no trainable positions");
  if (candidates.empty()) throw ContractError("empty candidate set");

  // map candidate item -> slot for the per-row skip index
  std::vector<int> slot_by_item;
  int max_item = 0;
  for (int c : candidates) max_item = std::max(max_item, c);
  for (int t : plan.targets) max_item = std::max(max_item, t);
  slot_by_item.assign(static_cast<std::size_t>(max_item) + 1, -1);
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    slot_by_item[static_cast<std::size_t>(candidates[s])] = static_cast<int>(s);
  }

  Var cand = ops::gather_cols(
      tape, ops::bias_add(tape, ops::matmul(tape, states, head.weight), head.bias), candidates);
  // inactive rows still need an in-range id for the gather; 1 is arbitrary
  std::vector<int> safe_targets = plan.targets;
  for (int& t : safe_targets) {
    if (t == 0) t = 1;
  }
  Var target = ops::rows_dot_cols(tape, states, head.weight, head.bias, safe_targets);
  std::vector<int> slots(plan.targets.size(), -1);
  for (std::size_t i = 0; i < plan.targets.size(); ++i) {
    if (plan.active[i] != 0) slots[i] = slot_by_item[static_cast<std::size_t>(plan.targets[i])];
  }
  return ops::sampled_softmax_nll(tape, cand, target, slots, plan.active);
}

Var bpr_loss(Tape& tape, Var g_last, const BoundHead& head, int positive, int negative) {
  if (positive == negative) throw ContractError("bpr needs distinct positive and negative");
  Var pos = ops::rows_dot_cols(tape, g_last, head.weight, head.bias, {positive});
  Var neg = ops::rows_dot_cols(tape, g_last, head.weight, head.bias, {negative});
  return ops::scale(tape, ops::sum(tape, ops::log_sigmoid(tape, ops::sub(tape, pos, neg))), -1.0);
}

Var cross_entropy_loss(Tape& tape, Var g_last, const BoundHead& head, int label) {
  Var scores = predict_scores(tape, head, g_last);
  return ops::softmax_cross_entropy(tape, scores, {label}, 1);
}

int draw_bpr_negative(const PopularitySampler& sampler, int positive, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int candidate = sampler.sample(rng);
    if (candidate != positive) return candidate;
  }
  throw DataError("cannot draw a negative distinct from label " + std::to_string(positive));
}

}  // namespace conure
