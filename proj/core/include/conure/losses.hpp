#pragma once

#include <vector>

#include "conure/backbone.hpp"
#include "conure/data.hpp"
#include "conure/rng.hpp"
#include "conure/tape.hpp"

namespace conure {

// Next-item targets for one click window: position t predicts ids[t+1].
// Active only where both the conditioning item and the target are real
// (pads train nothing).
struct AutoregressiveTargets {
  std::vector<int> targets;        // size n; 0 where inactive
  std::vector<std::uint8_t> active;
  int active_count = 0;
};

AutoregressiveTargets autoregressive_targets(const std::vector<int>& ids);

// Distinct uniform sample of round(ratio * vocab) item ids (at least one),
// shared by every sequence in a batch.
std::vector<int> sample_softmax_candidates(int vocab, double ratio, Rng& rng);

// Mean sampled-softmax NLL over the active positions of one sequence.
// states [n x hidden]; candidates from sample_softmax_candidates. Throws
// ContractError when no position is active (callers skip those windows).
Var autoregressive_loss(Tape& tape, Var states, const BoundHead& head,
                        const std::vector<int>& ids, const std::vector<int>& candidates);

// -log sigmoid(score_pos - score_neg) for one instance. positive == negative
// is a contract violation; the sampler retries before calling.
Var bpr_loss(Tape& tape, Var g_last, const BoundHead& head, int positive, int negative);

// Full-softmax NLL over the head's real labels (pad column inert).
Var cross_entropy_loss(Tape& tape, Var g_last, const BoundHead& head, int label);

// Negative distinct from the positive, drawn by popularity; bounded retries,
// then DataError (a 1-label space cannot rank).
int draw_bpr_negative(const PopularitySampler& sampler, int positive, Rng& rng);

}  // namespace conure
