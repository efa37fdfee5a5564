#pragma once

#include <iosfwd>

#include "conure/data.hpp"
#include "conure/metrics.hpp"
#include "conure/model.hpp"
#include "conure/optimizer.hpp"

namespace conure {

struct TrainConfig {
  Mode mode = Mode::conure;

  // backbone
  BackboneKind backbone = BackboneKind::tcn;
  int hidden = 32;
  int window = 20;
  int kernel_width = 3;
  std::vector<int> dilation_schedule = {1, 2, 4, 8, 1, 2, 4, 8};
  int attention_blocks = 2;
  bool embedding_prune = false;

  // optimization
  double lr_first = 0.001;
  double lr_later = 0.0001;
  int batch_first = 32;
  int batch_later = 512;
  double l2 = 0.02;
  double softmax_ratio = 0.20;
  double pop_exponent = 0.3;
  int train_steps = 400;
  int retrain_steps = 200;
  int eval_every = 50;
  double retrain_tolerance = 0.01;  // stop within this relative gap of the pre-prune best

  // evaluation + splits
  int mrr_n = 5;
  double split_train = 0.80;
  double split_val = 0.05;
  double split_test = 0.15;

  std::uint64_t seed = 1;

  void validate() const;
  double lr_for_position(int position) const { return position == 0 ? lr_first : lr_later; }
  int batch_for_position(int position) const {
    return position == 0 ? batch_first : batch_later;
  }
};

// Everything one training run carries between commands; the checkpoint
// serializes exactly this.
struct Run {
  TrainConfig config;
  Model model;
  TaskRegistry registry;
  OwnershipMap ownership;
  AdamState adam;
  PruneDecision pending_prune;
  Rng rng;
};

// Fresh run: seeded model draw, ownership registered in conure mode.
Run make_run(const TrainConfig& config, int item_vocab);

// Deterministic per-task split; the split seed folds in the task position so
// resuming from a checkpoint sees the same partition.
SplitData task_split(const TaskBundle& bundle, int position, const TrainConfig& config);

struct PhaseStats {
  int steps = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
  double best_val = 0.0;
  bool stopped_early = false;
};

// Registers the task if new (head + per-task backbone where the mode wants
// one) and optimizes to the step budget under the mode's trainable set,
// keeping the best-on-validation snapshot. History lines go to `history`
// (nullable) as step<TAB>split<TAB>metric<TAB>value.
PhaseStats run_task_training(Run& run, const TaskBundle& bundle, int task_id, TaskKind kind,
                             int label_count, double prune_ratio, std::ostream* history);

// conure only: magnitude prune of the free cells, pending until commit.
void run_prune(Run& run, int task_id);

// Optimizes the surviving cells until validation comes within
// retrain_tolerance of the pre-prune best or the budget ends.
PhaseStats run_retrain(Run& run, const TaskBundle& bundle, int task_id, std::ostream* history);

// Advances the remaining lifecycle events and hands the kept free cells to
// the task. Baseline modes (and Q=0) walk the same chain with an empty
// decision.
void run_commit(Run& run, int task_id);

// train -> prune -> retrain -> commit in one call.
void run_full_task(Run& run, const TaskBundle& bundle, int task_id, TaskKind kind,
                   int label_count, double prune_ratio, std::ostream* history);

// The task's current validation/test metric through its inference view.
MetricReport eval_split(const Run& run, const TaskBundle& bundle, int task_id,
                        const std::string& split_name);

}  // namespace conure
