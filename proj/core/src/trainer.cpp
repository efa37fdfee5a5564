#include "conure/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <set>

#include "conure/errors.hpp"
#include "conure/log.hpp"
#include "conure/losses.hpp"
#include "conure/ops.hpp"

namespace conure {

void TrainConfig::validate() const {
  if (lr_first <= 0.0 || lr_later <= 0.0) throw ConfigError("learning rates must be positive");
  if (batch_first < 1 || batch_later < 1) throw ConfigError("batch sizes must be positive");
  if (l2 < 0.0) throw ConfigError("l2 coefficient must be >= 0");
  if (softmax_ratio <= 0.0 || softmax_ratio > 1.0) {
    throw ConfigError("softmax ratio must lie in (0, 1]");
  }
  if (pop_exponent < 0.0) throw ConfigError("popularity exponent must be >= 0");
  if (train_steps < 1 || retrain_steps < 0 || eval_every < 1) {
    throw ConfigError("step budgets must be positive");
  }
  if (retrain_tolerance < 0.0 || retrain_tolerance >= 1.0) {
    throw ConfigError("retrain tolerance must lie in [0, 1)");
  }
  if (mrr_n < 1) throw ConfigError("mrr cutoff must be >= 1");
  if (std::abs(split_train + split_val + split_test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  if (window < 1 || hidden < 1 || kernel_width < 1) {
    throw ConfigError("window, hidden, and kernel width must be positive");
  }
}

Run make_run(const TrainConfig& config, int item_vocab) {
  config.validate();
  Run run;
  run.config = config;
  run.rng = Rng(config.seed);
  BackboneShape shape;
  shape.kind = config.backbone;
  shape.vocab = item_vocab;
  shape.hidden = config.hidden;
  shape.window = config.window;
  shape.kernel_width = config.kernel_width;
  shape.dilation_schedule = config.dilation_schedule;
  shape.attention_blocks = config.attention_blocks;
  run.model = init_model(shape, config.mode, run.rng, config.embedding_prune);
  if (config.mode == Mode::conure) register_prunable(run.model, run.ownership);
  return run;
}

SplitData task_split(const TaskBundle& bundle, int position, const TrainConfig& config) {
  SplitSpec spec;
  spec.train = config.split_train;
  spec.val = config.split_val;
  spec.test = config.split_test;
  // fold the position in so each task partitions independently but stably
  spec.seed = config.seed + static_cast<std::uint64_t>(position) * 1000003ull;
  return split_dataset(bundle.task(position), spec);
}

namespace {

const std::vector<int>& window_for_user(const TaskBundle& bundle, int user) {
  auto it = bundle.windows.find(user);
  if (it == bundle.windows.end()) {
    throw DataError("user " + std::to_string(user) + " has no click window");
  }
  return it->second;
}

// Tape-independent description of what one optimization phase may touch.
struct PhasePlan {
  BackboneParams* backbone = nullptr;
  std::string prefix;
  std::map<std::string, ComposedMasks> masks;  // conure prunable tensors
  std::set<std::string> trainable_names;       // plainly trainable leaves
  std::vector<TrainableTensor> trainables;     // optimizer view (masks included)
};

PhasePlan build_phase_plan(Run& run, int task_id, bool retrain) {
  Model& model = run.model;
  const Mode mode = model.mode;
  const int position = run.registry.position(task_id);

  PhasePlan plan;
  plan.backbone = &backbone_for_task(model, task_id);
  plan.prefix = model.task_backbones.count(task_id) != 0
                    ? "task" + std::to_string(task_id) + "."
                    : "";

  const bool backbone_all_trainable =
      mode == Mode::sinmo || mode == Mode::fineall || mode == Mode::sinmoall ||
      mode == Mode::mtl || (mode == Mode::finesmax && position == 0);

  if (mode == Mode::conure) {
    for (const std::string& name : prunable_tensor_names(model)) {
      Tensor& stored = tensor_by_name(model, name);
      ComposedMasks masks = build_composed_masks(run.ownership, name, stored.shape);
      if (retrain) {
        // freed cells leave the trainable set and ride the frozen branch
        // (their stored value is zero, so the forward is unchanged)
        for (const PruneDecision::TensorDecision& td : run.pending_prune.tensors) {
          if (td.name != name) continue;
          for (std::int64_t idx : td.freed) {
            masks.trainable.data[static_cast<std::size_t>(idx)] = 0.0;
            masks.frozen.data[static_cast<std::size_t>(idx)] = 1.0;
          }
        }
      }
      plan.masks.emplace(name, std::move(masks));
    }
    for (auto& [name, m] : plan.masks) {
      plan.trainables.push_back({name, &tensor_by_name(model, name), &m.trainable});
    }
    if (position == 0) {
      // the first task also shapes the non-prunable tensors; later tasks
      // inherit them frozen
      for_each_tensor(*plan.backbone, plan.prefix, [&](const std::string& name, Tensor& t) {
        if (plan.masks.count(name) != 0) return;
        plan.trainable_names.insert(name);
        plan.trainables.push_back({name, &t, nullptr});
      });
    }
  } else if (backbone_all_trainable) {
    for_each_tensor(*plan.backbone, plan.prefix, [&](const std::string& name, Tensor& t) {
      plan.trainable_names.insert(name);
      plan.trainables.push_back({name, &t, nullptr});
    });
  }
  return plan;
}

void add_head_to_plan(PhasePlan& plan, TaskHead& head) {
  for_each_tensor(head, [&](const std::string& name, Tensor& t) {
    plan.trainable_names.insert(name);
    plan.trainables.push_back({name, &t, nullptr});
  });
}

using Collector = std::vector<std::pair<std::string, Var>>;

Binder phase_binder(const PhasePlan& plan, Collector& collect) {
  return [&plan, &collect](Tape& tape, const std::string& name, const Tensor& value) -> Var {
    auto mit = plan.masks.find(name);
    if (mit != plan.masks.end()) {
      Var raw;
      Var composed = compose_task_weights(tape, value, mit->second, &raw);
      collect.emplace_back(name, raw);
      return composed;
    }
    if (plan.trainable_names.count(name) != 0) {
      Var v = tape.borrow(value, true);
      collect.emplace_back(name, v);
      return v;
    }
    return tape.borrow(value, false);
  };
}

// One task phase (training or retraining): owns the plan, the split, the
// negative sampler, and the best-on-validation snapshot.
class Phase {
 public:
  Phase(Run& run, const TaskBundle& bundle, int task_id, bool retrain, std::ostream* history)
      : run_(run),
        bundle_(bundle),
        task_id_(task_id),
        history_(history),
        position_(run.registry.position(task_id)),
        task_(run.registry.at(task_id)),
        plan_(build_phase_plan(run, task_id, retrain)),
        split_(task_split(bundle, position_, run.config)) {
    if (bundle.window != run.config.window) {
      throw ConfigError("config window " + std::to_string(run.config.window) +
                        " does not match the data window " + std::to_string(bundle.window));
    }
    const TaskData& part = bundle.task(position_);
    if (part.kind != task_.kind || part.label_count != task_.label_count) {
      throw ConfigError("task " + std::to_string(task_id) + " is registered as " +
                        to_string(task_.kind) + " over " + std::to_string(task_.label_count) +
                        " labels, but position " + std::to_string(position_) + " holds " +
                        to_string(part.kind) + " data over " +
                        std::to_string(part.label_count) + " labels");
    }
    add_head_to_plan(plan_, run_.model.heads.at(task_id));
    if (task_.kind == TaskKind::ranking) {
      sampler_ = std::make_unique<PopularitySampler>(
          label_frequencies(split_.train, task_.label_count), run.config.pop_exponent);
    }
    if (run_.model.mode == Mode::mtl && position_ > 0) {
      const int t1_id = run_.registry.tasks().front().id;
      auto hit = run_.model.heads.find(t1_id);
      if (hit == run_.model.heads.end()) {
        throw RegistryError("mtl needs the first task trained before task " +
                            std::to_string(task_id));
      }
      t1_head_ = &hit->second;
      add_head_to_plan(plan_, *t1_head_);
      t1_split_ = std::make_unique<SplitData>(task_split(bundle, 0, run.config));
    }
  }

  PhaseStats optimize(int steps, double stop_target) {
    PhaseStats stats;
    const int eval_every = run_.config.eval_every;
    for (int step = 1; step <= steps; ++step) {
      const bool t1_batch = t1_head_ != nullptr && step % 2 == 1;
      const double loss = batch_step(t1_batch);
      if (step == 1) stats.first_loss = loss;
      stats.last_loss = loss;
      stats.steps = step;
      if (step % eval_every == 0 || step == steps) {
        emit(step, "train", "loss", loss);
        const MetricReport report = validate();
        emit(step, "val", report.metric, report.value);
        if (!evaluated_ || report.value > best_val_) {
          best_val_ = report.value;
          evaluated_ = true;
          snapshot();
        }
        if (stop_target > 0.0 && report.value >= stop_target) {
          stats.stopped_early = true;
          break;
        }
      }
    }
    restore();
    stats.best_val = evaluated_ ? best_val_ : 0.0;
    return stats;
  }

 private:
  void emit(int step, const char* split, const std::string& metric, double value) {
    if (history_ != nullptr) {
      (*history_) << step << '\t' << split << '\t' << metric << '\t' << value << '\n';
    }
  }

  MetricReport validate() {
    return evaluate_task(run_.model, run_.registry, run_.ownership, bundle_, split_.val, "val",
                         task_id_, run_.config.mrr_n);
  }

  // forward/backward over one batch plus the L2 tape, then a masked Adam
  // step; returns the total objective value
  double batch_step(bool t1_batch) {
    const TrainConfig& config = run_.config;
    const TaskData& train = t1_batch ? t1_split_->train : split_.train;
    if (train.size() == 0) throw DataError("empty training split");
    TaskHead& head = t1_batch ? *t1_head_ : run_.model.heads.at(task_id_);
    const int batch = config.batch_for_position(position_);

    std::vector<int> candidates;
    if (train.kind == TaskKind::autoregressive) {
      candidates = sample_softmax_candidates(train.label_count, config.softmax_ratio, run_.rng);
    }

    std::map<std::string, Tensor> grads;
    auto accumulate = [&](const Tape& tape, const Collector& collect) {
      for (const auto& [name, var] : collect) {
        const Tensor* g = tape.gradient(var);
        if (g == nullptr) continue;
        auto it = grads.find(name);
        if (it == grads.end()) it = grads.emplace(name, Tensor::zeros(g->shape)).first;
        for (std::size_t i = 0; i < g->data.size(); ++i) it->second.data[i] += g->data[i];
      }
    };

    double loss_sum = 0.0;
    int contributing = 0;
    for (int k = 0; k < batch; ++k) {
      const auto idx = static_cast<std::size_t>(
          run_.rng.below(static_cast<std::int64_t>(train.size())));
      Tape tape;
      Collector collect;
      const Binder binder = phase_binder(plan_, collect);
      const BoundBackbone backbone = bind_backbone(tape, *plan_.backbone, binder, plan_.prefix);
      const BoundHead bound_head = bind_head(tape, head, binder);

      Var loss;
      if (train.kind == TaskKind::autoregressive) {
        const SequenceInstance& s = train.sequences[idx];
        if (autoregressive_targets(s.ids).active_count == 0) {
          log_warn("window for user " + std::to_string(s.user) +
                   " has no trainable positions, skipped");
          continue;
        }
        const Encoding enc = encode_sequence(tape, backbone, s.ids);
        loss = autoregressive_loss(tape, enc.states, bound_head, s.ids, candidates);
      } else {
        const LabelInstance& inst = train.instances[idx];
        const Encoding enc =
            encode_sequence(tape, backbone, window_for_user(bundle_, inst.user));
        if (train.kind == TaskKind::ranking) {
          const int negative = draw_bpr_negative(*sampler_, inst.label, run_.rng);
          loss = bpr_loss(tape, enc.last, bound_head, inst.label, negative);
        } else {
          loss = cross_entropy_loss(tape, enc.last, bound_head, inst.label);
        }
      }
      tape.backward(loss);
      loss_sum += tape.value(loss).data[0];
      ++contributing;
      accumulate(tape, collect);
    }
    if (contributing == 0) {
      log_warn("entire batch skipped; no optimizer step taken");
      return 0.0;
    }
    for (auto& [name, g] : grads) {
      for (double& d : g.data) d /= static_cast<double>(contributing);
    }

    double penalty_value = 0.0;
    if (config.l2 > 0.0) {
      Tape tape;
      Collector collect;
      Var total;
      for (const TrainableTensor& p : plan_.trainables) {
        Var v = tape.borrow(*p.param, true);
        collect.emplace_back(p.name, v);
        Var masked = p.mask != nullptr ? ops::mask_multiply(tape, v, *p.mask) : v;
        Var sq = ops::sum_squares(tape, masked);
        total = total.valid() ? ops::add(tape, total, sq) : sq;
      }
      const Var penalty = ops::scale(tape, total, config.l2);
      tape.backward(penalty);
      penalty_value = tape.value(penalty).data[0];
      accumulate(tape, collect);
    }

    adam_step(run_.adam, plan_.trainables, grads, config.lr_for_position(position_));
    return loss_sum / static_cast<double>(contributing) + penalty_value;
  }

  void snapshot() {
    snapshot_.clear();
    for (const TrainableTensor& p : plan_.trainables) snapshot_.emplace(p.name, *p.param);
  }

  void restore() {
    if (snapshot_.empty()) return;
    for (const TrainableTensor& p : plan_.trainables) {
      auto it = snapshot_.find(p.name);
      if (it != snapshot_.end()) *p.param = it->second;
    }
  }

  Run& run_;
  const TaskBundle& bundle_;
  int task_id_;
  std::ostream* history_;
  int position_;
  const TaskDescriptor& task_;
  PhasePlan plan_;
  SplitData split_;
  std::unique_ptr<PopularitySampler> sampler_;
  std::unique_ptr<SplitData> t1_split_;
  TaskHead* t1_head_ = nullptr;
  std::map<std::string, Tensor> snapshot_;
  double best_val_ = -std::numeric_limits<double>::infinity();
  bool evaluated_ = false;
};

}  // namespace

PhaseStats run_task_training(Run& run, const TaskBundle& bundle, int task_id, TaskKind kind,
                             int label_count, double prune_ratio, std::ostream* history) {
  run.config.validate();
  if (run.model.mode != Mode::conure && prune_ratio != 0.0) {
    throw ConfigError("prune ratios apply to conure mode only");
  }
  if (!run.registry.has(task_id)) {
    run.registry.add_task(task_id, kind, label_count, prune_ratio);
    add_task_params(run.model, run.registry, task_id, label_count, run.rng);
  } else {
    const TaskDescriptor& task = run.registry.at(task_id);
    if (task.state != TaskState::training) {
      throw LifecycleError("task " + std::to_string(task_id) + " is " + to_string(task.state) +
                           ", not training");
    }
    if (task.kind != kind || task.label_count != label_count ||
        task.prune_ratio != prune_ratio) {
      throw ConfigError("task " + std::to_string(task_id) + " redefined with different data");
    }
  }
  run.adam.reset();
  Phase phase(run, bundle, task_id, false, history);
  const PhaseStats stats = phase.optimize(run.config.train_steps, 0.0);
  run.registry.at(task_id).best_val = stats.best_val;
  return stats;
}

void run_prune(Run& run, int task_id) {
  if (run.model.mode != Mode::conure) {
    throw ConfigError("prune is a conure-mode operation (mode is " + to_string(run.model.mode) +
                      ")");
  }
  TaskDescriptor& task = run.registry.at(task_id);
  run.registry.advance_lifecycle(task_id, LifecycleEvent::finish_train);
  task.preprune_val = task.best_val;
  std::vector<NamedTensor> prunable;
  for (const std::string& name : prunable_tensor_names(run.model)) {
    prunable.push_back({name, &tensor_by_name(run.model, name)});
  }
  run.pending_prune = apply_prune(prunable, run.ownership, task.prune_ratio);
}

PhaseStats run_retrain(Run& run, const TaskBundle& bundle, int task_id, std::ostream* history) {
  if (run.model.mode != Mode::conure) {
    throw ConfigError("retrain is a conure-mode operation");
  }
  TaskDescriptor& task = run.registry.at(task_id);
  run.registry.advance_lifecycle(task_id, LifecycleEvent::finish_prune);
  run.adam.reset();
  Phase phase(run, bundle, task_id, true, history);
  const double target =
      task.preprune_val > 0.0 ? task.preprune_val * (1.0 - run.config.retrain_tolerance) : 0.0;
  const PhaseStats stats = phase.optimize(run.config.retrain_steps, target);
  if (stats.steps > 0) task.best_val = stats.best_val;
  return stats;
}

void run_commit(Run& run, int task_id) {
  TaskDescriptor& task = run.registry.at(task_id);
  if (run.model.mode == Mode::conure && task.state == TaskState::training &&
      task.prune_ratio > 0.0) {
    throw LifecycleError("task " + std::to_string(task_id) +
                         " declared a prune ratio; prune and retrain before committing");
  }
  while (task.state != TaskState::committed) {
    switch (task.state) {
      case TaskState::training:
        run.registry.advance_lifecycle(task_id, LifecycleEvent::finish_train);
        break;
      case TaskState::pruned:
        run.registry.advance_lifecycle(task_id, LifecycleEvent::finish_prune);
        break;
      case TaskState::retraining:
        run.registry.advance_lifecycle(task_id, LifecycleEvent::finish_retrain);
        break;
      case TaskState::committed:
        break;
    }
  }
  commit_ownership(run.ownership, run.pending_prune, task_id);
  run.pending_prune = PruneDecision{};
  verify_ownership(run.ownership, run.registry);
}

void run_full_task(Run& run, const TaskBundle& bundle, int task_id, TaskKind kind,
                   int label_count, double prune_ratio, std::ostream* history) {
  run_task_training(run, bundle, task_id, kind, label_count, prune_ratio, history);
  if (run.model.mode == Mode::conure && prune_ratio > 0.0) {
    run_prune(run, task_id);
    run_retrain(run, bundle, task_id, history);
  }
  run_commit(run, task_id);
}

MetricReport eval_split(const Run& run, const TaskBundle& bundle, int task_id,
                        const std::string& split_name) {
  const int position = run.registry.position(task_id);
  const SplitData split = task_split(bundle, position, run.config);
  const TaskData* part = nullptr;
  if (split_name == "train") part = &split.train;
  else if (split_name == "val") part = &split.val;
  else if (split_name == "test") part = &split.test;
  else throw ConfigError("unknown split '" + split_name + "'");
  return evaluate_task(run.model, run.registry, run.ownership, bundle, *part, split_name,
                       task_id, run.config.mrr_n);
}

}  // namespace conure
