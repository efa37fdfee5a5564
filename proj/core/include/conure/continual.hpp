#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "conure/tape.hpp"
#include "conure/tensor.hpp"

namespace conure {

enum class TaskKind { autoregressive, ranking, classification };
enum class TaskState { training, pruned, retraining, committed };
enum class LifecycleEvent { finish_train, finish_prune, finish_retrain };

TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind kind);
TaskState task_state_from_string(const std::string& s);
std::string to_string(TaskState state);
std::string to_string(LifecycleEvent event);

struct TaskDescriptor {
  int id = 0;
  TaskKind kind = TaskKind::autoregressive;
  int label_count = 0;       // |Y_i|, excluding the pad column
  double prune_ratio = 0.0;  // Q in [0, 1)
  TaskState state = TaskState::training;
  // Best validation metric seen during the current phase; the retraining
  // stop rule compares against the value captured at prune time.
  double best_val = 0.0;
  double preprune_val = 0.0;
};

// Ordered task descriptors. States only advance, and at most one task is not
// yet committed; inference masks follow registry creation order, which makes
// task-order experiments a matter of issuing commands in a different order.
class TaskRegistry {
 public:
  int add_task(int id, TaskKind kind, int label_count, double prune_ratio);

  bool has(int id) const;
  const TaskDescriptor& at(int id) const;
  TaskDescriptor& at(int id);
  int position(int id) const;  // creation index
  const std::vector<TaskDescriptor>& tasks() const { return tasks_; }

  // The single non-committed task, or nullptr.
  const TaskDescriptor* active() const;
  TaskDescriptor* active();

  void advance_lifecycle(int id, LifecycleEvent event);

 private:
  std::vector<TaskDescriptor> tasks_;
};

// Owner labels for every prunable tensor cell: kFree or a committed task id.
// One label per cell keeps the per-task masks disjoint by construction and
// the bookkeeping within the size of the tensors themselves.
class OwnershipMap {
 public:
  static constexpr std::int16_t kFree = 0;

  void register_tensor(const std::string& name, std::int64_t size);
  bool has(const std::string& name) const;
  const std::vector<std::string>& tensor_names() const { return names_; }
  const std::vector<std::int16_t>& owners(const std::string& name) const;

  std::int64_t count(const std::string& name, std::int16_t owner) const;
  std::vector<std::int64_t> free_indices(const std::string& name) const;

  // Moves Free cells to `owner`; a cell already owned by a committed task
  // never changes hands (monotonicity), so any such index is an error.
  void assign(const std::string& name, const std::vector<std::int64_t>& indices,
              std::int16_t owner);

  bool operator==(const OwnershipMap& other) const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::vector<std::int16_t>> owners_;
};

struct PruneDecision {
  struct TensorDecision {
    std::string name;
    double threshold = 0.0;  // |value| at the prune boundary
    std::int64_t candidates = 0;
    std::vector<std::int64_t> freed;  // ascending flat indices
  };
  std::vector<TensorDecision> tensors;
  bool empty() const { return tensors.empty(); }
};

// Ranks the candidate cells of one tensor by (|value|, flat index) and frees
// exactly round(Q * h) of the smallest, h = |candidates|. Pure; zeroing the
// freed values happens in apply_prune.
PruneDecision::TensorDecision compute_prune_mask(const std::string& name, const Tensor& values,
                                                 const std::vector<std::int64_t>& candidates,
                                                 double q);

struct NamedTensor {
  std::string name;
  Tensor* tensor = nullptr;
};

// Prune every registered tensor for the active task (candidates = Free
// cells) and zero the freed values in place.
PruneDecision apply_prune(const std::vector<NamedTensor>& prunable,
                          const OwnershipMap& ownership, double q);

// On commit, the active task takes ownership of every Free cell it kept;
// cells freed by its prune stay Free for the next task.
void commit_ownership(OwnershipMap& ownership, const PruneDecision& pending, int task_id);

// The two complementary 0/1 masks for the composed forward: `trainable`
// marks Free cells, `frozen` marks cells owned by committed tasks.
struct ComposedMasks {
  Tensor trainable;
  Tensor frozen;
};

ComposedMasks build_composed_masks(const OwnershipMap& ownership, const std::string& name,
                                   const std::vector<int>& shape);

// Effective weights for training: forward value equals `stored` everywhere,
// gradient flows only into trainable cells. The masks must outlive the tape.
// raw_out (optional) receives the borrowed leaf whose gradient the optimizer
// reads after backward.
Var compose_task_weights(Tape& tape, const Tensor& stored, const ComposedMasks& masks);
Var compose_task_weights(Tape& tape, const Tensor& stored, const ComposedMasks& masks,
                         Var* raw_out);

// Inference view for task `task_id`: keep cells owned by tasks at registry
// positions <= its own, zero everything else. An uncommitted (active) task
// additionally sees the Free cells it is training.
Tensor inference_weights(const Tensor& stored, const OwnershipMap& ownership,
                         const TaskRegistry& registry, const std::string& name, int task_id);

struct CapacityReport {
  struct Entry {
    std::string name;
    std::int64_t total = 0;
    std::int64_t free_count = 0;
  };
  std::vector<Entry> tensors;
  std::int64_t total = 0;
  std::int64_t free_count = 0;
  double free_fraction() const { return total == 0 ? 1.0 : static_cast<double>(free_count) / static_cast<double>(total); }
};

CapacityReport capacity_report(const OwnershipMap& ownership);

// Disjointness is structural; this re-checks the ownership ledger against
// the registry (only committed tasks own cells, every label is known).
void verify_ownership(const OwnershipMap& ownership, const TaskRegistry& registry);

}  // namespace conure
