#include "conure/continual.hpp"

#include <algorithm>
#include <cmath>

#include "conure/errors.hpp"
#include "conure/log.hpp"
#include "conure/ops.hpp"

namespace conure {

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "autoregressive") return TaskKind::autoregressive;
  if (s == "ranking") return TaskKind::ranking;
  if (s == "classification") return TaskKind::classification;
  throw ConfigError("unknown task kind '" + s + "'");
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::autoregressive: return "autoregressive";
    case TaskKind::ranking: return "ranking";
    case TaskKind::classification: return "classification";
  }
  return "?";
}

TaskState task_state_from_string(const std::string& s) {
  if (s == "training") return TaskState::training;
  if (s == "pruned") return TaskState::pruned;
  if (s == "retraining") return TaskState::retraining;
  if (s == "committed") return TaskState::committed;
  throw ConfigError("unknown task state '" + s + "'");
}

std::string to_string(TaskState state) {
  switch (state) {
    case TaskState::training: return "training";
    case TaskState::pruned: return "pruned";
    case TaskState::retraining: return "retraining";
    case TaskState::committed: return "committed";
  }
  return "?";
}

std::string to_string(LifecycleEvent event) {
  switch (event) {
    case LifecycleEvent::finish_train: return "finish_train";
    case LifecycleEvent::finish_prune: return "finish_prune";
    case LifecycleEvent::finish_retrain: return "finish_retrain";
  }
  return "?";
}

int TaskRegistry::add_task(int id, TaskKind kind, int label_count, double prune_ratio) {
  if (id < 1 || id > 32767) {
    throw RegistryError("task id " + std::to_string(id) + " outside [1, 32767]");
  }
  if (has(id)) throw RegistryError("task " + std::to_string(id) + " already registered");
  if (const TaskDescriptor* open = active()) {
    throw LifecycleError("cannot add task " + std::to_string(id) + ": task " +
                         std::to_string(open->id) + " is still " + to_string(open->state));
  }
  if (label_count < 1) throw RegistryError("task needs a positive label count");
  if (prune_ratio < 0.0 || prune_ratio >= 1.0) {
    throw ConfigError("prune ratio must lie in [0, 1), got " + std::to_string(prune_ratio));
  }
  TaskDescriptor d;
  d.id = id;
  d.kind = kind;
  d.label_count = label_count;
  d.prune_ratio = prune_ratio;
  tasks_.push_back(d);
  return static_cast<int>(tasks_.size()) - 1;
}

bool TaskRegistry::has(int id) const {
  for (const TaskDescriptor& d : tasks_) {
    if (d.id == id) return true;
  }
  return false;
}

const TaskDescriptor& TaskRegistry::at(int id) const {
  for (const TaskDescriptor& d : tasks_) {
    if (d.id == id) return d;
  }
  throw RegistryError("unknown task id " + std::to_string(id));
}

TaskDescriptor& TaskRegistry::at(int id) {
  return const_cast<TaskDescriptor&>(static_cast<const TaskRegistry*>(this)->at(id));
}

int TaskRegistry::position(int id) const {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (tasks_[i].id == id) return static_cast<int>(i);
  }
  throw RegistryError("unknown task id " + std::to_string(id));
}

const TaskDescriptor* TaskRegistry::active() const {
  for (const TaskDescriptor& d : tasks_) {
    if (d.state != TaskState::committed) return &d;
  }
  return nullptr;
}

TaskDescriptor* TaskRegistry::active() {
  return const_cast<TaskDescriptor*>(static_cast<const TaskRegistry*>(this)->active());
}

void TaskRegistry::advance_lifecycle(int id, LifecycleEvent event) {
  TaskDescriptor& d = at(id);
  TaskState expected = TaskState::training;
  TaskState next = TaskState::pruned;
  switch (event) {
    case LifecycleEvent::finish_train:
      expected = TaskState::training;
      next = TaskState::pruned;
      break;
    case LifecycleEvent::finish_prune:
      expected = TaskState::pruned;
      next = TaskState::retraining;
      break;
    case LifecycleEvent::finish_retrain:
      expected = TaskState::retraining;
      next = TaskState::committed;
      break;
  }
  if (d.state != expected) {
    throw LifecycleError("task " + std::to_string(id) + ": event " + to_string(event) +
                         " expects state " + to_string(expected) + ", actual " +
                         to_string(d.state));
  }
  d.state = next;
}

void OwnershipMap::register_tensor(const std::string& name, std::int64_t size) {
  if (has(name)) throw RegistryError("tensor '" + name + "' already in the ownership map");
  if (size < 1) throw RegistryError("tensor '" + name + "' has no cells");
  names_.push_back(name);
  owners_[name].assign(static_cast<std::size_t>(size), kFree);
}

bool OwnershipMap::has(const std::string& name) const { return owners_.count(name) != 0; }

const std::vector<std::int16_t>& OwnershipMap::owners(const std::string& name) const {
  auto it = owners_.find(name);
  if (it == owners_.end()) throw RegistryError("tensor '" + name + "' not in the ownership map");
  return it->second;
}

std::int64_t OwnershipMap::count(const std::string& name, std::int16_t owner) const {
  const std::vector<std::int16_t>& o = owners(name);
  return std::count(o.begin(), o.end(), owner);
}

std::vector<std::int64_t> OwnershipMap::free_indices(const std::string& name) const {
  const std::vector<std::int16_t>& o = owners(name);
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (o[i] == kFree) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

void OwnershipMap::assign(const std::string& name, const std::vector<std::int64_t>& indices,
                          std::int16_t owner) {
  auto it = owners_.find(name);
  if (it == owners_.end()) throw RegistryError("tensor '" + name + "' not in the ownership map");
  std::vector<std::int16_t>& o = it->second;
  if (owner == kFree) throw ContractError("ownership cannot be assigned back to Free");
  for (std::int64_t idx : indices) {
    if (idx < 0 || idx >= static_cast<std::int64_t>(o.size())) {
      throw ContractError("ownership index " + std::to_string(idx) + " outside tensor '" + name +
                          "'");
    }
    if (o[static_cast<std::size_t>(idx)] != kFree) {
      throw LifecycleError("cell " + std::to_string(idx) + " of '" + name +
                           "' already owned by task " +
                           std::to_string(o[static_cast<std::size_t>(idx)]));
    }
    o[static_cast<std::size_t>(idx)] = owner;
  }
}

bool OwnershipMap::operator==(const OwnershipMap& other) const {
  return names_ == other.names_ && owners_ == other.owners_;
}

PruneDecision::TensorDecision compute_prune_mask(const std::string& name, const Tensor& values,
                                                 const std::vector<std::int64_t>& candidates,
                                                 double q) {
  if (q < 0.0 || q >= 1.0) {
    throw ConfigError("prune ratio must lie in [0, 1), got " + std::to_string(q));
  }
  PruneDecision::TensorDecision d;
  d.name = name;
  d.candidates = static_cast<std::int64_t>(candidates.size());
  if (candidates.empty()) {
    log_warn("prune: tensor '" + name + "' has no candidate cells, skipping");
    return d;
  }
  for (std::int64_t idx : candidates) {
    if (idx < 0 || idx >= values.numel()) {
      throw ContractError("prune candidate " + std::to_string(idx) + " outside tensor '" + name +
                          "'");
    }
  }
  // half-up rounding of Q * h
  const auto count = static_cast<std::int64_t>(
      std::floor(q * static_cast<double>(candidates.size()) + 0.5));
  if (count == 0) return d;
  std::vector<std::int64_t> order = candidates;
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    const double ma = std::abs(values.data[static_cast<std::size_t>(a)]);
    const double mb = std::abs(values.data[static_cast<std::size_t>(b)]);
    if (ma != mb) return ma < mb;
    return a < b;
  });
  d.freed.assign(order.begin(), order.begin() + count);
  std::sort(d.freed.begin(), d.freed.end());
  d.threshold = std::abs(values.data[static_cast<std::size_t>(order[count - 1])]);
  return d;
}

PruneDecision apply_prune(const std::vector<NamedTensor>& prunable,
                          const OwnershipMap& ownership, double q) {
  PruneDecision decision;
  for (const NamedTensor& nt : prunable) {
    const std::vector<std::int64_t> candidates = ownership.free_indices(nt.name);
    PruneDecision::TensorDecision d = compute_prune_mask(nt.name, *nt.tensor, candidates, q);
    for (std::int64_t idx : d.freed) nt.tensor->data[static_cast<std::size_t>(idx)] = 0.0;
    decision.tensors.push_back(std::move(d));
  }
  return decision;
}

void commit_ownership(OwnershipMap& ownership, const PruneDecision& pending, int task_id) {
  for (const std::string& name : ownership.tensor_names()) {
    std::vector<std::int64_t> survivors = ownership.free_indices(name);
    const PruneDecision::TensorDecision* d = nullptr;
    for (const PruneDecision::TensorDecision& td : pending.tensors) {
      if (td.name == name) d = &td;
    }
    if (d != nullptr && !d->freed.empty()) {
      std::vector<std::int64_t> kept;
      kept.reserve(survivors.size());
      std::set_difference(survivors.begin(), survivors.end(), d->freed.begin(), d->freed.end(),
                          std::back_inserter(kept));
      survivors.swap(kept);
    }
    ownership.assign(name, survivors, static_cast<std::int16_t>(task_id));
  }
}

ComposedMasks build_composed_masks(const OwnershipMap& ownership, const std::string& name,
                                   const std::vector<int>& shape) {
  const std::vector<std::int16_t>& o = ownership.owners(name);
  if (shape_numel(shape) != static_cast<std::int64_t>(o.size())) {
    throw DimensionError("ownership ledger for '" + name + "' has " +
                         std::to_string(o.size()) + " cells, tensor shape " + shape_str(shape));
  }
  ComposedMasks m;
  m.trainable = Tensor::zeros(shape);
  m.frozen = Tensor::zeros(shape);
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (o[i] == OwnershipMap::kFree) {
      m.trainable.data[i] = 1.0;
    } else {
      m.frozen.data[i] = 1.0;
    }
  }
  return m;
}

Var compose_task_weights(Tape& tape, const Tensor& stored, const ComposedMasks& masks) {
  return compose_task_weights(tape, stored, masks, nullptr);
}

Var compose_task_weights(Tape& tape, const Tensor& stored, const ComposedMasks& masks,
                         Var* raw_out) {
  Var raw = tape.borrow(stored, true);
  if (raw_out != nullptr) *raw_out = raw;
  Var live = ops::mask_multiply(tape, raw, masks.trainable);
  Var held = ops::stop_gradient(tape, ops::mask_multiply(tape, raw, masks.frozen));
  return ops::add(tape, live, held);
}

Tensor inference_weights(const Tensor& stored, const OwnershipMap& ownership,
                         const TaskRegistry& registry, const std::string& name, int task_id) {
  const std::vector<std::int16_t>& o = ownership.owners(name);
  if (stored.numel() != static_cast<std::int64_t>(o.size())) {
    throw DimensionError("ownership ledger for '" + name + "' does not match tensor shape " +
                         shape_str(stored.shape));
  }
  const TaskDescriptor& task = registry.at(task_id);
  const int horizon = registry.position(task_id);
  const bool include_free = task.state != TaskState::committed;
  Tensor out = Tensor::zeros(stored.shape);
  for (std::size_t i = 0; i < o.size(); ++i) {
    bool keep = false;
    if (o[i] == OwnershipMap::kFree) {
      keep = include_free;
    } else {
      keep = registry.position(o[i]) <= horizon;
    }
    if (keep) out.data[i] = stored.data[i];
  }
  return out;
}

CapacityReport capacity_report(const OwnershipMap& ownership) {
  CapacityReport r;
  for (const std::string& name : ownership.tensor_names()) {
    const std::vector<std::int16_t>& o = ownership.owners(name);
    CapacityReport::Entry e;
    e.name = name;
    e.total = static_cast<std::int64_t>(o.size());
    e.free_count = ownership.count(name, OwnershipMap::kFree);
    r.total += e.total;
    r.free_count += e.free_count;
    r.tensors.push_back(std::move(e));
  }
  return r;
}

void verify_ownership(const OwnershipMap& ownership, const TaskRegistry& registry) {
  for (const std::string& name : ownership.tensor_names()) {
    std::int64_t owned_total = 0;
    for (std::int16_t label : ownership.owners(name)) {
      if (label == OwnershipMap::kFree) continue;
      ++owned_total;
      if (!registry.has(label)) {
        throw AuditError("tensor '" + name + "' has cells owned by unknown task " +
                         std::to_string(label));
      }
      if (registry.at(label).state != TaskState::committed) {
        throw AuditError("tensor '" + name + "' has cells owned by uncommitted task " +
                         std::to_string(label));
      }
    }
    const std::int64_t total = static_cast<std::int64_t>(ownership.owners(name).size());
    if (owned_total + ownership.count(name, OwnershipMap::kFree) != total) {
      throw AuditError("ownership ledger for '" + name + "' does not partition the tensor");
    }
  }
}

}  // namespace conure
