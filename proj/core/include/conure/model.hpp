#pragma once

#include <map>
#include <string>

#include "conure/backbone.hpp"
#include "conure/continual.hpp"
#include "conure/rng.hpp"

namespace conure {

// Training regime. conure is the masked lifelong learner; the rest are the
// comparison baselines.
enum class Mode {
  conure,    // masked composition over one shared backbone
  sinmo,     // fresh randomly initialized backbone per task
  sinmoall,  // one shared backbone, everything trainable, no masks
  finesmax,  // backbone frozen after the first task; heads only
  fineall,   // per-task backbone cloned from the previous task, all trainable
  mtl,       // joint optimization: alternate first-task and current batches
};

Mode mode_from_string(const std::string& s);
std::string to_string(Mode mode);

// Parameter store for one run. The shared backbone is the first task's (and
// the only one outside sinmo/fineall); later sinmo/fineall tasks get clones
// keyed by id and enumerated with a "task<id>." prefix.
struct Model {
  Mode mode = Mode::conure;
  BackboneShape shape;
  bool embedding_prune = false;
  BackboneParams shared;
  std::map<int, BackboneParams> task_backbones;
  std::map<int, TaskHead> heads;
};

Model init_model(const BackboneShape& shape, Mode mode, Rng& rng, bool embedding_prune = false);

// Called when a task enters the registry: creates the head, and for
// sinmo/fineall tasks after the first the per-task backbone (fresh draw or
// copy of the previous task's weights).
void add_task_params(Model& model, const TaskRegistry& registry, int task_id, int label_count,
                     Rng& rng);

// The backbone task j trains and evaluates with.
BackboneParams& backbone_for_task(Model& model, int task_id);
const BackboneParams& backbone_for_task(const Model& model, int task_id);

// Canonical enumeration: shared backbone, per-task backbones by ascending id,
// heads by ascending id. Names match bind_backbone/bind_head exactly.
void for_each_tensor(Model& model, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_tensor(const Model& model,
                     const std::function<void(const std::string&, const Tensor&)>& fn);

// Looks a tensor up by canonical name; throws RegistryError when absent.
Tensor& tensor_by_name(Model& model, const std::string& name);

// Ownership applies to the shared backbone only (conure mode). Registers
// every prunable tensor on first call.
std::vector<std::string> prunable_tensor_names(const Model& model);
void register_prunable(const Model& model, OwnershipMap& ownership);

}  // namespace conure
