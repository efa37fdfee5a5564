#include "conure/model.hpp"

#include "conure/errors.hpp"

namespace conure {

Mode mode_from_string(const std::string& s) {
  if (s == "conure") return Mode::conure;
  if (s == "sinmo") return Mode::sinmo;
  if (s == "sinmoall") return Mode::sinmoall;
  if (s == "finesmax") return Mode::finesmax;
  if (s == "fineall") return Mode::fineall;
  if (s == "mtl") return Mode::mtl;
  throw ConfigError("unknown mode '" + s + "'");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::conure: return "conure";
    case Mode::sinmo: return "sinmo";
    case Mode::sinmoall: return "sinmoall";
    case Mode::finesmax: return "finesmax";
    case Mode::fineall: return "fineall";
    case Mode::mtl: return "mtl";
  }
  throw ConfigError("unknown mode value");
}

Model init_model(const BackboneShape& shape, Mode mode, Rng& rng, bool embedding_prune) {
  Model m;
  m.mode = mode;
  m.shape = shape;
  m.embedding_prune = embedding_prune;
  m.shared = init_backbone(shape, rng);
  return m;
}

void add_task_params(Model& model, const TaskRegistry& registry, int task_id, int label_count,
                     Rng& rng) {
  if (model.heads.count(task_id) != 0) {
    throw RegistryError("task " + std::to_string(task_id) + " already has parameters");
  }
  const bool per_task_backbone =
      model.mode == Mode::sinmo || model.mode == Mode::fineall;
  if (per_task_backbone && registry.position(task_id) > 0) {
    if (model.mode == Mode::sinmo) {
      model.task_backbones.emplace(task_id, init_backbone(model.shape, rng));
    } else {
      // fineall continues from whatever the previous task ended with
      const std::vector<TaskDescriptor>& order = registry.tasks();
      const int prev = order[static_cast<std::size_t>(registry.position(task_id)) - 1].id;
      model.task_backbones.emplace(task_id, backbone_for_task(model, prev));
    }
  }
  model.heads.emplace(task_id, init_head(task_id, label_count, model.shape.hidden, rng));
}

BackboneParams& backbone_for_task(Model& model, int task_id) {
  auto it = model.task_backbones.find(task_id);
  return it == model.task_backbones.end() ? model.shared : it->second;
}

const BackboneParams& backbone_for_task(const Model& model, int task_id) {
  auto it = model.task_backbones.find(task_id);
  return it == model.task_backbones.end() ? model.shared : it->second;
}

namespace {

template <typename M, typename Fn>
void walk_model(M& model, const Fn& fn) {
  for_each_tensor(model.shared, "", fn);
  for (auto& [id, params] : model.task_backbones) {
    for_each_tensor(params, "task" + std::to_string(id) + ".", fn);
  }
  for (auto& [id, head] : model.heads) for_each_tensor(head, fn);
}

}  // namespace

void for_each_tensor(Model& model, const std::function<void(const std::string&, Tensor&)>& fn) {
  walk_model(model, fn);
}

void for_each_tensor(const Model& model,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  walk_model(model, fn);
}

Tensor& tensor_by_name(Model& model, const std::string& name) {
  Tensor* found = nullptr;
  for_each_tensor(model, [&](const std::string& n, Tensor& t) {
    if (n == name) found = &t;
  });
  if (found == nullptr) throw RegistryError("no tensor named '" + name + "'");
  return *found;
}

std::vector<std::string> prunable_tensor_names(const Model& model) {
  return prunable_tensor_names(model.shared, model.embedding_prune);
}

void register_prunable(const Model& model, OwnershipMap& ownership) {
  for (const std::string& name : prunable_tensor_names(model)) {
    std::int64_t size = 0;
    for_each_tensor(model, [&](const std::string& n, const Tensor& t) {
      if (n == name) size = t.numel();
    });
    ownership.register_tensor(name, size);
  }
}

}  // namespace conure
