#include "conure/metrics.hpp"

#include <algorithm>
#include <map>

#include "conure/errors.hpp"

namespace conure {

double mrr_at_n(const std::vector<double>& scores, int target, int n) {
  if (n < 1) throw ConfigError("mrr cutoff must be >= 1");
  if (target < 1 || target >= static_cast<int>(scores.size())) {
    throw VocabularyError("mrr target " + std::to_string(target) + " outside label space of " +
                          std::to_string(scores.size() ? scores.size() - 1 : 0));
  }
  const double s = scores[static_cast<std::size_t>(target)];
  int rank = 1;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > s) ++rank;
    else if (scores[j] == s && static_cast<int>(j) < target) ++rank;
  }
  return rank <= n ? 1.0 / static_cast<double>(rank) : 0.0;
}

int argmax_label(const std::vector<double>& scores) {
  if (scores.size() < 2) throw DimensionError("need at least one real label");
  int best = 1;
  for (std::size_t j = 2; j < scores.size(); ++j) {
    if (scores[j] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  }
  return best;
}

double classification_accuracy(const std::vector<int>& predictions,
                               const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw DimensionError("prediction/label length mismatch");
  if (predictions.empty()) throw DataError("accuracy over an empty set is undefined");
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

namespace {

// The weights task_id is allowed to see: its own backbone, with committed
// ownership masked down to owners <= task_id in conure mode.
BackboneParams inference_view(const Model& model, const TaskRegistry& registry,
                              const OwnershipMap& ownership, int task_id) {
  BackboneParams view = backbone_for_task(model, task_id);
  if (model.mode == Mode::conure) {
    for (const std::string& name : prunable_tensor_names(model)) {
      for_each_tensor(view, "", [&](const std::string& n, Tensor& t) {
        if (n == name) t = inference_weights(t, ownership, registry, name, task_id);
      });
    }
  }
  return view;
}

const std::vector<int>& window_for_user(const TaskBundle& bundle, int user) {
  auto it = bundle.windows.find(user);
  if (it == bundle.windows.end()) {
    throw DataError("user " + std::to_string(user) + " has no click window");
  }
  return it->second;
}

// held-out protocol: predict the final real item from the preceding window
void final_item_split(const std::vector<int>& ids, std::vector<int>& prefix, int& target) {
  prefix.assign(ids.size(), 0);
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) prefix[i + 1] = ids[i];
  target = ids.back();
  if (target == 0) throw DataError("padded window ends in a pad item");
}

}  // namespace

std::vector<std::vector<double>> task_scores(const Model& model, const TaskRegistry& registry,
                                             const OwnershipMap& ownership,
                                             const TaskBundle& bundle, const TaskData& part,
                                             int task_id) {
  auto hit = model.heads.find(task_id);
  if (hit == model.heads.end()) {
    throw RegistryError("task " + std::to_string(task_id) + " has no head");
  }
  const BackboneParams view = inference_view(model, registry, ownership, task_id);

  std::vector<std::vector<double>> rows;
  auto score_window = [&](const std::vector<int>& ids) {
    Tape tape;
    BoundBackbone bound = bind_backbone(tape, view, frozen_binder());
    BoundHead head = bind_head(tape, hit->second, frozen_binder());
    Encoding enc = encode_sequence(tape, bound, ids);
    Var scores = predict_scores(tape, head, enc.last);
    return tape.value(scores).data;
  };

  if (part.kind == TaskKind::autoregressive) {
    for (const SequenceInstance& s : part.sequences) {
      std::vector<int> prefix;
      int target = 0;
      final_item_split(s.ids, prefix, target);
      rows.push_back(score_window(prefix));
    }
  } else {
    for (const LabelInstance& inst : part.instances) {
      rows.push_back(score_window(window_for_user(bundle, inst.user)));
    }
  }
  return rows;
}

MetricReport evaluate_task(const Model& model, const TaskRegistry& registry,
                           const OwnershipMap& ownership, const TaskBundle& bundle,
                           const TaskData& part, const std::string& split_name, int task_id,
                           int mrr_n) {
  if (part.size() == 0) {
    throw DataError("split '" + split_name + "' is empty for task " + std::to_string(task_id));
  }
  const std::vector<std::vector<double>> rows =
      task_scores(model, registry, ownership, bundle, part, task_id);

  MetricReport report;
  report.task_id = task_id;
  report.split = split_name;
  report.instances = static_cast<std::int64_t>(rows.size());

  if (part.kind == TaskKind::classification) {
    std::vector<int> preds;
    std::vector<int> labels;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      preds.push_back(argmax_label(rows[i]));
      labels.push_back(part.instances[i].label);
    }
    report.metric = "accuracy";
    report.value = classification_accuracy(preds, labels);
    return report;
  }

  double total = 0.0;
  if (part.kind == TaskKind::autoregressive) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      total += mrr_at_n(rows[i], part.sequences[i].ids.back(), mrr_n);
    }
  } else {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      total += mrr_at_n(rows[i], part.instances[i].label, mrr_n);
    }
  }
  report.metric = "mrr@" + std::to_string(mrr_n);
  report.value = total / static_cast<double>(rows.size());
  return report;
}

std::vector<AuditEntry> forgetting_audit(const std::vector<AuditSnapshot>& checkpoints,
                                         const TaskBundle& bundle,
                                         const std::vector<const TaskData*>& test_parts,
                                         int mrr_n) {
  std::vector<AuditEntry> table;
  if (checkpoints.size() < 2) return table;

  // registries must agree where they overlap
  for (std::size_t k = 1; k < checkpoints.size(); ++k) {
    const auto& prev = checkpoints[k - 1].registry->tasks();
    const auto& next = checkpoints[k].registry->tasks();
    if (prev.size() > next.size()) {
      throw AuditError("checkpoint " + std::to_string(k) + " has fewer tasks than its parent");
    }
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (prev[i].id != next[i].id || prev[i].kind != next[i].kind) {
        throw AuditError("checkpoints disagree on task " + std::to_string(prev[i].id));
      }
    }
  }

  std::map<int, double> first_value;
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    const AuditSnapshot& snap = checkpoints[k];
    for (const TaskDescriptor& task : snap.registry->tasks()) {
      if (task.state != TaskState::committed) continue;
      const int pos = snap.registry->position(task.id);
      if (pos >= static_cast<int>(test_parts.size())) {
        throw AuditError("no evaluation split for task " + std::to_string(task.id));
      }
      const MetricReport report =
          evaluate_task(*snap.model, *snap.registry, *snap.ownership, bundle,
                        *test_parts[static_cast<std::size_t>(pos)], "test", task.id, mrr_n);
      auto [it, inserted] = first_value.emplace(task.id, report.value);
      AuditEntry entry;
      entry.task_id = task.id;
      entry.checkpoint = static_cast<int>(k);
      entry.value = report.value;
      entry.delta = inserted ? 0.0 : report.value - it->second;
      table.push_back(entry);
    }
  }
  return table;
}

}  // namespace conure
