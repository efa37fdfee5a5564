#pragma once

#include <string>
#include <vector>

#include "conure/continual.hpp"
#include "conure/data.hpp"
#include "conure/model.hpp"

namespace conure {

struct MetricReport {
  int task_id = 0;
  std::string split;
  std::string metric;  // "mrr@N" or "accuracy"
  double value = 0.0;
  std::int64_t instances = 0;
};

// scores is a full score row whose index 0 is the inert pad column; ranking
// runs over ids 1..|Y|. Ties rank the lower id first, so the result is
// deterministic.
double mrr_at_n(const std::vector<double>& scores, int target, int n);

// 1-based argmax over the real labels, same tie rule.
int argmax_label(const std::vector<double>& scores);

double classification_accuracy(const std::vector<int>& predictions,
                               const std::vector<int>& labels);

// Scores every instance of one split for task `task_id` using that task's
// inference view of the weights (conure masks committed owners; baselines
// read their own backbones). Deterministic: two calls give identical bits.
MetricReport evaluate_task(const Model& model, const TaskRegistry& registry,
                           const OwnershipMap& ownership, const TaskBundle& bundle,
                           const TaskData& part, const std::string& split_name, int task_id,
                           int mrr_n);

// Raw per-instance scores for the bit-identity audits.
std::vector<std::vector<double>> task_scores(const Model& model, const TaskRegistry& registry,
                                             const OwnershipMap& ownership,
                                             const TaskBundle& bundle, const TaskData& part,
                                             int task_id);

struct AuditEntry {
  int task_id = 0;
  int checkpoint = 0;  // index into the audited sequence
  double value = 0.0;
  double delta = 0.0;  // value minus the task's earliest (commit) value
};

// State captured per checkpoint for the audit; evaluate_task inputs plus the
// registries must agree on task order and prefix.
struct AuditSnapshot {
  const Model* model = nullptr;
  const TaskRegistry* registry = nullptr;
  const OwnershipMap* ownership = nullptr;
};

std::vector<AuditEntry> forgetting_audit(const std::vector<AuditSnapshot>& checkpoints,
                                         const TaskBundle& bundle,
                                         const std::vector<const TaskData*>& test_parts,
                                         int mrr_n);

}  // namespace conure
