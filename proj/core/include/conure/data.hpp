#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "conure/continual.hpp"
#include "conure/rng.hpp"

namespace conure {

// One line of a ratings log. Raw ids are whatever the file used; dense ids
// exist only after derive_ml_tasks.
struct RatingRecord {
  long long user = 0;
  long long item = 0;
  int rating = 0;
  long long timestamp = 0;
};

struct ParseReport {
  std::vector<RatingRecord> records;  // sorted per user by timestamp
  int malformed = 0;
};

// Delimiter is `::` or tab, detected per line.
ParseReport parse_interactions(const std::string& path);

// Dense 1-based id space; 0 stays reserved for the pad.
struct Vocab {
  std::vector<long long> raw;  // raw[dense - 1] = original id
  std::unordered_map<long long, int> dense;

  int size() const { return static_cast<int>(raw.size()); }
  int add(long long raw_id);       // idempotent insert
  int at(long long raw_id) const;  // throws VocabularyError when unknown
};

// A user's most recent clicks, left-padded with 0 to the window length.
struct SequenceInstance {
  int user = 0;
  std::vector<int> ids;
};

struct LabelInstance {
  int user = 0;
  int label = 0;
};

struct TaskData {
  TaskKind kind = TaskKind::autoregressive;
  int label_count = 0;  // |Y|; real labels are 1..label_count
  std::vector<SequenceInstance> sequences;  // autoregressive tasks
  std::vector<LabelInstance> instances;     // ranking / classification tasks

  std::size_t size() const {
    return kind == TaskKind::autoregressive ? sequences.size() : instances.size();
  }
};

struct DeriveOptions {
  int window = 20;
  int t1_max_rating = 3;  // clicks
  int t2_min_rating = 4;
  int t3_min_rating = 5;
};

struct TaskBundle {
  int window = 20;
  Vocab users;
  Vocab items;      // T1 item space
  Vocab t2_labels;  // T2 label space (preferred items re-indexed)
  Vocab t3_labels;
  // dense user -> padded click window; every task keys into this
  std::unordered_map<int, std::vector<int>> windows;
  TaskData t1, t2, t3;

  const TaskData& task(int position) const;  // 0-based: t1, t2, t3
};

TaskBundle derive_ml_tasks(const std::vector<RatingRecord>& records, const DeriveOptions& opt);

struct SplitSpec {
  double train = 0.80;
  double val = 0.05;
  double test = 0.15;
  std::uint64_t seed = 0;
};

struct SplitData {
  TaskData train;
  TaskData val;
  TaskData test;
};

// T1 splits at the user level (one sequence per user); later tasks split at
// the instance level. Deterministic under the spec seed.
SplitData split_dataset(const TaskData& data, const SplitSpec& spec);

// Counts over the training split only: items for autoregressive tasks,
// labels otherwise. Index 0 (pad) stays zero.
std::vector<long long> label_frequencies(const TaskData& train, int label_count);

// P(id) proportional to freq^alpha over ids with freq > 0; pad excluded.
class PopularitySampler {
 public:
  PopularitySampler(const std::vector<long long>& frequencies, double alpha);
  int sample(Rng& rng) const;
  double probability(int id) const;  // exact normalized mass, for tests

 private:
  std::vector<double> cumulative_;  // over ids 1..n
  double total_ = 0.0;
};

int sample_negative_popularity(const std::vector<long long>& frequencies, double alpha, Rng& rng);

// Task-file round trip. Layout under dir: t1.seq (user<TAB>i1,i2,...,in),
// t2.labels / t3.labels (user<TAB>label), users.vocab / items.vocab /
// t2.vocab / t3.vocab (raw<TAB>dense).
void write_task_bundle(const TaskBundle& bundle, const std::string& dir);
TaskBundle read_task_bundle(const std::string& dir);

}  // namespace conure
