#include "conure/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "conure/errors.hpp"
#include "conure/log.hpp"

namespace conure {

namespace {

// Splits on "::" when present, otherwise on tabs/spaces.
std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  if (line.find("::") != std::string::npos) {
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find("::", start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 2;
    }
  } else {
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) fields.push_back(tok);
  }
  return fields;
}

bool parse_ll(const std::string& s, long long& out) {
  try {
    std::size_t used = 0;
    out = std::stoll(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

ParseReport parse_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file '" + path + "'");
  ParseReport report;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    long long user = 0;
    long long item = 0;
    long long rating = 0;
    long long ts = 0;
    const bool ok = fields.size() == 4 && parse_ll(fields[0], user) && parse_ll(fields[1], item) &&
                    parse_ll(fields[2], rating) && parse_ll(fields[3], ts) && rating >= 1 &&
                    rating <= 5;
    if (!ok) {
      log_warn("ratings line " + std::to_string(line_no) + " malformed, skipped");
      ++report.malformed;
      continue;
    }
    report.records.push_back({user, item, static_cast<int>(rating), ts});
  }
  if (report.records.empty()) log_warn("ratings file '" + path + "' yielded no records");
  // sorted per user by timestamp; stable so equal stamps keep file order
  std::stable_sort(report.records.begin(), report.records.end(),
                   [](const RatingRecord& a, const RatingRecord& b) {
                     return a.user != b.user ? a.user < b.user : a.timestamp < b.timestamp;
                   });
  return report;
}

int Vocab::add(long long raw_id) {
  auto [it, inserted] = dense.emplace(raw_id, size() + 1);
  if (inserted) raw.push_back(raw_id);
  return it->second;
}

int Vocab::at(long long raw_id) const {
  auto it = dense.find(raw_id);
  if (it == dense.end()) {
    throw VocabularyError("raw id " + std::to_string(raw_id) + " not in vocabulary");
  }
  return it->second;
}

const TaskData& TaskBundle::task(int position) const {
  switch (position) {
    case 0: return t1;
    case 1: return t2;
    case 2: return t3;
    default: throw DataError("task position " + std::to_string(position) + " out of range");
  }
}

TaskBundle derive_ml_tasks(const std::vector<RatingRecord>& records, const DeriveOptions& opt) {
  if (opt.window < 1) throw ConfigError("window must be >= 1");
  TaskBundle bundle;
  bundle.window = opt.window;

  // per-user pass in record order (already timestamp-sorted per user)
  std::map<long long, std::vector<long long>> clicks;     // rating <= t1_max
  std::map<long long, std::vector<long long>> preferred;  // rating >= t2_min
  std::map<long long, std::vector<long long>> loved;      // rating >= t3_min
  for (const RatingRecord& r : records) {
    if (r.rating <= opt.t1_max_rating) clicks[r.user].push_back(r.item);
    if (r.rating >= opt.t2_min_rating) preferred[r.user].push_back(r.item);
    if (r.rating >= opt.t3_min_rating) loved[r.user].push_back(r.item);
  }

  bundle.t1.kind = TaskKind::autoregressive;
  bundle.t2.kind = TaskKind::ranking;
  bundle.t3.kind = TaskKind::ranking;

  for (const auto& [raw_user, items] : clicks) {
    if (items.empty()) continue;
    const int user = bundle.users.add(raw_user);
    std::vector<int> window(static_cast<std::size_t>(opt.window), 0);
    const std::size_t take = std::min(items.size(), static_cast<std::size_t>(opt.window));
    for (std::size_t i = 0; i < take; ++i) {
      const long long raw_item = items[items.size() - take + i];
      window[window.size() - take + i] = bundle.items.add(raw_item);
    }
    bundle.windows.emplace(user, window);
    bundle.t1.sequences.push_back({user, std::move(window)});
  }

  // later tasks keep only users with a click history
  for (const auto& [raw_user, items] : preferred) {
    auto it = bundle.users.dense.find(raw_user);
    if (it == bundle.users.dense.end()) continue;
    for (long long raw_item : items) {
      bundle.t2.instances.push_back({it->second, bundle.t2_labels.add(raw_item)});
    }
  }
  for (const auto& [raw_user, items] : loved) {
    auto it = bundle.users.dense.find(raw_user);
    if (it == bundle.users.dense.end()) continue;
    for (long long raw_item : items) {
      bundle.t3.instances.push_back({it->second, bundle.t3_labels.add(raw_item)});
    }
  }

  bundle.t1.label_count = bundle.items.size();
  bundle.t2.label_count = bundle.t2_labels.size();
  bundle.t3.label_count = bundle.t3_labels.size();
  return bundle;
}

SplitData split_dataset(const TaskData& data, const SplitSpec& spec) {
  const double sum = spec.train + spec.val + spec.test;
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const auto n = static_cast<std::int64_t>(data.size());
  const auto n_train = static_cast<std::int64_t>(std::floor(spec.train * static_cast<double>(n) + 0.5));
  const auto n_val = static_cast<std::int64_t>(std::floor(spec.val * static_cast<double>(n) + 0.5));
  if (n_train + n_val > n || (spec.train > 0 && n_train == 0) || (spec.val > 0 && n_val == 0) ||
      (spec.test > 0 && n - n_train - n_val == 0)) {
    throw DataError("too few instances (" + std::to_string(n) + ") for the requested split");
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  SplitData out;
  for (TaskData* part : {&out.train, &out.val, &out.test}) {
    part->kind = data.kind;
    part->label_count = data.label_count;
  }
  auto place = [&](std::int64_t pos) -> TaskData& {
    if (pos < n_train) return out.train;
    if (pos < n_train + n_val) return out.val;
    return out.test;
  };
  for (std::int64_t pos = 0; pos < n; ++pos) {
    const auto src = static_cast<std::size_t>(order[static_cast<std::size_t>(pos)]);
    if (data.kind == TaskKind::autoregressive) {
      place(pos).sequences.push_back(data.sequences[src]);
    } else {
      place(pos).instances.push_back(data.instances[src]);
    }
  }
  return out;
}

std::vector<long long> label_frequencies(const TaskData& train, int label_count) {
  std::vector<long long> freq(static_cast<std::size_t>(label_count) + 1, 0);
  if (train.kind == TaskKind::autoregressive) {
    for (const SequenceInstance& s : train.sequences) {
      for (int id : s.ids) {
        if (id > 0 && id <= label_count) ++freq[static_cast<std::size_t>(id)];
      }
    }
  } else {
    for (const LabelInstance& inst : train.instances) {
      if (inst.label > 0 && inst.label <= label_count) ++freq[static_cast<std::size_t>(inst.label)];
    }
  }
  return freq;
}

PopularitySampler::PopularitySampler(const std::vector<long long>& frequencies, double alpha) {
  if (alpha < 0) throw ConfigError("popularity exponent must be >= 0");
  cumulative_.resize(frequencies.size(), 0.0);
  for (std::size_t id = 1; id < frequencies.size(); ++id) {
    const double w =
        frequencies[id] > 0 ? std::pow(static_cast<double>(frequencies[id]), alpha) : 0.0;
    total_ += w;
    cumulative_[id] = total_;
  }
  if (total_ <= 0.0) throw DataError("popularity table has no sampleable labels");
}

int PopularitySampler::sample(Rng& rng) const {
  const double u = rng.uniform01() * total_;
  const auto it = std::upper_bound(cumulative_.begin() + 1, cumulative_.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                                   static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
}

double PopularitySampler::probability(int id) const {
  if (id < 1 || id >= static_cast<int>(cumulative_.size())) return 0.0;
  const auto i = static_cast<std::size_t>(id);
  return (cumulative_[i] - cumulative_[i - 1]) / total_;
}

int sample_negative_popularity(const std::vector<long long>& frequencies, double alpha, Rng& rng) {
  return PopularitySampler(frequencies, alpha).sample(rng);
}

namespace {

void write_vocab(const std::string& path, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (int dense = 1; dense <= vocab.size(); ++dense) {
    out << vocab.raw[static_cast<std::size_t>(dense - 1)] << '\t' << dense << '\n';
  }
}

Vocab read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  Vocab vocab;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long raw = 0;
    int dense = 0;
    if (!(ls >> raw >> dense) || dense != vocab.size() + 1) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad vocabulary line");
    }
    vocab.add(raw);
  }
  return vocab;
}

}  // namespace

void write_task_bundle(const TaskBundle& bundle, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream out(base / "t1.seq");
    if (!out) throw DataError("cannot write t1.seq under '" + dir + "'");
    for (const SequenceInstance& s : bundle.t1.sequences) {
      out << s.user << '\t';
      for (std::size_t i = 0; i < s.ids.size(); ++i) {
        if (i > 0) out << ',';
        out << s.ids[i];
      }
      out << '\n';
    }
  }
  for (const auto& [name, task] :
       {std::pair<const char*, const TaskData*>{"t2.labels", &bundle.t2},
        std::pair<const char*, const TaskData*>{"t3.labels", &bundle.t3}}) {
    std::ofstream out(base / name);
    if (!out) throw DataError(std::string("cannot write ") + name + " under '" + dir + "'");
    for (const LabelInstance& inst : task->instances) {
      out << inst.user << '\t' << inst.label << '\n';
    }
  }
  write_vocab((base / "users.vocab").string(), bundle.users);
  write_vocab((base / "items.vocab").string(), bundle.items);
  write_vocab((base / "t2.vocab").string(), bundle.t2_labels);
  write_vocab((base / "t3.vocab").string(), bundle.t3_labels);
}

TaskBundle read_task_bundle(const std::string& dir) {
  const std::filesystem::path base(dir);
  TaskBundle bundle;
  bundle.users = read_vocab((base / "users.vocab").string());
  bundle.items = read_vocab((base / "items.vocab").string());
  bundle.t2_labels = read_vocab((base / "t2.vocab").string());
  bundle.t3_labels = read_vocab((base / "t3.vocab").string());

  std::ifstream t1(base / "t1.seq");
  if (!t1) throw DataError("cannot open t1.seq under '" + dir + "'");
  bundle.t1.kind = TaskKind::autoregressive;
  std::string line;
  int line_no = 0;
  int window = 0;
  while (std::getline(t1, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    SequenceInstance s;
    std::string ids;
    if (!(ls >> s.user >> ids)) throw DataError("t1.seq:" + std::to_string(line_no) + ": bad line");
    std::istringstream is(ids);
    std::string tok;
    while (std::getline(is, tok, ',')) s.ids.push_back(std::stoi(tok));
    if (window == 0) window = static_cast<int>(s.ids.size());
    if (static_cast<int>(s.ids.size()) != window) {
      throw DataError("t1.seq:" + std::to_string(line_no) + ": ragged window");
    }
    bundle.windows.emplace(s.user, s.ids);
    bundle.t1.sequences.push_back(std::move(s));
  }
  if (window == 0) throw DataError("t1.seq under '" + dir + "' is empty");
  bundle.window = window;
  bundle.t1.label_count = bundle.items.size();

  auto read_labels = [&](const char* name, TaskData& task, int label_count) {
    std::ifstream in(base / name);
    if (!in) throw DataError(std::string("cannot open ") + name + " under '" + dir + "'");
    task.kind = TaskKind::ranking;
    task.label_count = label_count;
    std::string row;
    int no = 0;
    while (std::getline(in, row)) {
      ++no;
      if (row.empty()) continue;
      std::istringstream ls(row);
      LabelInstance inst;
      if (!(ls >> inst.user >> inst.label)) {
        throw DataError(std::string(name) + ":" + std::to_string(no) + ": bad line");
      }
      task.instances.push_back(inst);
    }
  };
  read_labels("t2.labels", bundle.t2, bundle.t2_labels.size());
  read_labels("t3.labels", bundle.t3, bundle.t3_labels.size());
  return bundle;
}

}  // namespace conure
