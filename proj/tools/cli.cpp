#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "conure/checkpoint.hpp"
#include "conure/config.hpp"
#include "conure/errors.hpp"
#include "conure/metrics.hpp"
#include "conure/synthetic.hpp"
#include "json.hpp"

namespace conure {

namespace {

void apply_sets(TrainConfig& config, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + s + "'");
    }
    set_config_key(config, s.substr(0, eq), s.substr(eq + 1));
  }
  if (!sets.empty()) config.validate();
}

TrainConfig resolve_config(const std::string& config_file, const std::vector<std::string>& sets) {
  TrainConfig config = config_file.empty() ? TrainConfig{} : parse_config_file(config_file);
  apply_sets(config, sets);
  config.validate();
  return config;
}

// a loaded run's model shape is fixed; refuse overrides that would desync it
void guard_structural(const TrainConfig& before, const TrainConfig& after) {
  if (before.mode != after.mode || before.backbone != after.backbone ||
      before.hidden != after.hidden || before.window != after.window ||
      before.kernel_width != after.kernel_width ||
      before.dilation_schedule != after.dilation_schedule ||
      before.attention_blocks != after.attention_blocks ||
      before.embedding_prune != after.embedding_prune) {
    throw ConfigError("cannot change a structural key (mode/backbone/shape) on a live run");
  }
}

Run load_run(const std::string& path, const std::vector<std::string>& sets) {
  Run run = load_checkpoint(path);
  const TrainConfig before = run.config;
  apply_sets(run.config, sets);
  guard_structural(before, run.config);
  return run;
}

// where the next `train --task` lands in the bundle
int position_for(const Run& run, int task_id) {
  return run.registry.has(task_id) ? run.registry.position(task_id)
                                   : static_cast<int>(run.registry.tasks().size());
}

struct HistorySink {
  std::ofstream file;
  std::ostream* stream = nullptr;

  explicit HistorySink(const std::string& path) {
    if (path.empty()) {
      stream = &std::cout;
    } else {
      file.open(path, std::ios::trunc);
      if (!file) throw DataError("cannot write history file '" + path + "'");
      stream = &file;
    }
  }
};

void print_report_line(const MetricReport& r) {
  std::cout << "task " << r.task_id << '\t' << r.split << '\t' << r.metric << '\t' << r.value
            << '\t' << r.instances << " instances\n";
}

int cmd_synth(const SyntheticSpec& spec, const std::string& out_dir,
              const std::string& ratings_path) {
  const TaskBundle bundle = generate_synthetic_tasks(spec);
  std::filesystem::create_directories(out_dir);
  write_task_bundle(bundle, out_dir);
  if (!ratings_path.empty()) write_synthetic_ratings(spec, ratings_path);
  std::cout << "synthetic tasks written to " << out_dir << ": " << bundle.users.size()
            << " users, " << bundle.items.size() << " items, t1/t2/t3 sizes "
            << bundle.t1.size() << '/' << bundle.t2.size() << '/' << bundle.t3.size() << '\n';
  return 0;
}

int cmd_ingest(const std::string& ratings, const std::string& out_dir, int window) {
  const ParseReport parsed = parse_interactions(ratings);
  DeriveOptions opt;
  opt.window = window;
  const TaskBundle bundle = derive_ml_tasks(parsed.records, opt);
  std::filesystem::create_directories(out_dir);
  write_task_bundle(bundle, out_dir);
  std::cout << "ingested " << parsed.records.size() << " interactions (" << parsed.malformed
            << " malformed lines skipped) -> " << out_dir << ": " << bundle.users.size()
            << " users, " << bundle.items.size() << " items, t1/t2/t3 sizes "
            << bundle.t1.size() << '/' << bundle.t2.size() << '/' << bundle.t3.size() << '\n';
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& ckpt, int task_id, double ratio,
              const std::string& config_file, const std::vector<std::string>& sets,
              const std::string& history_path) {
  const TaskBundle bundle = read_task_bundle(data_dir);
  Run run = std::filesystem::exists(ckpt)
                ? load_run(ckpt, sets)
                : make_run(resolve_config(config_file, sets), bundle.items.size());
  const TaskData& part = bundle.task(position_for(run, task_id));
  HistorySink history(history_path);
  const PhaseStats stats = run_task_training(run, bundle, task_id, part.kind, part.label_count,
                                             ratio, history.stream);
  save_checkpoint(run, ckpt);
  std::cout << "task " << task_id << " trained " << stats.steps << " steps, loss "
            << stats.first_loss << " -> " << stats.last_loss << ", best val " << stats.best_val
            << "; checkpoint " << ckpt << '\n';
  return 0;
}

int cmd_prune(const std::string& ckpt, int task_id, double ratio, bool ratio_given,
              const std::vector<std::string>& sets) {
  Run run = load_run(ckpt, sets);
  if (ratio_given) {
    if (ratio < 0.0 || ratio >= 1.0) {
      throw ConfigError("prune ratio must lie in [0, 1), got " + std::to_string(ratio));
    }
    run.registry.at(task_id).prune_ratio = ratio;
  }
  run_prune(run, task_id);
  std::int64_t freed = 0;
  for (const PruneDecision::TensorDecision& td : run.pending_prune.tensors) {
    freed += static_cast<std::int64_t>(td.freed.size());
  }
  save_checkpoint(run, ckpt);
  std::cout << "task " << task_id << " pruned Q=" << run.registry.at(task_id).prune_ratio
            << ", freed " << freed << " cells, pre-prune val "
            << run.registry.at(task_id).preprune_val << '\n';
  return 0;
}

int cmd_retrain(const std::string& data_dir, const std::string& ckpt, int task_id,
                const std::vector<std::string>& sets, const std::string& history_path) {
  const TaskBundle bundle = read_task_bundle(data_dir);
  Run run = load_run(ckpt, sets);
  HistorySink history(history_path);
  const PhaseStats stats = run_retrain(run, bundle, task_id, history.stream);
  save_checkpoint(run, ckpt);
  std::cout << "task " << task_id << " retrained " << stats.steps << " steps, best val "
            << stats.best_val << (stats.stopped_early ? " (early stop)" : "") << '\n';
  return 0;
}

int cmd_commit(const std::string& ckpt, int task_id, const std::vector<std::string>& sets) {
  Run run = load_run(ckpt, sets);
  run_commit(run, task_id);
  save_checkpoint(run, ckpt);
  const CapacityReport cap = capacity_report(run.ownership);
  std::cout << "task " << task_id << " committed; free capacity " << cap.free_count << '/'
            << cap.total << '\n';
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt, int task_id,
             const std::string& split, const std::vector<std::string>& sets) {
  const TaskBundle bundle = read_task_bundle(data_dir);
  const Run run = load_run(ckpt, sets);
  print_report_line(eval_split(run, bundle, task_id, split));
  return 0;
}

int cmd_audit(const std::string& data_dir, const std::vector<std::string>& ckpts) {
  if (ckpts.size() < 2) throw AuditError("audit needs at least two checkpoints");
  const TaskBundle bundle = read_task_bundle(data_dir);
  std::vector<Run> runs;
  runs.reserve(ckpts.size());
  for (const std::string& path : ckpts) runs.push_back(load_checkpoint(path));

  std::vector<SplitData> splits;
  const Run& last = runs.back();
  for (int position = 0; position < 3; ++position) {
    splits.push_back(task_split(bundle, position, last.config));
  }
  std::vector<const TaskData*> tests;
  for (const SplitData& s : splits) tests.push_back(&s.test);

  std::vector<AuditSnapshot> snapshots;
  for (const Run& r : runs) snapshots.push_back({&r.model, &r.registry, &r.ownership});
  const std::vector<AuditEntry> table = forgetting_audit(snapshots, bundle, tests, last.config.mrr_n);

  std::cout << "task\tcheckpoint\tvalue\tdelta\n";
  for (const AuditEntry& e : table) {
    std::cout << e.task_id << '\t' << ckpts[static_cast<std::size_t>(e.checkpoint)] << '\t'
              << e.value << '\t' << e.delta << '\n';
  }
  return 0;
}

int cmd_demo_forgetting(const std::string& data_dir, const std::string& config_file,
                        const std::vector<std::string>& sets, double ratio) {
  const TaskBundle bundle = read_task_bundle(data_dir);
  const TrainConfig base = resolve_config(config_file, sets);
  std::cout << "mode\tt1_commit\tt1_after_t2\trelative_drop\n";
  for (const Mode mode : {Mode::sinmoall, Mode::conure}) {
    TrainConfig config = base;
    config.mode = mode;
    Run run = make_run(config, bundle.items.size());
    run_full_task(run, bundle, 1, bundle.t1.kind, bundle.t1.label_count,
                  mode == Mode::conure ? ratio : 0.0, nullptr);
    const double at_commit = eval_split(run, bundle, 1, "test").value;
    run_full_task(run, bundle, 2, bundle.t2.kind, bundle.t2.label_count, 0.0, nullptr);
    const double after_t2 = eval_split(run, bundle, 1, "test").value;
    const double drop = at_commit > 0.0 ? (at_commit - after_t2) / at_commit : 0.0;
    std::cout << to_string(mode) << '\t' << at_commit << '\t' << after_t2 << '\t' << drop
              << '\n';
  }
  return 0;
}

int cmd_capacity(const std::string& ckpt) {
  const Run run = load_checkpoint(ckpt);
  const CapacityReport cap = capacity_report(run.ownership);
  if (cap.tensors.empty()) {
    std::cout << "no ownership ledger (mode " << to_string(run.model.mode) << ")\n";
    return 0;
  }
  std::cout << "tensor\ttotal\tfree\tfree_fraction\n";
  for (const CapacityReport::Entry& e : cap.tensors) {
    const double frac = e.total == 0 ? 1.0
                                     : static_cast<double>(e.free_count) /
                                           static_cast<double>(e.total);
    std::cout << e.name << '\t' << e.total << '\t' << e.free_count << '\t' << frac << '\n';
  }
  std::cout << "total\t" << cap.total << '\t' << cap.free_count << '\t' << cap.free_fraction()
            << '\n';
  return 0;
}

int cmd_report(const std::string& data_dir, const std::string& ckpt, const std::string& out) {
  const TaskBundle bundle = read_task_bundle(data_dir);
  const Run run = load_checkpoint(ckpt);

  nlohmann::json doc;
  doc["config"] = serialize_config(run.config);
  doc["mode"] = to_string(run.model.mode);
  doc["tasks"] = nlohmann::json::array();
  for (const TaskDescriptor& task : run.registry.tasks()) {
    nlohmann::json entry;
    entry["id"] = task.id;
    entry["kind"] = to_string(task.kind);
    entry["state"] = to_string(task.state);
    entry["label_count"] = task.label_count;
    entry["prune_ratio"] = task.prune_ratio;
    for (const char* split : {"val", "test"}) {
      const MetricReport r = eval_split(run, bundle, task.id, split);
      entry["metrics"][split] = r.value;
      entry["metric_name"] = r.metric;
      print_report_line(r);
    }
    doc["tasks"].push_back(entry);
  }
  const CapacityReport cap = capacity_report(run.ownership);
  doc["capacity"]["total"] = cap.total;
  doc["capacity"]["free"] = cap.free_count;
  doc["capacity"]["free_fraction"] = cap.free_fraction();

  if (!out.empty()) {
    std::ofstream file(out, std::ios::trunc);
    if (!file) throw DataError("cannot write report '" + out + "'");
    file << doc.dump(2) << '\n';
    std::cout << "report written to " << out << '\n';
  } else {
    std::cout << doc.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"conure: task-level lifelong user representation trainer"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate clustered synthetic tasks");
  SyntheticSpec spec;
  std::string synth_out;
  std::string synth_ratings;
  synth->add_option("--out", synth_out, "task file directory")->required();
  synth->add_option("--users", spec.users, "user count");
  synth->add_option("--vocab", spec.vocab, "item count");
  synth->add_option("--clusters", spec.clusters, "interest clusters");
  synth->add_option("--window", spec.window, "click window length");
  synth->add_option("--history", spec.history, "clicks generated per user");
  synth->add_option("--next-prob", spec.next_prob, "ring-walk continuation probability");
  synth->add_option("--rho", spec.rho, "t2/t3 label correlation");
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--ratings", synth_ratings, "also write a ratings-format file here");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "ratings log -> task files");
  std::string ingest_ratings, ingest_out;
  int ingest_window = 20;
  ingest->add_option("--ratings", ingest_ratings, "user::item::rating::timestamp file")
      ->required();
  ingest->add_option("--out", ingest_out, "task file directory")->required();
  ingest->add_option("--window", ingest_window, "click window length");

  // shared lifecycle flags
  std::string data_dir, ckpt, config_file, history_path;
  std::vector<std::string> sets;
  int task_id = 0;
  double ratio = 0.0;

  auto* train = app.add_subcommand("train", "train a task (registers it if new)");
  train->add_option("--data", data_dir, "task file directory")->required();
  train->add_option("--checkpoint", ckpt, "checkpoint path (created if absent)")->required();
  train->add_option("--task", task_id, "task id")->required();
  train->add_option("--ratio", ratio, "prune ratio Q declared for this task (conure)");
  train->add_option("--config", config_file, "config file for a fresh run");
  train->add_option("--set", sets, "override config key=value");
  train->add_option("--history", history_path, "write step records here instead of stdout");

  auto* prune = app.add_subcommand("prune", "magnitude-prune the task's free cells");
  prune->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  prune->add_option("--task", task_id, "task id")->required();
  auto* prune_ratio_opt = prune->add_option("--ratio", ratio, "override the declared Q");
  prune->add_option("--set", sets, "override config key=value");

  auto* retrain = app.add_subcommand("retrain", "recover the metric after pruning");
  retrain->add_option("--data", data_dir, "task file directory")->required();
  retrain->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  retrain->add_option("--task", task_id, "task id")->required();
  retrain->add_option("--set", sets, "override config key=value");
  retrain->add_option("--history", history_path, "write step records here instead of stdout");

  auto* commit = app.add_subcommand("commit", "freeze the task and hand over ownership");
  commit->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  commit->add_option("--task", task_id, "task id")->required();
  commit->add_option("--set", sets, "override config key=value");

  auto* eval = app.add_subcommand("eval", "metric for one task on one split");
  std::string split = "val";
  eval->add_option("--data", data_dir, "task file directory")->required();
  eval->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  eval->add_option("--task", task_id, "task id")->required();
  eval->add_option("--split", split, "train | val | test");
  eval->add_option("--set", sets, "override config key=value");

  auto* audit = app.add_subcommand("audit", "forgetting table across checkpoints");
  std::vector<std::string> audit_ckpts;
  audit->add_option("--data", data_dir, "task file directory")->required();
  audit->add_option("--checkpoints", audit_ckpts, "two or more checkpoint paths")->required();

  auto* demo = app.add_subcommand("demo-forgetting",
                                  "train T1 then T2 in sinmoall vs conure; print T1 metrics");
  double demo_ratio = 0.5;
  demo->add_option("--data", data_dir, "task file directory")->required();
  demo->add_option("--config", config_file, "config file");
  demo->add_option("--set", sets, "override config key=value");
  demo->add_option("--ratio", demo_ratio, "conure prune ratio for T1");

  auto* report = app.add_subcommand("report", "evaluate every task and emit JSON");
  std::string report_out;
  report->add_option("--data", data_dir, "task file directory")->required();
  report->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  report->add_option("--out", report_out, "JSON output path (stdout when omitted)");

  auto* capacity = app.add_subcommand("capacity", "free-parameter ledger");
  capacity->add_option("--checkpoint", ckpt, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) return cmd_synth(spec, synth_out, synth_ratings);
    if (*ingest) return cmd_ingest(ingest_ratings, ingest_out, ingest_window);
    if (*train) return cmd_train(data_dir, ckpt, task_id, ratio, config_file, sets, history_path);
    if (*prune) return cmd_prune(ckpt, task_id, ratio, prune_ratio_opt->count() > 0, sets);
    if (*retrain) return cmd_retrain(data_dir, ckpt, task_id, sets, history_path);
    if (*commit) return cmd_commit(ckpt, task_id, sets);
    if (*eval) return cmd_eval(data_dir, ckpt, task_id, split, sets);
    if (*audit) return cmd_audit(data_dir, audit_ckpts);
    if (*demo) return cmd_demo_forgetting(data_dir, config_file, sets, demo_ratio);
    if (*report) return cmd_report(data_dir, ckpt, report_out);
    if (*capacity) return cmd_capacity(ckpt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace conure
