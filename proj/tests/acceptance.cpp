// Acceptance gate: one function per criterion, one PASS/FAIL line each.
// Run with no arguments for the full gate, or pass criterion numbers to
// re-run a subset (exit code = number of failures either way).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "conure/backbone.hpp"
#include "conure/checkpoint.hpp"
#include "conure/continual.hpp"
#include "conure/data.hpp"
#include "conure/errors.hpp"
#include "conure/losses.hpp"
#include "conure/metrics.hpp"
#include "conure/model.hpp"
#include "conure/ops.hpp"
#include "conure/synthetic.hpp"
#include "conure/tape.hpp"
#include "conure/tensor.hpp"
#include "conure/trainer.hpp"

using namespace conure;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------- fixtures

// Shared desk-scale dataset for criteria 2-4: three tasks over a 60-item
// catalog, weakly correlated labels so later tasks genuinely interfere.
SyntheticSpec desk_spec() {
  SyntheticSpec spec;
  spec.users = 200;
  spec.vocab = 60;
  spec.clusters = 6;
  spec.window = 16;
  spec.history = 40;
  spec.rho = 0.3;
  spec.seed = 42;
  return spec;
}

TrainConfig desk_config(Mode mode) {
  TrainConfig config;
  config.mode = mode;
  config.window = 16;
  config.lr_first = 0.01;
  config.lr_later = 0.01;
  config.batch_later = 32;
  config.train_steps = 300;
  config.eval_every = 50;
  config.seed = 9;
  config.validate();
  return config;
}

bool bits_equal(const std::vector<std::vector<double>>& a,
                const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    if (std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)) != 0) return false;
  }
  return true;
}

// ------------------------------------------------- criterion 1: gradients

// Scalar loss for a probe: weighted sum of the op's output under fixed
// pseudo-random coefficients, so every output cell feeds the gradient.
// mask_multiply holds the mask by pointer, so the coefficients must outlive
// the tape; the cache keeps them stable across finite-difference rebuilds.
Var reduce_output(Tape& tape, Var v, std::uint64_t coeff_seed) {
  static std::map<std::uint64_t, Tensor> cache;
  const Tensor& value = tape.value(v);
  auto it = cache.find(coeff_seed);
  if (it == cache.end()) {
    Rng rng(coeff_seed);
    Tensor coeff = Tensor::zeros(value.shape);
    for (double& c : coeff.data) c = rng.uniform(-1.0, 1.0);
    it = cache.emplace(coeff_seed, std::move(coeff)).first;
  }
  return ops::sum(tape, ops::mask_multiply(tape, v, it->second));
}

struct Built {
  Var loss;
  std::vector<Var> leaves;  // aligned with the probe's input tensors
};

struct Probe {
  std::string name;
  std::vector<Tensor*> inputs;
  std::function<Built(Tape&)> build;
};

double fd_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(std::abs(analytic) + std::abs(numeric), 1e-3);
}

// Central differences over every cell of every input; the worst relative
// error across the probe.
double probe_worst_error(const Probe& probe) {
  Tape tape;
  const Built built = probe.build(tape);
  tape.backward(built.loss);
  std::vector<Tensor> analytic;
  for (std::size_t i = 0; i < built.leaves.size(); ++i) {
    const Tensor* g = tape.gradient(built.leaves[i]);
    analytic.push_back(g != nullptr ? *g : Tensor::zeros(probe.inputs[i]->shape));
  }
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.inputs.size(); ++i) {
    Tensor& input = *probe.inputs[i];
    for (std::size_t cell = 0; cell < input.data.size(); ++cell) {
      const double saved = input.data[cell];
      input.data[cell] = saved + h;
      Tape up_tape;
      const double up = up_tape.value(probe.build(up_tape).loss).data[0];
      input.data[cell] = saved - h;
      Tape down_tape;
      const double down = down_tape.value(probe.build(down_tape).loss).data[0];
      input.data[cell] = saved;
      worst = std::max(worst, fd_error(analytic[i].data[cell], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// keep relu inputs away from the kink so central differences stay valid
void avoid_kink(Tensor& t) {
  for (double& v : t.data) {
    if (std::abs(v) < 0.05) v = v < 0.0 ? -0.1 : 0.1;
  }
}

double encoder_worst_error(BackboneKind kind) {
  BackboneShape shape;
  shape.kind = kind;
  shape.vocab = 12;
  shape.hidden = 8;
  shape.window = 6;
  shape.kernel_width = 3;
  shape.dilation_schedule = {1, 2};
  shape.attention_blocks = 2;
  Rng rng(71);
  BackboneParams params = init_backbone(shape, rng);
  TaskHead head = init_head(1, shape.vocab, shape.hidden, rng);

  std::vector<std::string> names;
  std::vector<Tensor*> inputs;
  for_each_tensor(params, "", [&](const std::string& name, Tensor& t) {
    names.push_back(name);
    inputs.push_back(&t);
  });
  names.push_back("head.weight");
  inputs.push_back(&head.weight);
  names.push_back("head.bias");
  inputs.push_back(&head.bias);

  const std::vector<int> ids = {0, 0, 4, 9, 2, 7};
  Probe probe;
  probe.name = "encoder";
  probe.inputs = inputs;
  probe.build = [&](Tape& tape) {
    std::map<const Tensor*, Var> bound;
    const Binder binder = [&](Tape& t, const std::string&, const Tensor& value) {
      const Var v = t.borrow(value, true);
      bound[&value] = v;
      return v;
    };
    const BoundBackbone backbone = bind_backbone(tape, params, binder);
    const BoundHead bound_head = bind_head(tape, head, binder);
    const Encoding enc = encode_sequence(tape, backbone, ids);
    const Var scores = predict_scores(tape, bound_head, enc.last);
    Built built;
    built.loss = ops::softmax_cross_entropy(tape, scores, {5}, 1);
    for (const Tensor* t : inputs) built.leaves.push_back(bound.at(t));
    return built;
  };
  return probe_worst_error(probe);
}

Outcome criterion_1() {
  Rng rng(11);
  std::vector<Probe> probes;
  // every probe borrows its inputs fresh per tape so finite differences see
  // the perturbed values
  auto take = [](Tape& t, const Tensor& x) { return t.borrow(x, true); };

  static Tensor ma = random_tensor(rng, {3, 4});
  static Tensor mb = random_tensor(rng, {4, 5});
  probes.push_back({"matmul", {&ma, &mb}, [&](Tape& t) -> Built {
                      const Var a = take(t, ma), b = take(t, mb);
                      return {reduce_output(t, ops::matmul(t, a, b), 1), {a, b}};
                    }});

  static Tensor tx = random_tensor(rng, {3, 5});
  probes.push_back({"transpose", {&tx}, [&](Tape& t) -> Built {
                      const Var x = take(t, tx);
                      return {reduce_output(t, ops::transpose(t, x), 2), {x}};
                    }});

  static Tensor aa = random_tensor(rng, {4, 3});
  static Tensor ab = random_tensor(rng, {4, 3});
  probes.push_back({"add", {&aa, &ab}, [&](Tape& t) -> Built {
                      const Var a = take(t, aa), b = take(t, ab);
                      return {reduce_output(t, ops::add(t, a, b), 3), {a, b}};
                    }});
  probes.push_back({"sub", {&aa, &ab}, [&](Tape& t) -> Built {
                      const Var a = take(t, aa), b = take(t, ab);
                      return {reduce_output(t, ops::sub(t, a, b), 4), {a, b}};
                    }});

  static Tensor sx = random_tensor(rng, {3, 3});
  probes.push_back({"scale", {&sx}, [&](Tape& t) -> Built {
                      const Var x = take(t, sx);
                      return {reduce_output(t, ops::scale(t, x, 1.7), 5), {x}};
                    }});

  static Tensor bx = random_tensor(rng, {4, 5});
  static Tensor bb = random_tensor(rng, {5});
  probes.push_back({"bias_add", {&bx, &bb}, [&](Tape& t) -> Built {
                      const Var x = take(t, bx), b = take(t, bb);
                      return {reduce_output(t, ops::bias_add(t, x, b), 6), {x, b}};
                    }});

  static Tensor rx = random_tensor(rng, {4, 4});
  avoid_kink(rx);
  probes.push_back({"relu", {&rx}, [&](Tape& t) -> Built {
                      const Var x = take(t, rx);
                      return {reduce_output(t, ops::relu(t, x), 7), {x}};
                    }});

  static Tensor lx = random_tensor(rng, {3, 6});
  static Tensor lg = random_tensor(rng, {6}, 0.5, 1.5);
  static Tensor lb = random_tensor(rng, {6});
  probes.push_back({"layer_norm", {&lx, &lg, &lb}, [&](Tape& t) -> Built {
                      const Var x = take(t, lx), g = take(t, lg), b = take(t, lb);
                      return {reduce_output(t, ops::layer_norm(t, x, g, b), 8), {x, g, b}};
                    }});

  static Tensor cx = random_tensor(rng, {8, 3});
  static Tensor ck = random_tensor(rng, {3, 3, 4});
  static Tensor cb = random_tensor(rng, {4});
  probes.push_back({"causal_dilated_conv1d", {&cx, &ck, &cb}, [&](Tape& t) -> Built {
                      const Var x = take(t, cx), k = take(t, ck), b = take(t, cb);
                      return {reduce_output(t, ops::causal_dilated_conv1d(t, x, k, b, 2), 9),
                              {x, k, b}};
                    }});

  static Tensor et = random_tensor(rng, {10, 4});
  probes.push_back({"embedding_lookup", {&et}, [&](Tape& t) -> Built {
                      const Var table = take(t, et);
                      const Var out = ops::embedding_lookup(t, table, {3, 1, 7, 0, 9});
                      return {reduce_output(t, out, 10), {table}};
                    }});

  static Tensor gm = random_tensor(rng, {4, 7});
  probes.push_back({"gather_cols", {&gm}, [&](Tape& t) -> Built {
                      const Var m = take(t, gm);
                      return {reduce_output(t, ops::gather_cols(t, m, {1, 5, 2}), 11), {m}};
                    }});

  static Tensor dr = random_tensor(rng, {3, 4});
  static Tensor dm = random_tensor(rng, {4, 9});
  static Tensor db = random_tensor(rng, {9});
  probes.push_back({"rows_dot_cols", {&dr, &dm, &db}, [&](Tape& t) -> Built {
                      const Var r = take(t, dr), m = take(t, dm), b = take(t, db);
                      const Var out = ops::rows_dot_cols(t, r, m, b, {2, 7, 1});
                      return {reduce_output(t, out, 12), {r, m, b}};
                    }});

  static Tensor rowx = random_tensor(rng, {5, 4});
  probes.push_back({"row", {&rowx}, [&](Tape& t) -> Built {
                      const Var x = take(t, rowx);
                      return {reduce_output(t, ops::row(t, x, 2), 13), {x}};
                    }});

  static Tensor sumx = random_tensor(rng, {3, 4});
  probes.push_back({"sum", {&sumx}, [&](Tape& t) -> Built {
                      const Var x = take(t, sumx);
                      return {ops::sum(t, x), {x}};
                    }});
  probes.push_back({"sum_squares", {&sumx}, [&](Tape& t) -> Built {
                      const Var x = take(t, sumx);
                      return {ops::sum_squares(t, x), {x}};
                    }});

  static Tensor lsx = random_tensor(rng, {2, 5}, -3.0, 3.0);
  probes.push_back({"log_sigmoid", {&lsx}, [&](Tape& t) -> Built {
                      const Var x = take(t, lsx);
                      return {reduce_output(t, ops::log_sigmoid(t, x), 14), {x}};
                    }});

  static Tensor mmx = random_tensor(rng, {3, 4});
  static Tensor mmm = random_tensor(rng, {3, 4});
  probes.push_back({"mask_multiply", {&mmx}, [&](Tape& t) -> Built {
                      const Var x = take(t, mmx);
                      return {ops::sum(t, ops::mask_multiply(t, x, mmm)), {x}};
                    }});

  static Tensor cex = random_tensor(rng, {3, 5});
  probes.push_back({"softmax_cross_entropy", {&cex}, [&](Tape& t) -> Built {
                      const Var x = take(t, cex);
                      return {ops::softmax_cross_entropy(t, x, {1, 4, 2}, 1), {x}};
                    }});

  static Tensor ssc = random_tensor(rng, {3, 4});
  static Tensor sst = random_tensor(rng, {3});
  probes.push_back({"sampled_softmax_nll", {&ssc, &sst}, [&](Tape& t) -> Built {
                      const Var c = take(t, ssc), tg = take(t, sst);
                      const Var loss =
                          ops::sampled_softmax_nll(t, c, tg, {2, -1, 0}, {1, 0, 1});
                      return {loss, {c, tg}};
                    }});

  static Tensor csx = random_tensor(rng, {4, 4});
  probes.push_back({"causal_softmax", {&csx}, [&](Tape& t) -> Built {
                      const Var x = take(t, csx);
                      return {reduce_output(t, ops::causal_softmax(t, x), 15), {x}};
                    }});

  // task-level losses through a bound head
  static TaskHead head = init_head(1, 8, 6, rng);
  static Tensor glast = random_tensor(rng, {1, 6});
  static Tensor states = random_tensor(rng, {6, 6});
  auto head_builder = [&](Tape& t, std::map<const Tensor*, Var>& bound) {
    const Binder binder = [&](Tape& tape, const std::string&, const Tensor& value) {
      const Var v = tape.borrow(value, true);
      bound[&value] = v;
      return v;
    };
    return bind_head(t, head, binder);
  };
  probes.push_back({"bpr_loss", {&glast, &head.weight, &head.bias}, [&](Tape& t) -> Built {
                      std::map<const Tensor*, Var> bound;
                      const BoundHead bh = head_builder(t, bound);
                      const Var g = take(t, glast);
                      return {bpr_loss(t, g, bh, 3, 6),
                              {g, bound.at(&head.weight), bound.at(&head.bias)}};
                    }});
  probes.push_back({"cross_entropy_loss", {&glast, &head.weight, &head.bias},
                    [&](Tape& t) -> Built {
                      std::map<const Tensor*, Var> bound;
                      const BoundHead bh = head_builder(t, bound);
                      const Var g = take(t, glast);
                      return {cross_entropy_loss(t, g, bh, 4),
                              {g, bound.at(&head.weight), bound.at(&head.bias)}};
                    }});
  probes.push_back({"autoregressive_loss", {&states, &head.weight, &head.bias},
                    [&](Tape& t) -> Built {
                      std::map<const Tensor*, Var> bound;
                      const BoundHead bh = head_builder(t, bound);
                      const Var s = take(t, states);
                      const Var loss =
                          autoregressive_loss(t, s, bh, {0, 0, 3, 5, 2, 4}, {1, 2, 5});
                      return {loss, {s, bound.at(&head.weight), bound.at(&head.bias)}};
                    }});

  double worst = 0.0;
  std::string worst_name = "-";
  for (const Probe& probe : probes) {
    const double err = probe_worst_error(probe);
    if (err > worst) {
      worst = err;
      worst_name = probe.name;
    }
  }

  // stop_gradient: only the direct path contributes, exactly
  {
    Tape t;
    const Var x = t.borrow(sumx, true);
    t.backward(ops::sum(t, ops::add(t, x, ops::stop_gradient(t, x))));
    const Tensor* g = t.gradient(x);
    if (g == nullptr) return {false, "stop_gradient: direct path lost its gradient"};
    for (double v : g->data) {
      if (v != 1.0) return {false, "stop_gradient leaked: expected exactly 1, got " + fmt(v)};
    }
  }

  const double tcn_err = encoder_worst_error(BackboneKind::tcn);
  const double attn_err = encoder_worst_error(BackboneKind::attention);
  worst = std::max({worst, tcn_err, attn_err});
  if (tcn_err >= worst) worst_name = "tcn encoder";
  if (attn_err >= worst) worst_name = "attention encoder";

  const bool pass = worst < 1e-4;
  return {pass, std::to_string(probes.size()) + " op probes + 2 encoders, worst rel err " +
                    fmt(worst, 3) + " (" + worst_name + ")"};
}

// -------------------------------------- criterion 2: forgetting-free bits

Outcome criterion_2() {
  const TaskBundle bundle = generate_synthetic_tasks(desk_spec());
  Run run = make_run(desk_config(Mode::conure), static_cast<int>(bundle.items.size()));

  run_full_task(run, bundle, 1, bundle.t1.kind, bundle.t1.label_count, 0.5, nullptr);
  const TaskData fixed1 = task_split(bundle, 0, run.config).test;
  const auto t1_commit =
      task_scores(run.model, run.registry, run.ownership, bundle, fixed1, 1);

  run_full_task(run, bundle, 2, bundle.t2.kind, bundle.t2.label_count, 0.5, nullptr);
  const auto t1_after2 =
      task_scores(run.model, run.registry, run.ownership, bundle, fixed1, 1);
  if (!bits_equal(t1_commit, t1_after2)) {
    return {false, "task 1 scores drifted during task 2 training"};
  }
  const TaskData fixed2 = task_split(bundle, 1, run.config).test;
  const auto t2_commit =
      task_scores(run.model, run.registry, run.ownership, bundle, fixed2, 2);

  run_full_task(run, bundle, 3, bundle.t3.kind, bundle.t3.label_count, 0.0, nullptr);
  const auto t1_final =
      task_scores(run.model, run.registry, run.ownership, bundle, fixed1, 1);
  const auto t2_final =
      task_scores(run.model, run.registry, run.ownership, bundle, fixed2, 2);
  if (!bits_equal(t1_commit, t1_final)) {
    return {false, "task 1 scores drifted during task 3 training"};
  }
  if (!bits_equal(t2_commit, t2_final)) {
    return {false, "task 2 scores drifted during task 3 training"};
  }
  return {true, "score matrices bit-identical through 2 later tasks (" +
                    std::to_string(t1_commit.size()) + "+" + std::to_string(t2_commit.size()) +
                    " fixed instances, f=32, 8 conv layers)"};
}

// --------------------------------- criterion 3: forgetting demonstration

Outcome criterion_3() {
  const TaskBundle bundle = generate_synthetic_tasks(desk_spec());
  Run run = make_run(desk_config(Mode::sinmoall), static_cast<int>(bundle.items.size()));
  run_full_task(run, bundle, 1, bundle.t1.kind, bundle.t1.label_count, 0.0, nullptr);
  const double at_commit = eval_split(run, bundle, 1, "test").value;
  run_full_task(run, bundle, 2, bundle.t2.kind, bundle.t2.label_count, 0.0, nullptr);
  const double after_t2 = eval_split(run, bundle, 1, "test").value;
  if (at_commit <= 0.0) return {false, "task 1 never learned (commit mrr@5 = 0)"};
  const double drop = (at_commit - after_t2) / at_commit;
  return {drop >= 0.5, "sinmoall t1 mrr@5 " + fmt(at_commit) + " -> " + fmt(after_t2) +
                           " after t2, relative drop " + fmt(drop, 3) + " (need >= 0.5)"};
}

// --------------------------------------- criterion 4: prune and recover

Outcome criterion_4() {
  const TaskBundle bundle = generate_synthetic_tasks(desk_spec());
  TrainConfig config = desk_config(Mode::conure);
  config.retrain_steps = 500;  // Q=0.7 removes most of the net; give recovery room
  Run run = make_run(config, static_cast<int>(bundle.items.size()));
  run_task_training(run, bundle, 1, bundle.t1.kind, bundle.t1.label_count, 0.7, nullptr);
  run_prune(run, 1);
  const double before = run.registry.at(1).preprune_val;
  const PhaseStats stats = run_retrain(run, bundle, 1, nullptr);
  if (before <= 0.0) return {false, "pre-prune val mrr@5 is 0; nothing to recover"};
  const double ratio = stats.best_val / before;
  return {ratio >= 0.95, "Q=0.7: val mrr@5 " + fmt(before) + " -> " + fmt(stats.best_val) +
                             " after retrain (" + fmt(100.0 * ratio, 4) +
                             "% recovered, need >= 95%)"};
}

// ------------------------------------------- criterion 5: transfer via T2

Outcome criterion_5() {
  double gain_sum = 0.0;
  std::string per_seed;
  for (int trial = 0; trial < 5; ++trial) {
    SyntheticSpec spec = desk_spec();
    spec.rho = 0.9;
    spec.seed = 100 + static_cast<std::uint64_t>(trial);
    const TaskBundle bundle = generate_synthetic_tasks(spec);

    TrainConfig config = desk_config(Mode::conure);
    config.seed = 9 + static_cast<std::uint64_t>(trial);
    Run shared = make_run(config, static_cast<int>(bundle.items.size()));
    run_full_task(shared, bundle, 1, bundle.t1.kind, bundle.t1.label_count, 0.5, nullptr);

    // arm A: t2 then t3 on a 20% training split
    Run with_t2 = shared;
    run_full_task(with_t2, bundle, 2, bundle.t2.kind, bundle.t2.label_count, 0.5, nullptr);
    with_t2.config.split_train = 0.20;
    with_t2.config.split_val = 0.15;
    with_t2.config.split_test = 0.65;
    run_full_task(with_t2, bundle, 3, bundle.t3.kind, bundle.t3.label_count, 0.0, nullptr);
    const double a = eval_split(with_t2, bundle, 3, "test").value;

    // arm B: t3 directly after t1. The bundle slots t3's data at position 1
    // and the seed offset keeps the position-keyed split identical to arm A.
    Run without_t2 = shared;
    without_t2.config.seed += 1000003ull;
    without_t2.config.split_train = 0.20;
    without_t2.config.split_val = 0.15;
    without_t2.config.split_test = 0.65;
    TaskBundle alt = bundle;
    alt.t2 = bundle.t3;
    run_full_task(without_t2, alt, 3, bundle.t3.kind, bundle.t3.label_count, 0.0, nullptr);
    const double b = eval_split(without_t2, alt, 3, "test").value;

    if (b <= 0.0) return {false, "seed " + std::to_string(trial) + ": baseline t3 mrr@5 is 0"};
    const double gain = (a - b) / b;
    gain_sum += gain;
    per_seed += (per_seed.empty() ? "" : " ") + fmt(gain, 3);
  }
  const double mean = gain_sum / 5.0;
  return {mean >= 0.02, "t3 with-T2 vs without, relative gains per seed [" + per_seed +
                            "], mean " + fmt(mean, 4) + " (need >= 0.02)"};
}

// --------------------------------------------- criterion 6: ownership fuzz

Outcome criterion_6() {
  Rng meta(77);
  long long commits = 0;
  for (int trial = 0; trial < 8; ++trial) {
    SyntheticSpec spec;
    spec.users = 40;
    spec.vocab = 12;
    spec.clusters = 3;
    spec.window = 8;
    spec.history = 14;
    spec.seed = 50 + static_cast<std::uint64_t>(trial);
    const TaskBundle bundle = generate_synthetic_tasks(spec);

    TrainConfig config;
    config.mode = Mode::conure;
    config.hidden = meta.below(2) == 0 ? 8 : 16;
    config.window = 8;
    config.dilation_schedule = {1, 2};
    config.lr_first = 0.01;
    config.lr_later = 0.01;
    config.batch_first = 8;
    config.batch_later = 8;
    config.softmax_ratio = 1.0;
    config.train_steps = 4;
    config.retrain_steps = 3;
    config.eval_every = 2;
    config.split_train = 0.7;
    config.split_val = 0.15;
    config.split_test = 0.15;
    config.seed = spec.seed;
    config.validate();
    Run run = make_run(config, static_cast<int>(bundle.items.size()));

    const int tasks = 2 + static_cast<int>(meta.below(2));
    std::map<std::string, std::vector<std::int16_t>> owners_before;
    for (int task_id = 1; task_id <= tasks; ++task_id) {
      const double q_options[] = {0.0, 0.3, 0.5, 0.7};
      const double q = q_options[meta.below(4)];
      const TaskData& part = bundle.task(task_id - 1);

      run_task_training(run, bundle, task_id, part.kind, part.label_count, q, nullptr);
      std::map<std::string, std::int64_t> candidates_before;
      for (const std::string& name : run.ownership.tensor_names()) {
        candidates_before[name] =
            static_cast<std::int64_t>(run.ownership.free_indices(name).size());
        owners_before[name] = run.ownership.owners(name);
      }
      run_prune(run, task_id);
      for (const PruneDecision::TensorDecision& d : run.pending_prune.tensors) {
        if (d.candidates != candidates_before.at(d.name)) {
          return {false, d.name + ": decision candidates " + std::to_string(d.candidates) +
                             " != free count " + std::to_string(candidates_before.at(d.name))};
        }
        const auto expected = std::llround(q * static_cast<double>(d.candidates));
        if (static_cast<std::int64_t>(d.freed.size()) != expected) {
          return {false, d.name + ": freed " + std::to_string(d.freed.size()) +
                             " != round(Q*h) = " + std::to_string(expected)};
        }
        const Tensor& values = tensor_by_name(run.model, d.name);
        for (const std::int64_t idx : d.freed) {
          if (values.data[static_cast<std::size_t>(idx)] != 0.0) {
            return {false, d.name + ": freed cell " + std::to_string(idx) + " not zeroed"};
          }
        }
      }
      run_retrain(run, bundle, task_id, nullptr);
      run_commit(run, task_id);
      ++commits;

      verify_ownership(run.ownership, run.registry);
      for (const std::string& name : run.ownership.tensor_names()) {
        const std::vector<std::int16_t>& owners = run.ownership.owners(name);
        // monotone: committed cells never change hands
        const std::vector<std::int16_t>& before = owners_before.at(name);
        for (std::size_t i = 0; i < owners.size(); ++i) {
          if (before[i] != OwnershipMap::kFree && owners[i] != before[i]) {
            return {false, name + ": cell " + std::to_string(i) + " changed owner " +
                               std::to_string(before[i]) + " -> " + std::to_string(owners[i])};
          }
        }
        // partition: every cell is free or owned by exactly one committed task
        std::int64_t counted = run.ownership.count(name, OwnershipMap::kFree);
        for (int t = 1; t <= task_id; ++t) counted += run.ownership.count(name, t);
        if (counted != static_cast<std::int64_t>(owners.size())) {
          return {false, name + ": owner partition covers " + std::to_string(counted) + "/" +
                             std::to_string(owners.size()) + " cells"};
        }
      }
    }
  }
  return {true, "8 randomized lifecycles, " + std::to_string(commits) +
                    " commits: disjoint, monotone, round(Q*h) exact, counts conserved"};
}

// ------------------------------------------ criterion 7: oracle equality

Tensor conv_oracle(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                   int dilation) {
  const int n = input.dim(0), fi = input.dim(1);
  const int k = kernel.dim(0), fo = kernel.dim(2);
  Tensor out = Tensor::zeros({n, fo});
  for (int t = 0; t < n; ++t) {
    for (int o = 0; o < fo; ++o) {
      double acc = bias.data[static_cast<std::size_t>(o)];
      for (int j = 0; j < k; ++j) {
        const int s = t - (k - 1 - j) * dilation;
        if (s < 0) continue;
        for (int i = 0; i < fi; ++i) {
          acc += input.at(s, i) * kernel.data[(static_cast<std::size_t>(j) * fi + i) * fo + o];
        }
      }
      out.at(t, o) = acc;
    }
  }
  return out;
}

double mrr_oracle(const std::vector<double>& scores, int target, int n) {
  int rank = 1;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    const int id = static_cast<int>(j);
    if (id == target) continue;
    if (scores[j] > scores[static_cast<std::size_t>(target)]) ++rank;
    if (scores[j] == scores[static_cast<std::size_t>(target)] && id < target) ++rank;
  }
  return rank <= n ? 1.0 / rank : 0.0;
}

Outcome criterion_7() {
  Rng rng(29);

  // dilated causal conv against the nested-loop oracle
  for (const int dilation : {1, 2, 4}) {
    const Tensor x = random_tensor(rng, {10, 4});
    const Tensor k = random_tensor(rng, {3, 4, 5});
    const Tensor b = random_tensor(rng, {5});
    Tape tape;
    const Tensor& got = tape.value(ops::causal_dilated_conv1d(
        tape, tape.borrow(x), tape.borrow(k), tape.borrow(b), dilation));
    const Tensor want = conv_oracle(x, k, b, dilation);
    for (std::size_t i = 0; i < want.data.size(); ++i) {
      if (std::abs(got.data[i] - want.data[i]) > 1e-12) {
        return {false, "conv mismatch at dilation " + std::to_string(dilation)};
      }
    }
  }

  // mrr against full-sort ranking
  for (int round = 0; round < 500; ++round) {
    const int vocab = 2 + static_cast<int>(rng.below(30));
    std::vector<double> scores(static_cast<std::size_t>(vocab) + 1);
    for (double& s : scores) s = static_cast<double>(rng.below(8));  // force ties
    scores[0] = 1e9;
    const int target = 1 + static_cast<int>(rng.below(vocab));
    const int n = 1 + static_cast<int>(rng.below(10));
    if (mrr_at_n(scores, target, n) != mrr_oracle(scores, target, n)) {
      return {false, "mrr mismatch on round " + std::to_string(round)};
    }
  }

  // prune mask against exhaustive sort
  for (int round = 0; round < 200; ++round) {
    const int size = 10 + static_cast<int>(rng.below(50));
    Tensor values = random_tensor(rng, {size});
    for (double& v : values.data) {
      if (rng.below(3) == 0) v = 0.25;  // magnitude ties
    }
    std::vector<std::int64_t> candidates;
    for (int i = 0; i < size; ++i) {
      if (rng.below(3) != 0) candidates.push_back(i);
    }
    const double q = rng.uniform01() * 0.99;
    const auto decision = compute_prune_mask("w", values, candidates, q);
    std::vector<std::int64_t> want = candidates;
    std::stable_sort(want.begin(), want.end(), [&](std::int64_t a, std::int64_t b) {
      const double ma = std::abs(values.data[static_cast<std::size_t>(a)]);
      const double mb = std::abs(values.data[static_cast<std::size_t>(b)]);
      if (ma != mb) return ma < mb;
      return a < b;
    });
    want.resize(static_cast<std::size_t>(
        std::llround(q * static_cast<double>(candidates.size()))));
    std::sort(want.begin(), want.end());
    if (decision.freed != want) {
      return {false, "prune mask mismatch on round " + std::to_string(round)};
    }
  }

  // popularity sampler against the closed-form distribution. The frequency
  // table is indexed by label id; slot 0 is the reserved pad.
  const int labels = 40;
  std::vector<long long> freqs(static_cast<std::size_t>(labels) + 1, 0);
  for (int id = 1; id <= labels; ++id) freqs[static_cast<std::size_t>(id)] = 1 + rng.below(100);
  const PopularitySampler sampler(freqs, 0.3);
  double mass = 0.0;
  std::vector<double> expected(static_cast<std::size_t>(labels) + 1, 0.0);
  double norm = 0.0;
  for (int id = 1; id <= labels; ++id) {
    norm += std::pow(static_cast<double>(freqs[static_cast<std::size_t>(id)]), 0.3);
  }
  for (int id = 1; id <= labels; ++id) {
    expected[static_cast<std::size_t>(id)] =
        std::pow(static_cast<double>(freqs[static_cast<std::size_t>(id)]), 0.3) / norm;
    if (std::abs(sampler.probability(id) - expected[static_cast<std::size_t>(id)]) > 1e-12) {
      return {false, "sampler probability(" + std::to_string(id) + ") off closed form"};
    }
    mass += sampler.probability(id);
  }
  if (std::abs(mass - 1.0) > 1e-9) return {false, "sampler mass " + fmt(mass)};
  std::vector<long long> hits(static_cast<std::size_t>(labels) + 1, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++hits[static_cast<std::size_t>(sampler.sample(rng))];
  double worst_gap = 0.0;
  for (int id = 1; id <= labels; ++id) {
    const double emp = static_cast<double>(hits[static_cast<std::size_t>(id)]) / draws;
    worst_gap = std::max(worst_gap, std::abs(emp - expected[static_cast<std::size_t>(id)]));
  }
  if (worst_gap >= 0.01) {
    return {false, "sampler empirical gap " + fmt(worst_gap) + " >= 0.01 on 100k draws"};
  }
  return {true, "conv, mrr (500 rounds), prune mask (200 rounds), sampler (100k draws, gap " +
                    fmt(worst_gap, 3) + ") all match their oracles"};
}

// ------------------------------------------- criterion 8: pipeline smoke

Outcome criterion_8(const fs::path& scratch) {
  SyntheticSpec spec = desk_spec();
  spec.rho = 0.9;
  spec.seed = 77;
  const fs::path ratings = scratch / "ratings.dat";
  write_synthetic_ratings(spec, ratings.string());
  const ParseReport parsed = parse_interactions(ratings.string());
  if (parsed.records.empty()) return {false, "ingest produced no records"};
  DeriveOptions opt;
  opt.window = 16;
  const TaskBundle bundle = derive_ml_tasks(parsed.records, opt);

  TrainConfig config = desk_config(Mode::conure);
  Run run = make_run(config, static_cast<int>(bundle.items.size()));
  run_full_task(run, bundle, 1, bundle.t1.kind, bundle.t1.label_count, 0.5, nullptr);
  const Run after_t1 = run;
  run_full_task(run, bundle, 2, bundle.t2.kind, bundle.t2.label_count, 0.5, nullptr);
  const Run after_t2 = run;
  // t3 runs data- and budget-starved so the transfer comparison below has
  // headroom; the baseline gets the identical regime
  run.config.split_train = 0.20;
  run.config.split_val = 0.15;
  run.config.split_test = 0.65;
  run.config.train_steps = 80;
  run_full_task(run, bundle, 3, bundle.t3.kind, bundle.t3.label_count, 0.0, nullptr);

  std::vector<SplitData> splits;
  for (int position = 0; position < 3; ++position) {
    splits.push_back(task_split(bundle, position, run.config));
  }
  std::vector<const TaskData*> tests;
  for (const SplitData& s : splits) tests.push_back(&s.test);
  const std::vector<AuditSnapshot> snapshots = {
      {&after_t1.model, &after_t1.registry, &after_t1.ownership},
      {&after_t2.model, &after_t2.registry, &after_t2.ownership},
      {&run.model, &run.registry, &run.ownership},
  };
  const std::vector<AuditEntry> table =
      forgetting_audit(snapshots, bundle, tests, run.config.mrr_n);
  for (const AuditEntry& e : table) {
    if (e.delta != 0.0) {
      return {false, "audit: task " + std::to_string(e.task_id) + " delta " + fmt(e.delta) +
                         " at checkpoint " + std::to_string(e.checkpoint)};
    }
  }

  const double conure_t3 = eval_split(run, bundle, 3, "test").value;

  // fresh-model baseline: sinmo trained on t3 alone, same budget, same split
  TrainConfig base_config = desk_config(Mode::sinmo);
  base_config.seed = config.seed + 2ull * 1000003ull;  // t3 sits at position 0
  base_config.split_train = 0.20;
  base_config.split_val = 0.15;
  base_config.split_test = 0.65;
  base_config.train_steps = 80;
  TaskBundle alt = bundle;
  alt.t1 = bundle.t3;
  Run baseline = make_run(base_config, static_cast<int>(bundle.items.size()));
  run_full_task(baseline, alt, 3, bundle.t3.kind, bundle.t3.label_count, 0.0, nullptr);
  const double sinmo_t3 = eval_split(baseline, alt, 3, "test").value;

  const bool pass = conure_t3 >= sinmo_t3;
  return {pass, "ingest " + std::to_string(parsed.records.size()) + " ratings; audit deltas all 0 (" +
                    std::to_string(table.size()) + " rows); t3 mrr@5 conure " + fmt(conure_t3) +
                    " vs fresh sinmo " + fmt(sinmo_t3)};
}

// -------------------------------- criterion 9: determinism & persistence

Outcome criterion_9(const fs::path& scratch) {
  SyntheticSpec spec;
  spec.users = 60;
  spec.vocab = 16;
  spec.clusters = 4;
  spec.window = 8;
  spec.history = 14;
  spec.seed = 13;
  const TaskBundle bundle = generate_synthetic_tasks(spec);

  TrainConfig config;
  config.mode = Mode::conure;
  config.hidden = 16;
  config.window = 8;
  config.dilation_schedule = {1, 2};
  config.lr_first = 0.01;
  config.batch_first = 8;
  config.softmax_ratio = 1.0;
  config.train_steps = 30;
  config.retrain_steps = 20;
  config.eval_every = 10;
  config.split_train = 0.7;
  config.split_val = 0.15;
  config.split_test = 0.15;
  config.seed = 21;
  config.validate();

  auto session = [&]() {
    Run run = make_run(config, static_cast<int>(bundle.items.size()));
    run_full_task(run, bundle, 1, bundle.t1.kind, bundle.t1.label_count, 0.5, nullptr);
    return run;
  };
  const Run a = session();
  const Run b = session();
  const fs::path path_a = scratch / "a.ckpt";
  const fs::path path_b = scratch / "b.ckpt";
  save_checkpoint(a, path_a.string());
  save_checkpoint(b, path_b.string());

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const std::string bytes_a = slurp(path_a);
  if (bytes_a.empty() || bytes_a != slurp(path_b)) {
    return {false, "two identical sessions produced different checkpoint bytes"};
  }

  const double before = eval_split(a, bundle, 1, "test").value;
  const Run loaded = load_checkpoint(path_a.string());
  const double after = eval_split(loaded, bundle, 1, "test").value;
  if (std::memcmp(&before, &after, sizeof(double)) != 0) {
    return {false, "metric changed across round trip: " + fmt(before) + " vs " + fmt(after)};
  }
  const fs::path path_c = scratch / "c.ckpt";
  save_checkpoint(loaded, path_c.string());
  if (slurp(path_c) != bytes_a) {
    return {false, "save(load(checkpoint)) bytes differ from the original"};
  }
  return {true, "identical sessions byte-identical (" + std::to_string(bytes_a.size()) +
                    " bytes); round trip preserves metrics and bytes exactly"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int number;
    std::string name;
    std::function<Outcome()> run;
  };
  const fs::path scratch = fs::temp_directory_path() / "conure_acceptance";
  fs::create_directories(scratch);

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", criterion_1},
      {2, "forgetting-free exactness", criterion_2},
      {3, "forgetting demonstration", criterion_3},
      {4, "prune-and-recover", criterion_4},
      {5, "positive sequential transfer", criterion_5},
      {6, "ownership algebra", criterion_6},
      {7, "oracle equivalence", criterion_7},
      {8, "pipeline smoke", [&] { return criterion_8(scratch); }},
      {9, "determinism & persistence", [&] { return criterion_9(scratch); }},
  };

  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  int ran = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && only.count(c.number) == 0) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!outcome.pass) ++failures;
    std::cout << "criterion " << c.number << ' ' << (outcome.pass ? "PASS" : "FAIL") << "  "
              << c.name << " — " << outcome.detail << "  [" << fmt(seconds, 3) << "s]\n";
  }
  std::cout << "acceptance: " << (ran - failures) << '/' << ran << " criteria passed\n";
  fs::remove_all(scratch);
  return failures;
}
