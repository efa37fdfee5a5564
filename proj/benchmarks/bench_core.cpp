#include <benchmark/benchmark.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "conure/backbone.hpp"
#include "conure/checkpoint.hpp"
#include "conure/continual.hpp"
#include "conure/losses.hpp"
#include "conure/metrics.hpp"
#include "conure/model.hpp"
#include "conure/optimizer.hpp"
#include "conure/rng.hpp"
#include "conure/tape.hpp"
#include "conure/trainer.hpp"

using namespace conure;

namespace {

// desk-scale encoder: 1000-item catalog, window 20, hidden 64, 4 conv blocks
BackboneShape bench_shape(BackboneKind kind) {
  BackboneShape shape;
  shape.kind = kind;
  shape.vocab = 1000;
  shape.hidden = 64;
  shape.window = 20;
  shape.dilation_schedule = {1, 2, 4, 8};
  shape.attention_blocks = 2;
  return shape;
}

struct Fixture {
  BackboneParams params;
  TaskHead head;
  std::vector<int> ids;

  explicit Fixture(BackboneKind kind) {
    Rng rng(1);
    const BackboneShape shape = bench_shape(kind);
    params = init_backbone(shape, rng);
    head = init_head(1, shape.vocab, shape.hidden, rng);
    for (int i = 0; i < shape.window; ++i) {
      ids.push_back(1 + static_cast<int>(rng.below(shape.vocab)));
    }
  }
};

Fixture& tcn_fixture() {
  static Fixture f(BackboneKind::tcn);
  return f;
}

Fixture& attention_fixture() {
  static Fixture f(BackboneKind::attention);
  return f;
}

}  // namespace

static void BM_EncodeTcn(benchmark::State& state) {
  Fixture& f = tcn_fixture();
  for (auto _ : state) {
    Tape tape;
    const BoundBackbone bb = bind_backbone(tape, f.params, frozen_binder());
    const Encoding enc = encode_sequence(tape, bb, f.ids);
    benchmark::DoNotOptimize(tape.value(enc.last).data[0]);
  }
}
BENCHMARK(BM_EncodeTcn);

static void BM_EncodeAttention(benchmark::State& state) {
  Fixture& f = attention_fixture();
  for (auto _ : state) {
    Tape tape;
    const BoundBackbone bb = bind_backbone(tape, f.params, frozen_binder());
    const Encoding enc = encode_sequence(tape, bb, f.ids);
    benchmark::DoNotOptimize(tape.value(enc.last).data[0]);
  }
}
BENCHMARK(BM_EncodeAttention);

// one full training example: encode, sampled-softmax loss, backward sweep
static void BM_TrainStepTcn(benchmark::State& state) {
  Fixture& f = tcn_fixture();
  Rng rng(2);
  const std::vector<int> candidates = sample_softmax_candidates(1000, 0.02, rng);
  const Binder trainable = [](Tape& t, const std::string&, const Tensor& v) {
    return t.borrow(v, true);
  };
  for (auto _ : state) {
    Tape tape;
    const BoundBackbone bb = bind_backbone(tape, f.params, trainable);
    const BoundHead head = bind_head(tape, f.head, trainable);
    const Encoding enc = encode_sequence(tape, bb, f.ids);
    const Var loss = autoregressive_loss(tape, enc.states, head, f.ids, candidates);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.value(loss).data[0]);
  }
}
BENCHMARK(BM_TrainStepTcn);

// the same step through ownership-composed weights: the price of masking
static void BM_TrainStepComposed(benchmark::State& state) {
  Fixture& f = tcn_fixture();
  Rng rng(2);
  const std::vector<int> candidates = sample_softmax_candidates(1000, 0.02, rng);

  OwnershipMap ownership;
  std::map<std::string, ComposedMasks> masks;
  for_each_tensor(f.params, "", [&](const std::string& name, Tensor& t) {
    if (name.find("conv") != std::string::npos && name.find("kernel") != std::string::npos) {
      ownership.register_tensor(name, t.numel());
      masks.emplace(name, build_composed_masks(ownership, name, t.shape));
    }
  });
  const Binder composed = [&](Tape& t, const std::string& name, const Tensor& v) {
    const auto it = masks.find(name);
    if (it == masks.end()) return t.borrow(v, true);
    return compose_task_weights(t, v, it->second);
  };
  for (auto _ : state) {
    Tape tape;
    const BoundBackbone bb = bind_backbone(tape, f.params, composed);
    const BoundHead head = bind_head(tape, f.head, composed);
    const Encoding enc = encode_sequence(tape, bb, f.ids);
    const Var loss = autoregressive_loss(tape, enc.states, head, f.ids, candidates);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.value(loss).data[0]);
  }
}
BENCHMARK(BM_TrainStepComposed);

static void BM_AdamStep(benchmark::State& state) {
  Rng rng(3);
  Tensor param = Tensor::zeros({256, 256});
  for (double& v : param.data) v = rng.normal(0.0, 0.1);
  std::map<std::string, Tensor> grads;
  Tensor g = param;
  for (double& v : g.data) v = rng.normal(0.0, 0.01);
  grads.emplace("w", std::move(g));
  AdamState adam;
  const std::vector<TrainableTensor> params = {{"w", &param, nullptr}};
  for (auto _ : state) {
    adam_step(adam, params, grads, 0.001);
    benchmark::DoNotOptimize(param.data[0]);
  }
}
BENCHMARK(BM_AdamStep);

static void BM_PruneMask(benchmark::State& state) {
  Rng rng(4);
  Tensor values = Tensor::zeros({3, 256, 256});
  for (double& v : values.data) v = rng.normal(0.0, 0.1);
  std::vector<std::int64_t> candidates;
  for (std::int64_t i = 0; i < values.numel(); i += 2) candidates.push_back(i);
  for (auto _ : state) {
    const auto decision = compute_prune_mask("w", values, candidates, 0.6);
    benchmark::DoNotOptimize(decision.freed.size());
  }
}
BENCHMARK(BM_PruneMask);

static void BM_MrrAtN(benchmark::State& state) {
  Rng rng(5);
  std::vector<double> scores(1001);
  for (double& s : scores) s = rng.normal(0.0, 1.0);
  scores[0] = 1e9;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mrr_at_n(scores, 417, 5));
  }
}
BENCHMARK(BM_MrrAtN);

static void BM_CheckpointSave(benchmark::State& state) {
  TrainConfig config;
  config.hidden = 64;
  config.window = 20;
  config.dilation_schedule = {1, 2, 4, 8};
  config.validate();
  const Run run = make_run(config, 1000);
  const std::string path =
      (std::filesystem::temp_directory_path() / "conure_bench.ckpt").string();
  for (auto _ : state) {
    save_checkpoint(run, path);
  }
  std::filesystem::remove(path);
}
BENCHMARK(BM_CheckpointSave);

BENCHMARK_MAIN();
