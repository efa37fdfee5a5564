#include <cmath>
#include <vector>

#include "conure/backbone.hpp"
#include "conure/errors.hpp"
#include "conure/ops.hpp"
#include "doctest.h"
#include "support/fd_check.hpp"

using namespace conure;
using conure::testing::max_fd_rel_error;
using conure::testing::random_tensor;

namespace {

Var project(Tape& t, Var x, const Tensor& weights) {
  return ops::sum(t, ops::mask_multiply(t, x, weights));
}

// Independent row-wise layer-norm evaluation.
Tensor ln_oracle(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-8) {
  const int n = x.dim(0);
  const int f = x.dim(1);
  Tensor out = Tensor::zeros({n, f});
  for (int r = 0; r < n; ++r) {
    double mean = 0.0;
    for (int c = 0; c < f; ++c) mean += x.at(r, c);
    mean /= f;
    double var = 0.0;
    for (int c = 0; c < f; ++c) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
    var /= f;
    for (int c = 0; c < f; ++c) {
      out.at(r, c) = gain.data[static_cast<std::size_t>(c)] * (x.at(r, c) - mean) /
                         std::sqrt(var + eps) +
                     bias.data[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

Tensor conv_oracle(const Tensor& input, const Tensor& kernel, const Tensor& bias, int dilation) {
  const int n = input.dim(0);
  const int fi = input.dim(1);
  const int k = kernel.dim(0);
  const int fo = kernel.dim(2);
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

Tensor relu_oracle(Tensor x) {
  for (double& v : x.data) v = v > 0.0 ? v : 0.0;
  return x;
}

Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros({a.dim(0), b.dim(1)});
  for (int i = 0; i < a.dim(0); ++i) {
    for (int j = 0; j < b.dim(1); ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.dim(1); ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

BackboneShape small_tcn_shape() {
  BackboneShape s;
  s.kind = BackboneKind::tcn;
  s.vocab = 6;
  s.hidden = 4;
  s.window = 5;
  s.kernel_width = 3;
  s.dilation_schedule = {1, 2};
  return s;
}

void zero_convs(BackboneParams& p) {
  for (TcnBlockParams& b : p.tcn_blocks) {
    for (double& v : b.conv1.kernel.data) v = 0.0;
    for (double& v : b.conv1.bias.data) v = 0.0;
    for (double& v : b.conv2.kernel.data) v = 0.0;
    for (double& v : b.conv2.bias.data) v = 0.0;
  }
}

}  // namespace

TEST_CASE("residual block: zero conv weights give the identity") {
  Rng rng(101);
  BackboneParams p = init_backbone(small_tcn_shape(), rng);
  zero_convs(p);
  Tensor input = random_tensor(rng, {5, 4});
  Tape t;
  BoundBackbone b = bind_backbone(t, p, frozen_binder());
  Var out = residual_block_forward(t, b.tcn_blocks[0], t.leaf(input), 1, 2);
  CHECK(t.value(out).data == input.data);
}

TEST_CASE("residual block: output length equals input length for any n") {
  Rng rng(103);
  BackboneParams p = init_backbone(small_tcn_shape(), rng);
  for (int n : {1, 2, 3, 7}) {
    Tensor input = random_tensor(rng, {n, 4});
    Tape t;
    BoundBackbone b = bind_backbone(t, p, frozen_binder());
    Var out = residual_block_forward(t, b.tcn_blocks[0], t.leaf(input), 1, 2);
    CHECK(t.value(out).dim(0) == n);
    CHECK(t.value(out).dim(1) == 4);
  }
}

TEST_CASE("residual block matches a step-by-step evaluation of its formula") {
  Rng rng(107);
  BackboneShape shape = small_tcn_shape();
  shape.hidden = 2;
  shape.window = 2;
  BackboneParams p = init_backbone(shape, rng);
  Tensor input = random_tensor(rng, {2, 2});

  Tape t;
  BoundBackbone b = bind_backbone(t, p, frozen_binder());
  Var out = residual_block_forward(t, b.tcn_blocks[0], t.leaf(input), 1, 2);

  const TcnBlockParams& blk = p.tcn_blocks[0];
  Tensor h = ln_oracle(input, blk.ln1.gain, blk.ln1.bias);
  h = relu_oracle(conv_oracle(h, blk.conv1.kernel, blk.conv1.bias, 1));
  h = ln_oracle(h, blk.ln2.gain, blk.ln2.bias);
  h = relu_oracle(conv_oracle(h, blk.conv2.kernel, blk.conv2.bias, 2));
  for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += input.data[i];

  for (std::size_t i = 0; i < h.data.size(); ++i) {
    CHECK(t.value(out).data[i] == doctest::Approx(h.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("encode_sequence: identity blocks reproduce the embedding rows") {
  Rng rng(109);
  BackboneParams p = init_backbone(small_tcn_shape(), rng);
  zero_convs(p);
  const std::vector<int> ids{0, 3, 1, 6, 2};
  Tape t;
  Encoding e = encode_sequence(t, bind_backbone(t, p, frozen_binder()), ids);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 4; ++c) {
      CHECK(t.value(e.states).at(r, c) == p.embedding.at(ids[static_cast<std::size_t>(r)], c));
    }
  }
  // g_last is row n-1 of E
  for (int c = 0; c < 4; ++c) {
    CHECK(t.value(e.last).at(0, c) == t.value(e.states).at(4, c));
  }
}

TEST_CASE("encode_sequence: id bounds and window are enforced") {
  Rng rng(113);
  BackboneParams p = init_backbone(small_tcn_shape(), rng);
  Tape t;
  BoundBackbone b = bind_backbone(t, p, frozen_binder());
  CHECK_THROWS_AS(encode_sequence(t, b, {0, 1, 2, 3, 7}), VocabularyError);
  CHECK_THROWS_AS(encode_sequence(t, b, {0, 1, 2}), DimensionError);
}

TEST_CASE("encoder causality: perturbing later ids leaves earlier rows bit-identical") {
  Rng rng(127);
  for (BackboneKind kind : {BackboneKind::tcn, BackboneKind::attention}) {
    BackboneShape shape = small_tcn_shape();
    shape.kind = kind;
    BackboneParams p = init_backbone(shape, rng);
    std::vector<int> ids{3, 1, 4, 1, 5};
    Tape t1;
    Encoding e1 = encode_sequence(t1, bind_backbone(t1, p, frozen_binder()), ids);
    std::vector<int> changed = ids;
    changed[4] = 6;
    Tape t2;
    Encoding e2 = encode_sequence(t2, bind_backbone(t2, p, frozen_binder()), changed);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        CHECK(t1.value(e1.states).at(r, c) == t2.value(e2.states).at(r, c));
      }
    }
    // and the last position does feel the change
    bool any_diff = false;
    for (int c = 0; c < 4; ++c) {
      if (t1.value(e1.last).at(0, c) != t2.value(e2.last).at(0, c)) any_diff = true;
    }
    CHECK(any_diff);
  }
}

TEST_CASE("predict_scores: affine contract") {
  Rng rng(131);
  SUBCASE("zero weight gives the bias") {
    TaskHead h = init_head(2, 3, 4, rng);
    for (double& v : h.weight.data) v = 0.0;
    for (std::size_t i = 0; i < h.bias.data.size(); ++i) h.bias.data[i] = 0.5 * static_cast<double>(i);
    Tensor g = random_tensor(rng, {1, 4});
    Tape t;
    Var scores = predict_scores(t, bind_head(t, h, frozen_binder()), t.leaf(g));
    for (int c = 0; c < 4; ++c) CHECK(t.value(scores).at(0, c) == 0.5 * c);
  }
  SUBCASE("hand-checkable 2x2 instance") {
    TaskHead h;
    h.task_id = 1;
    h.weight = Tensor({2, 3}, {0.0, 1.0, -2.0, 0.0, 0.5, 3.0});
    h.bias = Tensor({3}, {0.0, 0.25, -1.0});
    Tensor g({1, 2}, {2.0, -1.0});
    Tape t;
    Var scores = predict_scores(t, bind_head(t, h, frozen_binder()), t.leaf(g));
    CHECK(t.value(scores).at(0, 1) == doctest::Approx(2.0 * 1.0 - 1.0 * 0.5 + 0.25));
    CHECK(t.value(scores).at(0, 2) == doctest::Approx(2.0 * -2.0 - 1.0 * 3.0 - 1.0));
  }
  SUBCASE("argmax invariant under constant bias shift") {
    Rng local(137);
    TaskHead h = init_head(1, 5, 4, local);
    Tensor g = random_tensor(local, {1, 4});
    Tape t1;
    Var s1 = predict_scores(t1, bind_head(t1, h, frozen_binder()), t1.leaf(g));
    for (double& v : h.bias.data) v += 17.5;
    Tape t2;
    Var s2 = predict_scores(t2, bind_head(t2, h, frozen_binder()), t2.leaf(g));
    int arg1 = 1;
    int arg2 = 1;
    for (int c = 2; c < 6; ++c) {
      if (t1.value(s1).at(0, c) > t1.value(s1).at(0, arg1)) arg1 = c;
      if (t2.value(s2).at(0, c) > t2.value(s2).at(0, arg2)) arg2 = c;
    }
    CHECK(arg1 == arg2);
  }
}

TEST_CASE("head isolation: other tasks' scores ignore a mutated head") {
  Rng rng(139);
  BackboneParams p = init_backbone(small_tcn_shape(), rng);
  TaskHead h1 = init_head(1, 4, 4, rng);
  TaskHead h2 = init_head(2, 3, 4, rng);
  const std::vector<int> ids{1, 2, 3, 4, 5};
  auto score_task1 = [&]() {
    Tape t;
    Encoding e = encode_sequence(t, bind_backbone(t, p, frozen_binder()), ids);
    return t.value(predict_scores(t, bind_head(t, h1, frozen_binder()), e.last)).data;
  };
  const std::vector<double> before = score_task1();
  for (double& v : h2.weight.data) v += 3.0;
  CHECK(score_task1() == before);
}

TEST_CASE("attention: single-position window ignores query/key entirely") {
  Rng rng(149);
  BackboneShape shape;
  shape.kind = BackboneKind::attention;
  shape.vocab = 5;
  shape.hidden = 3;
  shape.window = 1;
  shape.attention_blocks = 1;
  BackboneParams p1 = init_backbone(shape, rng);
  BackboneParams p2 = p1;
  for (double& v : p2.attn_blocks[0].query.data) v *= -3.0;
  for (double& v : p2.attn_blocks[0].key.data) v += 1.0;
  Tape t1;
  Encoding e1 = encode_sequence(t1, bind_backbone(t1, p1, frozen_binder()), {4});
  Tape t2;
  Encoding e2 = encode_sequence(t2, bind_backbone(t2, p2, frozen_binder()), {4});
  CHECK(t1.value(e1.last).data == t2.value(e2.last).data);
}

TEST_CASE("attention block matches an explicit formula evaluation") {
  Rng rng(151);
  BackboneShape shape;
  shape.kind = BackboneKind::attention;
  shape.vocab = 5;
  shape.hidden = 2;
  shape.window = 2;
  shape.attention_blocks = 1;
  BackboneParams p = init_backbone(shape, rng);
  const AttentionBlockParams& blk = p.attn_blocks[0];
  Tensor x = random_tensor(rng, {2, 2});

  Tape t;
  BoundBackbone b = bind_backbone(t, p, frozen_binder());
  Var out = self_attention_block_forward(t, b.attn_blocks[0], t.leaf(x));

  Tensor a = ln_oracle(x, blk.ln1.gain, blk.ln1.bias);
  Tensor q = matmul_oracle(a, blk.query);
  Tensor k = matmul_oracle(a, blk.key);
  Tensor v = matmul_oracle(a, blk.value);
  const double inv = 1.0 / std::sqrt(2.0);
  // row 0 attends only to itself; row 1 softmaxes over both positions
  const double s10 = inv * (q.at(1, 0) * k.at(0, 0) + q.at(1, 1) * k.at(0, 1));
  const double s11 = inv * (q.at(1, 0) * k.at(1, 0) + q.at(1, 1) * k.at(1, 1));
  const double mx = std::max(s10, s11);
  const double w0 = std::exp(s10 - mx);
  const double w1 = std::exp(s11 - mx);
  Tensor ctx = Tensor::zeros({2, 2});
  for (int c = 0; c < 2; ++c) {
    ctx.at(0, c) = v.at(0, c);
    ctx.at(1, c) = (w0 * v.at(0, c) + w1 * v.at(1, c)) / (w0 + w1);
  }
  Tensor attended = matmul_oracle(ctx, blk.out);
  for (std::size_t i = 0; i < attended.data.size(); ++i) attended.data[i] += x.data[i];
  Tensor f = ln_oracle(attended, blk.ln2.gain, blk.ln2.bias);
  f = matmul_oracle(f, blk.ffn1_weight);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) f.at(r, c) += blk.ffn1_bias.data[static_cast<std::size_t>(c)];
  }
  f = relu_oracle(f);
  f = matmul_oracle(f, blk.ffn2_weight);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) f.at(r, c) += blk.ffn2_bias.data[static_cast<std::size_t>(c)];
  }
  for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] += attended.data[i];

  for (std::size_t i = 0; i < f.data.size(); ++i) {
    CHECK(t.value(out).data[i] == doctest::Approx(f.data[i]).epsilon(1e-10));
  }
}

TEST_CASE("end-to-end finite differences through encoder and head") {
  for (BackboneKind kind : {BackboneKind::tcn, BackboneKind::attention}) {
    Rng rng(157);
    BackboneShape shape = small_tcn_shape();
    shape.kind = kind;
    shape.attention_blocks = 1;
    BackboneParams bp = init_backbone(shape, rng);
    TaskHead head = init_head(1, 3, shape.hidden, rng);
    const std::vector<int> ids{2, 0, 5, 1, 3};
    Tensor weights = random_tensor(rng, {1, 4});

    std::vector<Tensor> params;
    {
      Tape t0;
      Binder collect = [&](Tape& tp, const std::string&, const Tensor& v) {
        params.push_back(v);
        return tp.borrow(v, false);
      };
      bind_backbone(t0, bp, collect);
      bind_head(t0, head, collect);
    }
    auto fwd = [&](Tape& t, const std::vector<Var>& vars) {
      std::size_t i = 0;
      Binder replay = [&](Tape&, const std::string&, const Tensor&) { return vars[i++]; };
      BoundBackbone bb = bind_backbone(t, bp, replay);
      BoundHead bh = bind_head(t, head, replay);
      Encoding e = encode_sequence(t, bb, ids);
      return project(t, predict_scores(t, bh, e.last), weights);
    };
    CHECK(max_fd_rel_error(params, fwd, 1e-5, 1e-9) < 1e-4);
  }
}

TEST_CASE("init determinism: one seed, one model") {
  BackboneShape shape = small_tcn_shape();
  Rng r1(211);
  Rng r2(211);
  BackboneParams a = init_backbone(shape, r1);
  BackboneParams b = init_backbone(shape, r2);
  CHECK(a.embedding.data == b.embedding.data);
  CHECK(a.tcn_blocks[0].conv1.kernel.data == b.tcn_blocks[0].conv1.kernel.data);
  CHECK(a.tcn_blocks[0].conv2.kernel.data == b.tcn_blocks[0].conv2.kernel.data);
}
