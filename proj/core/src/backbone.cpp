#include "conure/backbone.hpp"

#include <cmath>

#include "conure/errors.hpp"

namespace conure {

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "tcn") return BackboneKind::tcn;
  if (s == "attention") return BackboneKind::attention;
  throw ConfigError("unknown backbone kind '" + s + "' (expected tcn or attention)");
}

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::tcn ? "tcn" : "attention";
}

namespace {

Tensor normal_tensor(Rng& rng, std::vector<int> shape, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

LayerNormParams init_layer_norm(int f) {
  return LayerNormParams{Tensor::full({f}, 1.0), Tensor::zeros({f})};
}

}  // namespace

BackboneParams init_backbone(const BackboneShape& shape, Rng& rng) {
  if (shape.vocab < 1) throw ConfigError("backbone needs a positive item vocabulary");
  if (shape.hidden < 1) throw ConfigError("backbone hidden size must be positive");
  if (shape.window < 1) throw ConfigError("backbone window must be positive");
  if (shape.kernel_width < 1) throw ConfigError("backbone kernel width must be positive");
  BackboneParams p;
  p.kind = shape.kind;
  p.hidden = shape.hidden;
  p.window = shape.window;
  p.kernel_width = shape.kernel_width;
  const int f = shape.hidden;
  p.embedding = normal_tensor(rng, {shape.vocab + 1, f}, 0.1);
  if (shape.kind == BackboneKind::tcn) {
    if (shape.dilation_schedule.empty() || shape.dilation_schedule.size() % 2 != 0) {
      throw ConfigError("dilation schedule needs an even, positive number of entries (two conv layers per block)");
    }
    for (int d : shape.dilation_schedule) {
      if (d < 1) throw ConfigError("dilations must be positive");
    }
    p.dilation_schedule = shape.dilation_schedule;
    const int blocks = static_cast<int>(shape.dilation_schedule.size()) / 2;
    const double kstd = std::sqrt(2.0 / (shape.kernel_width * f));
    for (int j = 0; j < blocks; ++j) {
      TcnBlockParams b;
      b.ln1 = init_layer_norm(f);
      b.conv1 = ConvLayerParams{normal_tensor(rng, {shape.kernel_width, f, f}, kstd),
                                Tensor::zeros({f})};
      b.ln2 = init_layer_norm(f);
      b.conv2 = ConvLayerParams{normal_tensor(rng, {shape.kernel_width, f, f}, kstd),
                                Tensor::zeros({f})};
      p.tcn_blocks.push_back(std::move(b));
    }
  } else {
    if (shape.attention_blocks < 1) throw ConfigError("attention backbone needs at least one block");
    p.position_embedding = normal_tensor(rng, {shape.window, f}, 0.1);
    const double wstd = std::sqrt(1.0 / f);
    for (int j = 0; j < shape.attention_blocks; ++j) {
      AttentionBlockParams b;
      b.ln1 = init_layer_norm(f);
      b.query = normal_tensor(rng, {f, f}, wstd);
      b.key = normal_tensor(rng, {f, f}, wstd);
      b.value = normal_tensor(rng, {f, f}, wstd);
      b.out = normal_tensor(rng, {f, f}, wstd);
      b.ln2 = init_layer_norm(f);
      b.ffn1_weight = normal_tensor(rng, {f, f}, wstd);
      b.ffn1_bias = Tensor::zeros({f});
      b.ffn2_weight = normal_tensor(rng, {f, f}, wstd);
      b.ffn2_bias = Tensor::zeros({f});
      p.attn_blocks.push_back(std::move(b));
    }
  }
  return p;
}

TaskHead init_head(int task_id, int label_count, int hidden, Rng& rng) {
  if (label_count < 1) throw ConfigError("head needs a positive label count");
  TaskHead h;
  h.task_id = task_id;
  h.weight = normal_tensor(rng, {hidden, label_count + 1}, std::sqrt(1.0 / hidden));
  h.bias = Tensor::zeros({label_count + 1});
  return h;
}

Binder frozen_binder() {
  return [](Tape& tape, const std::string&, const Tensor& value) {
    return tape.borrow(value, false);
  };
}

namespace {

BoundLayerNorm bind_layer_norm(Tape& tape, const LayerNormParams& ln, const Binder& binder,
                               const std::string& name) {
  return BoundLayerNorm{binder(tape, name + ".gain", ln.gain), binder(tape, name + ".bias", ln.bias)};
}

}  // namespace

BoundBackbone bind_backbone(Tape& tape, const BackboneParams& params, const Binder& binder,
                            const std::string& prefix) {
  BoundBackbone b;
  b.kind = params.kind;
  b.hidden = params.hidden;
  b.window = params.window;
  b.kernel_width = params.kernel_width;
  b.dilation_schedule = params.dilation_schedule;
  b.embedding = binder(tape, prefix + "embedding", params.embedding);
  if (params.kind == BackboneKind::attention) {
    b.position_embedding = binder(tape, prefix + "position_embedding", params.position_embedding);
  }
  for (std::size_t j = 0; j < params.tcn_blocks.size(); ++j) {
    const TcnBlockParams& src = params.tcn_blocks[j];
    const std::string base = prefix + "block" + std::to_string(j);
    BoundTcnBlock blk;
    blk.ln1 = bind_layer_norm(tape, src.ln1, binder, base + ".ln1");
    blk.conv1_kernel = binder(tape, base + ".conv1.kernel", src.conv1.kernel);
    blk.conv1_bias = binder(tape, base + ".conv1.bias", src.conv1.bias);
    blk.ln2 = bind_layer_norm(tape, src.ln2, binder, base + ".ln2");
    blk.conv2_kernel = binder(tape, base + ".conv2.kernel", src.conv2.kernel);
    blk.conv2_bias = binder(tape, base + ".conv2.bias", src.conv2.bias);
    b.tcn_blocks.push_back(blk);
  }
  for (std::size_t j = 0; j < params.attn_blocks.size(); ++j) {
    const AttentionBlockParams& src = params.attn_blocks[j];
    const std::string base = prefix + "block" + std::to_string(j);
    BoundAttnBlock blk;
    blk.ln1 = bind_layer_norm(tape, src.ln1, binder, base + ".ln1");
    blk.query = binder(tape, base + ".attn.query", src.query);
    blk.key = binder(tape, base + ".attn.key", src.key);
    blk.value = binder(tape, base + ".attn.value", src.value);
    blk.out = binder(tape, base + ".attn.out", src.out);
    blk.ln2 = bind_layer_norm(tape, src.ln2, binder, base + ".ln2");
    blk.ffn1_weight = binder(tape, base + ".ffn1.weight", src.ffn1_weight);
    blk.ffn1_bias = binder(tape, base + ".ffn1.bias", src.ffn1_bias);
    blk.ffn2_weight = binder(tape, base + ".ffn2.weight", src.ffn2_weight);
    blk.ffn2_bias = binder(tape, base + ".ffn2.bias", src.ffn2_bias);
    b.attn_blocks.push_back(blk);
  }
  return b;
}

BoundHead bind_head(Tape& tape, const TaskHead& head, const Binder& binder) {
  const std::string base = "head" + std::to_string(head.task_id);
  return BoundHead{binder(tape, base + ".weight", head.weight),
                   binder(tape, base + ".bias", head.bias)};
}

Var residual_block_forward(Tape& tape, const BoundTcnBlock& block, Var input, int dilation1,
                           int dilation2) {
  Var h = ops::layer_norm(tape, input, block.ln1.gain, block.ln1.bias);
  h = ops::causal_dilated_conv1d(tape, h, block.conv1_kernel, block.conv1_bias, dilation1);
  h = ops::relu(tape, h);
  h = ops::layer_norm(tape, h, block.ln2.gain, block.ln2.bias);
  h = ops::causal_dilated_conv1d(tape, h, block.conv2_kernel, block.conv2_bias, dilation2);
  h = ops::relu(tape, h);
  return ops::add(tape, h, input);
}

Var self_attention_block_forward(Tape& tape, const BoundAttnBlock& block, Var input) {
  const int f = tape.value(input).dim(1);
  Var a = ops::layer_norm(tape, input, block.ln1.gain, block.ln1.bias);
  Var q = ops::matmul(tape, a, block.query);
  Var k = ops::matmul(tape, a, block.key);
  Var v = ops::matmul(tape, a, block.value);
  Var scores = ops::scale(tape, ops::matmul(tape, q, ops::transpose(tape, k)),
                          1.0 / std::sqrt(static_cast<double>(f)));
  Var context = ops::matmul(tape, ops::causal_softmax(tape, scores), v);
  Var attended = ops::add(tape, ops::matmul(tape, context, block.out), input);
  Var b = ops::layer_norm(tape, attended, block.ln2.gain, block.ln2.bias);
  Var ffn = ops::bias_add(tape, ops::matmul(tape, b, block.ffn1_weight), block.ffn1_bias);
  ffn = ops::relu(tape, ffn);
  ffn = ops::bias_add(tape, ops::matmul(tape, ffn, block.ffn2_weight), block.ffn2_bias);
  return ops::add(tape, ffn, attended);
}

Encoding encode_sequence(Tape& tape, const BoundBackbone& backbone, const std::vector<int>& ids) {
  if (static_cast<int>(ids.size()) != backbone.window) {
    throw DimensionError("encode_sequence: got " + std::to_string(ids.size()) +
                         " ids for window " + std::to_string(backbone.window));
  }
  Var h = ops::embedding_lookup(tape, backbone.embedding, ids);
  if (backbone.kind == BackboneKind::tcn) {
    for (std::size_t j = 0; j < backbone.tcn_blocks.size(); ++j) {
      h = residual_block_forward(tape, backbone.tcn_blocks[j], h,
                                 backbone.dilation_schedule[2 * j],
                                 backbone.dilation_schedule[2 * j + 1]);
    }
  } else {
    h = ops::add(tape, h, backbone.position_embedding);
    for (const BoundAttnBlock& blk : backbone.attn_blocks) {
      h = self_attention_block_forward(tape, blk, h);
    }
  }
  return Encoding{h, ops::row(tape, h, backbone.window - 1)};
}

Var predict_scores(Tape& tape, const BoundHead& head, Var g_last) {
  return ops::bias_add(tape, ops::matmul(tape, g_last, head.weight), head.bias);
}

namespace {

// Shared walker so the const and mutable overloads cannot drift apart.
template <typename Params, typename Fn>
void walk_backbone(Params& params, const std::string& prefix, const Fn& fn) {
  fn(prefix + "embedding", params.embedding);
  if (params.kind == BackboneKind::attention) {
    fn(prefix + "position_embedding", params.position_embedding);
  }
  for (std::size_t j = 0; j < params.tcn_blocks.size(); ++j) {
    auto& blk = params.tcn_blocks[j];
    const std::string base = prefix + "block" + std::to_string(j);
    fn(base + ".ln1.gain", blk.ln1.gain);
    fn(base + ".ln1.bias", blk.ln1.bias);
    fn(base + ".conv1.kernel", blk.conv1.kernel);
    fn(base + ".conv1.bias", blk.conv1.bias);
    fn(base + ".ln2.gain", blk.ln2.gain);
    fn(base + ".ln2.bias", blk.ln2.bias);
    fn(base + ".conv2.kernel", blk.conv2.kernel);
    fn(base + ".conv2.bias", blk.conv2.bias);
  }
  for (std::size_t j = 0; j < params.attn_blocks.size(); ++j) {
    auto& blk = params.attn_blocks[j];
    const std::string base = prefix + "block" + std::to_string(j);
    fn(base + ".ln1.gain", blk.ln1.gain);
    fn(base + ".ln1.bias", blk.ln1.bias);
    fn(base + ".attn.query", blk.query);
    fn(base + ".attn.key", blk.key);
    fn(base + ".attn.value", blk.value);
    fn(base + ".attn.out", blk.out);
    fn(base + ".ln2.gain", blk.ln2.gain);
    fn(base + ".ln2.bias", blk.ln2.bias);
    fn(base + ".ffn1.weight", blk.ffn1_weight);
    fn(base + ".ffn1.bias", blk.ffn1_bias);
    fn(base + ".ffn2.weight", blk.ffn2_weight);
    fn(base + ".ffn2.bias", blk.ffn2_bias);
  }
}

}  // namespace

void for_each_tensor(BackboneParams& params, const std::string& prefix,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
  walk_backbone(params, prefix, fn);
}

void for_each_tensor(const BackboneParams& params, const std::string& prefix,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  walk_backbone(params, prefix, fn);
}

void for_each_tensor(TaskHead& head, const std::function<void(const std::string&, Tensor&)>& fn) {
  const std::string base = "head" + std::to_string(head.task_id);
  fn(base + ".weight", head.weight);
  fn(base + ".bias", head.bias);
}

void for_each_tensor(const TaskHead& head,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  const std::string base = "head" + std::to_string(head.task_id);
  fn(base + ".weight", head.weight);
  fn(base + ".bias", head.bias);
}

std::vector<std::string> prunable_tensor_names(const BackboneParams& params,
                                               bool include_embedding) {
  std::vector<std::string> names;
  if (include_embedding) names.push_back("embedding");
  for (std::size_t j = 0; j < params.tcn_blocks.size(); ++j) {
    const std::string base = "block" + std::to_string(j);
    names.push_back(base + ".conv1.kernel");
    names.push_back(base + ".conv2.kernel");
  }
  for (std::size_t j = 0; j < params.attn_blocks.size(); ++j) {
    const std::string base = "block" + std::to_string(j);
    names.push_back(base + ".attn.query");
    names.push_back(base + ".attn.key");
    names.push_back(base + ".attn.value");
    names.push_back(base + ".attn.out");
    names.push_back(base + ".ffn1.weight");
    names.push_back(base + ".ffn2.weight");
  }
  return names;
}

}  // namespace conure
