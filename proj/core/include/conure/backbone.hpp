#pragma once

#include <functional>
#include <string>
#include <vector>

#include "conure/ops.hpp"
#include "conure/rng.hpp"
#include "conure/tape.hpp"

namespace conure {

enum class BackboneKind { tcn, attention };

BackboneKind backbone_kind_from_string(const std::string& s);
std::string to_string(BackboneKind kind);

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

// Kernel [k x f x f]; dilation comes from the backbone schedule.
struct ConvLayerParams {
  Tensor kernel;
  Tensor bias;
};

struct TcnBlockParams {
  LayerNormParams ln1;
  LayerNormParams ln2;
  ConvLayerParams conv1;
  ConvLayerParams conv2;
};

// Single-head causal attention followed by a position-wise feed-forward,
// both pre-norm with residual connections. Projections carry no bias; the
// feed-forward does.
struct AttentionBlockParams {
  LayerNormParams ln1;
  LayerNormParams ln2;
  Tensor query;
  Tensor key;
  Tensor value;
  Tensor out;
  Tensor ffn1_weight;
  Tensor ffn1_bias;
  Tensor ffn2_weight;
  Tensor ffn2_bias;
};

struct BackboneParams {
  BackboneKind kind = BackboneKind::tcn;
  int hidden = 32;
  int window = 20;
  int kernel_width = 3;
  // One entry per conv layer, two layers per block.
  std::vector<int> dilation_schedule;
  // Row 0 is the pad item; real items start at 1.
  Tensor embedding;
  // Attention variant only: learned, [window x hidden].
  Tensor position_embedding;
  std::vector<TcnBlockParams> tcn_blocks;
  std::vector<AttentionBlockParams> attn_blocks;

  int block_count() const {
    return kind == BackboneKind::tcn ? static_cast<int>(tcn_blocks.size())
                                     : static_cast<int>(attn_blocks.size());
  }
  int vocab_rows() const { return embedding.dim(0); }
};

// One prediction head per task; never shared, never pruned. Column 0 of the
// label space is the reserved pad/inert column.
struct TaskHead {
  int task_id = 0;
  Tensor weight;  // [hidden x (|Y|+1)]
  Tensor bias;    // [(|Y|+1)]
};

struct BackboneShape {
  BackboneKind kind = BackboneKind::tcn;
  int vocab = 0;  // real item count |X|; the table gets vocab+1 rows
  int hidden = 32;
  int window = 20;
  int kernel_width = 3;
  std::vector<int> dilation_schedule = {1, 2, 4, 8, 1, 2, 4, 8};
  int attention_blocks = 2;
};

// Seeded initialization; tensors are drawn in canonical enumeration order so
// a fixed seed reproduces the model exactly.
BackboneParams init_backbone(const BackboneShape& shape, Rng& rng);
TaskHead init_head(int task_id, int label_count, int hidden, Rng& rng);

// Decides how a named parameter lands on a tape: borrowed frozen, borrowed
// trainable, or replaced by a composed/masked expression. The trainer and
// the evaluator supply different binders.
using Binder = std::function<Var(Tape&, const std::string& name, const Tensor& value)>;

// Borrows every tensor with requires_grad = false (plain inference over the
// stored values).
Binder frozen_binder();

struct BoundLayerNorm {
  Var gain;
  Var bias;
};

struct BoundTcnBlock {
  BoundLayerNorm ln1;
  BoundLayerNorm ln2;
  Var conv1_kernel;
  Var conv1_bias;
  Var conv2_kernel;
  Var conv2_bias;
};

struct BoundAttnBlock {
  BoundLayerNorm ln1;
  BoundLayerNorm ln2;
  Var query;
  Var key;
  Var value;
  Var out;
  Var ffn1_weight;
  Var ffn1_bias;
  Var ffn2_weight;
  Var ffn2_bias;
};

struct BoundBackbone {
  BackboneKind kind = BackboneKind::tcn;
  int hidden = 0;
  int window = 0;
  int kernel_width = 0;
  std::vector<int> dilation_schedule;
  Var embedding;
  Var position_embedding;
  std::vector<BoundTcnBlock> tcn_blocks;
  std::vector<BoundAttnBlock> attn_blocks;
};

struct BoundHead {
  Var weight;
  Var bias;
};

// Places every backbone tensor on the tape through the binder, using the
// canonical names ("embedding", "block0.conv1.kernel", ...). An optional
// prefix scopes per-task backbone clones ("task2.embedding", ...).
BoundBackbone bind_backbone(Tape& tape, const BackboneParams& params, const Binder& binder,
                            const std::string& prefix = "");
BoundHead bind_head(Tape& tape, const TaskHead& head, const Binder& binder);

// E [n x hidden] plus the last-position vector [1 x hidden].
struct Encoding {
  Var states;
  Var last;
};

Var residual_block_forward(Tape& tape, const BoundTcnBlock& block, Var input, int dilation1,
                           int dilation2);
Var self_attention_block_forward(Tape& tape, const BoundAttnBlock& block, Var input);

// Embedding lookup, blocks in order, Encoding out. ids must fill the window
// (the data layer left-pads with the reserved id 0).
Encoding encode_sequence(Tape& tape, const BoundBackbone& backbone, const std::vector<int>& ids);

// Affine scores over the head's label space: [1 x (|Y|+1)].
Var predict_scores(Tape& tape, const BoundHead& head, Var g_last);

// Visits every tensor in the exact order (and with the exact names) that
// bind_backbone binds them. The checkpoint writer, the optimizer, and the
// ownership map all key off this enumeration.
void for_each_tensor(BackboneParams& params, const std::string& prefix,
                     const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_tensor(const BackboneParams& params, const std::string& prefix,
                     const std::function<void(const std::string&, const Tensor&)>& fn);
void for_each_tensor(TaskHead& head, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_tensor(const TaskHead& head,
                     const std::function<void(const std::string&, const Tensor&)>& fn);

// Conv kernels for the tcn kind; projection and feed-forward weights for the
// attention kind. The embedding joins only under embedding-pruning mode.
// Layer norms, biases, and heads never prune.
std::vector<std::string> prunable_tensor_names(const BackboneParams& params,
                                               bool include_embedding);

}  // namespace conure
