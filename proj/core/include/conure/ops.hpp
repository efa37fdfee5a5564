#pragma once

#include <cstdint>
#include <vector>

#include "conure/tape.hpp"

// Differentiable operations. Each records its forward result on the tape
// together with a closure for the reverse sweep. Shapes are validated up
// front; loop orders are fixed so gradients are bit-reproducible.
namespace conure::ops {

// table [V x f], ids in [0, V) -> [n x f]. Duplicate ids scatter-accumulate
// their gradients into the same table row.
Var embedding_lookup(Tape& t, Var table, const std::vector<int>& ids);

// input [n x f_in], kernel [k x f_in x f_out], bias [f_out] -> [n x f_out].
// The input is left-padded internally with (k-1)*dilation zero rows, so
// output position t depends only on input positions <= t.
Var causal_dilated_conv1d(Tape& t, Var input, Var kernel, Var bias, int dilation);

// Per-row normalization: gain * (x - mean) / sqrt(var + epsilon) + bias.
// input [n x f], gain/bias [f].
Var layer_norm(Tape& t, Var input, Var gain, Var bias, double epsilon = 1e-8);

Var relu(Tape& t, Var x);

// a [m x p] * b [p x q] -> [m x q]
Var matmul(Tape& t, Var a, Var b);

Var transpose(Tape& t, Var x);

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double c);

// x [n x m] + bias [m], broadcast over rows.
Var bias_add(Tape& t, Var x, Var bias);

// Elementwise product with a constant 0/1 (or arbitrary) mask. The mask is
// not differentiated through and must outlive the tape.
Var mask_multiply(Tape& t, Var x, const Tensor& mask);

// Forward identity (copy), no gradient path. The second term of the
// composed-weight expression goes through this.
Var stop_gradient(Tape& t, Var x);

// matrix [r x C] with cols -> [r x |cols|]; vector [C] -> [|cols|].
// Duplicate columns scatter-accumulate.
Var gather_cols(Tape& t, Var matrix, const std::vector<int>& cols);

// Per-row affine score against one selected column:
//   out[i] = rows[i,:] . matrix[:, cols[i]] + bias[cols[i]]
// rows [B x f], matrix [f x C], bias [C] (pass Var{} for no bias) -> [B].
Var rows_dot_cols(Tape& t, Var rows, Var matrix, Var bias, const std::vector<int>& cols);

// x [n x f] -> [1 x f]
Var row(Tape& t, Var x, int r);

Var sum(Tape& t, Var x);
Var sum_squares(Tape& t, Var x);

Var log_sigmoid(Tape& t, Var x);

// Mean softmax NLL over rows of logits [B x C]; the softmax runs over
// columns [first_col, C) so a reserved pad column can sit inert at 0.
Var softmax_cross_entropy(Tape& t, Var logits, const std::vector<int>& targets,
                          int first_col = 0);

// Mean NLL where row i's candidate set is {target_i} plus the shared
// candidates behind cand_logits. target_slot[i] gives target_i's position
// within the shared candidate list, or -1 when absent; the slot is skipped
// in the denominator so the target is not counted twice. Rows with
// active[i] == 0 contribute nothing.
// cand_logits [B x c], target_logits [B] -> scalar.
Var sampled_softmax_nll(Tape& t, Var cand_logits, Var target_logits,
                        const std::vector<int>& target_slot,
                        const std::vector<std::uint8_t>& active);

// Row-wise softmax over a lower-triangular score matrix [n x n]: row r
// normalizes over columns 0..r, later columns are exactly zero.
Var causal_softmax(Tape& t, Var scores);

}  // namespace conure::ops
