#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsgtf/tape.hpp"
#include "dsgtf/tensor.hpp"

namespace dsgtf {

// Differentiable ops. Every op validates shapes, checks its output for
// non-finite values, and registers gradient contributions on the tape when
// any input requires a gradient.

Value add(Value a, Value b);                 // elementwise, same shape
Value mul(Value a, Value b);                 // elementwise (Hadamard)
Value scale(Value a, double s);
Value sum(Value a);                          // reduce all entries -> [1]

Value matmul(Value a, Value b);              // [m x k] * [k x n] -> [m x n]
Value transpose(Value a);                    // rank-2
Value reshape(Value a, Shape shape);         // size-preserving view copy
Value slice_vec(Value a, std::size_t start, std::size_t len);  // rank-1 range

Value concat_cols(std::span<const Value> parts);  // rank-2, same row count
Value concat_vec(std::span<const Value> parts);   // rank-1
Value stack_rows(std::span<const Value> rows);    // B rank-1 [k] -> [B x k]

Value add_row_bias(Value mat, Value bias);   // [m x n] + bias[n] per row

Value relu(Value a);
Value leaky_relu(Value a, double slope);     // slope in (0, 1)
Value elu(Value a);
Value layer_norm(Value x, Value gain, Value bias);  // over last axis, eps 1e-5

// Probability vector over kept positions; masked-out entries are exactly 0.
// Throws NumericError if every mask entry is false (isolated node reached
// attention).
Value masked_softmax(Value scores, std::vector<std::uint8_t> mask);
// Row-wise variant for [n x n] score matrices; mask is row-major n x n.
Value masked_softmax_rows(Value scores, std::vector<std::uint8_t> mask);

Value outer_sum(Value u, Value v);           // out[i][j] = u[i] + v[j]

// Mean over the batch of -log(prob of true class); probabilities clamped to
// >= 1e-12 before the log. Rows must sum to 1 within 1e-5.
Value cross_entropy(Value probs, const std::vector<int>& labels);

// x[n] * w[n x k] + b[k] -> [k]; composition helper, not a primitive.
Value affine(Value x, Value w, Value b);

// Raw (non-tape) kernels shared by forward and backward paths.
namespace kernels {
void mm_nn_acc(const Tensor& a, const Tensor& b, Tensor& out);  // out += a * b
void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out);  // out += a * b^T
void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out);  // out += a^T * b
Tensor masked_softmax(const Tensor& scores, std::span<const std::uint8_t> mask);
}  // namespace kernels

}  // namespace dsgtf
