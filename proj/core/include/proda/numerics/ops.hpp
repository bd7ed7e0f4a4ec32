#pragma once

// Differentiable primitives. All functions return new tensors and never
// mutate their inputs. Shape violations raise ContractError naming both
// shapes; non-finite results raise NumericError naming the op.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "proda/numerics/tensor.hpp"

namespace proda::num {

using Mask = std::vector<std::uint8_t>;

Tensor reshape(const Tensor& x, Shape shape);

/// x[..., K] · w[K, N] -> [..., N].
Tensor matmul(const Tensor& x, const Tensor& w);

/// Elementwise a + b. `b` may also be a rank-1 bias matching a's last axis.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise a * b. `b` may also hold one value per row of a (shape
/// [..., 1] or any shape with numel(a) / last(a) elements), broadcast along
/// a's last axis.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

Tensor concat_last(const Tensor& a, const Tensor& b);
/// Concatenation along axis 0.
Tensor concat_rows(const Tensor& a, const Tensor& b);
/// Rows [begin, begin + count) along axis 0.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
/// [A, B, C, D] -> [A, C, B, D].
Tensor swap_axes12(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs_value(const Tensor& x);

/// Softmax over the last axis. With a mask (one flag per element), masked
/// entries behave as -inf logits; a fully masked row yields all zeros.
Tensor softmax_last(const Tensor& x, std::span<const std::uint8_t> mask = {});

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Population variance over all elements.
Tensor variance(const Tensor& x);
/// Views x as [groups, rest] and sums each group -> [groups].
Tensor group_sum(const Tensor& x, std::size_t groups);

Tensor mse(const Tensor& a, const Tensor& b);
/// Mean over all elements of the numerically stable BCE-with-logits.
/// `targets` is treated as a constant.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

/// Scaled dot-product attention over the sequence axis of [G, S, D] inputs.
/// `mask` has G*S flags; masked keys get -inf logits, masked query rows and
/// fully masked groups produce zeros.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::span<const std::uint8_t> mask);

/// Single-head self-attention with residual: x + attention(xWq, xWk, xWv),
/// masked rows zeroed. x is [G, S, D]; projections are [D, D].
Tensor self_attention(const Tensor& x, std::span<const std::uint8_t> mask, const Tensor& wq,
                      const Tensor& wk, const Tensor& wv);

/// Rows of `table` ([V, D]) selected by ids -> [ids.size(), D].
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);
/// Views x as [R, rest] and picks rows -> [idx.size(), rest].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx);
/// Adds row e of x ([E, D]) into row idx[e] of an [rows, D] zero tensor.
Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> idx, std::size_t rows);

/// weights [R, S] (any shape with R*S elements), values viewed as [R, S, D]
/// -> [R, D] with out[r] = sum_s w[r,s] v[r,s].
Tensor weighted_sum(const Tensor& weights, const Tensor& values, std::size_t groups);
/// As weighted_sum but divided by (sum_s w[r,s] + eps).
Tensor normalized_weighted_sum(const Tensor& weights, const Tensor& values,
                               std::size_t groups, double eps);

/// Constant [rows, 1] tensor of 0/1 flags, for use with mul().
Tensor mask_column(std::span<const std::uint8_t> mask);

}  // namespace proda::num
