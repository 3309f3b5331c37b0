#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "orgpose/numerics/tape.hpp"

// Differentiable tensor operations. Every function records one node on the
// tape owned by its inputs; all inputs of a call must share that tape.
namespace orgpose::nn {

Var matmul(Var a, Var b);
/// input[n x in] * weight[in x out] + bias[out], bias broadcast over rows.
Var affine(Var input, Var weight, Var bias);

/// Element-wise; b may also be a single element broadcast over a.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_constant(Var a, double constant);

Var exp(Var a);
Var abs(Var a);
Var square(Var a);
/// Gradient at exactly zero is zero.
Var relu(Var a);

/// Sum of all elements as a 1x1 tensor.
Var sum(Var a);
/// Per-row sum as an n x 1 tensor.
Var row_sum(Var a);

Var gather_rows(Var a, std::vector<std::size_t> indices);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var repeat_rows(Var row, std::size_t count);

/// Row segments are [offsets[s], offsets[s+1]); each must be non-empty.
/// The result has one row per segment.
Var segment_max(Var a, std::span<const std::size_t> offsets);
Var segment_sum(Var a, std::span<const std::size_t> offsets);
Var segment_mean(Var a, std::span<const std::size_t> offsets);

}  // namespace orgpose::nn
