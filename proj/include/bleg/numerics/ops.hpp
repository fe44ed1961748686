#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "bleg/numerics/tape.hpp"
#include "bleg/rng.hpp"

namespace bleg::numerics {

enum class Mode { train, eval };

// Linear algebra and elementwise arithmetic. All operands are rank-2.
Var matmul(Var a, Var b);
Var transpose(Var a);
/// a + b; b may also be a 1 x cols row broadcast over the rows of a.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var gelu(Var a);
Var softmax_rows(Var a);
/// Softmax over the allowed entries of each row; disallowed entries are
/// exactly zero. `allowed` is row-major with one flag per element and every
/// row needs at least one allowed entry.
Var masked_softmax_rows(Var a, std::shared_ptr<const std::vector<std::uint8_t>> allowed);

/// sum_r w_r * (-log softmax(logits_r)[target_r]); rows with w_r == 0 add
/// exactly nothing to the value or the gradient.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> targets, std::span<const double> row_weights);

struct BatchNormBuffers {
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-column normalization over the rows. Training mode uses the batch
/// statistics (and updates the running buffers when given); eval mode uses
/// the running buffers.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormBuffers buffers, Mode mode,
               BatchNormOptions options = {});
/// Per-row normalization over the columns.
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Inverted dropout; the identity in eval mode or when p == 0.
Var dropout(Var x, double p, Rng* rng, Mode mode);

/// Row-wise x / ||x||_2. A zero row raises DegenerateInputError.
Var l2_normalize_rows(Var x);

Var mean_rows(Var x);
/// Means of consecutive row blocks [offsets[k], offsets[k+1]).
Var segment_mean_rows(Var x, std::span<const std::size_t> offsets);
Var sum_all(Var x);
Var mean_all(Var x);
Var sum_squares(Var x);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var gather_rows(Var table, std::span<const std::size_t> ids);

/// Applies a symmetric propagation matrix per row block: rows
/// [offsets[k], offsets[k+1]) of x are left-multiplied by blocks[k].
Var block_propagate(Var x, std::shared_ptr<const std::vector<Tensor>> blocks, std::span<const std::size_t> offsets);

// Plain-tensor helpers shared by ops and callers.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
double gelu(double x);

}  // namespace bleg::numerics
