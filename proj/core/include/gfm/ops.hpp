#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gfm/tensor.hpp"

// Differentiable operations over rank-2 tensors. Every function records a
// backward rule on the active GradientTape when any input requires a gradient.
namespace gfm::ops {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Pointwise binary ops. `b` may be a 1 x n row broadcast over the rows of an
// m x n `a`; every other shape combination must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
/// x * s where s is a trainable 1 x 1 tensor.
Tensor scale_by(const Tensor& x, const Tensor& s);

// Column-vector variants: c is n x 1 and applies to row i of an n x m `x`.
Tensor add_col(const Tensor& x, const Tensor& c);
Tensor mul_col(const Tensor& x, const Tensor& c);
Tensor div_col(const Tensor& x, const Tensor& c);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);

/// Row-wise softmax of scale * x, stabilised by subtracting the row maximum.
/// Columns with key_mask[c] == 0 get -inf logits; every row needs at least
/// one unmasked column.
Tensor softmax_rows(const Tensor& x, double scale,
                    std::span<const std::uint8_t> key_mask = {});

// Reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor row_sum(const Tensor& x);
/// Euclidean norm of each row as an n x 1 column. The gradient at a zero row
/// is taken to be zero.
Tensor row_norm(const Tensor& x);

// Structure
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
/// Row i of the result is x[index[i]], or a zero row when index[i] < 0.
Tensor gather_rows(const Tensor& x, std::span<const std::ptrdiff_t> index);

/// Compressed neighbour lists over the rows of a node-feature matrix.
struct Adjacency {
  std::vector<std::size_t> offsets{0};  // size rows + 1
  std::vector<std::size_t> neighbors;
  std::size_t nodes() const { return offsets.size() - 1; }
};

enum class Aggregation { kSum, kMean };

/// Row v of the result aggregates rows u in N(v). Empty neighbourhoods yield
/// the zero vector under both aggregations.
Tensor aggregate_neighbors(const Tensor& x, const Adjacency& adj, Aggregation kind);

/// Segment g covers rows [offsets[g], offsets[g+1]); result has one row per segment.
Tensor segment_sum(const Tensor& x, std::span<const std::size_t> offsets);
Tensor segment_mean(const Tensor& x, std::span<const std::size_t> offsets);

// Convolution

/// Cross-correlation of every row of x (N x L) with every kernel row of
/// w (H x M) at stride S:  out[n*H + h][t] = sum_m w[h][m] * x[n][t*S + m],
/// with floor((L - M) / S) + 1 output positions.
Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride);

/// Grouped cross-correlation at stride 1: group g convolves x[g] (length L)
/// with its own kernel k[g] (length M <= L), producing G x (L - M + 1).
/// Equal lengths give one output per group: the per-group dot product.
Tensor grouped_conv1d(const Tensor& x, const Tensor& kernels);

// Normalisation

enum class Mode { kTrain, kEval };

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormStats(std::size_t features = 0)
      : running_mean(features, 0.0), running_var(features, 1.0) {}
};

/// Per-feature standardisation over rows with mask[i] != 0 (all rows when the
/// mask is empty), followed by gamma * xhat + beta. Masked rows come out as
/// exact zeros. Train mode uses batch statistics and updates `stats`; eval
/// mode uses the running statistics verbatim.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, Mode mode,
                  std::span<const std::uint8_t> mask = {});

/// Eval-mode normalisation that never touches `stats`.
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const BatchNormStats& stats,
                       std::span<const std::uint8_t> mask = {});

// Losses (scalar outputs)

Tensor mse_loss(const Tensor& pred, const Tensor& target);
/// Binary cross-entropy with targets in {0, 1}; predictions clamped to
/// [1e-7, 1 - 1e-7].
Tensor bce_loss(const Tensor& pred, const Tensor& target);

}  // namespace gfm::ops
