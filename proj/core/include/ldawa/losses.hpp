#pragma once

#include <cstdint>
#include <span>

#include "ldawa/model.hpp"

namespace ldawa {

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

struct PairLossGrad {
  double loss = 0.0;
  Matrix grad_a;
  Matrix grad_b;
};

/// Mean softmax cross-entropy. Gradient is (softmax - onehot) / batch.
LossGrad loss_xent(const Matrix& logits, std::span<const std::uint32_t> labels);

/// Symmetric NT-Xent over two views of a batch of N rows.
///
/// Rows of both views are L2-normalized and stacked into 2N anchors. Anchor i
/// has its matching row in the other view as positive and the remaining
/// 2N - 2 rows as negatives:
///   l_i = -s(i, pos) / tau + log sum_{j != i} exp(s(i, j) / tau)
/// and the loss is the mean of l_i over all 2N anchors, i.e. the average of
/// the A->B and B->A directions.
PairLossGrad loss_ntxent(const Matrix& za, const Matrix& zb, double tau);

// Added to the per-dimension std before dividing.
inline constexpr double kBarlowEps = 1e-8;

/// Cross-correlation of the batch-standardized embeddings, C = A^T B / N,
/// where each column is centred and divided by (population std + kBarlowEps).
Matrix barlow_cross_correlation(const Matrix& za, const Matrix& zb);

/// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2
double barlow_from_correlation(const Matrix& c, double lambda);

/// Barlow Twins loss with its gradient through the standardization.
PairLossGrad loss_barlow(const Matrix& za, const Matrix& zb, double lambda);

}  // namespace ldawa
