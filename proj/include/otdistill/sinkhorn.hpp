#pragma once

#include <cstddef>

#include "otdistill/matrix.hpp"

namespace otdistill {

struct SinkhornConfig {
  double lambda = 0.15;       // entropic regularization strength, > 0
  std::size_t n_iter = 5;     // row/column normalization sweeps
  double marginal_tolerance = 1e-9;  // diagnostic only, not a stopping rule
};

// Matching plan returned in row-stochastic form (every row sums to 1).
// The marginal errors are max |marginal - 1/N|, measured on the mass-1
// doubly-scaled matrix immediately before the final row normalization.
struct TransportPlan {
  Matrix matrix;
  double row_marginal_error = 0.0;
  double col_marginal_error = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
};

// Entropic optimal transport by iterative row/column normalization:
// T = exp(s / lambda) (stabilized by subtracting the global max of
// s / lambda), scaled to total mass 1, then n_iter sweeps of row- and
// column-normalization to uniform 1/N marginals, then one final row
// normalization to row sums of 1. With n_iter = 0 this reduces to
// row_softmax(s, 1/lambda).
//
// Throws NotSquare for non-square input and NonFinite when a whole row or
// column underflows to zero mass (degenerate lambda for the given range
// of s).
TransportPlan sinkhorn(const Matrix& s, const SinkhornConfig& cfg);

// Same iteration, run until both marginal errors fall below tol or max_iter
// sweeps elapse. Non-convergence is reported through the `converged` flag,
// not an exception.
TransportPlan sinkhorn_converged(const Matrix& s, double lambda, double tol,
                                 std::size_t max_iter);

}  // namespace otdistill
