#pragma once

// Inner solvers for the regularized Gauss-Newton model
//
//   (J^T J + lambda I) s = -(J^T F + corr)
//
// and the flop bookkeeping used to compare solvers.

#include <cstddef>
#include <cstdint>
#include <span>

#include "mllm/dense.hpp"

namespace mllm::linsolve {

/// Counts floating point operations spent in matrix-vector work:
/// 2 * rows * cols per dense product with a matrix or its transpose.
class FlopCounter {
 public:
  void add(std::uint64_t flops) { flops_ += flops; }
  void add_matvec(std::size_t rows, std::size_t cols) {
    flops_ += 2ull * static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
  }
  std::uint64_t matvec_flops() const { return flops_; }

 private:
  std::uint64_t flops_ = 0;
};

struct InnerSolveResult {
  Vector step;
  /// ||(J^T J + lambda I) s + J^T F + corr|| at the returned step.
  double model_gradient_norm = 0.0;
  std::size_t iterations = 0;
  /// True when model_gradient_norm <= theta ||s||^2.
  bool satisfied = false;
};

struct CglsOptions {
  double theta = 0.1;
  /// 0 means "number of unknowns".
  std::size_t max_iter = 0;
};

/// Truncated conjugate gradients on J^T J + lambda I, applied as two
/// products per iteration. Stops at the first iterate with
/// ||grad m(s)|| <= theta ||s||^2 or after max_iter iterations.
///
/// Throws std::invalid_argument if lambda <= 0 or shapes disagree and
/// NumericalError on non-finite input or breakdown.
InnerSolveResult cgls_truncated(const Matrix& J, std::span<const double> F, double lambda,
                                std::span<const double> corr, const CglsOptions& opts,
                                FlopCounter& counter);

/// Same solve with the model gradient g = J^T F + corr supplied by the
/// caller (the outer iteration already has it).
InnerSolveResult cgls_truncated_from_gradient(const Matrix& J, std::span<const double> gradient,
                                              double lambda, const CglsOptions& opts,
                                              FlopCounter& counter);

/// Cholesky solve of a symmetric positive definite system. Counts n^3/3 for
/// the factorization and 2n^2 per triangular sweep. Throws NumericalError if
/// the factorization breaks down (caller should raise lambda).
Vector direct_solve(const Matrix& B, std::span<const double> rhs, FlopCounter& counter);

}  // namespace mllm::linsolve
