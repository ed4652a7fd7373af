#pragma once

#include <cstddef>
#include <span>

#include "mllm/dense.hpp"

namespace mllm {

/// A nonlinear least-squares objective f(x) = 1/2 ||F(x)||^2 with an
/// explicit Jacobian. The solvers only see this interface.
class LeastSquaresProblem {
 public:
  virtual ~LeastSquaresProblem() = default;

  virtual std::size_t residual_count() const = 0;
  virtual std::size_t parameter_count() const = 0;

  /// F(x) into `out` (length residual_count()).
  virtual void residual(std::span<const double> x, std::span<double> out) const = 0;
  /// F(x) and J(x) together; J is resized to residual_count() x parameter_count().
  virtual void residual_and_jacobian(std::span<const double> x, std::span<double> out,
                                     Matrix& jacobian) const = 0;
};

/// F(x) = A x - c. Used as a linear surrogate in tests and as a building
/// block for quadratic models.
class LinearResidual final : public LeastSquaresProblem {
 public:
  LinearResidual(Matrix A, Vector c);

  std::size_t residual_count() const override { return A_.rows(); }
  std::size_t parameter_count() const override { return A_.cols(); }
  void residual(std::span<const double> x, std::span<double> out) const override;
  void residual_and_jacobian(std::span<const double> x, std::span<double> out,
                             Matrix& jacobian) const override;

 private:
  Matrix A_;
  Vector c_;
};

}  // namespace mllm
