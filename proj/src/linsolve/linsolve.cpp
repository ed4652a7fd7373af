#include "mllm/linsolve.hpp"

#include <cassert>
#include <cmath>
#include <string>

#include "mllm/kernels.hpp"

namespace mllm::linsolve {

namespace {

bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

// out = (J^T J + lambda I) x
void apply_regularized(const Matrix& J, double lambda, std::span<const double> x, Vector& tmp,
                       std::span<double> out, FlopCounter& counter) {
  kernels::gemv(J, x, tmp);
  kernels::gemv_t(J, tmp, out);
  counter.add_matvec(J.rows(), J.cols());
  counter.add_matvec(J.rows(), J.cols());
  kernels::axpy(lambda, x, out);
}

}  // namespace

InnerSolveResult cgls_truncated_from_gradient(const Matrix& J, std::span<const double> gradient,
                                              double lambda, const CglsOptions& opts,
                                              FlopCounter& counter) {
  require(lambda > 0.0, "regularization parameter must be positive");
  require(opts.theta > 0.0, "theta must be positive");
  require(gradient.size() == J.cols(), "gradient length differs from Jacobian column count");
  if (!all_finite(gradient) || !all_finite({J.data(), J.rows() * J.cols()}))
    throw NumericalError("inner solve received non-finite data");

  const std::size_t n = J.cols();
  const std::size_t max_iter = opts.max_iter == 0 ? n : opts.max_iter;

  InnerSolveResult res;
  res.step.assign(n, 0.0);
  Vector& s = res.step;
  Vector rhs(n);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = -gradient[i];
  Vector r = rhs;
  Vector p = r;
  Vector Ap(n);
  Vector tmp(J.rows());
  double rr = kernels::dot(r, r);
  const double rr0 = rr;

  res.model_gradient_norm = std::sqrt(rr);
  if (rr == 0.0) {
    res.satisfied = true;
    return res;
  }

  // Residual check against a freshly computed b - A s.
  auto true_residual = [&]() {
    Vector As(n);
    apply_regularized(J, lambda, s, tmp, As, counter);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - As[i];
    return kernels::dot(r, r);
  };

  while (res.iterations < max_iter) {
    apply_regularized(J, lambda, p, tmp, Ap, counter);
    const double pAp = kernels::dot(p, Ap);
    if (!(pAp > 0.0) || !std::isfinite(pAp))
      throw NumericalError("conjugate gradients broke down (p^T A p = " + std::to_string(pAp) +
                           ")");
    const double alpha = rr / pAp;
    // Model decrease along p is alpha * rr / 2 > 0.
    assert(alpha > 0.0);
    kernels::axpy(alpha, p, s);
    kernels::axpy(-alpha, Ap, r);
    double rr_new = kernels::dot(r, r);
    ++res.iterations;

    const double snorm2 = kernels::dot(s, s);
    // Below this the recurrence only tracks rounding noise.
    const bool floor = rr_new <= 1e-30 * rr0;
    if (floor || std::sqrt(rr_new) <= opts.theta * snorm2) {
      rr_new = true_residual();
      if (floor || std::sqrt(rr_new) <= opts.theta * snorm2) {
        res.model_gradient_norm = std::sqrt(rr_new);
        res.satisfied = res.model_gradient_norm <= opts.theta * snorm2;
        return res;
      }
      // Recurrence drifted; restart from the true residual.
      p = r;
      rr = rr_new;
      continue;
    }
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  res.model_gradient_norm = std::sqrt(rr);
  return res;
}

InnerSolveResult cgls_truncated(const Matrix& J, std::span<const double> F, double lambda,
                                std::span<const double> corr, const CglsOptions& opts,
                                FlopCounter& counter) {
  require(F.size() == J.rows(), "residual length differs from Jacobian row count");
  require(corr.empty() || corr.size() == J.cols(), "correction length differs from unknowns");
  if (!all_finite(F) || !all_finite(corr)) throw NumericalError("inner solve received non-finite data");
  Vector g(J.cols());
  kernels::gemv_t(J, F, g);
  counter.add_matvec(J.rows(), J.cols());
  if (!corr.empty()) kernels::axpy(1.0, corr, g);
  return cgls_truncated_from_gradient(J, g, lambda, opts, counter);
}

Vector direct_solve(const Matrix& B, std::span<const double> rhs, FlopCounter& counter) {
  const std::size_t n = B.rows();
  require(B.cols() == n, "direct_solve needs a square matrix");
  require(rhs.size() == n, "right-hand side length differs from matrix size");

  // Lower Cholesky factor, stored in place.
  Matrix L = B;
  for (std::size_t j = 0; j < n; ++j) {
    double diag = L(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= L(j, k) * L(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag))
      throw NumericalError("Cholesky factorization failed at pivot " + std::to_string(j) +
                           "; matrix is not positive definite");
    const double ljj = std::sqrt(diag);
    L(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = L(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
      L(i, j) = v / ljj;
    }
  }
  const auto nn = static_cast<std::uint64_t>(n);
  counter.add(nn * nn * nn / 3);

  auto solve = [&](std::span<const double> b) {
    Vector y(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < i; ++k) y[i] -= L(i, k) * y[k];
      y[i] /= L(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t k = i + 1; k < n; ++k) y[i] -= L(k, i) * y[k];
      y[i] /= L(i, i);
    }
    counter.add(2 * nn * nn);
    return y;
  };

  Vector x = solve(rhs);

  // One refinement sweep if the residual is not already at 1e-10 relative.
  Vector res(n);
  kernels::gemv(B, x, res);
  counter.add_matvec(n, n);
  for (std::size_t i = 0; i < n; ++i) res[i] = rhs[i] - res[i];
  const double bnorm = kernels::nrm2(rhs);
  if (kernels::nrm2(res) > 1e-10 * bnorm) {
    const Vector dx = solve(res);
    kernels::axpy(1.0, dx, x);
  }
  for (double v : x)
    if (!std::isfinite(v)) throw NumericalError("direct solve produced non-finite values");
  return x;
}

}  // namespace mllm::linsolve
