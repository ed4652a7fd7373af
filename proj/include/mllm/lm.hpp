#pragma once

// Levenberg-Marquardt for f(x) = 1/2 ||F(x)||^2.
//
// Each iteration minimizes (approximately) the regularized Gauss-Newton model
//   m(s) = f + g^T s + 1/2 s^T J^T J s + lambda/2 ||s||^2,
// accepts the step when rho = (f(x) - f(x+s)) / (T(0) - T(s)) >= eta1 and
// updates lambda from rho.
//
// The iteration is exposed as LmEngine so the multilevel driver can run the
// same step logic on a corrected coarse objective
//   m^H(x) = f^H(x) + corr^T (x - anchor).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mllm/ann.hpp"
#include "mllm/dense.hpp"
#include "mllm/linsolve.hpp"
#include "mllm/lsq.hpp"

namespace mllm::pde {
class ResidualSystem;
}

namespace mllm::lm {

enum class InnerSolver { cgls, direct };

struct LmConfig {
  double eta1 = 0.1;
  double eta2 = 0.75;
  double gamma1 = 0.85;
  double gamma2 = 0.5;
  double gamma3 = 1.5;
  double lambda0 = 0.05;
  double lambda_min = 1e-6;
  double epsilon = 1e-4;  // gradient-norm tolerance
  double theta = 0.1;     // inner stopping constant
  std::size_t max_outer_iter = 2000;
  std::size_t max_inner_iter = 0;  // 0: number of unknowns
  InnerSolver inner = InnerSolver::cgls;
  /// Consecutive inner-solver failures tolerated (each raises lambda by
  /// gamma3) before the error propagates.
  std::size_t max_lambda_escalations = 50;

  /// Throws std::invalid_argument unless
  /// 0 < eta1 <= eta2 < 1, 0 < gamma2 <= gamma1 < 1 < gamma3,
  /// lambda0 > lambda_min > 0, epsilon > 0, theta > 0.
  void validate() const;
};

/// One line of the per-iteration trace.
struct TraceRecord {
  std::size_t iteration = 0;
  std::string level;  // "fine" or "coarse"
  double loss = 0.0;
  double gradient_norm = 0.0;
  double lambda = 0.0;
  double rho = 0.0;
  bool accepted = false;
  std::uint64_t flops = 0;
};

/// Writes trace records as CSV. Header:
/// iteration,level,loss,gradient_norm,lambda,rho,accepted,flops
class CsvTrace {
 public:
  explicit CsvTrace(std::ostream& out);
  void record(const TraceRecord& rec);

 private:
  std::ostream* out_;
};

struct SolveReport {
  std::size_t iterations = 0;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  double final_gradient_norm = 0.0;
  /// Loss at the start and after every iteration.
  std::vector<double> loss_history;
  std::uint64_t matvec_flops = 0;
  bool converged = false;
  Vector final_x;
  std::optional<ann::NetworkParams> final_params;
  std::optional<std::uint64_t> seed;

  // Multilevel bookkeeping; zero for one-level runs.
  std::size_t coarse_attempts = 0;
  std::size_t coarse_accepted = 0;
  std::size_t coarse_inner_iterations = 0;
  /// Largest ||grad m^H(x0H) - R grad f|| / (1 + ||grad f||) over all coarse
  /// model builds.
  double max_coherence_violation = 0.0;
  std::size_t coarse_size = 0;  // coarse parameter count
  /// Level of each iteration, in order ("fine" / "coarse").
  std::vector<std::string> levels;
};

/// Result of one engine iteration.
struct StepOutcome {
  double rho = 0.0;
  double predicted = 0.0;
  double actual = 0.0;
  bool accepted = false;
};

/// State of an LM iteration on m(x) = 1/2 ||F(x)||^2 + corr^T (x - anchor).
class LmEngine {
 public:
  /// Evaluates F, J and the gradient at x0. `corr` may be empty.
  LmEngine(const LeastSquaresProblem& problem, Vector x0, double lambda0, const LmConfig& cfg,
           linsolve::FlopCounter& counter, Vector corr = {});

  const Vector& x() const { return x_; }
  double value() const { return value_; }
  const Vector& gradient() const { return gradient_; }
  double gradient_norm() const { return gradient_norm_; }
  double lambda() const { return lambda_; }
  const Vector& residual() const { return F_; }
  const Matrix& jacobian() const { return J_; }

  void set_lambda(double lambda);
  /// Adds corr^T (x - x_current) to the objective without re-evaluating F.
  /// Only valid while no correction is attached.
  void attach_correction(Vector corr);

  /// Value of the (corrected) objective at an arbitrary point.
  double objective_at(std::span<const double> x) const;

  /// One model-minimizing step with acceptance test and lambda update.
  StepOutcome step();

  /// Acceptance test and lambda update for a step computed elsewhere with
  /// predicted reduction `predicted`. A non-positive prediction or a zero
  /// step counts as a failure (lambda *= gamma3).
  StepOutcome try_step(std::span<const double> s, double predicted);

 private:
  Vector solve_model();
  Vector solve_direct();
  void evaluate();
  void update_lambda(double rho, bool accepted);

  const LeastSquaresProblem* problem_;
  LmConfig cfg_;
  linsolve::FlopCounter* counter_;
  Vector corr_;
  Vector anchor_;
  Vector x_;
  Vector F_;
  Matrix J_;
  Vector gradient_;
  double value_ = 0.0;
  double gradient_norm_ = 0.0;
  double lambda_ = 0.0;
  // J^T J (or J J^T when there are fewer residuals than unknowns) for the
  // direct solver, valid until x moves.
  std::optional<Matrix> gram_;
};

using TraceFn = std::function<void(const TraceRecord&)>;

/// Runs LM until ||grad f|| <= epsilon or max_outer_iter iterations.
/// Throws std::invalid_argument if the starting loss is not finite.
SolveReport lm_solve(const LeastSquaresProblem& problem, Vector x0, const LmConfig& cfg,
                     const TraceFn& trace = {});

SolveReport lm_solve(const pde::ResidualSystem& sys, const ann::NetworkParams& p0,
                     const LmConfig& cfg, const TraceFn& trace = {});

}  // namespace mllm::lm
