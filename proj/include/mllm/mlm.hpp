#pragma once

// Two-level multilevel Levenberg-Marquardt.
//
// At iterate x with gradient g, the coarse model
//   m^H(y) = f^H(y) + corr^T (y - x0H),  x0H = R x,  corr = R g - grad f^H(x0H)
// agrees with the restricted fine gradient at x0H. When the previous step was
// a fine one and ||R g|| >= kappa_H ||g||, ||R g|| > eps_H, a few LM
// iterations on m^H produce s^H, and P s^H is tested on f with the coarse
// model decrease as prediction. Otherwise a regular LM step is taken.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>

#include "mllm/amg.hpp"
#include "mllm/lm.hpp"
#include "mllm/lsq.hpp"
#include "mllm/pde.hpp"

namespace mllm::mlm {

struct MlmConfig : lm::LmConfig {
  double kappa_h = 0.1;
  /// Coarse stopping tolerance; the fine epsilon when unset.
  std::optional<double> eps_h;
  std::size_t max_coarse_iter = 10;
  lm::InnerSolver coarse_inner = lm::InnerSolver::direct;
  amg::CoarseningOptions coarsening;
  /// Recoarsen from the current Jacobian before every coarse attempt.
  bool rebuild_transfer = false;

  double coarse_tolerance() const { return eps_h.value_or(epsilon); }
  /// LmConfig::validate plus 0 < kappa_h < 1, eps_h > 0, max_coarse_iter >= 1.
  void validate() const;
  /// Settings for the coarse LM runs.
  lm::LmConfig coarse_config() const;
};

/// Coarse objective and the transfer between levels.
class Hierarchy {
 public:
  virtual ~Hierarchy() = default;
  virtual const LeastSquaresProblem& coarse() const = 0;
  virtual Vector restrict(std::span<const double> x, linsolve::FlopCounter& counter) const = 0;
  virtual Vector prolong(std::span<const double> x, linsolve::FlopCounter& counter) const = 0;
  virtual std::size_t coarse_size() const { return coarse().parameter_count(); }
  /// Recomputes the transfer from the fine Jacobian. No-op by default.
  virtual void rebuild(const Matrix& fine_jacobian) { (void)fine_jacobian; }
};

/// Coarse objective equal to the fine one, transfers are copies.
class IdentityHierarchy final : public Hierarchy {
 public:
  explicit IdentityHierarchy(const LeastSquaresProblem& problem) : problem_(&problem) {}
  const LeastSquaresProblem& coarse() const override { return *problem_; }
  Vector restrict(std::span<const double> x, linsolve::FlopCounter&) const override {
    return {x.begin(), x.end()};
  }
  Vector prolong(std::span<const double> x, linsolve::FlopCounter&) const override {
    return {x.begin(), x.end()};
  }

 private:
  const LeastSquaresProblem* problem_;
};

/// The sub-network of C-selected hidden nodes on the same PDE and training
/// points, with R and P applied to each parameter block.
class NetworkHierarchy final : public Hierarchy {
 public:
  NetworkHierarchy(const pde::ResidualSystem& fine, amg::TransferOperators ops,
                   amg::CoarseningOptions opts = {});

  const LeastSquaresProblem& coarse() const override { return *coarse_; }
  const pde::ResidualSystem& coarse_system() const { return *coarse_; }
  const amg::TransferOperators& ops() const { return ops_; }
  Vector restrict(std::span<const double> x, linsolve::FlopCounter& counter) const override;
  Vector prolong(std::span<const double> x, linsolve::FlopCounter& counter) const override;
  void rebuild(const Matrix& fine_jacobian) override;

 private:
  const pde::ResidualSystem* fine_;
  amg::TransferOperators ops_;
  std::unique_ptr<pde::ResidualSystem> coarse_;
  amg::CoarseningOptions opts_;
};

struct CoarseModel {
  Vector x0H;
  Vector restricted_gradient;  // R grad f^h
  Vector corr;
  /// ||grad m^H(x0H) - R grad f^h|| / (1 + ||grad f^h||)
  double coherence_violation = 0.0;
  /// LM state on m^H, positioned at x0H.
  std::unique_ptr<lm::LmEngine> engine;
};

/// Builds m^H at fine point x with fine gradient g. `cfg` configures the
/// coarse LM engine.
CoarseModel build_coarse_model(const Hierarchy& h, std::span<const double> x,
                               std::span<const double> g, const lm::LmConfig& cfg,
                               linsolve::FlopCounter& counter);

/// ||R g|| >= kappa_h ||g|| and ||R g|| > eps_h.
bool go_down(double restricted_norm, double gradient_norm, double kappa_h, double eps_h);
bool go_down(std::span<const double> g, const Hierarchy& h, double kappa_h, double eps_h);

struct CoarseResult {
  Vector step;  // x*^H - x0H
  double predicted = 0.0;
  std::size_t iterations = 0;
  std::size_t accepted = 0;
};

/// At most cfg.max_outer_iter LM iterations on m^H from x0H with the given
/// lambda, stopping early once ||grad m^H|| <= cfg.epsilon.
CoarseResult coarse_cycle(CoarseModel& model, double lambda, const lm::LmConfig& cfg);

lm::SolveReport mlm_solve(const LeastSquaresProblem& problem, Hierarchy& h, Vector x0,
                          const MlmConfig& cfg, const lm::TraceFn& trace = {});

/// Transfer operators from the Jacobian at p0.
amg::Coarsening coarsen_at(const pde::ResidualSystem& sys, const ann::NetworkParams& p0,
                           const amg::CoarseningOptions& opts);

/// With explicit operators.
lm::SolveReport mlm_solve(const pde::ResidualSystem& sys, const ann::NetworkParams& p0,
                          const MlmConfig& cfg, const amg::TransferOperators& ops,
                          const lm::TraceFn& trace = {});
/// Builds the operators from the Jacobian at p0; the cost of forming the
/// coupling matrix is included in the flop count.
lm::SolveReport mlm_solve(const pde::ResidualSystem& sys, const ann::NetworkParams& p0,
                          const MlmConfig& cfg, const lm::TraceFn& trace = {});

}  // namespace mllm::mlm
