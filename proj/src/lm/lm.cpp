#include "mllm/lm.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "mllm/kernels.hpp"
#include "mllm/pde.hpp"

namespace mllm::lm {

void LmConfig::validate() const {
  require(0.0 < eta1 && eta1 <= eta2 && eta2 < 1.0, "need 0 < eta1 <= eta2 < 1");
  require(0.0 < gamma2 && gamma2 <= gamma1 && gamma1 < 1.0 && 1.0 < gamma3,
          "need 0 < gamma2 <= gamma1 < 1 < gamma3");
  require(lambda_min > 0.0 && lambda0 > lambda_min, "need lambda0 > lambda_min > 0");
  require(epsilon > 0.0, "gradient tolerance must be positive");
  require(theta > 0.0, "theta must be positive");
}

CsvTrace::CsvTrace(std::ostream& out) : out_(&out) {
  *out_ << "iteration,level,loss,gradient_norm,lambda,rho,accepted,flops\n";
}

void CsvTrace::record(const TraceRecord& rec) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%s,%.10g,%.10g,%.10g,%.10g,%d,%llu\n", rec.iteration,
                rec.level.c_str(), rec.loss, rec.gradient_norm, rec.lambda, rec.rho,
                rec.accepted ? 1 : 0, static_cast<unsigned long long>(rec.flops));
  *out_ << buf;
}

LmEngine::LmEngine(const LeastSquaresProblem& problem, Vector x0, double lambda0,
                   const LmConfig& cfg, linsolve::FlopCounter& counter, Vector corr)
    : problem_(&problem),
      cfg_(cfg),
      counter_(&counter),
      corr_(std::move(corr)),
      x_(std::move(x0)),
      lambda_(lambda0) {
  require(x_.size() == problem.parameter_count(), "starting point has the wrong length");
  require(corr_.empty() || corr_.size() == x_.size(), "correction has the wrong length");
  require(lambda_ > 0.0, "regularization parameter must be positive");
  if (!corr_.empty()) anchor_ = x_;
  F_.resize(problem.residual_count());
  evaluate();
}

double LmEngine::objective_at(std::span<const double> x) const {
  Vector F(problem_->residual_count());
  problem_->residual(x, F);
  double v = 0.5 * kernels::dot(F, F);
  for (std::size_t i = 0; i < corr_.size(); ++i) v += corr_[i] * (x[i] - anchor_[i]);
  return v;
}

void LmEngine::evaluate() {
  problem_->residual_and_jacobian(x_, F_, J_);
  value_ = 0.5 * kernels::dot(F_, F_);
  gradient_.assign(x_.size(), 0.0);
  kernels::gemv_t(J_, F_, gradient_);
  counter_->add_matvec(J_.rows(), J_.cols());
  for (std::size_t i = 0; i < corr_.size(); ++i) {
    value_ += corr_[i] * (x_[i] - anchor_[i]);
    gradient_[i] += corr_[i];
  }
  gradient_norm_ = kernels::nrm2(gradient_);
  gram_.reset();
}

Vector LmEngine::solve_model() {
  for (std::size_t escalations = 0;; ++escalations) {
    try {
      if (cfg_.inner == InnerSolver::cgls) {
        return linsolve::cgls_truncated_from_gradient(
                   J_, gradient_, lambda_, {cfg_.theta, cfg_.max_inner_iter}, *counter_)
            .step;
      }
      return solve_direct();
    } catch (const NumericalError&) {
      if (escalations + 1 >= cfg_.max_lambda_escalations) throw;
      lambda_ *= cfg_.gamma3;
    }
  }
}

Vector LmEngine::solve_direct() {
  const std::size_t m = J_.rows();
  const std::size_t n = J_.cols();
  if (m >= n) {
    if (!gram_) {
      gram_ = kernels::gram(J_);
      counter_->add(2ull * m * n * n);
    }
    Matrix B = *gram_;
    for (std::size_t i = 0; i < n; ++i) B(i, i) += lambda_;
    Vector rhs(n);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = -gradient_[i];
    return linsolve::direct_solve(B, rhs, *counter_);
  }
  // (J^T J + lambda I)^{-1} = (I - J^T (J J^T + lambda I)^{-1} J) / lambda
  if (!gram_) {
    gram_ = kernels::gram(J_.transposed());
    counter_->add(2ull * m * m * n);
  }
  Matrix B = *gram_;
  for (std::size_t i = 0; i < m; ++i) B(i, i) += lambda_;
  Vector Jg(m);
  kernels::gemv(J_, gradient_, Jg);
  counter_->add_matvec(m, n);
  const Vector y = linsolve::direct_solve(B, Jg, *counter_);
  Vector s(n);
  kernels::gemv_t(J_, y, s);
  counter_->add_matvec(m, n);
  for (std::size_t i = 0; i < n; ++i) s[i] = (s[i] - gradient_[i]) / lambda_;
  return s;
}

void LmEngine::set_lambda(double lambda) {
  require(lambda > 0.0, "regularization parameter must be positive");
  lambda_ = lambda;
}

void LmEngine::attach_correction(Vector corr) {
  require(corr_.empty(), "a correction is already attached");
  require(corr.size() == x_.size(), "correction has the wrong length");
  corr_ = std::move(corr);
  anchor_ = x_;
  for (std::size_t i = 0; i < corr_.size(); ++i) gradient_[i] += corr_[i];
  gradient_norm_ = kernels::nrm2(gradient_);
}

StepOutcome LmEngine::step() {
  const Vector s = solve_model();
  Vector Js(J_.rows());
  kernels::gemv(J_, s, Js);
  counter_->add_matvec(J_.rows(), J_.cols());
  const double predicted = -(kernels::dot(gradient_, s) + 0.5 * kernels::dot(Js, Js));
  return try_step(s, predicted);
}

StepOutcome LmEngine::try_step(std::span<const double> s, double predicted) {
  require(s.size() == x_.size(), "step has the wrong length");
  StepOutcome out;
  out.predicted = predicted;
  bool nonzero = false;
  for (double v : s) nonzero = nonzero || v != 0.0;
  if (!nonzero || !(predicted > 0.0)) {
    out.rho = std::numeric_limits<double>::quiet_NaN();
    update_lambda(out.rho, false);
    return out;
  }
  Vector trial = x_;
  for (std::size_t i = 0; i < trial.size(); ++i) trial[i] += s[i];
  const double trial_value = objective_at(trial);
  out.actual = value_ - trial_value;
  out.rho = out.actual / predicted;
  out.accepted = std::isfinite(trial_value) && out.rho >= cfg_.eta1;
  if (out.accepted) {
    x_ = std::move(trial);
    evaluate();
  }
  update_lambda(out.rho, out.accepted);
  return out;
}

void LmEngine::update_lambda(double rho, bool accepted) {
  if (!accepted) {
    lambda_ *= cfg_.gamma3;
    return;
  }
  const double factor = rho >= cfg_.eta2 ? cfg_.gamma2 : cfg_.gamma1;
  lambda_ = std::max(cfg_.lambda_min, factor * lambda_);
}

SolveReport lm_solve(const LeastSquaresProblem& problem, Vector x0, const LmConfig& cfg,
                     const TraceFn& trace) {
  cfg.validate();
  linsolve::FlopCounter counter;
  LmEngine engine(problem, std::move(x0), cfg.lambda0, cfg, counter);
  if (!std::isfinite(engine.value()) || !std::isfinite(engine.gradient_norm()))
    throw std::invalid_argument("loss is not finite at the starting point");

  SolveReport rep;
  rep.loss_history.push_back(engine.value());
  while (engine.gradient_norm() > cfg.epsilon && rep.iterations < cfg.max_outer_iter) {
    const StepOutcome o = engine.step();
    ++rep.iterations;
    (o.accepted ? rep.accepted_steps : rep.rejected_steps)++;
    rep.loss_history.push_back(engine.value());
    rep.levels.emplace_back("fine");
    if (trace)
      trace({rep.iterations, "fine", engine.value(), engine.gradient_norm(), engine.lambda(),
             o.rho, o.accepted, counter.matvec_flops()});
  }
  rep.final_gradient_norm = engine.gradient_norm();
  rep.converged = engine.gradient_norm() <= cfg.epsilon;
  rep.matvec_flops = counter.matvec_flops();
  rep.final_x = engine.x();
  return rep;
}

SolveReport lm_solve(const pde::ResidualSystem& sys, const ann::NetworkParams& p0,
                     const LmConfig& cfg, const TraceFn& trace) {
  require(p0.matches(sys.arch()), "starting parameters do not match the network shape");
  SolveReport rep = lm_solve(static_cast<const LeastSquaresProblem&>(sys), p0.flat(), cfg, trace);
  rep.final_params = ann::NetworkParams(p0.hidden(), p0.inputs(), rep.final_x);
  return rep;
}

}  // namespace mllm::lm
