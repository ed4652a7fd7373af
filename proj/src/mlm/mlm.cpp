#include "mllm/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mllm/kernels.hpp"

namespace mllm::mlm {

using lm::SolveReport;
using lm::StepOutcome;

void MlmConfig::validate() const {
  LmConfig::validate();
  // d is copied between levels, so ||R|| >= 1 and the bound reduces to 1.
  require(kappa_h > 0.0 && kappa_h < 1.0, "kappa_h must lie in (0,1)");
  require(coarse_tolerance() > 0.0, "coarse tolerance must be positive");
  require(max_coarse_iter >= 1, "at least one coarse iteration is required");
  require(coarsening.eps_amg > 0.0 && coarsening.eps_amg < 1.0, "eps_amg must lie in (0,1)");
}

lm::LmConfig MlmConfig::coarse_config() const {
  lm::LmConfig c = *this;
  c.epsilon = coarse_tolerance();
  c.max_outer_iter = max_coarse_iter;
  c.inner = coarse_inner;
  return c;
}

NetworkHierarchy::NetworkHierarchy(const pde::ResidualSystem& fine, amg::TransferOperators ops,
                                   amg::CoarseningOptions opts)
    : fine_(&fine), ops_(std::move(ops)), opts_(opts) {
  require(ops_.fine_size() == fine.arch().hidden,
          "transfer operators do not match the hidden layer size");
  coarse_ = std::make_unique<pde::ResidualSystem>(fine.with_hidden(ops_.coarse_size()));
}

Vector NetworkHierarchy::restrict(std::span<const double> x, linsolve::FlopCounter& counter) const {
  require(x.size() == fine_->parameter_count(), "fine vector has the wrong length");
  return amg::apply_blockwise(ops_, x, amg::Direction::restrict, counter);
}

Vector NetworkHierarchy::prolong(std::span<const double> x, linsolve::FlopCounter& counter) const {
  require(x.size() == coarse_->parameter_count(), "coarse vector has the wrong length");
  return amg::apply_blockwise(ops_, x, amg::Direction::prolong, counter);
}

void NetworkHierarchy::rebuild(const Matrix& fine_jacobian) {
  ops_ = amg::coarsen(fine_jacobian, fine_->arch(), opts_).ops;
  if (coarse_->arch().hidden != ops_.coarse_size())
    coarse_ = std::make_unique<pde::ResidualSystem>(fine_->with_hidden(ops_.coarse_size()));
}

namespace {

CoarseModel make_model(const Hierarchy& h, std::span<const double> x, double gradient_norm,
                       Vector restricted_gradient, const lm::LmConfig& cfg,
                       linsolve::FlopCounter& counter) {
  CoarseModel m;
  m.x0H = h.restrict(x, counter);
  m.restricted_gradient = std::move(restricted_gradient);
  require(m.restricted_gradient.size() == m.x0H.size(), "restricted gradient has the wrong length");
  m.engine = std::make_unique<lm::LmEngine>(h.coarse(), m.x0H, cfg.lambda0, cfg, counter);
  m.corr.resize(m.x0H.size());
  const Vector& gH = m.engine->gradient();
  for (std::size_t i = 0; i < m.corr.size(); ++i) m.corr[i] = m.restricted_gradient[i] - gH[i];
  m.engine->attach_correction(m.corr);
  Vector diff = m.engine->gradient();
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= m.restricted_gradient[i];
  m.coherence_violation = kernels::nrm2(diff) / (1.0 + gradient_norm);
  return m;
}

}  // namespace

CoarseModel build_coarse_model(const Hierarchy& h, std::span<const double> x,
                               std::span<const double> g, const lm::LmConfig& cfg,
                               linsolve::FlopCounter& counter) {
  require(x.size() == g.size(), "point and gradient lengths differ");
  return make_model(h, x, kernels::nrm2(g), h.restrict(g, counter), cfg, counter);
}

bool go_down(double restricted_norm, double gradient_norm, double kappa_h, double eps_h) {
  return restricted_norm >= kappa_h * gradient_norm && restricted_norm > eps_h;
}

bool go_down(std::span<const double> g, const Hierarchy& h, double kappa_h, double eps_h) {
  linsolve::FlopCounter unused;
  return go_down(kernels::nrm2(h.restrict(g, unused)), kernels::nrm2(g), kappa_h, eps_h);
}

CoarseResult coarse_cycle(CoarseModel& model, double lambda, const lm::LmConfig& cfg) {
  require(model.engine != nullptr, "coarse model has no engine");
  lm::LmEngine& e = *model.engine;
  e.set_lambda(lambda);
  const double start = e.value();
  CoarseResult out;
  while (e.gradient_norm() > cfg.epsilon && out.iterations < cfg.max_outer_iter) {
    const StepOutcome o = e.step();
    ++out.iterations;
    if (o.accepted) ++out.accepted;
  }
  out.step = e.x();
  for (std::size_t i = 0; i < out.step.size(); ++i) out.step[i] -= model.x0H[i];
  out.predicted = start - e.value();
  return out;
}

namespace {

SolveReport run(const LeastSquaresProblem& problem, Hierarchy& h, Vector x0, const MlmConfig& cfg,
                const lm::TraceFn& trace, linsolve::FlopCounter& counter) {
  cfg.validate();
  lm::LmEngine fine(problem, std::move(x0), cfg.lambda0, cfg, counter);
  if (!std::isfinite(fine.value()) || !std::isfinite(fine.gradient_norm()))
    throw std::invalid_argument("loss is not finite at the starting point");
  const lm::LmConfig coarse_cfg = cfg.coarse_config();

  SolveReport rep;
  rep.coarse_size = h.coarse_size();
  rep.loss_history.push_back(fine.value());
  bool previous_fine = false;
  while (fine.gradient_norm() > cfg.epsilon && rep.iterations < cfg.max_outer_iter) {
    StepOutcome o;
    bool coarse = false;
    if (previous_fine) {
      if (cfg.rebuild_transfer) {
        h.rebuild(fine.jacobian());
        rep.coarse_size = h.coarse_size();
      }
      Vector Rg = h.restrict(fine.gradient(), counter);
      if (go_down(kernels::nrm2(Rg), fine.gradient_norm(), cfg.kappa_h, cfg.coarse_tolerance())) {
        try {
          CoarseModel model =
              make_model(h, fine.x(), fine.gradient_norm(), std::move(Rg), coarse_cfg, counter);
          rep.max_coherence_violation =
              std::max(rep.max_coherence_violation, model.coherence_violation);
          ++rep.coarse_attempts;
          const CoarseResult cr = coarse_cycle(model, fine.lambda(), coarse_cfg);
          rep.coarse_inner_iterations += cr.iterations;
          const Vector s = h.prolong(cr.step, counter);
          o = fine.try_step(s, cr.predicted);
          coarse = true;
          if (o.accepted) ++rep.coarse_accepted;
        } catch (const NumericalError&) {
          coarse = false;
        }
      }
    }
    if (!coarse) o = fine.step();
    previous_fine = !coarse;

    ++rep.iterations;
    (o.accepted ? rep.accepted_steps : rep.rejected_steps)++;
    rep.loss_history.push_back(fine.value());
    const char* level = coarse ? "coarse" : "fine";
    rep.levels.emplace_back(level);
    if (trace)
      trace({rep.iterations, level, fine.value(), fine.gradient_norm(), fine.lambda(), o.rho,
             o.accepted, counter.matvec_flops()});
  }
  rep.final_gradient_norm = fine.gradient_norm();
  rep.converged = fine.gradient_norm() <= cfg.epsilon;
  rep.matvec_flops = counter.matvec_flops();
  rep.final_x = fine.x();
  return rep;
}

}  // namespace

SolveReport mlm_solve(const LeastSquaresProblem& problem, Hierarchy& h, Vector x0,
                      const MlmConfig& cfg, const lm::TraceFn& trace) {
  linsolve::FlopCounter counter;
  return run(problem, h, std::move(x0), cfg, trace, counter);
}

amg::Coarsening coarsen_at(const pde::ResidualSystem& sys, const ann::NetworkParams& p0,
                           const amg::CoarseningOptions& opts) {
  require(p0.matches(sys.arch()), "starting parameters do not match the network shape");
  return amg::coarsen(sys.residual_jacobian(p0), sys.arch(), opts);
}

SolveReport mlm_solve(const pde::ResidualSystem& sys, const ann::NetworkParams& p0,
                      const MlmConfig& cfg, const amg::TransferOperators& ops,
                      const lm::TraceFn& trace) {
  require(p0.matches(sys.arch()), "starting parameters do not match the network shape");
  NetworkHierarchy h(sys, ops, cfg.coarsening);
  linsolve::FlopCounter counter;
  SolveReport rep = run(sys, h, p0.flat(), cfg, trace, counter);
  rep.final_params = ann::NetworkParams(p0.hidden(), p0.inputs(), rep.final_x);
  return rep;
}

SolveReport mlm_solve(const pde::ResidualSystem& sys, const ann::NetworkParams& p0,
                      const MlmConfig& cfg, const lm::TraceFn& trace) {
  cfg.validate();
  const amg::Coarsening c = coarsen_at(sys, p0, cfg.coarsening);
  NetworkHierarchy h(sys, c.ops, cfg.coarsening);
  linsolve::FlopCounter counter;
  // One Gram product per parameter block of width r.
  const std::uint64_t m = sys.residual_count();
  const std::uint64_t r = sys.arch().hidden;
  counter.add(2ull * m * r * r * (sys.arch().inputs + 2));
  SolveReport rep = run(sys, h, p0.flat(), cfg, trace, counter);
  rep.final_params = ann::NetworkParams(p0.hidden(), p0.inputs(), rep.final_x);
  return rep;
}

}  // namespace mllm::mlm
