#include <algorithm>
#include <cmath>
#include <string>

#include "mllm/kernels.hpp"
#include "mllm/pde.hpp"

namespace mllm::pde {

TrainingSet build_training_set(const PdeProblem& problem) {
  require(problem.nu > 0.0, "frequency nu must be positive");
  const double q = 2.0 * problem.nu;
  const auto rounded = std::llround(q);
  // Non-integer 2 nu rounds the interval count up so the spacing never
  // exceeds 1/(2 nu).
  const std::size_t intervals = std::max<std::size_t>(
      1, std::abs(q - static_cast<double>(rounded)) < 1e-9 ? static_cast<std::size_t>(rounded)
                                                           : static_cast<std::size_t>(std::ceil(q)));
  TrainingSet ts;
  ts.points_per_axis = intervals + 1;
  ts.spacing = 1.0 / static_cast<double>(intervals);
  ts.interior.dim = ts.boundary.dim = problem.dim;

  std::vector<std::size_t> idx(problem.dim, 0);
  std::vector<double> z(problem.dim);
  std::size_t total = 1;
  for (std::size_t a = 0; a < problem.dim; ++a) total *= ts.points_per_axis;
  for (std::size_t n = 0; n < total; ++n) {
    // First axis varies slowest.
    std::size_t rem = n;
    bool on_boundary = false;
    for (std::size_t a = problem.dim; a-- > 0;) {
      idx[a] = rem % ts.points_per_axis;
      rem /= ts.points_per_axis;
      z[a] = static_cast<double>(idx[a]) / static_cast<double>(intervals);
      on_boundary = on_boundary || idx[a] == 0 || idx[a] == intervals;
    }
    (on_boundary ? ts.boundary : ts.interior).push(z);
  }
  return ts;
}

ResidualSystem::ResidualSystem(PdeProblem problem, ann::NetworkArch arch, TrainingSet training)
    : problem_(std::move(problem)), arch_(arch), training_(std::move(training)) {
  problem_.validate();
  arch_.validate();
  require(arch_.inputs == problem_.dim, "network input dimension differs from problem dimension");
  require(training_.interior.dim == problem_.dim && training_.boundary.dim == problem_.dim,
          "training points have the wrong dimension");
  require(training_.boundary.size() > 0, "training set needs boundary points");
  const double t = static_cast<double>(training_.total());
  penalty_ = problem_.penalty.value_or(0.1 * t);
  require(penalty_ > 0.0, "boundary penalty must be positive");
  interior_scale_ = 1.0 / std::sqrt(t);
  boundary_scale_ = std::sqrt(penalty_) / std::sqrt(t);

  for (std::size_t i = 0; i < training_.interior.size(); ++i) {
    const auto z = training_.interior.point(i);
    g1_at_interior_.push_back(problem_.g1(z));
    zero_order_at_interior_.push_back(problem_.helmholtz_coefficient(z));
  }
  for (std::size_t i = 0; i < training_.boundary.size(); ++i)
    g2_at_boundary_.push_back(problem_.g2(training_.boundary.point(i)));
}

ResidualSystem::ResidualSystem(PdeProblem problem, ann::NetworkArch arch)
    : ResidualSystem(problem, arch, build_training_set(problem)) {}

ResidualSystem ResidualSystem::with_hidden(std::size_t hidden) const {
  ann::NetworkArch coarse = arch_;
  coarse.hidden = hidden;
  return ResidualSystem(problem_, coarse, training_);
}

namespace {

// D(z, u) given u and lap u, with its partials in u and lap u.
struct OperatorValue {
  double value;
  double d_u;
  double d_lap;
};

OperatorValue apply_operator(Operator op, double u, double lap, double k2) {
  switch (op) {
    case Operator::poisson: return {-lap, 0.0, -1.0};
    case Operator::helmholtz1d:
    case Operator::helmholtz2d_velocity: return {-lap - k2 * u, -k2, -1.0};
    case Operator::sine_nonlinear: return {lap + std::sin(u), std::cos(u), 1.0};
    case Operator::exp_nonlinear: {
      const double e = std::exp(u);
      return {lap + e, e, 1.0};
    }
  }
  return {0.0, 0.0, 0.0};
}

}  // namespace

void ResidualSystem::assemble(std::span<const double> x, std::span<double> out,
                              Matrix* jacobian) const {
  require(x.size() == parameter_count(), "parameter vector has the wrong length");
  require(out.size() == residual_count(), "residual buffer has the wrong length");
  const ann::NetworkParams p(arch_.hidden, arch_.inputs, Vector(x.begin(), x.end()));
  const std::size_t n = parameter_count();
  if (jacobian && (jacobian->rows() != residual_count() || jacobian->cols() != n))
    jacobian->resize(residual_count(), n);
  const bool with_jac = jacobian != nullptr;

  ann::PointEval e;
  const std::size_t n_int = training_.interior.size();
  for (std::size_t i = 0; i < n_int; ++i) {
    ann::evaluate_point(arch_, p, training_.interior.point(i), with_jac, e);
    const auto d = apply_operator(problem_.op, e.value, e.laplacian, zero_order_at_interior_[i]);
    out[i] = interior_scale_ * (d.value - g1_at_interior_[i]);
    if (!with_jac) continue;
    auto row = jacobian->row(i);
    const double a = interior_scale_ * d.d_u;
    const double c = interior_scale_ * d.d_lap;
    for (std::size_t k = 0; k < n; ++k) row[k] = a * e.d_value[k] + c * e.d_laplacian[k];
  }
  for (std::size_t i = 0; i < training_.boundary.size(); ++i) {
    ann::evaluate_point(arch_, p, training_.boundary.point(i), with_jac, e);
    out[n_int + i] = boundary_scale_ * (e.value - g2_at_boundary_[i]);
    if (!with_jac) continue;
    auto row = jacobian->row(n_int + i);
    for (std::size_t k = 0; k < n; ++k) row[k] = boundary_scale_ * e.d_value[k];
  }
}

void ResidualSystem::residual(std::span<const double> x, std::span<double> out) const {
  assemble(x, out, nullptr);
}

void ResidualSystem::residual_and_jacobian(std::span<const double> x, std::span<double> out,
                                           Matrix& jacobian) const {
  assemble(x, out, &jacobian);
}

Vector ResidualSystem::residual_vector(const ann::NetworkParams& p) const {
  require(p.matches(arch_), "parameters do not match the network shape");
  Vector F(residual_count());
  residual(p.flat(), F);
  return F;
}

Matrix ResidualSystem::residual_jacobian(const ann::NetworkParams& p) const {
  require(p.matches(arch_), "parameters do not match the network shape");
  Vector F(residual_count());
  Matrix J;
  residual_and_jacobian(p.flat(), F, J);
  return J;
}

std::pair<double, Vector> ResidualSystem::loss_and_gradient(const ann::NetworkParams& p) const {
  require(p.matches(arch_), "parameters do not match the network shape");
  Vector F(residual_count());
  Matrix J;
  residual_and_jacobian(p.flat(), F, J);
  Vector g(parameter_count());
  kernels::gemv_t(J, F, g);
  return {0.5 * kernels::dot(F, F), std::move(g)};
}

PointSet test_grid(std::size_t dim, std::size_t points_per_axis, const TrainingSet& training) {
  require(points_per_axis >= 1, "test grid needs at least one point per axis");
  PointSet grid;
  grid.dim = dim;
  auto is_training_point = [&](std::span<const double> z) {
    for (const PointSet* set : {&training.interior, &training.boundary})
      for (std::size_t i = 0; i < set->size(); ++i) {
        const auto t = set->point(i);
        bool same = true;
        for (std::size_t a = 0; a < dim && same; ++a) same = std::abs(t[a] - z[a]) < 1e-12;
        if (same) return true;
      }
    return false;
  };
  std::size_t total = 1;
  for (std::size_t a = 0; a < dim; ++a) total *= points_per_axis;
  std::vector<double> z(dim);
  for (std::size_t n = 0; n < total; ++n) {
    std::size_t rem = n;
    for (std::size_t a = dim; a-- > 0;) {
      z[a] = static_cast<double>(rem % points_per_axis + 1) /
             static_cast<double>(points_per_axis + 1);
      rem /= points_per_axis;
    }
    if (!is_training_point(z)) grid.push(z);
  }
  return grid;
}

double rmse(const ResidualSystem& sys, const ann::NetworkParams& p, std::size_t points_per_axis,
            const Field& reference) {
  require(static_cast<bool>(reference), "rmse needs a reference field");
  const PointSet grid = test_grid(sys.problem().dim, points_per_axis, sys.training());
  require(grid.size() > 0, "test grid is empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto z = grid.point(i);
    const double err = ann::net_eval(sys.arch(), p, z) - reference(z);
    sum += err * err;
  }
  return std::sqrt(sum / static_cast<double>(grid.size()));
}

double rmse(const ResidualSystem& sys, const ann::NetworkParams& p, std::size_t points_per_axis) {
  if (!sys.problem().true_solution)
    throw InvalidState("problem '" + sys.problem().name +
                       "' has no closed-form solution; supply a reference field");
  return rmse(sys, p, points_per_axis, *sys.problem().true_solution);
}

}  // namespace mllm::pde
