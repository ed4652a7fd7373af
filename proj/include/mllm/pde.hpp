#pragma once

// Stationary PDE benchmark problems on the unit hypercube with Dirichlet
// data, and the least-squares residual system that trains a network on them.
//
// For training set T with t points (interior I, boundary B) the loss is
//
//   L(p) = 1/(2t) * ( sum_{z in I} (D(z, u) - g1(z))^2
//                   + lambda_p * sum_{z in B} (u(z) - g2(z))^2 )
//
// and the residual vector stacks (D - g1)/sqrt(t) over I followed by
// sqrt(lambda_p/t) (u - g2) over B, so that L = 1/2 ||F||^2 exactly.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mllm/ann.hpp"
#include "mllm/dense.hpp"
#include "mllm/lsq.hpp"

namespace mllm::pde {

using Field = std::function<double(std::span<const double>)>;

enum class Operator {
  poisson,               // -lap u
  helmholtz1d,           // -lap u - nu^2 u
  helmholtz2d_velocity,  // -lap u - (2 pi nu / c(z))^2 u
  sine_nonlinear,        // lap u + sin u
  exp_nonlinear,         // lap u + exp u
};

std::string_view to_string(Operator op);

/// Velocity fields for the 2D Helmholtz problems.
enum class Velocity {
  constant,    // c = 40
  two_layer,   // 20 for z1 < 0.5, 40 otherwise
  four_layer,  // 20, 40, 60, 80 on the quarters of z1
  sine,        // 0.1 sin(z1 + z2)
};

std::string_view to_string(Velocity v);
Velocity parse_velocity(std::string_view name);
Field velocity_field(Velocity v);

struct PdeProblem {
  std::string name;
  std::size_t dim = 1;
  Operator op = Operator::poisson;
  double nu = 1.0;
  std::optional<Velocity> velocity;  // helmholtz2d_velocity only
  Field g1;                          // interior right-hand side
  Field g2;                          // Dirichlet data
  std::optional<Field> true_solution;
  /// Boundary penalty weight; 0.1 * t when unset.
  std::optional<double> penalty;

  /// Throws std::invalid_argument on an unsupported operator/dimension pair
  /// or missing data.
  void validate() const;

  /// Coefficient k(z) in the zero-order term for the Helmholtz variants
  /// (nu^2 in 1D, (2 pi nu / c(z))^2 in 2D); zero otherwise.
  double helmholtz_coefficient(std::span<const double> z) const;
};

/// Named benchmark problems. Throws std::invalid_argument for unknown ids or
/// a velocity given to a problem that does not take one.
struct ProblemInfo {
  std::string id;
  std::size_t dim;
  std::string equation;
  std::string solution;
};
const std::vector<ProblemInfo>& problem_catalog();
PdeProblem make_problem(std::string_view id, double nu,
                        std::optional<Velocity> velocity = std::nullopt);

/// Flat storage for a list of points in R^dim.
struct PointSet {
  std::size_t dim = 1;
  std::vector<double> coords;

  std::size_t size() const { return dim == 0 ? 0 : coords.size() / dim; }
  std::span<const double> point(std::size_t i) const { return {coords.data() + i * dim, dim}; }
  void push(std::span<const double> z) { coords.insert(coords.end(), z.begin(), z.end()); }
};

struct TrainingSet {
  PointSet interior;
  PointSet boundary;
  std::size_t total() const { return interior.size() + boundary.size(); }
  double spacing = 0.0;
  std::size_t points_per_axis = 0;
};

/// Cartesian grid with spacing 1/(2 nu) per axis, 2 nu + 1 points per axis,
/// points on the boundary of the unit cube classified as boundary.
TrainingSet build_training_set(const PdeProblem& problem);

/// p -> F(p) and J(p) for a network of shape `arch` trained on `problem`.
class ResidualSystem final : public LeastSquaresProblem {
 public:
  ResidualSystem(PdeProblem problem, ann::NetworkArch arch, TrainingSet training);
  /// Builds the training set from the problem.
  ResidualSystem(PdeProblem problem, ann::NetworkArch arch);

  std::size_t residual_count() const override { return training_.total(); }
  std::size_t parameter_count() const override { return arch_.param_count(); }
  void residual(std::span<const double> x, std::span<double> out) const override;
  void residual_and_jacobian(std::span<const double> x, std::span<double> out,
                             Matrix& jacobian) const override;

  Vector residual_vector(const ann::NetworkParams& p) const;
  Matrix residual_jacobian(const ann::NetworkParams& p) const;
  /// (1/2 ||F||^2, J^T F)
  std::pair<double, Vector> loss_and_gradient(const ann::NetworkParams& p) const;

  /// Same problem and training points with `hidden` hidden nodes.
  ResidualSystem with_hidden(std::size_t hidden) const;

  const PdeProblem& problem() const { return problem_; }
  const ann::NetworkArch& arch() const { return arch_; }
  const TrainingSet& training() const { return training_; }
  double penalty() const { return penalty_; }

 private:
  void assemble(std::span<const double> x, std::span<double> out, Matrix* jacobian) const;

  PdeProblem problem_;
  ann::NetworkArch arch_;
  TrainingSet training_;
  double penalty_ = 0.0;
  double interior_scale_ = 0.0;
  double boundary_scale_ = 0.0;
  Vector g1_at_interior_;
  Vector g2_at_boundary_;
  Vector zero_order_at_interior_;
};

/// Uniform test grid with `points_per_axis` points per axis strictly inside
/// (0,1): z_k = k / (points_per_axis + 1). Points that coincide with a
/// training point are dropped.
PointSet test_grid(std::size_t dim, std::size_t points_per_axis, const TrainingSet& training);

/// RMSE of the network against the problem's true solution on test_grid().
/// Throws InvalidState when the problem has no true solution.
double rmse(const ResidualSystem& sys, const ann::NetworkParams& p,
            std::size_t points_per_axis = 100);
/// RMSE against an explicit reference field.
double rmse(const ResidualSystem& sys, const ann::NetworkParams& p, std::size_t points_per_axis,
            const Field& reference);

}  // namespace mllm::pde
