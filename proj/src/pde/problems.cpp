#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mllm/pde.hpp"

namespace mllm::pde {

std::string_view to_string(Operator op) {
  switch (op) {
    case Operator::poisson: return "poisson";
    case Operator::helmholtz1d: return "helmholtz1d";
    case Operator::helmholtz2d_velocity: return "helmholtz2d_velocity";
    case Operator::sine_nonlinear: return "sine_nonlinear";
    case Operator::exp_nonlinear: return "exp_nonlinear";
  }
  return "unknown";
}

std::string_view to_string(Velocity v) {
  switch (v) {
    case Velocity::constant: return "constant";
    case Velocity::two_layer: return "two_layer";
    case Velocity::four_layer: return "four_layer";
    case Velocity::sine: return "sine";
  }
  return "unknown";
}

Velocity parse_velocity(std::string_view name) {
  for (auto v : {Velocity::constant, Velocity::two_layer, Velocity::four_layer, Velocity::sine})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown velocity field: " + std::string(name));
}

Field velocity_field(Velocity v) {
  switch (v) {
    case Velocity::constant: return [](std::span<const double>) { return 40.0; };
    case Velocity::two_layer:
      return [](std::span<const double> z) { return z[0] < 0.5 ? 20.0 : 40.0; };
    case Velocity::four_layer:
      return [](std::span<const double> z) {
        if (z[0] < 0.25) return 20.0;
        if (z[0] < 0.5) return 40.0;
        if (z[0] < 0.75) return 60.0;
        return 80.0;
      };
    case Velocity::sine:
      // Vanishes at the origin corner; the coefficient is only ever
      // evaluated at interior points.
      return [](std::span<const double> z) { return 0.1 * std::sin(z[0] + z[1]); };
  }
  throw std::invalid_argument("unknown velocity field");
}

void PdeProblem::validate() const {
  require(g1 && g2, "problem needs both g1 and g2");
  require(nu > 0.0, "frequency nu must be positive");
  require(!penalty || *penalty > 0.0, "boundary penalty must be positive");
  bool ok = false;
  switch (op) {
    case Operator::poisson: ok = dim == 1 || dim == 2; break;
    case Operator::helmholtz1d: ok = dim == 1; break;
    case Operator::helmholtz2d_velocity: ok = dim == 2 && velocity.has_value(); break;
    case Operator::sine_nonlinear: ok = dim == 1; break;
    case Operator::exp_nonlinear: ok = dim == 2; break;
  }
  require(ok, "unsupported operator/dimension combination: " + std::string(to_string(op)) +
                  " in " + std::to_string(dim) + "D");
}

double PdeProblem::helmholtz_coefficient(std::span<const double> z) const {
  if (op == Operator::helmholtz1d) return nu * nu;
  if (op == Operator::helmholtz2d_velocity) {
    const double k = 2.0 * std::numbers::pi * nu / velocity_field(*velocity)(z);
    return k * k;
  }
  return 0.0;
}

const std::vector<ProblemInfo>& problem_catalog() {
  static const std::vector<ProblemInfo> catalog{
      {"poisson1d", 1, "-u'' = g1", "cos(nu z)"},
      {"poisson2d", 2, "-lap u = g1", "cos(nu (z1 + z2))"},
      {"helmholtz1d", 1, "-u'' - nu^2 u = 0", "sin(nu z) + cos(nu z)"},
      {"helmholtz2d", 2, "-lap u - (2 pi nu / c(z))^2 u = 1_{(0.25,0.75)^2}",
       "finite-difference reference"},
      {"sine1d", 1, "u'' + sin u = g1", "0.1 cos(nu z)"},
      {"exp2d", 2, "lap u + exp u = g1", "log(nu / (z1 + z2 + 10))"},
  };
  return catalog;
}

PdeProblem make_problem(std::string_view id, double nu, std::optional<Velocity> velocity) {
  require(nu > 0.0, "frequency nu must be positive");
  require(!velocity || id == "helmholtz2d", "only helmholtz2d takes a velocity field");
  PdeProblem pb;
  pb.name = std::string(id);
  pb.nu = nu;
  const auto zero = [](std::span<const double>) { return 0.0; };

  if (id == "poisson1d") {
    pb.dim = 1;
    pb.op = Operator::poisson;
    pb.true_solution = [nu](std::span<const double> z) { return std::cos(nu * z[0]); };
    pb.g1 = [nu](std::span<const double> z) { return nu * nu * std::cos(nu * z[0]); };
  } else if (id == "poisson2d") {
    pb.dim = 2;
    pb.op = Operator::poisson;
    pb.true_solution = [nu](std::span<const double> z) { return std::cos(nu * (z[0] + z[1])); };
    pb.g1 = [nu](std::span<const double> z) {
      return 2.0 * nu * nu * std::cos(nu * (z[0] + z[1]));
    };
  } else if (id == "helmholtz1d") {
    pb.dim = 1;
    pb.op = Operator::helmholtz1d;
    pb.true_solution = [nu](std::span<const double> z) {
      return std::sin(nu * z[0]) + std::cos(nu * z[0]);
    };
    pb.g1 = zero;
  } else if (id == "helmholtz2d") {
    pb.dim = 2;
    pb.op = Operator::helmholtz2d_velocity;
    pb.velocity = velocity.value_or(Velocity::constant);
    pb.name += "_" + std::string(to_string(*pb.velocity));
    pb.g1 = [](std::span<const double> z) {
      return (0.25 < z[0] && z[0] < 0.75 && 0.25 < z[1] && z[1] < 0.75) ? 1.0 : 0.0;
    };
    pb.g2 = zero;
  } else if (id == "sine1d") {
    pb.dim = 1;
    pb.op = Operator::sine_nonlinear;
    pb.true_solution = [nu](std::span<const double> z) { return 0.1 * std::cos(nu * z[0]); };
    pb.g1 = [nu](std::span<const double> z) {
      const double u = 0.1 * std::cos(nu * z[0]);
      return -nu * nu * u + std::sin(u);
    };
  } else if (id == "exp2d") {
    pb.dim = 2;
    pb.op = Operator::exp_nonlinear;
    pb.true_solution = [nu](std::span<const double> z) {
      return std::log(nu / (z[0] + z[1] + 10.0));
    };
    pb.g1 = [nu](std::span<const double> z) {
      const double s = z[0] + z[1] + 10.0;
      return 2.0 / (s * s) + nu / s;
    };
  } else {
    throw std::invalid_argument("unknown problem id: " + std::string(id));
  }
  if (!pb.g2) pb.g2 = *pb.true_solution;
  pb.validate();
  return pb;
}

}  // namespace mllm::pde
