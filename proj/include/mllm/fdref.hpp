#pragma once

// Finite-difference reference solutions for the 2D Helmholtz problems with
// a variable velocity field, used to measure RMSE where no closed form
// solution exists.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mllm/pde.hpp"

namespace mllm::fdref {

/// Nodal values on the uniform grid of [0,1]^2 with points_per_axis points
/// per axis, boundary included. field[i * n + j] is the value at
/// (i * spacing, j * spacing).
struct FdGrid {
  std::size_t points_per_axis = 0;
  double spacing = 0.0;
  std::vector<double> field;

  double at(std::size_t i, std::size_t j) const { return field[i * points_per_axis + j]; }
  double& at(std::size_t i, std::size_t j) { return field[i * points_per_axis + j]; }
};

/// Solves -lap u - k2(z) u = g1 with the 5-point Laplacian and u = 0 on the
/// boundary. Throws NumericalError if the discrete operator is singular or
/// the relative residual of the computed solution exceeds 1e-10.
FdGrid solve_fd(const pde::Field& k2, const pde::Field& g1, std::size_t points_per_axis);

/// k2(z) = (2 pi nu / c(z))^2.
FdGrid solve_helmholtz_fd(double nu, const pde::Field& c, const pde::Field& g1,
                          std::size_t points_per_axis = 201);

/// Reference for a helmholtz2d problem built by pde::make_problem.
FdGrid reference_for(const pde::PdeProblem& problem, std::size_t points_per_axis = 201);

/// Bilinear interpolation; throws std::invalid_argument outside [0,1]^2.
double sample_reference(const FdGrid& grid, std::span<const double> z);
pde::Field as_field(FdGrid grid);

/// Binary cache. Files are named from (nu, velocity, resolution).
std::string cache_name(double nu, pde::Velocity velocity, std::size_t points_per_axis);
void save_grid(const std::filesystem::path& path, const FdGrid& grid);
/// nullopt if the file is missing or malformed.
std::optional<FdGrid> load_grid(const std::filesystem::path& path);
/// Loads from `dir` if present, otherwise solves and stores.
FdGrid cached_reference(const std::filesystem::path& dir, const pde::PdeProblem& problem,
                        std::size_t points_per_axis = 201);

}  // namespace mllm::fdref
