#include "mllm/fdref.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>

namespace mllm::fdref {

FdGrid solve_fd(const pde::Field& k2, const pde::Field& g1, std::size_t points_per_axis) {
  require(points_per_axis >= 3, "at least 3 points per axis are required");
  require(static_cast<bool>(k2) && static_cast<bool>(g1), "coefficient and right-hand side are required");
  const std::size_t n = points_per_axis;
  const std::size_t m = n - 2;  // interior points per axis
  const double h = 1.0 / static_cast<double>(n - 1);
  const double inv_h2 = 1.0 / (h * h);
  auto index = [m](std::size_t i, std::size_t j) {
    return static_cast<Eigen::Index>((i - 1) * m + (j - 1));
  };

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(5 * m * m);
  Eigen::VectorXd b(static_cast<Eigen::Index>(m * m));
  double max_k2 = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const std::array<double, 2> z{static_cast<double>(i) * h, static_cast<double>(j) * h};
      const double k = k2(z);
      max_k2 = std::max(max_k2, std::abs(k));
      const Eigen::Index row = index(i, j);
      triplets.emplace_back(row, row, 4.0 * inv_h2 - k);
      if (i > 1) triplets.emplace_back(row, index(i - 1, j), -inv_h2);
      if (i + 2 < n) triplets.emplace_back(row, index(i + 1, j), -inv_h2);
      if (j > 1) triplets.emplace_back(row, index(i, j - 1), -inv_h2);
      if (j + 2 < n) triplets.emplace_back(row, index(i, j + 1), -inv_h2);
      b[row] = g1(z);
    }
  }
  Eigen::SparseMatrix<double> A(b.size(), b.size());
  A.setFromTriplets(triplets.begin(), triplets.end());

  char wavenumber[64];
  std::snprintf(wavenumber, sizeof wavenumber, "%.6g", std::sqrt(max_k2));
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success)
    throw NumericalError(std::string("singular Helmholtz operator (max wavenumber ") + wavenumber +
                         ")");
  const Eigen::VectorXd u = lu.solve(b);
  const double bnorm = b.norm();
  const double res = (A * u - b).norm();
  if (!u.allFinite() || res > 1e-10 * bnorm)
    throw NumericalError(std::string("inaccurate Helmholtz solve near resonance (max wavenumber ") +
                           wavenumber + ")");

  FdGrid grid;
  grid.points_per_axis = n;
  grid.spacing = h;
  grid.field.assign(n * n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i)
    for (std::size_t j = 1; j + 1 < n; ++j) grid.at(i, j) = u[index(i, j)];
  return grid;
}

FdGrid solve_helmholtz_fd(double nu, const pde::Field& c, const pde::Field& g1,
                          std::size_t points_per_axis) {
  require(static_cast<bool>(c), "velocity field is required");
  const auto k2 = [nu, c](std::span<const double> z) {
    const double k = 2.0 * std::numbers::pi * nu / c(z);
    return k * k;
  };
  return solve_fd(k2, g1, points_per_axis);
}

FdGrid reference_for(const pde::PdeProblem& problem, std::size_t points_per_axis) {
  require(problem.op == pde::Operator::helmholtz2d_velocity && problem.velocity,
          "finite-difference references exist only for the 2D Helmholtz problems");
  return solve_helmholtz_fd(problem.nu, pde::velocity_field(*problem.velocity), problem.g1,
                            points_per_axis);
}

double sample_reference(const FdGrid& grid, std::span<const double> z) {
  require(z.size() == 2, "reference fields are two-dimensional");
  require(z[0] >= 0.0 && z[0] <= 1.0 && z[1] >= 0.0 && z[1] <= 1.0,
          "sample point lies outside the unit square");
  require(grid.points_per_axis >= 2, "empty grid");
  const std::size_t last = grid.points_per_axis - 1;
  const double x = z[0] * static_cast<double>(last);
  const double y = z[1] * static_cast<double>(last);
  const std::size_t i = std::min(static_cast<std::size_t>(x), last - 1);
  const std::size_t j = std::min(static_cast<std::size_t>(y), last - 1);
  const double tx = x - static_cast<double>(i);
  const double ty = y - static_cast<double>(j);
  return (1 - tx) * (1 - ty) * grid.at(i, j) + tx * (1 - ty) * grid.at(i + 1, j) +
         (1 - tx) * ty * grid.at(i, j + 1) + tx * ty * grid.at(i + 1, j + 1);
}

pde::Field as_field(FdGrid grid) {
  return [g = std::make_shared<const FdGrid>(std::move(grid))](std::span<const double> z) {
    return sample_reference(*g, z);
  };
}

namespace {
constexpr char kMagic[8] = {'M', 'L', 'L', 'M', 'F', 'D', '0', '1'};
}

std::string cache_name(double nu, pde::Velocity velocity, std::size_t points_per_axis) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "fd_nu%.6g_%s_n%zu.bin", nu, std::string(pde::to_string(velocity)).c_str(),
                points_per_axis);
  return buf;
}

void save_grid(const std::filesystem::path& path, const FdGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::uint64_t n = grid.points_per_axis;
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(grid.field.data()),
            static_cast<std::streamsize>(grid.field.size() * sizeof(double)));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::optional<FdGrid> load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[sizeof kMagic];
  std::uint64_t n = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    return std::nullopt;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n) || n < 3 || n > (1u << 16)) return std::nullopt;
  FdGrid grid;
  grid.points_per_axis = n;
  grid.spacing = 1.0 / static_cast<double>(n - 1);
  grid.field.resize(n * n);
  if (!in.read(reinterpret_cast<char*>(grid.field.data()),
               static_cast<std::streamsize>(grid.field.size() * sizeof(double))))
    return std::nullopt;
  return grid;
}

FdGrid cached_reference(const std::filesystem::path& dir, const pde::PdeProblem& problem,
                        std::size_t points_per_axis) {
  require(problem.velocity.has_value(), "problem has no velocity field");
  const auto path = dir / cache_name(problem.nu, *problem.velocity, points_per_axis);
  if (auto grid = load_grid(path); grid && grid->points_per_axis == points_per_axis) return *grid;
  FdGrid grid = reference_for(problem, points_per_axis);
  std::filesystem::create_directories(dir);
  save_grid(path, grid);
  return grid;
}

}  // namespace mllm::fdref
