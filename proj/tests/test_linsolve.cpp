#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "mllm/linsolve.hpp"
#include "support.hpp"

using namespace mllm;
using namespace mllm::linsolve;
using testing::random_matrix;
using testing::random_vector;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& M) {
  Eigen::MatrixXd E(M.rows(), M.cols());
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t j = 0; j < M.cols(); ++j) E(i, j) = M(i, j);
  return E;
}

Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ||(J^T J + lambda I) s + J^T F + corr||, recomputed independently.
double model_gradient(const Matrix& J, std::span<const double> F, double lambda,
                      std::span<const double> corr, std::span<const double> s) {
  const Eigen::MatrixXd E = to_eigen(J);
  Eigen::VectorXd g = E.transpose() * (E * to_eigen(s)) + lambda * to_eigen(s) +
                      E.transpose() * to_eigen(F);
  if (!corr.empty()) g += to_eigen(corr);
  return g.norm();
}

}  // namespace

TEST_CASE("flop counter") {
  FlopCounter c;
  c.add_matvec(3, 5);
  CHECK(c.matvec_flops() == 30);
  c.add(4);
  CHECK(c.matvec_flops() == 34);
}

TEST_CASE("cgls on the identity") {
  const Matrix J = Matrix::identity(4);
  const Vector F{-1, 0, 0, 0};
  FlopCounter c;
  const auto res = cgls_truncated(J, F, 1.0, {}, {1e-12, 0}, c);
  CHECK(res.step[0] == doctest::Approx(0.5));
  for (std::size_t i = 1; i < 4; ++i) CHECK(res.step[i] == doctest::Approx(0.0));
  CHECK(res.iterations == 1);
  CHECK(c.matvec_flops() >= 2 * 2 * 16);
}

TEST_CASE("cgls with a zero right-hand side returns a zero step") {
  const Matrix J = random_matrix(6, 4);
  FlopCounter c;
  const auto res = cgls_truncated(J, Vector(6, 0.0), 0.3, Vector(4, 0.0), {}, c);
  CHECK(res.iterations == 0);
  for (double s : res.step) CHECK(s == 0.0);
}

TEST_CASE("cgls against a dense solve of the normal equations") {
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix J = random_matrix(20, 10);
    const Vector F = random_vector(20);
    const double lambda = 0.05;
    const double theta = 0.1;
    FlopCounter c;
    const auto res = cgls_truncated(J, F, lambda, {}, {theta, 0}, c);
    const Eigen::MatrixXd E = to_eigen(J);
    const Eigen::MatrixXd B = E.transpose() * E + lambda * Eigen::MatrixXd::Identity(10, 10);
    const Eigen::VectorXd exact = B.ldlt().solve(-E.transpose() * to_eigen(F));
    const Eigen::VectorXd s = to_eigen(res.step);
    // The stopping rule bounds the model gradient, so the error is at most
    // that bound times ||B^{-1}||.
    const double bound = std::max(theta * s.squaredNorm() / lambda, 1e-8 * exact.norm());
    CHECK((s - exact).norm() <= bound);
  }
}

TEST_CASE("cgls tight tolerance and the correction term") {
  const Matrix J = random_matrix(15, 8);
  const Vector F = random_vector(15), corr = random_vector(8);
  FlopCounter c;
  const auto res = cgls_truncated(J, F, 0.2, corr, {1e-14, 50}, c);
  const Eigen::MatrixXd E = to_eigen(J);
  const Eigen::MatrixXd B = E.transpose() * E + 0.2 * Eigen::MatrixXd::Identity(8, 8);
  const Eigen::VectorXd exact = B.ldlt().solve(-(E.transpose() * to_eigen(F) + to_eigen(corr)));
  CHECK((to_eigen(res.step) - exact).norm() < 1e-8 * exact.norm());

  // The gradient variant sees J^T F + corr directly.
  Vector g(8);
  const Eigen::VectorXd ge = E.transpose() * to_eigen(F) + to_eigen(corr);
  for (std::size_t i = 0; i < 8; ++i) g[i] = ge[i];
  FlopCounter c2;
  const auto res2 = cgls_truncated_from_gradient(J, g, 0.2, {1e-14, 50}, c2);
  CHECK(testing::max_rel_err(res.step, res2.step) < 1e-10);
}

TEST_CASE("satisfied results re-verify the stopping inequality") {
  std::size_t satisfied = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 5 + trial % 30, n = 2 + trial % 17;
    const Matrix J = random_matrix(m, n);
    Vector F = random_vector(m);
    for (double& f : F) f *= std::pow(10.0, testing::uniform(-3, 1));
    const Vector corr = trial % 2 ? random_vector(n) : Vector{};
    const double lambda = std::pow(10.0, testing::uniform(-4, 1));
    const double theta = std::pow(10.0, testing::uniform(-2, 1));
    FlopCounter c;
    const auto res = cgls_truncated(J, F, lambda, corr, {theta, 0}, c);
    const double recomputed = model_gradient(J, F, lambda, corr, res.step);
    CHECK(res.model_gradient_norm == doctest::Approx(recomputed).epsilon(1e-6));
    if (res.satisfied) {
      ++satisfied;
      CHECK(recomputed <= theta * testing::norm(res.step) * testing::norm(res.step) * (1 + 1e-9));
    }
  }
  CHECK(satisfied > 0);
}

TEST_CASE("cgls flop counts are deterministic and 2mn per product") {
  const Matrix J = random_matrix(12, 9);
  const Vector F = random_vector(12);
  FlopCounter a, b;
  const auto ra = cgls_truncated(J, F, 0.1, {}, {0.1, 0}, a);
  const auto rb = cgls_truncated(J, F, 0.1, {}, {0.1, 0}, b);
  CHECK(a.matvec_flops() == b.matvec_flops());
  CHECK(ra.step == rb.step);
  CHECK(a.matvec_flops() % (2 * 12 * 9) == 0);
}

TEST_CASE("cgls errors") {
  const Matrix J = random_matrix(4, 3);
  FlopCounter c;
  CHECK_THROWS_AS(cgls_truncated(J, Vector(4, 1.0), 0.0, {}, {}, c), std::invalid_argument);
  CHECK_THROWS_AS(cgls_truncated(J, Vector(3, 1.0), 1.0, {}, {}, c), std::invalid_argument);
  Vector F(4, 1.0);
  F[2] = std::nan("");
  CHECK_THROWS_AS(cgls_truncated(J, F, 1.0, {}, {}, c), NumericalError);
}

TEST_CASE("direct solve examples") {
  FlopCounter c;
  const Vector e1 = direct_solve(Matrix::identity(3), Vector{1, 0, 0}, c);
  CHECK(e1 == Vector{1, 0, 0});
  Matrix D(2, 2);
  D(0, 0) = 2;
  D(1, 1) = 4;
  const Vector one = direct_solve(D, Vector{2, 4}, c);
  CHECK(one[0] == doctest::Approx(1.0));
  CHECK(one[1] == doctest::Approx(1.0));
  CHECK(c.matvec_flops() > 0);
}

TEST_CASE("direct solve agrees with a tight cgls run") {
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix J = random_matrix(8, 8);
    const Vector F = random_vector(8);
    const double lambda = 0.5;
    const Eigen::MatrixXd E = to_eigen(J);
    const Eigen::MatrixXd B = E.transpose() * E + lambda * Eigen::MatrixXd::Identity(8, 8);
    Matrix Bm(8, 8);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) Bm(i, j) = B(i, j);
    const Eigen::VectorXd rhs = -E.transpose() * to_eigen(F);
    Vector r(8);
    for (std::size_t i = 0; i < 8; ++i) r[i] = rhs[i];
    FlopCounter c;
    const Vector s_direct = direct_solve(Bm, r, c);
    const Eigen::VectorXd res = B * to_eigen(s_direct) - rhs;
    CHECK(res.norm() <= 1e-10 * rhs.norm());
    const auto s_cg = cgls_truncated(J, F, lambda, {}, {1e-15, 100}, c);
    CHECK((to_eigen(s_direct) - to_eigen(s_cg.step)).norm() < 1e-8 * (1 + to_eigen(s_direct).norm()));
  }
}

TEST_CASE("direct solve rejects indefinite systems") {
  Matrix B = Matrix::identity(3);
  B(1, 1) = -1.0;
  FlopCounter c;
  CHECK_THROWS_AS(direct_solve(B, Vector{1, 1, 1}, c), NumericalError);
}
