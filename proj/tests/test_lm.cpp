#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "mllm/lm.hpp"
#include "mllm/pde.hpp"
#include "support.hpp"

using namespace mllm;
using namespace mllm::lm;
using testing::random_matrix;
using testing::random_vector;

namespace {

Eigen::VectorXd least_squares(const Matrix& A, const Vector& c) {
  Eigen::MatrixXd E(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) E(i, j) = A(i, j);
  return E.colPivHouseholderQr().solve(Eigen::Map<const Eigen::VectorXd>(c.data(), c.size()));
}

class NanAtOrigin final : public LeastSquaresProblem {
 public:
  std::size_t residual_count() const override { return 1; }
  std::size_t parameter_count() const override { return 1; }
  void residual(std::span<const double> x, std::span<double> out) const override {
    out[0] = x[0] == 0.0 ? std::numeric_limits<double>::quiet_NaN() : x[0];
  }
  void residual_and_jacobian(std::span<const double> x, std::span<double> out,
                             Matrix& J) const override {
    residual(x, out);
    J.resize(1, 1);
    J(0, 0) = 1.0;
  }
};

}  // namespace

TEST_CASE("config validation") {
  LmConfig ok;
  CHECK_NOTHROW(ok.validate());
  auto bad = [](auto mutate) {
    LmConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](LmConfig& c) { c.eta1 = 0.8; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](LmConfig& c) { c.eta2 = 1.0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](LmConfig& c) { c.gamma2 = 0.9; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](LmConfig& c) { c.gamma3 = 1.0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](LmConfig& c) { c.lambda_min = 0.0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](LmConfig& c) { c.lambda0 = 1e-7; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](LmConfig& c) { c.epsilon = 0.0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](LmConfig& c) { c.theta = -1.0; }).validate(), std::invalid_argument);
}

TEST_CASE("a stationary starting point takes zero iterations") {
  const Matrix A = random_matrix(10, 4);
  const Vector c = random_vector(10);
  const Eigen::VectorXd x = least_squares(A, c);
  const LinearResidual prob(A, c);
  const SolveReport rep = lm_solve(prob, Vector(x.data(), x.data() + 4), {});
  CHECK(rep.iterations == 0);
  CHECK(rep.converged);
  CHECK(rep.matvec_flops == 2 * 10 * 4);
  CHECK(rep.loss_history.size() == 1);
}

TEST_CASE("linear surrogate converges to the least-squares solution") {
  for (InnerSolver inner : {InnerSolver::cgls, InnerSolver::direct}) {
    for (auto [m, n] : {std::pair{30u, 8u}, {50u, 20u}}) {
      for (bool consistent : {true, false}) {
        const Matrix A = random_matrix(m, n);
        Vector c = random_vector(m);
        // rho cannot resolve decreases below the rounding of f, so the
        // tolerance must be reachable at the optimal loss.
        if (consistent) c = testing::matvec(A, random_vector(n));
        const LinearResidual prob(A, c);
        LmConfig cfg;
        cfg.epsilon = consistent ? 1e-10 : 1e-6;
        cfg.inner = inner;
        CAPTURE(static_cast<int>(inner));
        CAPTURE(m);
        CAPTURE(consistent);
        const SolveReport rep = lm_solve(prob, Vector(n, 0.0), cfg);
        CHECK(rep.converged);
        CHECK(rep.final_gradient_norm <= cfg.epsilon);
        CHECK(rep.iterations <= n + 10);
        const Eigen::VectorXd x = least_squares(A, c);
        for (std::size_t i = 0; i < n; ++i)
          CHECK(rep.final_x[i] == doctest::Approx(x[i]).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("direct steps are the exact regularized model minimizers") {
  // m >= n uses J^T J, m < n the dual form with J J^T.
  for (auto [m, n] : {std::pair{12u, 5u}, {4u, 9u}}) {
    const Matrix A = random_matrix(m, n);
    const Vector c = random_vector(m);
    const Vector x0 = random_vector(n);
    const LinearResidual prob(A, c);
    LmConfig cfg;
    cfg.inner = InnerSolver::direct;
    linsolve::FlopCounter counter;
    LmEngine eng(prob, x0, 0.3, cfg, counter);
    const Vector g = eng.gradient();
    const StepOutcome out = eng.step();
    // Linear residual: the model is exact, rho = 1.
    CHECK(out.accepted);
    CHECK(out.rho == doctest::Approx(1.0).epsilon(1e-9));
    Eigen::MatrixXd E(m, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) E(i, j) = A(i, j);
    const Eigen::VectorXd s =
        (E.transpose() * E + 0.3 * Eigen::MatrixXd::Identity(n, n))
            .ldlt()
            .solve(-Eigen::Map<const Eigen::VectorXd>(g.data(), n));
    for (std::size_t i = 0; i < n; ++i) CHECK(eng.x()[i] == doctest::Approx(x0[i] + s[i]).epsilon(1e-10));
  }
}

TEST_CASE("report invariants on a network problem") {
  pde::ResidualSystem sys(pde::make_problem("poisson1d", 2), {8, 1});
  ann::NetworkParams p0 = testing::random_params(sys.arch());
  LmConfig cfg;
  std::vector<TraceRecord> trace;
  const SolveReport rep = lm_solve(sys, p0, cfg, [&](const TraceRecord& r) { trace.push_back(r); });
  CHECK(rep.converged);
  CHECK(rep.iterations == rep.accepted_steps + rep.rejected_steps);
  CHECK(rep.loss_history.size() == rep.iterations + 1);
  CHECK(trace.size() == rep.iterations);
  REQUIRE(rep.final_params.has_value());
  CHECK(rep.final_params->flat() == rep.final_x);
  std::uint64_t flops = 0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& r = trace[k];
    CHECK(r.iteration == k + 1);
    CHECK(r.level == "fine");
    CHECK(r.lambda >= cfg.lambda_min);
    CHECK(r.flops >= flops);
    flops = r.flops;
    if (r.accepted)
      CHECK(rep.loss_history[k + 1] < rep.loss_history[k]);
    else
      CHECK(rep.loss_history[k + 1] == rep.loss_history[k]);
  }
  CHECK(rep.matvec_flops == flops);
}

TEST_CASE("lambda schedule") {
  const Matrix A = random_matrix(10, 3);
  const Vector c = random_vector(10);
  const LinearResidual prob(A, c);
  LmConfig cfg;
  linsolve::FlopCounter counter;
  LmEngine eng(prob, Vector(3, 0.0), 0.05, cfg, counter);
  const Vector x = eng.x();

  SUBCASE("very successful step halves lambda") {
    const StepOutcome o = eng.step();
    REQUIRE(o.rho >= cfg.eta2);
    CHECK(eng.lambda() == doctest::Approx(0.025));
  }
  SUBCASE("a zero step is a failure and leaves x untouched") {
    const StepOutcome o = eng.try_step(Vector(3, 0.0), 1.0);
    CHECK(!o.accepted);
    CHECK(eng.lambda() == doctest::Approx(0.075));
    CHECK(eng.x() == x);
  }
  SUBCASE("a poor step is rejected bit-for-bit") {
    Vector s{1e3, -1e3, 1e3};
    const StepOutcome o = eng.try_step(s, 1e-3);
    CHECK(!o.accepted);
    CHECK(o.rho < cfg.eta1);
    CHECK(eng.x() == x);
    CHECK(eng.lambda() == doctest::Approx(0.075));
  }
  SUBCASE("moderate success multiplies by gamma1") {
    // Report a predicted decrease twice the actual one: rho = 0.5.
    const Vector g = eng.gradient();
    Vector s(3);
    for (std::size_t i = 0; i < 3; ++i) s[i] = -1e-3 * g[i];
    const double actual = eng.value() - eng.objective_at(Vector{s});
    const StepOutcome o = eng.try_step(s, 2.0 * actual);
    CHECK(o.accepted);
    CHECK(o.rho == doctest::Approx(0.5));
    CHECK(eng.lambda() == doctest::Approx(0.05 * 0.85));
  }
  SUBCASE("lambda never drops below lambda_min") {
    eng.set_lambda(1.5e-6);
    eng.step();
    CHECK(eng.lambda() == cfg.lambda_min);
  }
}

TEST_CASE("correction term") {
  const Matrix A = random_matrix(6, 3);
  const Vector c = random_vector(6);
  const LinearResidual prob(A, c);
  const Vector corr{0.3, -0.1, 0.2};
  linsolve::FlopCounter counter;
  LmEngine plain(prob, Vector(3, 0.5), 0.1, {}, counter);
  LmEngine with(prob, Vector(3, 0.5), 0.1, {}, counter, corr);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(with.gradient()[i] == doctest::Approx(plain.gradient()[i] + corr[i]));
  CHECK(with.value() == plain.value());
  const Vector y{1.0, 0.0, -1.0};
  CHECK(with.objective_at(y) ==
        doctest::Approx(plain.objective_at(y) + 0.3 * 0.5 - 0.1 * -0.5 + 0.2 * -1.5));

  LmEngine attached(prob, Vector(3, 0.5), 0.1, {}, counter);
  attached.attach_correction(corr);
  CHECK(attached.gradient() == with.gradient());
  CHECK_THROWS_AS(attached.attach_correction(corr), std::invalid_argument);
}

TEST_CASE("errors") {
  NanAtOrigin nan_problem;
  CHECK_THROWS_AS(lm_solve(nan_problem, Vector{0.0}, {}), std::invalid_argument);
  const LinearResidual prob(random_matrix(4, 2), random_vector(4));
  CHECK_THROWS_AS(lm_solve(prob, Vector(3, 0.0), {}), std::invalid_argument);
  LmConfig bad;
  bad.eta1 = 0.9;
  CHECK_THROWS_AS(lm_solve(prob, Vector(2, 0.0), bad), std::invalid_argument);
}

TEST_CASE("iteration cap") {
  pde::ResidualSystem sys(pde::make_problem("poisson1d", 4), {6, 1});
  LmConfig cfg;
  cfg.max_outer_iter = 3;
  const SolveReport rep = lm_solve(sys, testing::random_params(sys.arch()), cfg);
  CHECK(rep.iterations == 3);
  CHECK(!rep.converged);
}

TEST_CASE("trace CSV") {
  std::ostringstream out;
  CsvTrace trace(out);
  trace.record({1, "fine", 0.5, 0.25, 0.05, 0.9, true, 120});
  CHECK(out.str() ==
        "iteration,level,loss,gradient_norm,lambda,rho,accepted,flops\n"
        "1,fine,0.5,0.25,0.05,0.9,1,120\n");
}

TEST_CASE("runs are deterministic") {
  pde::ResidualSystem sys(pde::make_problem("sine1d", 3), {10, 1});
  const auto p0 = testing::random_params(sys.arch());
  const SolveReport a = lm_solve(sys, p0, {});
  const SolveReport b = lm_solve(sys, p0, {});
  CHECK(a.matvec_flops == b.matvec_flops);
  CHECK(a.iterations == b.iterations);
  CHECK(a.final_x == b.final_x);
}
