#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mllm/bench.hpp"
#include "support.hpp"

using namespace mllm;
using namespace mllm::bench;

namespace {

std::vector<Campaign> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_campaigns(in);
}

std::string csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  emit_report(rows, Format::csv, out);
  return out.str();
}

ComparisonRow synthetic_row() {
  ComparisonRow r;
  r.campaign = "golden";
  r.problem = "poisson1d";
  r.nu = 20;
  r.hidden = 512;
  r.solver = "mlm";
  r.runs = 10;
  r.failures = 0;
  r.converged = 9;
  r.mean_iterations = 507.25;
  r.rmse_geomean = 1.23456789e-4;
  r.rmse_min = 5e-5;
  r.rmse_max = 3.3333333e-4;
  r.mean_flops = 123456789012.0;
  r.save_min = 1.1;
  r.save_mean = 2.6;
  r.save_max = 4.3;
  return r;
}

Campaign tiny(std::vector<Solver> solvers, std::vector<std::uint64_t> seeds = {1}) {
  Campaign c;
  c.name = "tiny";
  c.problem = "poisson1d";
  c.nu = 2;
  c.hidden = 16;
  c.seeds = std::move(seeds);
  c.solvers = std::move(solvers);
  return c;
}

}  // namespace

TEST_CASE("initial parameters") {
  const ann::NetworkArch arch{8, 2};
  const auto a = draw_initial_params(arch, 42);
  const auto b = draw_initial_params(arch, 42);
  const auto c = draw_initial_params(arch, 43);
  CHECK(a == b);
  CHECK(!(a == c));
  CHECK(params_hash(a) == params_hash(b));
  CHECK(params_hash(a) != params_hash(c));
  CHECK(a.size() == arch.param_count());
  for (double v : a.flat()) CHECK((v >= -1.0 && v < 1.0));

  // Documented generator: (draw >> 11) * 2^-53 mapped to [-1, 1).
  std::mt19937_64 gen(42);
  const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
  CHECK(a.flat()[0] == 2.0 * u - 1.0);
  const auto scaled = draw_initial_params(arch, 42, 0.25);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(scaled.flat()[i] == doctest::Approx(0.25 * a.flat()[i]));
}

TEST_CASE("solver and format names") {
  CHECK(parse_solver("lm") == Solver::lm);
  CHECK(parse_solver("mlm") == Solver::mlm);
  CHECK(to_string(Solver::mlm) == "mlm");
  CHECK_THROWS_AS(parse_solver("gn"), std::invalid_argument);
  CHECK(parse_format("json") == Format::json);
  CHECK_THROWS_AS(parse_format("xml"), std::invalid_argument);
}

TEST_CASE("campaign files") {
  SUBCASE("sections, global keys and seed ranges") {
    const auto cs = parse(R"(
# global settings apply to every section
max_outer_iter = 300

[small]
problem = poisson1d
nu = 5
r = 64
seeds = 1-3, 7
solvers = lm

[helm]
problem = helmholtz2d
velocity = four_layer
nu = 1
r = 32
activation = logistic
epsilon = 1e-5
kappa_h = 0.2
eps_amg = 0.5
strength = absolute
max_weight = 10
coarsening = identity
fd_points = 51
)");
    REQUIRE(cs.size() == 2);
    CHECK(cs[0].name == "small");
    CHECK(cs[0].nu == 5);
    CHECK(cs[0].hidden == 64);
    CHECK(cs[0].seeds == std::vector<std::uint64_t>{1, 2, 3, 7});
    CHECK(cs[0].solvers == std::vector<Solver>{Solver::lm});
    CHECK(cs[0].config.max_outer_iter == 300);
    CHECK(!cs[0].epsilon_set);
    CHECK(cs[0].solver_config().epsilon == 1e-4);

    CHECK(cs[1].velocity == pde::Velocity::four_layer);
    CHECK(cs[1].activation == ann::ActivationKind::logistic);
    CHECK(cs[1].config.max_outer_iter == 300);
    CHECK(cs[1].solver_config().epsilon == 1e-5);
    CHECK(cs[1].config.kappa_h == 0.2);
    CHECK(cs[1].config.coarsening.eps_amg == 0.5);
    CHECK(cs[1].config.coarsening.strength == amg::Strength::absolute);
    CHECK(cs[1].config.coarsening.max_weight == 10);
    CHECK(cs[1].coarsening == Coarsening::identity);
    CHECK(cs[1].fd_points == 51);
    CHECK(cs[1].make_problem().name == "helmholtz2d_four_layer");
  }
  SUBCASE("a section without keys takes the global settings") {
    const auto cs = parse("nu = 3\n[plain]\n[other]\nr = 8\n");
    REQUIRE(cs.size() == 2);
    CHECK(cs[0].name == "plain");
    CHECK(cs[0].nu == 3);
    CHECK(cs[0].hidden == 16);
    CHECK(cs[1].hidden == 8);
  }
  SUBCASE("2D default tolerance") {
    const auto cs = parse("[p]\nproblem = poisson2d\nnu = 2\nr = 8\n");
    CHECK(cs[0].solver_config().epsilon == 1e-3);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse("[a]\nproblem = poisson1d\ncolour = red\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("[a]\nproblem = poisson1d\nnu = fast\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("[a]\nproblem = poisson1d\nseeds = 5-2\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("[a]\nproblem = nonsense\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("[a]\nproblem = poisson1d\nr = 1\nsolvers = mlm\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("[a]\nproblem = poisson1d\nsolvers = \n"), std::invalid_argument);
    CHECK_THROWS_AS(parse("[a]\nproblem = poisson1d\nkappa_h = 1.5\n"), std::invalid_argument);
    CHECK_THROWS(load_campaigns("/nonexistent/campaign.ini"));
  }
}

TEST_CASE("report format") {
  SUBCASE("no rows gives the header only") {
    CHECK(csv({}) ==
          "campaign,problem,nu,r,solver,runs,failures,converged,mean_iterations,rmse_geomean,"
          "rmse_min,rmse_max,mean_flops,save_min,save_mean,save_max\n");
    std::ostringstream js;
    emit_report({}, Format::json, js);
    CHECK(js.str() == "[]\n");
  }
  SUBCASE("golden row") {
    ComparisonRow lm_row = synthetic_row();
    lm_row.solver = "lm";
    lm_row.save_min = lm_row.save_mean = lm_row.save_max = std::nullopt;
    const std::string text = csv({lm_row, synthetic_row()});
    CHECK(text ==
          "campaign,problem,nu,r,solver,runs,failures,converged,mean_iterations,rmse_geomean,"
          "rmse_min,rmse_max,mean_flops,save_min,save_mean,save_max\n"
          "golden,poisson1d,20,512,lm,10,0,9,507.25,0.000123457,5e-05,0.000333333,1.23457e+11,,,\n"
          "golden,poisson1d,20,512,mlm,10,0,9,507.25,0.000123457,5e-05,0.000333333,1.23457e+11,1.1,"
          "2.6,4.3\n");
  }
  SUBCASE("round trip to six digits") {
    ComparisonRow r = synthetic_row();
    r.campaign = "needs, \"quoting\"";
    std::istringstream in(csv({r}));
    const auto back = parse_report_csv(in);
    REQUIRE(back.size() == 1);
    CHECK(back[0].campaign == r.campaign);
    CHECK(back[0].hidden == r.hidden);
    CHECK(back[0].converged == r.converged);
    CHECK(back[0].rmse_geomean == doctest::Approx(r.rmse_geomean).epsilon(5e-6));
    CHECK(back[0].mean_flops == doctest::Approx(r.mean_flops).epsilon(5e-6));
    CHECK(*back[0].save_mean == doctest::Approx(2.6));
    CHECK(csv(back) == csv({r}));
  }
  SUBCASE("json keys and nulls") {
    ComparisonRow r = synthetic_row();
    r.save_max = std::nullopt;
    std::ostringstream out;
    emit_report({r}, Format::json, out);
    const auto j = nlohmann::ordered_json::parse(out.str());
    REQUIRE(j.size() == 1);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j[0].items()) keys.push_back(k);
    CHECK(keys.front() == "campaign");
    CHECK(keys.back() == "save_max");
    CHECK(keys.size() == 16);
    CHECK(j[0]["save_max"].is_null());
    CHECK(j[0]["rmse_geomean"].get<double>() == 0.000123457);
  }
  SUBCASE("bad input") {
    std::istringstream in("not,a,report\n");
    CHECK_THROWS_AS(parse_report_csv(in), std::invalid_argument);
    CHECK_THROWS(emit_report({}, Format::csv, std::filesystem::path("/nonexistent/dir/r.csv")));
  }
}

TEST_CASE("aggregation") {
  const Campaign c = tiny({Solver::lm, Solver::mlm}, {1, 2, 3});
  auto run = [](std::uint64_t seed, Solver s, std::uint64_t flops, double rmse, bool conv) {
    SeedRun r;
    r.seed = seed;
    r.solver = s;
    r.report = lm::SolveReport{};
    r.report->matvec_flops = flops;
    r.report->converged = conv;
    r.report->iterations = 10 * seed;
    r.rmse = rmse;
    return r;
  };
  std::vector<SeedRun> runs{run(1, Solver::lm, 400, 1e-4, true), run(1, Solver::mlm, 200, 1e-2, true),
                            run(2, Solver::lm, 300, 1e-4, true), run(2, Solver::mlm, 300, 1e-4, false),
                            run(3, Solver::lm, 100, 1e-4, true)};
  SeedRun failed;
  failed.seed = 3;
  failed.solver = Solver::mlm;
  failed.error = "boom";
  runs.push_back(failed);
  const auto rows = aggregate(c, runs);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].solver == "lm");
  CHECK(rows[0].runs == 3);
  CHECK(!rows[0].save_mean.has_value());
  CHECK(rows[0].rmse_geomean == doctest::Approx(1e-4));
  CHECK(rows[0].mean_iterations == doctest::Approx(20));
  CHECK(rows[1].runs == 2);
  CHECK(rows[1].failures == 1);
  CHECK(rows[1].converged == 1);
  CHECK(rows[1].rmse_geomean == doctest::Approx(1e-3));
  CHECK(rows[1].rmse_min == doctest::Approx(1e-4));
  CHECK(*rows[1].save_min == doctest::Approx(1.0));
  CHECK(*rows[1].save_max == doctest::Approx(2.0));
  CHECK(*rows[1].save_mean == doctest::Approx(1.5));
  CHECK(rows[1].mean_flops == doctest::Approx(250));
}

TEST_CASE("single seed, lm only") {
  const CampaignResult res = run_campaign(tiny({Solver::lm}), {1, std::nullopt, "fd_cache"});
  REQUIRE(res.rows.size() == 1);
  CHECK(res.rows[0].runs == 1);
  CHECK(res.rows[0].converged == 1);
  CHECK(std::isfinite(res.rows[0].rmse_geomean));
  CHECK(res.all_finished());
}

TEST_CASE("lm and mlm share the starting point and are reproducible") {
  const Campaign c = tiny({Solver::lm, Solver::mlm}, {3, 1, 2});
  const CampaignResult a = run_campaign(c, {3, std::nullopt, "fd_cache"});
  const CampaignResult b = run_campaign(c, {1, std::nullopt, "fd_cache"});
  REQUIRE(a.runs.size() == 6);
  for (std::size_t k = 0; k < a.runs.size(); ++k) {
    CHECK(a.runs[k].seed == 1 + k / 2);
    CHECK(a.runs[k].solver == (k % 2 ? Solver::mlm : Solver::lm));
    if (k % 2) CHECK(a.runs[k].p0_hash == a.runs[k - 1].p0_hash);
    CHECK(a.runs[k].p0_hash == params_hash(draw_initial_params({16, 1}, a.runs[k].seed)));
    REQUIRE(a.runs[k].report.has_value());
    CHECK(a.runs[k].report->matvec_flops == b.runs[k].report->matvec_flops);
    CHECK(a.runs[k].report->iterations == b.runs[k].report->iterations);
    CHECK(a.runs[k].report->final_x == b.runs[k].report->final_x);
  }
  CHECK(csv(a.rows) == csv(b.rows));
  std::ostringstream ra, rb;
  emit_runs("tiny", a.runs, ra);
  emit_runs("tiny", b.runs, rb, false);
  CHECK(ra.str().rfind("campaign,seed,solver,p0_hash,status,", 0) == 0);
  CHECK(ra.str().substr(ra.str().find('\n') + 1) == rb.str());
}

TEST_CASE("degenerate coarsening with every node kept") {
  Campaign c = tiny({Solver::lm, Solver::mlm}, {1, 2});
  c.coarsening = Coarsening::identity;
  const CampaignResult res = run_campaign(c, {2, std::nullopt, "fd_cache"});
  REQUIRE(res.rows.size() == 2);
  REQUIRE(res.rows[1].save_mean.has_value());
  MESSAGE("identity-coarsening save: " << *res.rows[1].save_min << " " << *res.rows[1].save_max);
  CHECK(res.rows[1].converged == 2);
  CHECK(*res.rows[1].save_mean > 0.2);
  CHECK(*res.rows[1].save_mean < 5.0);
}

TEST_CASE("traces are written per seed") {
  const auto dir = std::filesystem::temp_directory_path() / "mllm_bench_traces";
  std::filesystem::remove_all(dir);
  run_campaign(tiny({Solver::lm, Solver::mlm}), {1, dir, "fd_cache"});
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    ++files;
    std::ifstream in(e.path());
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,level,loss,gradient_norm,lambda,rho,accepted,flops");
  }
  CHECK(files == 2);
  std::filesystem::remove_all(dir);
}
