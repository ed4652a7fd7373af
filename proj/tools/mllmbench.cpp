#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "mllm/bench.hpp"
#include "mllm/fdref.hpp"
#include "mllm/kernels.hpp"

using namespace mllm;

namespace {

int cmd_run(const std::string& config, const std::optional<std::string>& only,
            const std::vector<std::uint64_t>& seeds, const std::optional<std::string>& solver,
            const std::optional<std::string>& out, const std::string& format,
            const std::optional<std::string>& runs_out, const std::optional<std::string>& trace,
            std::size_t threads, const std::string& fd_cache) {
  auto campaigns = bench::load_campaigns(config);
  const bench::Format fmt = bench::parse_format(format);
  bench::RunOptions opts;
  opts.threads = threads;
  opts.fd_cache_dir = fd_cache;
  if (trace) opts.trace_dir = *trace;

  std::vector<bench::ComparisonRow> rows;
  std::ofstream runs_file;
  if (runs_out) runs_file.open(*runs_out, std::ios::binary);
  bool all_finished = true;
  bool matched = false;
  bool wrote_header = false;
  for (auto& c : campaigns) {
    if (only && c.name != *only) continue;
    matched = true;
    if (!seeds.empty()) c.seeds = seeds;
    if (solver) c.solvers = {bench::parse_solver(*solver)};
    const auto result = bench::run_campaign(c, opts);
    for (const auto& r : result.runs)
      if (!r.report)
        std::cerr << "warning: campaign " << c.name << " seed " << r.seed << " "
                  << bench::to_string(r.solver) << " failed: " << r.error << "\n";
    all_finished = all_finished && result.all_finished();
    rows.insert(rows.end(), result.rows.begin(), result.rows.end());
    if (runs_out) bench::emit_runs(c.name, result.runs, runs_file, !wrote_header);
    wrote_header = true;
  }
  if (!matched) throw std::invalid_argument("no campaign named " + only.value_or(""));
  if (out)
    bench::emit_report(rows, fmt, std::filesystem::path(*out));
  else
    bench::emit_report(rows, fmt, std::cout);
  return all_finished ? 0 : 1;
}

void cmd_list() {
  std::printf("%-12s %-3s %-50s %s\n", "id", "dim", "equation", "solution");
  for (const auto& p : pde::problem_catalog())
    std::printf("%-12s %-3zu %-50s %s\n", p.id.c_str(), p.dim, p.equation.c_str(), p.solution.c_str());
  std::printf("\nvelocities: constant two_layer four_layer sine\n");
  std::printf("activations: sigmoid tanh logistic softplus\n");
  std::printf("simd backend: %s\n", std::string(kernels::backend_name(kernels::active_backend())).c_str());
}

int cmd_fd(double nu, const std::string& velocity, std::size_t points, const std::string& dir) {
  const auto problem = pde::make_problem("helmholtz2d", nu, pde::parse_velocity(velocity));
  const auto grid = fdref::cached_reference(dir, problem, points);
  double lo = grid.field[0], hi = grid.field[0];
  for (double v : grid.field) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::printf("%s: %zu x %zu, min %.6g max %.6g\n",
              (std::filesystem::path(dir) / fdref::cache_name(nu, *problem.velocity, points)).c_str(),
              points, points, lo, hi);
  return 0;
}

int cmd_split(const std::string& problem_id, double nu, std::size_t r, const std::string& activation,
              std::uint64_t seed, double scale, double eps_amg, const std::optional<std::string>& velocity,
              const std::optional<std::string>& out) {
  std::optional<pde::Velocity> vel;
  if (velocity) vel = pde::parse_velocity(*velocity);
  const auto problem = pde::make_problem(problem_id, nu, vel);
  const pde::ResidualSystem sys(problem, ann::NetworkArch{r, problem.dim, ann::parse_activation(activation)});
  const auto p0 = bench::draw_initial_params(sys.arch(), seed, scale);
  amg::CoarseningOptions opts;
  opts.eps_amg = eps_amg;
  const auto c = mlm::coarsen_at(sys, p0, opts);
  if (out) {
    std::ofstream f(*out);
    if (!f) throw std::runtime_error("cannot write " + *out);
    amg::write_inspection(f, c);
  } else {
    amg::write_inspection(std::cout, c);
  }
  std::fprintf(stderr, "r = %zu, coarse = %zu, fine = %zu, p_scale = %.6g, r_scale = %.6g\n", r,
               c.ops.coarse.size(), c.ops.fine.size(), c.ops.p_scale, c.ops.r_scale);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train one-hidden-layer networks on PDE residuals with LM and multilevel LM"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the campaigns of an INI file");
  std::string config;
  std::optional<std::string> only, solver, out, runs_out, trace;
  std::vector<std::uint64_t> seeds;
  std::string format = "csv";
  std::size_t threads = 0;
  std::string fd_cache = "fd_cache";
  run->add_option("config", config, "Campaign file")->required()->check(CLI::ExistingFile);
  run->add_option("--campaign", only, "Run only this campaign");
  run->add_option("--seed", seeds, "Override the seed list");
  run->add_option("--solver", solver, "Run only this solver")->check(CLI::IsMember({"lm", "mlm"}));
  run->add_option("--out", out, "Report path (stdout when omitted)");
  run->add_option("--format", format, "Report format")->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--runs", runs_out, "Per-seed CSV path");
  run->add_option("--trace", trace, "Directory for per-iteration trace CSV files");
  run->add_option("--threads", threads, "Worker threads (0: all cores)");
  run->add_option("--fd-cache", fd_cache, "Finite-difference reference cache directory");

  auto* list = app.add_subcommand("list-problems", "List the benchmark problems");

  auto* fd = app.add_subcommand("fd-ref", "Build and cache a 2D Helmholtz reference solution");
  double fd_nu = 1.0;
  std::string fd_velocity = "constant";
  std::size_t fd_points = 201;
  std::string fd_dir = "fd_cache";
  fd->add_option("--nu", fd_nu, "Frequency parameter")->required();
  fd->add_option("--velocity", fd_velocity, "Velocity field")
      ->check(CLI::IsMember({"constant", "two_layer", "four_layer", "sine"}));
  fd->add_option("--points", fd_points, "Grid points per axis");
  fd->add_option("--out", fd_dir, "Cache directory");

  auto* split = app.add_subcommand("split-inspect", "Dump the coupling matrix, C/F split and P");
  std::string sp_problem = "poisson1d", sp_activation = "tanh";
  double sp_nu = 5.0, sp_scale = 1.0, sp_eps = 0.9;
  std::size_t sp_r = 64;
  std::uint64_t sp_seed = 1;
  std::optional<std::string> sp_velocity, sp_out;
  split->add_option("--problem", sp_problem, "Problem id");
  split->add_option("--nu", sp_nu, "Frequency parameter");
  split->add_option("--r", sp_r, "Hidden nodes");
  split->add_option("--activation", sp_activation, "Activation");
  split->add_option("--seed", sp_seed, "Seed for the initial parameters");
  split->add_option("--init-scale", sp_scale, "Initial parameter scale");
  split->add_option("--eps-amg", sp_eps, "Strong coupling threshold");
  split->add_option("--velocity", sp_velocity, "Velocity field (helmholtz2d)");
  split->add_option("--out", sp_out, "Output path (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run)
      return cmd_run(config, only, seeds, solver, out, format, runs_out, trace, threads, fd_cache);
    if (*list) {
      cmd_list();
      return 0;
    }
    if (*fd) return cmd_fd(fd_nu, fd_velocity, fd_points, fd_dir);
    if (*split)
      return cmd_split(sp_problem, sp_nu, sp_r, sp_activation, sp_seed, sp_scale, sp_eps, sp_velocity,
                       sp_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
