#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "mllm/bench.hpp"
#include "mllm/fdref.hpp"

namespace mllm::bench {

bool CampaignResult::all_finished() const {
  return std::all_of(runs.begin(), runs.end(), [](const SeedRun& r) { return r.report.has_value(); });
}

namespace {

struct Shared {
  const Campaign* campaign;
  const RunOptions* opts;
  const pde::ResidualSystem* sys;
  mlm::MlmConfig cfg;
  pde::Field reference;  // empty when the problem has a closed-form solution
};

std::vector<SeedRun> run_seed(const Shared& sh, std::uint64_t seed) {
  const Campaign& c = *sh.campaign;
  const ann::NetworkParams p0 = draw_initial_params(sh.sys->arch(), seed, c.init_scale);
  const std::uint64_t hash = params_hash(p0);
  std::vector<SeedRun> out;
  for (Solver solver : c.solvers) {
    SeedRun run;
    run.seed = seed;
    run.solver = solver;
    run.p0_hash = params_hash(p0);
    if (run.p0_hash != hash) throw std::logic_error("initial parameters changed between solvers");

    std::ofstream trace_file;
    std::optional<lm::CsvTrace> csv;
    lm::TraceFn trace;
    if (sh.opts->trace_dir) {
      std::filesystem::create_directories(*sh.opts->trace_dir);
      trace_file.open(*sh.opts->trace_dir /
                      (c.name + "_seed" + std::to_string(seed) + "_" + std::string(to_string(solver)) + ".csv"));
      csv.emplace(trace_file);
      trace = [&csv](const lm::TraceRecord& r) { csv->record(r); };
    }
    try {
      if (solver == Solver::lm) {
        run.report = lm::lm_solve(*sh.sys, p0, sh.cfg, trace);
      } else if (c.coarsening == Coarsening::identity) {
        run.report = mlm::mlm_solve(*sh.sys, p0, sh.cfg,
                                    amg::TransferOperators::identity(c.hidden), trace);
      } else {
        run.report = mlm::mlm_solve(*sh.sys, p0, sh.cfg, trace);
      }
      run.report->seed = seed;
      run.rmse = sh.reference ? pde::rmse(*sh.sys, *run.report->final_params, c.rmse_points, sh.reference)
                              : pde::rmse(*sh.sys, *run.report->final_params, c.rmse_points);
    } catch (const std::exception& e) {
      run.report.reset();
      run.error = e.what();
    }
    out.push_back(std::move(run));
  }
  return out;
}

}  // namespace

CampaignResult run_campaign(const Campaign& c, const RunOptions& opts) {
  c.validate();
  const pde::PdeProblem problem = c.make_problem();
  const pde::ResidualSystem sys(problem, ann::NetworkArch{c.hidden, problem.dim, c.activation});
  Shared sh{&c, &opts, &sys, c.solver_config(), {}};
  if (!problem.true_solution) sh.reference = fdref::as_field(fdref::cached_reference(opts.fd_cache_dir, problem, c.fd_points));

  std::vector<std::vector<SeedRun>> per_seed(c.seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < c.seeds.size();) {
      try {
        per_seed[i] = run_seed(sh, c.seeds[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::size_t threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, c.seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  CampaignResult result;
  for (auto& runs : per_seed)
    for (auto& r : runs) result.runs.push_back(std::move(r));
  std::stable_sort(result.runs.begin(), result.runs.end(), [](const SeedRun& a, const SeedRun& b) {
    return a.seed != b.seed ? a.seed < b.seed : a.solver < b.solver;
  });
  result.rows = aggregate(c, result.runs);
  return result;
}

std::vector<ComparisonRow> aggregate(const Campaign& c, const std::vector<SeedRun>& runs) {
  std::vector<ComparisonRow> rows;
  for (Solver solver : c.solvers) {
    ComparisonRow row;
    row.campaign = c.name;
    row.problem = c.make_problem().name;
    row.nu = c.nu;
    row.hidden = c.hidden;
    row.solver = std::string(to_string(solver));
    double log_rmse = 0.0, iterations = 0.0, flops = 0.0;
    row.rmse_min = std::numeric_limits<double>::infinity();
    row.rmse_max = 0.0;
    std::vector<double> saves;
    for (const SeedRun& r : runs) {
      if (r.solver != solver) continue;
      if (!r.report) {
        ++row.failures;
        continue;
      }
      ++row.runs;
      if (r.report->converged) ++row.converged;
      iterations += static_cast<double>(r.report->iterations);
      flops += static_cast<double>(r.report->matvec_flops);
      log_rmse += std::log(r.rmse);
      row.rmse_min = std::min(row.rmse_min, r.rmse);
      row.rmse_max = std::max(row.rmse_max, r.rmse);
      if (solver != Solver::mlm) continue;
      const auto lm_run = std::find_if(runs.begin(), runs.end(), [&](const SeedRun& o) {
        return o.seed == r.seed && o.solver == Solver::lm && o.report;
      });
      if (lm_run != runs.end() && r.report->matvec_flops > 0)
        saves.push_back(static_cast<double>(lm_run->report->matvec_flops) /
                        static_cast<double>(r.report->matvec_flops));
    }
    if (row.runs > 0) {
      const double n = static_cast<double>(row.runs);
      row.mean_iterations = iterations / n;
      row.mean_flops = flops / n;
      row.rmse_geomean = std::exp(log_rmse / n);
    } else {
      row.rmse_min = 0.0;
    }
    if (!saves.empty()) {
      row.save_min = *std::min_element(saves.begin(), saves.end());
      row.save_max = *std::max_element(saves.begin(), saves.end());
      double sum = 0.0;
      for (double s : saves) sum += s;
      row.save_mean = sum / static_cast<double>(saves.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace mllm::bench
