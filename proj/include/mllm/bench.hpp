#pragma once

// Multi-seed LM / MLM comparison campaigns and their reports.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mllm/ann.hpp"
#include "mllm/lm.hpp"
#include "mllm/mlm.hpp"
#include "mllm/pde.hpp"

namespace mllm::bench {

/// Initial parameters: every entry is scale * U(-1, 1) drawn from
/// std::mt19937_64 seeded with `seed`, as (draw >> 11) * 2^-53 mapped to
/// [-1, 1), in flat parameter order.
ann::NetworkParams draw_initial_params(const ann::NetworkArch& arch, std::uint64_t seed,
                                       double scale = 1.0);
/// FNV-1a over the bytes of the flat parameter vector.
std::uint64_t params_hash(const ann::NetworkParams& p);

enum class Solver { lm, mlm };
std::string_view to_string(Solver s);
Solver parse_solver(std::string_view name);

enum class Coarsening { amg, identity };

struct Campaign {
  std::string name = "campaign";
  std::string problem = "poisson1d";
  double nu = 1.0;
  std::size_t hidden = 16;
  ann::ActivationKind activation = ann::ActivationKind::tanh;
  std::optional<pde::Velocity> velocity;
  std::vector<std::uint64_t> seeds{1};
  std::vector<Solver> solvers{Solver::lm, Solver::mlm};
  /// Solver settings; `epsilon` is replaced by the dimension default unless
  /// `epsilon_set`.
  mlm::MlmConfig config;
  bool epsilon_set = false;
  std::optional<double> lambda_p;
  double init_scale = 1.0;
  std::size_t rmse_points = 100;
  std::size_t fd_points = 201;
  Coarsening coarsening = Coarsening::amg;

  /// Throws std::invalid_argument on an unknown problem, empty seed or
  /// solver list, or r < 2 with mlm.
  void validate() const;
  pde::PdeProblem make_problem() const;
  /// Config with the dimension-dependent gradient tolerance filled in.
  mlm::MlmConfig solver_config() const;
};

/// INI text, one section per campaign. Keys:
///   problem nu r activation velocity seeds solvers epsilon max_outer_iter
///   theta lambda0 lambda_min eta1 eta2 gamma1 gamma2 gamma3 lambda_p
///   kappa_h eps_h max_coarse_iter eps_amg block_norm strength
///   lump_positive max_weight coarsening init_scale rmse_points fd_points
/// Seeds accept lists ("1,2,3") and ranges ("1-10"). Unknown keys throw.
std::vector<Campaign> parse_campaigns(std::istream& in);
std::vector<Campaign> load_campaigns(const std::filesystem::path& path);

struct SeedRun {
  std::uint64_t seed = 0;
  Solver solver = Solver::lm;
  std::uint64_t p0_hash = 0;
  std::optional<lm::SolveReport> report;  // empty when the solver threw
  double rmse = 0.0;
  std::string error;
};

/// One line of the comparison table.
struct ComparisonRow {
  std::string campaign;
  std::string problem;
  double nu = 0.0;
  std::size_t hidden = 0;
  std::string solver;
  std::size_t runs = 0;       // seeds that finished
  std::size_t failures = 0;   // seeds whose solver threw
  std::size_t converged = 0;
  double mean_iterations = 0.0;
  double rmse_geomean = 0.0;
  double rmse_min = 0.0;
  double rmse_max = 0.0;
  double mean_flops = 0.0;
  std::optional<double> save_min;  // mlm rows only
  std::optional<double> save_mean;
  std::optional<double> save_max;
};

struct RunOptions {
  std::size_t threads = 0;  // 0: hardware concurrency
  /// Per-seed trace CSV files are written here when set.
  std::optional<std::filesystem::path> trace_dir;
  /// Cache directory for finite-difference references.
  std::filesystem::path fd_cache_dir = "fd_cache";
};

struct CampaignResult {
  std::vector<SeedRun> runs;  // sorted by seed, then solver
  std::vector<ComparisonRow> rows;
  /// No solver threw (each run converged or stopped at the iteration cap).
  bool all_finished() const;
};

CampaignResult run_campaign(const Campaign& c, const RunOptions& opts = {});
std::vector<ComparisonRow> aggregate(const Campaign& c, const std::vector<SeedRun>& runs);

enum class Format { csv, json };
Format parse_format(std::string_view name);

/// CSV columns, in order:
///   campaign,problem,nu,r,solver,runs,failures,converged,mean_iterations,
///   rmse_geomean,rmse_min,rmse_max,mean_flops,save_min,save_mean,save_max
/// Reals use %.6g; empty save fields for lm rows. JSON is an array of
/// objects with the same keys in the same order (null for empty fields).
void emit_report(const std::vector<ComparisonRow>& rows, Format format, std::ostream& out);
void emit_report(const std::vector<ComparisonRow>& rows, Format format,
                 const std::filesystem::path& path);
/// Reads the CSV written by emit_report.
std::vector<ComparisonRow> parse_report_csv(std::istream& in);

/// Per-seed CSV:
///   campaign,seed,solver,p0_hash,status,iterations,accepted,rejected,
///   final_loss,final_gradient_norm,rmse,flops,coarse_attempts,
///   coarse_accepted,coarse_size,max_coherence_violation,error
void emit_runs(const std::string& campaign, const std::vector<SeedRun>& runs, std::ostream& out,
               bool header = true);

}  // namespace mllm::bench
