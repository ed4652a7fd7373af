#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mllm/bench.hpp"

namespace mllm::bench {

Format parse_format(std::string_view name) {
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  throw std::invalid_argument("unknown report format: " + std::string(name));
}

namespace {

constexpr const char* kHeader =
    "campaign,problem,nu,r,solver,runs,failures,converged,mean_iterations,rmse_geomean,rmse_min,"
    "rmse_max,mean_flops,save_min,save_mean,save_max";

std::string g6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string g6(const std::optional<double>& x) { return x ? g6(*x) : std::string(); }

/// Value rounded to 6 significant digits so JSON shows the same digits.
nlohmann::ordered_json j6(double x) {
  if (!std::isfinite(x)) return nullptr;
  return std::stod(g6(x));
}

nlohmann::ordered_json j6(const std::optional<double>& x) {
  return x ? j6(*x) : nlohmann::ordered_json(nullptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

void emit_report(const std::vector<ComparisonRow>& rows, Format format, std::ostream& out) {
  if (format == Format::csv) {
    out << kHeader << '\n';
    for (const auto& r : rows) {
      out << csv_field(r.campaign) << ',' << csv_field(r.problem) << ',' << g6(r.nu) << ','
          << r.hidden << ',' << r.solver << ',' << r.runs << ',' << r.failures << ',' << r.converged
          << ',' << g6(r.mean_iterations) << ',' << g6(r.rmse_geomean) << ',' << g6(r.rmse_min) << ','
          << g6(r.rmse_max) << ',' << g6(r.mean_flops) << ',' << g6(r.save_min) << ','
          << g6(r.save_mean) << ',' << g6(r.save_max) << '\n';
    }
    return;
  }
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json o;
    o["campaign"] = r.campaign;
    o["problem"] = r.problem;
    o["nu"] = j6(r.nu);
    o["r"] = r.hidden;
    o["solver"] = r.solver;
    o["runs"] = r.runs;
    o["failures"] = r.failures;
    o["converged"] = r.converged;
    o["mean_iterations"] = j6(r.mean_iterations);
    o["rmse_geomean"] = j6(r.rmse_geomean);
    o["rmse_min"] = j6(r.rmse_min);
    o["rmse_max"] = j6(r.rmse_max);
    o["mean_flops"] = j6(r.mean_flops);
    o["save_min"] = j6(r.save_min);
    o["save_mean"] = j6(r.save_mean);
    o["save_max"] = j6(r.save_max);
    arr.push_back(std::move(o));
  }
  out << arr.dump(2) << '\n';
}

void emit_report(const std::vector<ComparisonRow>& rows, Format format,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  emit_report(rows, format, out);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
}

std::vector<ComparisonRow> parse_report_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == kHeader, "not a comparison report");
  std::vector<ComparisonRow> rows;
  auto num = [](const std::string& s) { return std::stod(s); };
  auto opt = [&](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return num(s);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    require(f.size() == 16, "malformed report line: " + line);
    ComparisonRow r;
    r.campaign = f[0];
    r.problem = f[1];
    r.nu = num(f[2]);
    r.hidden = std::stoull(f[3]);
    r.solver = f[4];
    r.runs = std::stoull(f[5]);
    r.failures = std::stoull(f[6]);
    r.converged = std::stoull(f[7]);
    r.mean_iterations = num(f[8]);
    r.rmse_geomean = num(f[9]);
    r.rmse_min = num(f[10]);
    r.rmse_max = num(f[11]);
    r.mean_flops = num(f[12]);
    r.save_min = opt(f[13]);
    r.save_mean = opt(f[14]);
    r.save_max = opt(f[15]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_runs(const std::string& campaign, const std::vector<SeedRun>& runs, std::ostream& out,
               bool header) {
  if (header)
    out << "campaign,seed,solver,p0_hash,status,iterations,accepted,rejected,final_loss,"
         "final_gradient_norm,rmse,flops,coarse_attempts,coarse_accepted,coarse_size,"
         "max_coherence_violation,error\n";
  for (const auto& r : runs) {
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.p0_hash));
    out << csv_field(campaign) << ',' << r.seed << ',' << to_string(r.solver) << ',' << hash << ',';
    if (!r.report) {
      out << "failed,,,,,,,,,,,," << csv_field(r.error) << '\n';
      continue;
    }
    const auto& rep = *r.report;
    out << (rep.converged ? "converged" : "iteration_cap") << ',' << rep.iterations << ','
        << rep.accepted_steps << ',' << rep.rejected_steps << ',' << g6(rep.loss_history.back()) << ','
        << g6(rep.final_gradient_norm) << ',' << g6(r.rmse) << ',' << rep.matvec_flops << ','
        << rep.coarse_attempts << ',' << rep.coarse_accepted << ',' << rep.coarse_size << ','
        << g6(rep.max_coherence_violation) << ",\n";
  }
}

}  // namespace mllm::bench
