#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <random>
#include <iterator>
#include <set>
#include <sstream>

#include "mllm/bench.hpp"

namespace mllm::bench {

ann::NetworkParams draw_initial_params(const ann::NetworkArch& arch, std::uint64_t seed,
                                       double scale) {
  arch.validate();
  std::mt19937_64 gen(seed);
  Vector flat(arch.param_count());
  for (double& x : flat) {
    const double unit = static_cast<double>(gen() >> 11) * 0x1.0p-53;  // [0,1)
    x = scale * (2.0 * unit - 1.0);
  }
  return ann::NetworkParams(arch.hidden, arch.inputs, std::move(flat));
}

std::uint64_t params_hash(const ann::NetworkParams& p) {
  std::uint64_t h = 1469598103934665603ull;
  for (double x : p.flat()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &x, sizeof x);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string_view to_string(Solver s) { return s == Solver::lm ? "lm" : "mlm"; }

Solver parse_solver(std::string_view name) {
  if (name == "lm") return Solver::lm;
  if (name == "mlm") return Solver::mlm;
  throw std::invalid_argument("unknown solver: " + std::string(name));
}

void Campaign::validate() const {
  require(!seeds.empty(), "campaign " + name + ": no seeds");
  require(!solvers.empty(), "campaign " + name + ": no solvers");
  require(hidden >= 1, "campaign " + name + ": r must be positive");
  for (Solver s : solvers)
    require(s != Solver::mlm || hidden >= 2, "campaign " + name + ": mlm needs r >= 2");
  require(init_scale > 0.0, "campaign " + name + ": init_scale must be positive");
  require(rmse_points >= 1, "campaign " + name + ": rmse_points must be positive");
  make_problem().validate();
  solver_config().validate();
}

pde::PdeProblem Campaign::make_problem() const {
  pde::PdeProblem p = pde::make_problem(problem, nu, velocity);
  if (lambda_p) p.penalty = *lambda_p;
  return p;
}

mlm::MlmConfig Campaign::solver_config() const {
  mlm::MlmConfig c = config;
  if (!epsilon_set) {
    const auto info = std::find_if(pde::problem_catalog().begin(), pde::problem_catalog().end(),
                                   [&](const pde::ProblemInfo& i) { return i.id == problem; });
    require(info != pde::problem_catalog().end(), "unknown problem: " + problem);
    c.epsilon = info->dim == 1 ? 1e-4 : 1e-3;
  }
  return c;
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = trim(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  std::size_t used = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(), "key " + key + ": not a number: " + v);
  return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  require(ec == std::errc() && ptr == v.data() + v.size(), "key " + key + ": not an integer: " + v);
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("key " + key + ": not a boolean: " + v);
}

std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(v)) {
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) {
      seeds.push_back(to_uint("seeds", item));
      continue;
    }
    const auto lo = to_uint("seeds", trim(item.substr(0, dash)));
    const auto hi = to_uint("seeds", trim(item.substr(dash + 1)));
    require(lo <= hi && hi - lo < 100000, "seeds: bad range " + item);
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  return seeds;
}

void apply(Campaign& c, const std::string& key, const std::string& v) {
  auto& cfg = c.config;
  if (key == "problem") c.problem = v;
  else if (key == "nu") c.nu = to_double(key, v);
  else if (key == "r") c.hidden = to_uint(key, v);
  else if (key == "activation") c.activation = ann::parse_activation(v);
  else if (key == "velocity") c.velocity = pde::parse_velocity(v);
  else if (key == "seeds") c.seeds = parse_seeds(v);
  else if (key == "solvers") {
    c.solvers.clear();
    for (const auto& s : split_list(v)) c.solvers.push_back(parse_solver(s));
  } else if (key == "epsilon") {
    cfg.epsilon = to_double(key, v);
    c.epsilon_set = true;
  } else if (key == "max_outer_iter") cfg.max_outer_iter = to_uint(key, v);
  else if (key == "theta") cfg.theta = to_double(key, v);
  else if (key == "lambda0") cfg.lambda0 = to_double(key, v);
  else if (key == "lambda_min") cfg.lambda_min = to_double(key, v);
  else if (key == "eta1") cfg.eta1 = to_double(key, v);
  else if (key == "eta2") cfg.eta2 = to_double(key, v);
  else if (key == "gamma1") cfg.gamma1 = to_double(key, v);
  else if (key == "gamma2") cfg.gamma2 = to_double(key, v);
  else if (key == "gamma3") cfg.gamma3 = to_double(key, v);
  else if (key == "lambda_p") c.lambda_p = to_double(key, v);
  else if (key == "kappa_h") cfg.kappa_h = to_double(key, v);
  else if (key == "eps_h") cfg.eps_h = to_double(key, v);
  else if (key == "max_coarse_iter") cfg.max_coarse_iter = to_uint(key, v);
  else if (key == "eps_amg") cfg.coarsening.eps_amg = to_double(key, v);
  else if (key == "block_norm") {
    if (v == "gram_inf") cfg.coarsening.block_norm = amg::BlockNorm::gram_inf;
    else if (v == "block_inf") cfg.coarsening.block_norm = amg::BlockNorm::block_inf;
    else throw std::invalid_argument("block_norm: expected gram_inf or block_inf");
  } else if (key == "strength") {
    if (v == "negative") cfg.coarsening.strength = amg::Strength::negative;
    else if (v == "absolute") cfg.coarsening.strength = amg::Strength::absolute;
    else throw std::invalid_argument("strength: expected negative or absolute");
  } else if (key == "lump_positive") cfg.coarsening.lump_positive = to_bool(key, v);
  else if (key == "max_weight") cfg.coarsening.max_weight = to_double(key, v);
  else if (key == "rebuild_transfer") cfg.rebuild_transfer = to_bool(key, v);
  else if (key == "coarse_inner") {
    if (v == "direct") cfg.coarse_inner = lm::InnerSolver::direct;
    else if (v == "cgls") cfg.coarse_inner = lm::InnerSolver::cgls;
    else throw std::invalid_argument("coarse_inner: expected direct or cgls");
  } else if (key == "coarsening") {
    if (v == "amg") c.coarsening = Coarsening::amg;
    else if (v == "identity") c.coarsening = Coarsening::identity;
    else throw std::invalid_argument("coarsening: expected amg or identity");
  } else if (key == "init_scale") c.init_scale = to_double(key, v);
  else if (key == "rmse_points") c.rmse_points = to_uint(key, v);
  else if (key == "fd_points") c.fd_points = to_uint(key, v);
  else throw std::invalid_argument("unknown key: " + key);
}

}  // namespace

std::vector<Campaign> parse_campaigns(std::istream& in) {
  namespace pt = boost::property_tree;
  const std::string text(std::istreambuf_iterator<char>(in), {});
  pt::ptree tree;
  try {
    std::istringstream parse_in(text);
    pt::read_ini(parse_in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("campaign file: ") + e.what());
  }
  // The parser drops sections without keys, so headers are collected here.
  std::vector<std::string> sections;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    line = trim(line);
    if (line.size() > 2 && line.front() == '[' && line.back() == ']')
      sections.push_back(trim(line.substr(1, line.size() - 2)));
  }
  const std::set<std::string> section_set(sections.begin(), sections.end());

  // Keys outside any section apply to every campaign.
  std::vector<std::pair<std::string, std::string>> defaults;
  for (const auto& [key, node] : tree)
    if (!section_set.count(key)) defaults.emplace_back(key, trim(node.data()));

  std::vector<Campaign> out;
  std::set<std::string> names;
  for (const auto& section : sections) {
    require(names.insert(section).second, "duplicate campaign: " + section);
    Campaign c;
    c.name = section;
    try {
      for (const auto& [key, value] : defaults) apply(c, key, value);
      const auto it = tree.find(section);
      if (it != tree.not_found())
        for (const auto& [key, value] : it->second) apply(c, key, trim(value.data()));
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("campaign " + section + ": " + e.what());
    }
    out.push_back(std::move(c));
  }
  require(!out.empty(), "campaign file defines no campaigns");
  return out;
}

std::vector<Campaign> load_campaigns(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open campaign file " + path.string());
  return parse_campaigns(in);
}

}  // namespace mllm::bench
