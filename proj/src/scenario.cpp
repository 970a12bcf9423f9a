#include "ddclf/scenario.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace fs = std::filesystem;

namespace ddclf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

long peak_rss_kb() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return u.ru_maxrss;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (seps.find(c) != std::string::npos) {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": '" + text + "' is not a number");
}

long to_long(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": '" + text + "' is not an integer");
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": '" + text + "' is not a boolean");
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
  std::vector<double> v;
  for (const auto& t : split(text, " ,\t")) v.push_back(to_double(key, t));
  if (v.empty()) throw ConfigError(key + ": empty list");
  return v;
}

/// Rows separated by ';', entries by whitespace or ','.
Eigen::MatrixXd to_matrix(const std::string& key, const std::string& text) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : split(text, ";")) {
    std::vector<double> row;
    for (const auto& t : split(r, " ,\t")) row.push_back(to_double(key, t));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(key + ": empty matrix");
  Eigen::MatrixXd M(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ConfigError(key + ": ragged matrix rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(i, j) = rows[i][j];
  }
  return M;
}

/// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string matrix_text(const Eigen::MatrixXd& M) {
  std::string out;
  for (int i = 0; i < M.rows(); ++i) {
    if (i) out += "; ";
    for (int j = 0; j < M.cols(); ++j) out += (j ? " " : "") + num(M(i, j));
  }
  return out;
}

std::vector<Edge> to_edges(const std::string& key, const std::string& text) {
  std::vector<Edge> edges;
  for (const auto& item : split(text, ",")) {
    const auto gt = item.find('>');
    if (gt == std::string::npos) throw ConfigError(key + ": edge '" + item + "' must read source>target");
    const long s = to_long(key, trim(item.substr(0, gt)));
    const long t = to_long(key, trim(item.substr(gt + 1)));
    if (s < 1 || t < 1) throw ConfigError(key + ": edge indices are 1-based");
    edges.push_back({static_cast<int>(s - 1), static_cast<int>(t - 1)});
  }
  return edges;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"scenario", {"name"}},
      {"system", {"benchmark", "M", "topology", "edges", "inertia", "n", "basis_true", "A", "B", "D"}},
      {"collect",
       {"basis_degree", "basis", "T", "tau", "substeps", "excitation", "amplitude", "w_amplitude", "x0_box", "seed",
        "derivative", "rank_rtol"}},
      {"synth",
       {"aleph_rule", "kappa", "pi", "phi_degree", "eps", "tol", "max_iter", "gain_aware", "gain_factor"}},
      {"compose", {"mu_margin", "dense_gains"}},
      {"verify",
       {"samples", "box", "closed_loop_runs", "horizon", "tau", "substeps", "convergence_rtol", "v_slack",
        "defect_tol", "require_convergence", "open_loop"}},
      {"output", {"dir", "workers"}},
  };
  return keys;
}

std::string sub_name(int i) {
  std::ostringstream os;
  os << "sub_" << std::setw(4) << std::setfill('0') << i + 1;
  return os.str();
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read " + p.string() + " (run the earlier stages first)");
  return is;
}

/// Runs job(i) for i in [0, count) on up to `workers` threads. Returns the
/// exception of the lowest failing index, if any.
std::exception_ptr parallel_for(int count, int workers, const std::function<void(int)>& job) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int k = std::max(1, std::min(workers, count));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) return e;
  }
  return nullptr;
}

struct StageFailure : std::runtime_error {
  StageFailure(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

}  // namespace

void Scenario::validate() const {
  auto positive = [](const std::string& key, double v) {
    if (!(v > 0) || !std::isfinite(v)) throw ConfigError(key + " must be positive");
  };
  auto nonneg = [](const std::string& key, double v) {
    if (!(v >= 0) || !std::isfinite(v)) throw ConfigError(key + " must be non-negative");
  };
  if (benchmark != "spacecraft" && benchmark != "academic" && benchmark != "lu" && benchmark != "custom") {
    throw ConfigError("system.benchmark: unknown benchmark '" + benchmark + "'");
  }
  if (benchmark == "custom" && !custom) throw ConfigError("system: custom benchmark needs n, basis_true, A, B and D");
  if (M < 1) throw ConfigError("system.M must be at least 1");
  if (topology != "none" && topology != "custom") {
    try {
      parse_topology_kind(topology);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("system.topology: ") + e.what());
    }
  }
  for (const auto& e : edges) {
    if (e.source >= M || e.target >= M) throw ConfigError("system.edges: index exceeds M");
    if (e.source == e.target) throw ConfigError("system.edges: self loops are not allowed");
  }
  for (int k = 0; k < 3; ++k) positive("system.inertia", inertia(k));
  if (basis.empty() && basis_degree < 1) throw ConfigError("collect.basis_degree must be at least 1");
  if (T < 1) throw ConfigError("collect.T must be positive");
  positive("collect.tau", tau);
  if (substeps < 1) throw ConfigError("collect.substeps must be positive");
  positive("collect.amplitude", amplitude);
  nonneg("collect.w_amplitude", w_amplitude);
  positive("collect.x0_box", x0_box);
  positive("collect.rank_rtol", rank_rtol);
  if (kappa.size() != 1 && kappa.size() != static_cast<std::size_t>(M)) {
    throw ConfigError("synth.kappa needs 1 or M values");
  }
  if (pi.size() != 1 && pi.size() != static_cast<std::size_t>(M)) throw ConfigError("synth.pi needs 1 or M values");
  for (double k : kappa) positive("synth.kappa", k);
  for (double p : pi) positive("synth.pi", p);
  if (phi_degree < -1) throw ConfigError("synth.phi_degree must be -1 or non-negative");
  positive("synth.eps", eps);
  positive("synth.tol", sdp_tol);
  if (max_iter < 1) throw ConfigError("synth.max_iter must be positive");
  if (!(gain_factor > 1)) throw ConfigError("synth.gain_factor must exceed 1");
  if (!(mu_margin > 0 && mu_margin < 1)) throw ConfigError("compose.mu_margin must lie in (0, 1)");
  if (samples < 0) throw ConfigError("verify.samples must be non-negative");
  if (closed_loop_runs < 0) throw ConfigError("verify.closed_loop_runs must be non-negative");
  positive("verify.horizon", horizon);
  positive("verify.tau", sim_tau);
  if (sim_substeps < 1) throw ConfigError("verify.substeps must be positive");
  positive("verify.convergence_rtol", convergence_rtol);
  nonneg("verify.v_slack", v_slack);
  nonneg("verify.defect_tol", defect_tol);
  if (out_dir.empty()) throw ConfigError("output.dir must not be empty");
  if (workers < 1) throw ConfigError("output.workers must be positive");
}

Scenario parse_scenario(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto& keys = known_keys();
  for (const auto& [section, body] : tree) {
    const auto it = keys.find(section);
    if (it == keys.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& kv : body) {
      if (!it->second.count(kv.first)) throw ConfigError("config: unknown key " + section + "." + kv.first);
    }
  }
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return trim(*v);
    return std::nullopt;
  };

  Scenario s;
  if (auto v = get("scenario.name")) s.name = *v;
  if (auto v = get("system.benchmark")) s.benchmark = *v;
  if (auto v = get("system.M")) s.M = static_cast<int>(to_long("system.M", *v));
  if (auto v = get("system.topology")) s.topology = *v;
  if (auto v = get("system.edges")) s.edges = to_edges("system.edges", *v);
  if (auto v = get("system.inertia")) {
    const auto j = to_list("system.inertia", *v);
    if (j.size() != 3) throw ConfigError("system.inertia needs three values");
    s.inertia = Eigen::Vector3d(j[0], j[1], j[2]);
  }
  if (s.benchmark == "custom") {
    CustomSystem c;
    const auto n = get("system.n");
    const auto basis = get("system.basis_true");
    const auto A = get("system.A");
    const auto B = get("system.B");
    const auto D = get("system.D");
    if (!n || !basis || !A || !B || !D) throw ConfigError("system: custom benchmark needs n, basis_true, A, B and D");
    c.n = static_cast<int>(to_long("system.n", *n));
    c.basis = *basis;
    c.A = to_matrix("system.A", *A);
    c.B = to_matrix("system.B", *B);
    c.D = to_matrix("system.D", *D);
    s.custom = std::move(c);
  }

  if (auto v = get("collect.basis_degree")) s.basis_degree = static_cast<int>(to_long("collect.basis_degree", *v));
  if (auto v = get("collect.basis")) s.basis = *v;
  if (auto v = get("collect.T")) s.T = static_cast<int>(to_long("collect.T", *v));
  if (auto v = get("collect.tau")) s.tau = to_double("collect.tau", *v);
  if (auto v = get("collect.substeps")) s.substeps = static_cast<int>(to_long("collect.substeps", *v));
  try {
    if (auto v = get("collect.excitation")) s.excitation = parse_excitation_kind(*v);
    if (auto v = get("collect.derivative")) s.derivative = parse_derivative_mode(*v);
    if (auto v = get("synth.aleph_rule")) s.aleph_rule = parse_aleph_rule(*v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (auto v = get("collect.amplitude")) s.amplitude = to_double("collect.amplitude", *v);
  if (auto v = get("collect.w_amplitude")) s.w_amplitude = to_double("collect.w_amplitude", *v);
  if (auto v = get("collect.x0_box")) s.x0_box = to_double("collect.x0_box", *v);
  if (auto v = get("collect.seed")) {
    try {
      s.seed = std::stoull(*v);
    } catch (const std::exception&) {
      throw ConfigError("collect.seed: '" + *v + "' is not an unsigned integer");
    }
  }
  if (auto v = get("collect.rank_rtol")) s.rank_rtol = to_double("collect.rank_rtol", *v);

  if (auto v = get("synth.kappa")) s.kappa = to_list("synth.kappa", *v);
  if (auto v = get("synth.pi")) s.pi = to_list("synth.pi", *v);
  if (auto v = get("synth.phi_degree")) s.phi_degree = static_cast<int>(to_long("synth.phi_degree", *v));
  if (auto v = get("synth.eps")) s.eps = to_double("synth.eps", *v);
  if (auto v = get("synth.tol")) s.sdp_tol = to_double("synth.tol", *v);
  if (auto v = get("synth.max_iter")) s.max_iter = static_cast<int>(to_long("synth.max_iter", *v));
  if (auto v = get("synth.gain_aware")) s.gain_aware = to_bool("synth.gain_aware", *v);
  if (auto v = get("synth.gain_factor")) s.gain_factor = to_double("synth.gain_factor", *v);

  if (auto v = get("compose.mu_margin")) s.mu_margin = to_double("compose.mu_margin", *v);
  if (auto v = get("compose.dense_gains")) s.dense_gains = to_bool("compose.dense_gains", *v);

  if (auto v = get("verify.samples")) s.samples = to_long("verify.samples", *v);
  if (auto v = get("verify.box")) s.box = to_double("verify.box", *v);
  if (auto v = get("verify.closed_loop_runs")) s.closed_loop_runs = static_cast<int>(to_long("verify.closed_loop_runs", *v));
  if (auto v = get("verify.horizon")) s.horizon = to_double("verify.horizon", *v);
  if (auto v = get("verify.tau")) s.sim_tau = to_double("verify.tau", *v);
  if (auto v = get("verify.substeps")) s.sim_substeps = static_cast<int>(to_long("verify.substeps", *v));
  if (auto v = get("verify.convergence_rtol")) s.convergence_rtol = to_double("verify.convergence_rtol", *v);
  if (auto v = get("verify.v_slack")) s.v_slack = to_double("verify.v_slack", *v);
  if (auto v = get("verify.defect_tol")) s.defect_tol = to_double("verify.defect_tol", *v);
  if (auto v = get("verify.require_convergence")) s.require_convergence = to_bool("verify.require_convergence", *v);
  if (auto v = get("verify.open_loop")) s.open_loop = to_bool("verify.open_loop", *v);

  if (auto v = get("output.dir")) s.out_dir = *v;
  if (auto v = get("output.workers")) s.workers = static_cast<int>(to_long("output.workers", *v));
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  return parse_scenario(is);
}

void write_scenario(const Scenario& s, std::ostream& os) {
  auto list = [](const std::vector<double>& v) {
    std::string o;
    for (std::size_t i = 0; i < v.size(); ++i) o += (i ? " " : "") + num(v[i]);
    return o;
  };
  auto yes = [](bool b) { return b ? "true" : "false"; };
  os << "[scenario]\nname = " << s.name << "\n\n";
  os << "[system]\nbenchmark = " << s.benchmark << "\nM = " << s.M << "\ntopology = " << s.topology << '\n';
  if (!s.edges.empty()) {
    os << "edges = ";
    for (std::size_t k = 0; k < s.edges.size(); ++k) {
      os << (k ? ", " : "") << s.edges[k].source + 1 << '>' << s.edges[k].target + 1;
    }
    os << '\n';
  }
  os << "inertia = " << num(s.inertia(0)) << ' ' << num(s.inertia(1)) << ' ' << num(s.inertia(2)) << '\n';
  if (s.custom) {
    os << "n = " << s.custom->n << "\nbasis_true = " << s.custom->basis << "\nA = " << matrix_text(s.custom->A)
       << "\nB = " << matrix_text(s.custom->B) << "\nD = " << matrix_text(s.custom->D) << '\n';
  }
  os << "\n[collect]\nbasis_degree = " << s.basis_degree << '\n';
  if (!s.basis.empty()) os << "basis = " << s.basis << '\n';
  os << "T = " << s.T << "\ntau = " << num(s.tau) << "\nsubsteps = " << s.substeps
     << "\nexcitation = " << (s.excitation == ExcitationKind::uniform_random ? "uniform-random" : "multisine")
     << "\namplitude = " << num(s.amplitude) << "\nw_amplitude = " << num(s.w_amplitude) << "\nx0_box = " << num(s.x0_box)
     << "\nseed = " << s.seed << "\nderivative = " << (s.derivative == DerivativeMode::exact ? "exact" : "finite-difference")
     << "\nrank_rtol = " << num(s.rank_rtol) << "\n\n";
  os << "[synth]\naleph_rule = " << to_string(s.aleph_rule) << "\nkappa = " << list(s.kappa) << "\npi = " << list(s.pi)
     << "\nphi_degree = " << s.phi_degree << "\neps = " << num(s.eps) << "\ntol = " << num(s.sdp_tol)
     << "\nmax_iter = " << s.max_iter << "\ngain_aware = " << yes(s.gain_aware) << "\ngain_factor = " << num(s.gain_factor)
     << "\n\n";
  os << "[compose]\nmu_margin = " << num(s.mu_margin) << "\ndense_gains = " << yes(s.dense_gains) << "\n\n";
  os << "[verify]\nsamples = " << s.samples << "\nbox = " << num(s.box) << "\nclosed_loop_runs = " << s.closed_loop_runs
     << "\nhorizon = " << num(s.horizon) << "\ntau = " << num(s.sim_tau) << "\nsubsteps = " << s.sim_substeps
     << "\nconvergence_rtol = " << num(s.convergence_rtol) << "\nv_slack = " << num(s.v_slack)
     << "\ndefect_tol = " << num(s.defect_tol) << "\nrequire_convergence = " << yes(s.require_convergence)
     << "\nopen_loop = " << yes(s.open_loop) << "\n\n";
  os << "[output]\ndir = " << s.out_dir << "\nworkers = " << s.workers << '\n';
}

std::vector<std::string> preset_names() {
  return {"spacecraft-full", "spacecraft-ring", "academic-tree", "academic-star", "lu-line"};
}

Scenario preset_scenario(const std::string& name, bool paper_scale) {
  Scenario s;
  s.name = name;
  s.out_dir = "out/" + name;
  if (name == "spacecraft-full") {
    s.benchmark = "spacecraft";
    s.topology = "fully-connected";
    s.M = paper_scale ? 1000 : 10;
    s.T = 100;
    s.kappa = {0.1};
    s.pi = {0.71578};
    // Gyroscopic rotation at |x| ~ 25000 needs a finer step than the default.
    s.sim_tau = 1e-3;
  } else if (name == "spacecraft-ring") {
    s.benchmark = "spacecraft";
    s.topology = "ring";
    s.M = paper_scale ? 2000 : 10;
    s.T = 15;
    s.kappa = {1e-6};
    s.pi = {0.00077986};
    s.gain_aware = true;
  } else if (name == "academic-tree") {
    s.benchmark = "academic";
    s.topology = "binary-tree";
    s.M = paper_scale ? 2047 : 15;
    s.T = 12;
    s.kappa = {0.1};
    s.pi = {0.00014535};
    s.gain_aware = true;
  } else if (name == "academic-star") {
    s.benchmark = "academic";
    s.topology = "star";
    s.M = paper_scale ? 1000 : 10;
    s.T = 10;
    s.kappa = {1.0};
    s.pi = {0.0001661};
    s.gain_aware = true;
  } else if (name == "lu-line") {
    s.benchmark = "lu";
    s.topology = "line";
    s.M = paper_scale ? 2000 : 10;
    s.basis = "x1;x2;x3;x1*x3;x1*x2;x2*x3";
    s.aleph_rule = AlephRule::largest_index;
    s.T = 150;
    s.tau = 1e-4;
    s.kappa = {1e-4};
    s.pi = {0.1304};
    s.gain_aware = true;
    // The x1 x3 and x1 x2 terms make the loop stiff on the 25000 box.
    s.sim_tau = 1e-4;
    s.horizon = 2.0;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  if (paper_scale) {
    s.samples = 1000;
    s.closed_loop_runs = 1;
    s.out_dir += "-paper";
  }
  return s;
}

double default_box(const std::string& benchmark, const std::string& topology) {
  if (benchmark == "spacecraft") return topology == "fully-connected" ? 25000.0 : 400.0;
  if (benchmark == "academic") return 2.5e8;
  if (benchmark == "lu") return 25000.0;
  return 5.0;
}

Benchmark scenario_benchmark(const Scenario& s) {
  Benchmark bench;
  bench.name = s.benchmark;
  Subsystem proto;
  Eigen::MatrixXd D;
  if (s.benchmark == "custom") {
    const auto& c = *s.custom;
    MonomialBasis basis;
    try {
      basis = MonomialBasis::parse(c.basis, c.n);
      proto = Subsystem(basis, c.A, c.B);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("system: ") + e.what());
    }
    D = c.D;
  } else if (s.topology != "custom") {
    BenchmarkParams params;
    params.inertia = s.inertia;
    return benchmark_catalog(s.benchmark, s.M, s.topology, params);
  } else {
    BenchmarkParams params;
    params.inertia = s.inertia;
    proto = benchmark_catalog(s.benchmark, 1, "none", params).subsystems[0];
    D = benchmark_coupling(s.benchmark);
  }
  if (s.topology == "custom") {
    bench.topology = custom_topology(s.M, s.edges);
  } else if (s.topology == "none") {
    bench.topology = custom_topology(s.M, {});
  } else {
    bench.topology = build_topology(parse_topology_kind(s.topology), s.M);
  }
  bench.subsystems.assign(s.M, proto);
  try {
    for (const auto& e : bench.topology.edges) bench.subsystems[e.target].set_coupling(e.source, D, proto.n());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("system.D: ") + e.what());
  }
  return bench;
}

MonomialBasis scenario_basis(const Scenario& s, const Subsystem& sub) {
  if (s.basis.empty()) return make_basis(sub.n(), s.basis_degree);
  try {
    return MonomialBasis::parse(s.basis, sub.n());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("collect.basis: ") + e.what());
  }
}

double RunReport::rt_max() const {
  double v = 0.0;
  for (const auto& s : subsystems) v = std::max(v, s.synth_seconds);
  return v;
}

double RunReport::rt_mean() const {
  if (subsystems.empty()) return 0.0;
  double v = 0.0;
  for (const auto& s : subsystems) v += s.synth_seconds;
  return v / subsystems.size();
}

double RunReport::mu_max() const {
  double v = 0.0;
  for (const auto& s : subsystems) v = std::max(v, s.memory_bytes);
  return v;
}

double RunReport::mu_mean() const {
  if (subsystems.empty()) return 0.0;
  double v = 0.0;
  for (const auto& s : subsystems) v += s.memory_bytes;
  return v / subsystems.size();
}

Stage parse_stage(const std::string& text) {
  if (text == "collect") return Stage::collect;
  if (text == "synthesize") return Stage::synthesize;
  if (text == "compose") return Stage::compose;
  if (text == "verify") return Stage::verify;
  if (text == "run" || text == "all") return Stage::all;
  throw ConfigError("unknown stage '" + text + "'");
}

namespace {

class Runner {
 public:
  Runner(const Scenario& s, RunReport& r) : s_(s), r_(r), out_(s.out_dir) {}

  void run(Stage stage) {
    bench_ = scenario_benchmark(s_);
    ensure_dir(out_);
    {
      auto os = open_out(out_ / "scenario.ini");
      write_scenario(s_, os);
      r_.artifacts.push_back("scenario.ini");
    }
    const bool all = stage == Stage::all;
    if (all || stage == Stage::collect) timed("collect", [&] { collect(); });
    if (all || stage == Stage::synthesize) timed("synthesize", [&] { synthesize(); });
    if (all || stage == Stage::compose) timed("compose", [&] { compose(); });
    if (all || stage == Stage::verify) timed("verify", [&] { verify(); });
  }

 private:
  template <typename F>
  void timed(const std::string& name, F&& body) {
    const auto t0 = Clock::now();
    try {
      body();
    } catch (...) {
      r_.stages.push_back({name, seconds_since(t0), peak_rss_kb()});
      r_.failed_stage = name;
      throw;
    }
    r_.stages.push_back({name, seconds_since(t0), peak_rss_kb()});
  }

  MonomialBasis basis(int i) const { return scenario_basis(s_, bench_.subsystems[i]); }

  void collect() {
    const int M = s_.M;
    data_.assign(M, TrajectoryData{});
    ensure_dir(out_ / "trajectories");
    CollectOptions co;
    co.tau = s_.tau;
    co.substeps = s_.substeps;
    co.mode = s_.derivative;
    auto err = parallel_for(M, s_.workers, [&](int i) {
      const Subsystem& sub = bench_.subsystems[i];
      std::mt19937_64 rng(derive_seed(s_.seed, i, 2));
      std::uniform_real_distribution<double> box(-s_.x0_box, s_.x0_box);
      Eigen::VectorXd x0(sub.n());
      for (int k = 0; k < sub.n(); ++k) x0(k) = box(rng);
      Eigen::MatrixXd w(sub.sigma(), s_.T);
      std::mt19937_64 wrng(derive_seed(s_.seed, i, 3));
      std::uniform_real_distribution<double> wbox(-s_.w_amplitude, s_.w_amplitude);
      for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = wbox(wrng);
      const auto u = generate_excitation(s_.excitation, derive_seed(s_.seed, i, 1), sub.m(), s_.T, s_.amplitude);
      data_[i] = simulate_subsystem(sub, basis(i), x0, u, w, co);
      data_[i].id = "trajectories/" + sub_name(i) + ".csv";
      auto os = open_out(out_ / data_[i].id);
      write_trajectory_csv(data_[i], os);
    });
    if (err) {
      try {
        std::rethrow_exception(err);
      } catch (const DivergenceError& e) {
        throw StageFailure(exit_rank_gate, std::string("data collection diverged: ") + e.what() +
                                               "; reduce the excitation amplitude, x0_box or tau");
      }
    }
    for (int i = 0; i < M; ++i) r_.artifacts.push_back(data_[i].id);
  }

  void load_data() {
    if (!data_.empty()) return;
    data_.resize(s_.M);
    for (int i = 0; i < s_.M; ++i) {
      const std::string id = "trajectories/" + sub_name(i) + ".csv";
      auto is = open_in(out_ / id);
      try {
        data_[i] = read_trajectory_csv(is, basis(i), id);
      } catch (const std::exception& e) {
        throw IoError(id + ": " + e.what());
      }
      if (std::abs(data_[i].tau - s_.tau) > 1e-12 * s_.tau || data_[i].T() != s_.T ||
          data_[i].n() != bench_.subsystems[i].n()) {
        throw IoError(id + " does not match the scenario (T, tau or n differ); rerun collect");
      }
    }
  }

  void synthesize() {
    load_data();
    const int M = s_.M;
    std::vector<double> rho(M), kappa(M);
    for (int i = 0; i < M; ++i) {
      rho[i] = adversarial_gain(bench_.subsystems[i].adversarial_matrix(), s_.pi_of(i));
      kappa[i] = s_.kappa_of(i);
    }
    certs_.assign(M, IssCertificate{});
    r_.subsystems.assign(M, SubsystemReport{});
    ensure_dir(out_ / "certificates");
    auto err = parallel_for(M, s_.workers, [&](int i) {
      SynthOptions opt;
      opt.kappa = kappa[i];
      opt.pi = s_.pi_of(i);
      opt.phi_degree = s_.phi_degree;
      opt.eps = s_.eps;
      opt.aleph_rule = s_.aleph_rule;
      opt.rank_rtol = s_.rank_rtol;
      opt.sdp.tol = s_.sdp_tol;
      opt.sdp.max_iter = s_.max_iter;
      if (s_.gain_aware) opt.min_alpha = required_alpha(rho, kappa, bench_.topology, i, s_.gain_factor, s_.dense_gains);
      try {
        certs_[i] = synthesize_iss(data_[i], basis(i), bench_.subsystems[i].adversarial_matrix(), opt);
      } catch (const SynthesisError& e) {
        throw SynthesisError(e.kind(), "subsystem " + std::to_string(i + 1) + ": " + e.what());
      }
      certs_[i].data_ref = data_[i].id;
      const auto& st = certs_[i].stats;
      auto& rep = r_.subsystems[i];
      rep.synth_seconds = st.seconds;
      rep.constraints = st.constraints;
      rep.psd_order = st.psd_order;
      rep.free_variables = st.free_variables;
      // Dense Schur complement, constraint rows over the PSD blocks, and a few
      // n x n work matrices per block.
      const double c = st.constraints, p = st.psd_order;
      rep.memory_bytes = 8.0 * (c * c + c * p * (p + 1) / 2 + 6 * p * p + st.free_variables);
      auto os = open_out(out_ / "certificates" / (sub_name(i) + ".cert"));
      write_certificate(certs_[i], os);
    });
    if (err) {
      try {
        std::rethrow_exception(err);
      } catch (const SynthesisError& e) {
        const int code = e.kind() == SynthesisError::Kind::rank_gate    ? exit_rank_gate
                         : e.kind() == SynthesisError::Kind::infeasible ? exit_sdp_infeasible
                                                                        : exit_sdp_numerical;
        throw StageFailure(code, e.what());
      }
    }
    for (int i = 0; i < M; ++i) r_.artifacts.push_back("certificates/" + sub_name(i) + ".cert");
  }

  void load_certs() {
    if (!certs_.empty()) return;
    certs_.resize(s_.M);
    for (int i = 0; i < s_.M; ++i) {
      const std::string id = "certificates/" + sub_name(i) + ".cert";
      auto is = open_in(out_ / id);
      try {
        certs_[i] = read_certificate(is);
      } catch (const std::exception& e) {
        throw IoError(id + ": " + e.what());
      }
      if (certs_[i].n() != bench_.subsystems[i].n()) throw IoError(id + " does not match the scenario dimension");
    }
  }

  void compose() {
    compose_quiet();
    {
      auto os = open_out(out_ / "network.txt");
      write_network_report(net_, os);
    }
    {
      auto os = open_out(out_ / "subsystems.csv");
      write_subsystem_csv(net_, os);
    }
    r_.artifacts.push_back("network.txt");
    r_.artifacts.push_back("subsystems.csv");
  }

  void verify() {
    load_data();
    if (!composed_) compose_quiet();
    const double box = s_.box > 0 ? s_.box : default_box(s_.benchmark, s_.topology);
    ensure_dir(out_ / "verify");
    ensure_dir(out_ / "sim");
    const int M = s_.M;

    std::vector<SuiteReport> suites(M);
    if (s_.samples > 0) {
      auto err = parallel_for(M, s_.workers, [&](int i) {
        SuiteOptions so;
        so.box = box;
        so.samples = s_.samples;
        so.seed = derive_seed(s_.seed, i, 4);
        suites[i] = run_inequality_suite(net_.certs[i], data_[i], bench_.subsystems[i], so);
        auto os = open_out(out_ / "verify" / (sub_name(i) + ".txt"));
        write_suite_report(suites[i], os);
      });
      if (err) std::rethrow_exception(err);
      for (int i = 0; i < M; ++i) r_.artifacts.push_back("verify/" + sub_name(i) + ".txt");
    }
    network_ = assemble_network(bench_.subsystems, bench_.topology);
    SuiteReport netsuite;
    if (s_.samples > 0) {
      SuiteOptions so;
      so.box = box;
      so.samples = s_.samples;
      so.seed = derive_seed(s_.seed, M, 4);
      so.workers = s_.workers;
      netsuite = run_inequality_suite(net_, network_, so);
      auto os = open_out(out_ / "verify" / "network.txt");
      write_suite_report(netsuite, os);
      r_.artifacts.push_back("verify/network.txt");
    }

    std::string worst_where;
    r_.worst_defect = -std::numeric_limits<double>::infinity();
    auto consider = [&](const SuiteReport& rep, const std::string& where) {
      for (const auto& c : rep.conditions) {
        if (c.max_defect > r_.worst_defect) {
          r_.worst_defect = c.max_defect;
          worst_where = where + " condition " + c.name;
        }
      }
    };
    for (int i = 0; i < M; ++i) consider(suites[i], "subsystem " + std::to_string(i + 1));
    consider(netsuite, "network");
    if (s_.samples == 0) r_.worst_defect = 0.0;

    SimOptions so;
    so.horizon = s_.horizon;
    so.tau = s_.sim_tau;
    so.substeps = s_.sim_substeps;
    so.convergence_rtol = s_.convergence_rtol;
    so.v_slack = s_.v_slack;
    const long steps = std::lround(s_.horizon / s_.sim_tau);
    so.record_stride = static_cast<int>(std::max<long>(1, steps / 200));
    std::vector<std::string> sim_problems;
    Eigen::VectorXd first_x0;
    for (int k = 0; k < s_.closed_loop_runs; ++k) {
      std::mt19937_64 rng(derive_seed(s_.seed, k, 5));
      std::uniform_real_distribution<double> u(-box, box);
      Eigen::VectorXd x0(network_.n());
      for (int j = 0; j < x0.size(); ++j) x0(j) = u(rng);
      if (k == 0) first_x0 = x0;
      const auto sim = simulate_closed_loop(network_, net_, x0, so);
      if (sim.converged) ++r_.converged_runs;
      const bool bad = sim.diverged || sim.v_monotone_violations > 0 || sim.v_decay_violations > 0 ||
                       (s_.require_convergence && !sim.converged);
      if (bad) {
        ++r_.violating_runs;
        std::ostringstream os;
        os << "closed-loop run " << k + 1 << (sim.diverged ? " diverged" : "") << " (V increases "
           << sim.v_monotone_violations << ", decay violations " << sim.v_decay_violations << ", final |x| "
           << sim.final_norm << " of " << sim.initial_norm << ")";
        sim_problems.push_back(os.str());
      }
      if (k == 0) {
        auto os = open_out(out_ / "sim" / "closed_loop.csv");
        write_simulation_csv(sim, os);
        r_.artifacts.push_back("sim/closed_loop.csv");
      }
    }
    if (s_.open_loop && first_x0.size() > 0) {
      const auto open = simulate_open_loop(network_, first_x0, so, &net_);
      r_.open_loop_converged = open.converged;
      auto os = open_out(out_ / "sim" / "open_loop.csv");
      write_simulation_csv(open, os);
      r_.artifacts.push_back("sim/open_loop.csv");
    }

    std::ostringstream msg;
    if (r_.worst_defect > s_.defect_tol) {
      msg << std::setprecision(6) << "inequality check failed: " << worst_where << " has defect " << r_.worst_defect
          << " > " << s_.defect_tol;
    }
    for (const auto& p : sim_problems) msg << (msg.tellp() > 0 ? "; " : "") << p;
    if (msg.tellp() > 0) throw StageFailure(exit_verification, msg.str());
  }

  void compose_quiet() {
    load_certs();
    ComposeOptions co;
    co.mu_margin = s_.mu_margin;
    co.dense_gains = s_.dense_gains;
    try {
      net_ = compose_clf(certs_, bench_.topology, co);
    } catch (const CompositionError& e) {
      throw StageFailure(exit_composition, e.what());
    }
    composed_ = true;
    r_.network_kappa = net_.kappa();
    r_.max_mu = net_.constants.mu.maxCoeff();
  }

  const Scenario& s_;
  RunReport& r_;
  fs::path out_;
  Benchmark bench_;
  std::vector<TrajectoryData> data_;
  std::vector<IssCertificate> certs_;
  NetworkCertificate net_;
  Network network_;
  bool composed_ = false;
};

}  // namespace

RunReport run_scenario(const Scenario& s, Stage stage) {
  RunReport r;
  try {
    s.validate();
    Runner(s, r).run(stage);
    r.message = "ok";
  } catch (const StageFailure& e) {
    r.exit_code = e.code;
    r.message = e.what();
  } catch (const ConfigError& e) {
    r.exit_code = exit_usage;
    r.message = e.what();
  } catch (const IoError& e) {
    r.exit_code = exit_io;
    r.message = e.what();
  } catch (const std::exception& e) {
    r.exit_code = exit_usage;
    r.message = e.what();
  }
  if (r.exit_code != exit_ok) {
    std::error_code ec;
    if (fs::is_directory(s.out_dir, ec)) {
      std::ofstream os(fs::path(s.out_dir) / "summary.txt");
      if (os) write_summary(s, r, os);
    }
  } else {
    try {
      std::ofstream os(fs::path(s.out_dir) / "summary.txt");
      if (!os) throw IoError("cannot write summary");
      write_summary(s, r, os);
    } catch (const std::exception& e) {
      r.exit_code = exit_io;
      r.message = e.what();
    }
  }
  return r;
}

void write_summary(const Scenario& s, const RunReport& r, std::ostream& os) {
  const auto old = os.precision(10);
  os << "ddclf-summary 1\n";
  os << "scenario " << s.name << '\n';
  os << "exit_code " << r.exit_code << '\n';
  os << "message " << r.message << '\n';
  if (!r.failed_stage.empty()) os << "failed_stage " << r.failed_stage << '\n';
  os << "M " << s.M << "\nT " << s.T << "\ntopology " << s.topology << '\n';
  os << "network_kappa " << r.network_kappa << '\n';
  os << "max_mu " << r.max_mu << '\n';
  os << "worst_defect " << r.worst_defect << '\n';
  os << "closed_loop_converged " << r.converged_runs << " of " << s.closed_loop_runs << '\n';
  os << "closed_loop_violations " << r.violating_runs << '\n';
  os << "open_loop_converged " << (r.open_loop_converged ? "yes" : "no") << '\n';
  os << "stages " << r.stages.size() << '\n';
  for (const auto& st : r.stages) {
    os << "stage " << st.name << " seconds " << st.seconds << " peak_rss_kb " << st.peak_rss_kb << '\n';
  }
  os << "RT_max_s " << r.rt_max() << "\nRT_mean_s " << r.rt_mean() << '\n';
  os << "MU_max_bytes " << r.mu_max() << "\nMU_mean_bytes " << r.mu_mean() << '\n';
  if (!r.subsystems.empty()) {
    const auto& f = r.subsystems.front();
    os << "sdp_constraints " << f.constraints << "\nsdp_psd_order " << f.psd_order << '\n';
  }
  os << "artifacts " << r.artifacts.size() << '\n';
  for (const auto& a : r.artifacts) os << "artifact " << a << '\n';
  os << "end\n";
  os.precision(old);
}

std::vector<BenchRow> run_bench(const std::string& suite, const BenchOptions& options) {
  std::vector<BenchRow> rows;
  auto row_of = [](const Scenario& s, const RunReport& r, double synth_total) {
    BenchRow row;
    row.name = s.name;
    row.topology = s.topology;
    row.M = s.M;
    row.T = s.T;
    row.rt_max = r.rt_max();
    row.rt_mean = r.rt_mean();
    row.mu_max = r.mu_max();
    row.mu_mean = r.mu_mean();
    row.synth_total = synth_total;
    row.kappa = r.network_kappa;
    if (!r.subsystems.empty()) {
      row.constraints = r.subsystems.front().constraints;
      row.psd_order = r.subsystems.front().psd_order;
    }
    row.exit_code = r.exit_code;
    return row;
  };
  auto stage_seconds = [](const RunReport& r, const std::string& name) {
    for (const auto& st : r.stages) {
      if (st.name == name) return st.seconds;
    }
    return 0.0;
  };
  if (suite == "desk") {
    for (const auto& name : preset_names()) {
      Scenario s = preset_scenario(name, options.paper_scale);
      s.workers = options.workers;
      s.seed = options.seed;
      s.out_dir = (fs::path(options.out_dir) / fs::path(s.out_dir).filename()).string();
      const auto r = run_scenario(s);
      rows.push_back(row_of(s, r, stage_seconds(r, "synthesize")));
    }
  } else if (suite == "scaling") {
    for (int M : options.scaling_M) {
      Scenario s = preset_scenario("spacecraft-ring", false);
      s.name = "scaling-ring-" + std::to_string(M);
      s.M = M;
      s.kappa = {0.1};
      s.pi = {0.001};
      s.gain_aware = false;
      s.workers = options.workers;
      s.seed = options.seed;
      s.out_dir = (fs::path(options.out_dir) / s.name).string();
      RunReport best;
      double best_t = std::numeric_limits<double>::infinity();
      for (int k = 0; k < std::max(1, options.repeats); ++k) {
        RunReport r = run_scenario(s, Stage::collect);
        if (r.exit_code == exit_ok) r = run_scenario(s, Stage::synthesize);
        const double t = stage_seconds(r, "synthesize");
        if (r.exit_code != exit_ok || t < best_t) {
          best = r;
          best_t = t;
        }
        if (r.exit_code != exit_ok) break;
      }
      rows.push_back(row_of(s, best, best_t));
    }
  } else {
    throw ConfigError("unknown bench suite '" + suite + "' (expected desk or scaling)");
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& os) {
  const auto old = os.precision(6);
  os << "case,topology,M,T,RT_max_s,RT_mean_s,MU_max_bytes,MU_mean_bytes,synth_total_s,kappa,sdp_constraints,"
        "sdp_psd_order,exit_code\n";
  for (const auto& r : rows) {
    os << r.name << ',' << r.topology << ',' << r.M << ',' << r.T << ',' << r.rt_max << ',' << r.rt_mean << ','
       << r.mu_max << ',' << r.mu_mean << ',' << r.synth_total << ',' << r.kappa << ',' << r.constraints << ','
       << r.psd_order << ',' << r.exit_code << '\n';
  }
  os.precision(old);
}

}  // namespace ddclf
