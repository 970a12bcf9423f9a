// Config-driven end-to-end runner: collect -> synthesize -> compose -> verify,
// plus the desk and scaling benchmark suites.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddclf/collect.hpp"
#include "ddclf/compose.hpp"
#include "ddclf/plant.hpp"
#include "ddclf/synth.hpp"
#include "ddclf/verify.hpp"

namespace ddclf {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_rank_gate = 2,
  exit_sdp_infeasible = 3,
  exit_sdp_numerical = 4,
  exit_composition = 5,
  exit_verification = 6,
  exit_io = 7,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A custom subsystem given in the config; every subsystem of the network is a copy.
struct CustomSystem {
  std::string basis;  // "x1;x2;x1^2"
  int n = 0;
  Eigen::MatrixXd A, B, D;
};

struct Scenario {
  std::string name = "scenario";

  // [system]
  std::string benchmark = "spacecraft";  // spacecraft | academic | lu | custom
  int M = 1;
  std::string topology = "ring";  // any topology kind, "none", or "custom"
  std::vector<Edge> edges;        // topology = custom
  Eigen::Vector3d inertia{1.0, 1.2, 1.5};
  std::optional<CustomSystem> custom;

  // [collect]
  int basis_degree = 2;
  std::string basis;  // explicit synthesis basis; overrides basis_degree
  int T = 15;
  double tau = 0.01;
  int substeps = 10;
  ExcitationKind excitation = ExcitationKind::uniform_random;
  double amplitude = 100.0;
  double w_amplitude = 1.0;
  double x0_box = 1.0;
  std::uint64_t seed = 1;
  DerivativeMode derivative = DerivativeMode::exact;
  double rank_rtol = 1e-8;

  // [synth]; kappa and pi hold one value (broadcast) or one per subsystem.
  AlephRule aleph_rule = AlephRule::smallest_index;
  std::vector<double> kappa{0.1};
  std::vector<double> pi{1.0};
  int phi_degree = -1;
  double eps = 1e-6;
  double sdp_tol = 1e-8;
  int max_iter = 100;
  bool gain_aware = false;
  double gain_factor = 10.0;  // alpha_lo_j >= factor * sum rho_i / kappa_j

  // [compose]
  double mu_margin = 1e-6;
  bool dense_gains = false;

  // [verify]
  long samples = 10000;
  double box = -1.0;  // <= 0: benchmark default
  int closed_loop_runs = 5;
  double horizon = 20.0;
  double sim_tau = 0.01;
  int sim_substeps = 10;
  double convergence_rtol = 1e-3;
  double v_slack = 1e-9;
  double defect_tol = 1e-6;
  bool require_convergence = false;
  bool open_loop = true;

  // [output]
  std::string out_dir = "out";
  int workers = 1;

  double kappa_of(int i) const { return kappa.size() == 1 ? kappa[0] : kappa.at(i); }
  double pi_of(int i) const { return pi.size() == 1 ? pi[0] : pi.at(i); }
  /// Throws ConfigError on any non-positive or inconsistent field.
  void validate() const;
};

/// INI text with sections [system] [collect] [synth] [compose] [verify] [output].
Scenario parse_scenario(std::istream& is);
Scenario load_scenario(const std::string& path);
void write_scenario(const Scenario& s, std::ostream& os);

/// Desk-scale (or paper-scale) presets of the five case studies:
/// "spacecraft-full", "spacecraft-ring", "academic-tree", "academic-star", "lu-line".
Scenario preset_scenario(const std::string& name, bool paper_scale = false);
std::vector<std::string> preset_names();

/// Default sampling and initial-condition box for a benchmark and topology.
double default_box(const std::string& benchmark, const std::string& topology);

Benchmark scenario_benchmark(const Scenario& s);
MonomialBasis scenario_basis(const Scenario& s, const Subsystem& sub);

struct StageReport {
  std::string name;
  double seconds = 0.0;
  long peak_rss_kb = 0;  // process high-water mark at the end of the stage
};

struct SubsystemReport {
  double synth_seconds = 0.0;
  double memory_bytes = 0.0;  // solver working-set estimate
  int constraints = 0;
  int psd_order = 0;
  int free_variables = 0;
};

struct RunReport {
  int exit_code = exit_ok;
  std::string message;
  std::string failed_stage;
  std::vector<StageReport> stages;
  std::vector<SubsystemReport> subsystems;
  std::vector<std::string> artifacts;  // relative to out_dir
  double network_kappa = 0.0;
  double max_mu = 0.0;
  double worst_defect = 0.0;
  int converged_runs = 0;
  int violating_runs = 0;
  bool open_loop_converged = false;

  double rt_max() const;
  double rt_mean() const;
  double mu_max() const;
  double mu_mean() const;
};

enum class Stage { collect, synthesize, compose, verify, all };
Stage parse_stage(const std::string& text);

/// Runs `last` (and, for Stage::all, everything before it). Stages after
/// collect read their inputs from the output directory. Never throws; the
/// cause of a failure is in exit_code and message.
RunReport run_scenario(const Scenario& s, Stage stage = Stage::all);

void write_summary(const Scenario& s, const RunReport& r, std::ostream& os);

struct BenchRow {
  std::string name;
  std::string topology;
  int M = 0;
  int T = 0;
  double rt_max = 0.0, rt_mean = 0.0;
  double mu_max = 0.0, mu_mean = 0.0;
  double synth_total = 0.0;
  double kappa = 0.0;
  int constraints = 0;
  int psd_order = 0;
  int exit_code = 0;
};

struct BenchOptions {
  bool paper_scale = false;
  int workers = 1;
  std::uint64_t seed = 1;
  std::string out_dir = "bench";
  std::vector<int> scaling_M{2, 4, 8, 16};
  int repeats = 3;  // scaling: keep the fastest run per M
};

/// suite "desk": the five presets end to end. suite "scaling": spacecraft ring
/// synthesis over scaling_M. Throws ConfigError on an unknown suite.
std::vector<BenchRow> run_bench(const std::string& suite, const BenchOptions& options);
void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& os);

}  // namespace ddclf
