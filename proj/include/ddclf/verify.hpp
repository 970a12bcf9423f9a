// Independent checks of certificates against the hidden dynamics: closed- and
// open-loop simulation and sampled inequality suites.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddclf/collect.hpp"
#include "ddclf/compose.hpp"
#include "ddclf/plant.hpp"
#include "ddclf/synth.hpp"

namespace ddclf {

struct SimOptions {
  double horizon = 20.0;
  double tau = 0.01;  // grid spacing of the recorded samples
  int substeps = 10;  // RK4 steps per grid interval
  double convergence_rtol = 1e-3;
  double v_slack = 1e-9;
  /// Width of the tolerance band on the exponential decrease check, as a
  /// fraction of kappa.
  double decay_band = 0.5;
  double divergence_bound = 1e15;
  int record_stride = 1;  // keep every k-th grid sample in t/X/U/V
};

struct SimulationResult {
  Eigen::VectorXd t;
  Eigen::MatrixXd X;  // n x samples
  Eigen::MatrixXd U;  // m x samples
  Eigen::VectorXd V;
  bool converged = false;
  bool diverged = false;
  int v_monotone_violations = 0;  // V(t_k+1) > V(t_k) + v_slack (1 + V(t_k))
  int v_decay_violations = 0;     // V(t_k+1) > V(t_k) exp(-(1 - band) kappa tau) + slack
  double final_norm = 0.0;
  double initial_norm = 0.0;
};

/// dx/dt = A F(x) + B u(x) with u from the network certificate, evaluated at
/// every RK4 stage.
SimulationResult simulate_closed_loop(const Network& net, const NetworkCertificate& cert,
                                      const Eigen::Ref<const Eigen::VectorXd>& x0, const SimOptions& options);

/// Same with u = 0. V(t) uses `cert` when given, otherwise |x|^2.
SimulationResult simulate_open_loop(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& x0,
                                    const SimOptions& options, const NetworkCertificate* cert = nullptr);

/// CSV with columns t,x1..xn,u1..um,V.
void write_simulation_csv(const SimulationResult& sim, std::ostream& os);

struct ConditionReport {
  std::string name;
  double max_defect = 0.0;  // normalized, <= 0 means satisfied everywhere sampled
  Eigen::VectorXd argmax;   // sample (x, or [x; w]) attaining it
  long samples = 0;
};

struct SuiteReport {
  std::vector<ConditionReport> conditions;
  double worst() const;
  bool ok(double tol) const { return worst() <= tol; }
};

struct SuiteOptions {
  double box = 5.0;    // x sampled uniformly in [-box, box]^n
  double w_box = -1;   // w box; negative means the same as box
  long samples = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  int shards = 8;      // fixed shard count keeps results independent of workers
};

/// Subsystem conditions "(9)", "(10)", "con1", "con2". Defects are normalized
/// by the magnitude of the terms involved:
///   (9)   max(alpha_lo |x|^2 - V, V - alpha_hi |x|^2) / (1 + V)
///   (10)  (LV + kappa V - rho |w|^2) / (1 + |LV| + kappa V + rho |w|^2)
///   con1  |J Phi(x) - aleph(x) Xi|_max / (1 + |aleph(x) Xi|_max)
///   con2  lambda_max(C(x) + kappa Xi) / (1 + |C(x)|_2 + kappa |Xi|_2)
SuiteReport run_inequality_suite(const IssCertificate& cert, const TrajectoryData& traj, const Subsystem& sub,
                                 const SuiteOptions& options);

/// Network conditions "(5)" and "(6)" with w_ij = x_j:
///   (5)   max(alpha_lo |x|^2 - V, V - alpha_hi |x|^2) / (1 + V)
///   (6)   (LV + kappa V) / (1 + |LV| + kappa V)
SuiteReport run_inequality_suite(const NetworkCertificate& cert, const Network& net, const SuiteOptions& options);

void write_suite_report(const SuiteReport& report, std::ostream& os);
/// Parses write_suite_report output (defects at the printed precision).
SuiteReport read_suite_report(std::istream& is);

}  // namespace ddclf
