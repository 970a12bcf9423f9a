// Small-gain composition of subsystem ISS certificates into a network CLF.
#pragma once

#include <iosfwd>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ddclf/plant.hpp"
#include "ddclf/synth.hpp"

namespace ddclf {

/// The constants of one subsystem certificate that composition needs.
struct SubsystemGains {
  double kappa = 0.0;
  double rho = 0.0;
  double alpha_lo = 0.0;
  double alpha_hi = 0.0;
};

SubsystemGains gains_of(const IssCertificate& cert);

/// rho_hat(i, j) = rho_i / alpha_lo_j on every edge j -> i (dense: every i != j).
Eigen::SparseMatrix<double> build_gain_matrix(const std::vector<SubsystemGains>& gains, const Topology& topology,
                                              bool dense = false);

struct SmallGainResult {
  Eigen::VectorXd mu;  // mu_j = -kappa_j + sum_i rho_hat(i, j)
  bool feasible = false;
  std::vector<int> offending;  // j with mu_j >= 0
};

SmallGainResult small_gain_check(const std::vector<SubsystemGains>& gains, const Eigen::SparseMatrix<double>& rho_hat);

struct NetworkConstants {
  Eigen::VectorXd mu;
  double mu_star = 0.0;
  double kappa = 0.0;
  double alpha_lo = 0.0;
  double alpha_hi = 0.0;
};

class CompositionError : public std::runtime_error {
 public:
  CompositionError(const std::string& what, std::vector<int> offending)
      : std::runtime_error(what), offending_(std::move(offending)) {}
  const std::vector<int>& offending() const { return offending_; }

 private:
  std::vector<int> offending_;
};

/// mu_star = (1 - mu_margin) * max_j mu_j, kappa = -mu_star, alpha bounds as
/// min / max over subsystems. Throws CompositionError when some mu_j >= 0.
NetworkConstants compose_constants(const std::vector<SubsystemGains>& gains, const Eigen::SparseMatrix<double>& rho_hat,
                                   double mu_margin = 1e-6);

struct ComposeOptions {
  double mu_margin = 1e-6;
  bool dense_gains = false;
};

struct NetworkCertificate {
  std::vector<IssCertificate> certs;
  std::vector<SubsystemGains> gains;
  Eigen::SparseMatrix<double> rho_hat;
  NetworkConstants constants;

  int M() const { return static_cast<int>(certs.size()); }
  double kappa() const { return constants.kappa; }
};

NetworkCertificate compose_clf(std::vector<IssCertificate> certs, const Topology& topology,
                               const ComposeOptions& options = {});

/// V = sum_i V_i(x_i), u = [u_1; ...; u_M].
CertificateValue eval_network_certificate(const NetworkCertificate& net, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Structured text: constants, per-subsystem table, rho_hat triplets, mu.
void write_network_report(const NetworkCertificate& net, std::ostream& os);

struct NetworkReport {
  NetworkConstants constants;
  std::vector<SubsystemGains> gains;
  Eigen::SparseMatrix<double> rho_hat;

  int M() const { return static_cast<int>(gains.size()); }
};

/// Parses write_network_report output. Throws std::runtime_error on malformed input.
NetworkReport read_network_report(std::istream& is);

/// CSV: subsystem,kappa,pi,rho,alpha_lo,alpha_hi,mu
void write_subsystem_csv(const NetworkCertificate& net, std::ostream& os);

/// factor * (sum of rho_i over the subsystems i that j feeds) / kappa_j. With
/// alpha_lo_j at least this, mu_j <= -(1 - 1/factor) kappa_j.
double required_alpha(const std::vector<double>& rho, const std::vector<double>& kappa, const Topology& topology, int j,
                      double factor, bool dense = false);

}  // namespace ddclf
