// Data-driven synthesis of a quadratic ISS Lyapunov function and a polynomial
// state-feedback controller for one subsystem from a single trajectory.
#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddclf/collect.hpp"
#include "ddclf/plant.hpp"
#include "ddclf/poly.hpp"
#include "ddclf/sdp.hpp"

namespace ddclf {

struct SynthStats {
  int constraints = 0;      // scalar equalities handed to the SDP
  int free_variables = 0;   // Phi coefficients
  int psd_order = 0;        // sum of PSD block sizes
  int sdp_iterations = 0;
  double seconds = 0.0;
};

struct IssCertificate {
  Eigen::MatrixXd P;    // n x n, P = Xi^-1
  Eigen::MatrixXd Xi;   // n x n
  PolyMatrix Phi;       // T x n
  PolyMatrix K;         // m x n, u = K(x) x
  Eigen::MatrixXd D;    // n x sigma adversarial matrix used for rho
  MonomialBasis basis;  // synthesis basis F(x)
  AlephRule aleph_rule = AlephRule::smallest_index;
  double kappa = 0.0;
  double pi = 0.0;
  double rho = 0.0;
  double alpha_lo = 0.0;
  double alpha_hi = 0.0;
  std::string data_ref;
  SynthStats stats;

  int n() const { return static_cast<int>(P.rows()); }
  int m() const { return K.rows(); }
};

struct SynthOptions {
  double kappa = 0.1;
  double pi = 1.0;
  int phi_degree = -1;  // -1: basis max degree - 1
  double eps = 1e-6;    // Xi >= eps I
  AlephRule aleph_rule = AlephRule::smallest_index;
  /// When positive, additionally impose lambda_min(P) >= min_alpha, i.e.
  /// Xi <= I / min_alpha. Used to meet a small-gain requirement up front.
  double min_alpha = 0.0;
  double rank_rtol = 1e-8;
  /// Replace each Phi coefficient by the one with the smallest |U Phi| that
  /// reproduces the same J Phi and sym(Z Phi); con1/con2 are unchanged.
  bool polish = true;
  SdpOptions sdp;
};

class SynthesisError : public std::runtime_error {
 public:
  enum class Kind { rank_gate, infeasible, numerical };
  SynthesisError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// rho = ||D||_2^2 / pi (largest singular value of the concatenated D).
double adversarial_gain(const Eigen::Ref<const Eigen::MatrixXd>& D, double pi);

/// Solves con1 (J Phi(x) = aleph(x) Xi) and con2 (-(C(x) + kappa Xi) SOS with
/// C = Z Phi + Phi^T Z^T + pi I, Z = X1 - D W0) and recovers P, K and the
/// ISS constants. Throws SynthesisError.
IssCertificate synthesize_iss(const TrajectoryData& traj, const MonomialBasis& basis,
                              const Eigen::Ref<const Eigen::MatrixXd>& D, const SynthOptions& options);

struct SearchOptions {
  std::vector<double> pis;  // candidate pi values, tried in order
  int kappa_halvings = 4;   // kappa retries per pi on infeasibility
};

/// Outer search over pi (grid) and kappa (halving) around synthesize_iss.
IssCertificate synthesize_iss_search(const TrajectoryData& traj, const MonomialBasis& basis,
                                     const Eigen::Ref<const Eigen::MatrixXd>& D, SynthOptions options,
                                     const SearchOptions& search);

/// Log-spaced grid of `count` values in [lo, hi].
std::vector<double> log_grid(double lo, double hi, int count);

struct CertificateValue {
  double V = 0.0;
  Eigen::VectorXd u;
};

/// V = x^T P x and u = K(x) x.
CertificateValue eval_certificate(const IssCertificate& cert, const Eigen::Ref<const Eigen::VectorXd>& x);

/// max_k ||Z G(x_k) x_k - (A F(x_k) + B K(x_k) x_k)|| / (1 + ||x_k||), G = Phi P,
/// over the columns of `samples`. Needs the hidden dynamics of `sub`.
double lemma1_residual(const IssCertificate& cert, const TrajectoryData& traj, const Subsystem& sub,
                       const Eigen::Ref<const Eigen::MatrixXd>& samples);

/// Text serialization with 17 significant digits; round-trips exactly.
void write_certificate(const IssCertificate& cert, std::ostream& os);
IssCertificate read_certificate(std::istream& is);

}  // namespace ddclf
