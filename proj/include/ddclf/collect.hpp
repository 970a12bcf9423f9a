// Single-trajectory data collection and the monomial-trajectory rank gate.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "ddclf/plant.hpp"
#include "ddclf/poly.hpp"

namespace ddclf {

/// Sampled input-state trajectory of one subsystem. Columns are samples
/// t0, t0 + tau, ..., t0 + (T-1) tau.
struct TrajectoryData {
  Eigen::MatrixXd U0T;  // m x T
  Eigen::MatrixXd W0T;  // sigma x T
  Eigen::MatrixXd X0T;  // n x T
  Eigen::MatrixXd X1T;  // n x T, state derivatives
  Eigen::MatrixXd J0T;  // N x T, basis evaluated along X0T
  double tau = 0.0;
  double t0 = 0.0;
  std::string id;

  int T() const { return static_cast<int>(X0T.cols()); }
  int n() const { return static_cast<int>(X0T.rows()); }
  int m() const { return static_cast<int>(U0T.rows()); }
  int sigma() const { return static_cast<int>(W0T.rows()); }
};

enum class ExcitationKind { uniform_random, multisine };
ExcitationKind parse_excitation_kind(const std::string& text);

/// m x T input samples with entries bounded by `amplitude`; deterministic in seed.
Eigen::MatrixXd generate_excitation(ExcitationKind kind, std::uint64_t seed, int m, int T,
                                    double amplitude);

enum class DerivativeMode { exact, finite_difference };
DerivativeMode parse_derivative_mode(const std::string& text);

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int sample) : std::runtime_error(what), sample_(sample) {}
  int sample() const { return sample_; }

 private:
  int sample_;
};

struct CollectOptions {
  double tau = 0.01;
  double t0 = 0.0;
  int substeps = 10;
  DerivativeMode mode = DerivativeMode::exact;
};

/// Integrates the subsystem with RK4 under zero-order-hold inputs (columns of
/// `inputs`, m x T) and adversarial samples (`w`, sigma x T), recording T
/// samples. J0T is evaluated over `synthesis_basis`.
TrajectoryData simulate_subsystem(const Subsystem& sub, const MonomialBasis& synthesis_basis,
                                  const Eigen::Ref<const Eigen::VectorXd>& x0,
                                  const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                  const Eigen::Ref<const Eigen::MatrixXd>& w,
                                  const CollectOptions& options);

Eigen::MatrixXd build_monomial_traj(const MonomialBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& X0T);

struct RankReport {
  bool ok = false;
  double condition = 0.0;  // sigma_max / sigma_min
  int rank = 0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
};

/// ok iff T > N and sigma_min > rtol * sigma_max. Never throws.
RankReport check_rank(const Eigen::Ref<const Eigen::MatrixXd>& J0T, double rtol = 1e-8);

/// CSV with header t,u1..um,w1..wsigma,x1..xn,dx1..dxn, 17 significant digits.
void write_trajectory_csv(const TrajectoryData& data, std::ostream& os);
/// Parses the CSV above; J0T is rebuilt over `basis`.
TrajectoryData read_trajectory_csv(std::istream& is, const MonomialBasis& basis, const std::string& id = "");

}  // namespace ddclf
