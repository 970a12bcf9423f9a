#include "ddclf/collect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

namespace ddclf {

ExcitationKind parse_excitation_kind(const std::string& text) {
  if (text == "uniform-random") return ExcitationKind::uniform_random;
  if (text == "multisine") return ExcitationKind::multisine;
  throw std::invalid_argument("unknown excitation kind '" + text + "'");
}

DerivativeMode parse_derivative_mode(const std::string& text) {
  if (text == "exact") return DerivativeMode::exact;
  if (text == "finite-difference") return DerivativeMode::finite_difference;
  throw std::invalid_argument("unknown derivative mode '" + text + "'");
}

Eigen::MatrixXd generate_excitation(ExcitationKind kind, std::uint64_t seed, int m, int T,
                                    double amplitude) {
  if (T < 1) throw std::invalid_argument("excitation needs T >= 1");
  if (m < 0) throw std::invalid_argument("excitation needs m >= 0");
  if (!(amplitude > 0.0) || !std::isfinite(amplitude)) {
    throw std::invalid_argument("excitation amplitude must be positive and finite");
  }
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd u(m, T);
  if (kind == ExcitationKind::uniform_random) {
    std::uniform_real_distribution<double> dist(-amplitude, amplitude);
    for (int k = 0; k < T; ++k) {
      for (int c = 0; c < m; ++c) u(c, k) = dist(rng);
    }
    return u;
  }
  // Multisine: S sinusoids with frequencies at distinct multiples of the
  // golden ratio (mod 1), scaled into (0.025, 0.475) cycles per sample.
  const int S = (m * T + 3) / 4;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  std::vector<double> freq(S);
  for (int s = 0; s < S; ++s) {
    const double frac = std::fmod((s + 1) * phi, 1.0);
    freq[s] = 0.025 + 0.45 * frac;
  }
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (int c = 0; c < m; ++c) {
    std::vector<double> ph(S);
    for (auto& p : ph) p = phase(rng);
    for (int k = 0; k < T; ++k) {
      double v = 0.0;
      for (int s = 0; s < S; ++s) v += std::sin(2.0 * std::numbers::pi * freq[s] * k + ph[s]);
      u(c, k) = amplitude * v / S;
    }
  }
  return u;
}

TrajectoryData simulate_subsystem(const Subsystem& sub, const MonomialBasis& synthesis_basis,
                                  const Eigen::Ref<const Eigen::VectorXd>& x0,
                                  const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                  const Eigen::Ref<const Eigen::MatrixXd>& w,
                                  const CollectOptions& options) {
  const int n = sub.n();
  const int T = static_cast<int>(inputs.cols());
  if (x0.size() != n) throw DimensionError("simulate_subsystem: x0 has wrong length");
  if (inputs.rows() != sub.m()) throw DimensionError("simulate_subsystem: inputs must have m rows");
  if (w.rows() != sub.sigma() || w.cols() != T) {
    throw DimensionError("simulate_subsystem: adversarial samples must be sigma x T");
  }
  if (synthesis_basis.nvars() != n) throw DimensionError("simulate_subsystem: basis dimension mismatch");
  if (T < 1) throw std::invalid_argument("simulate_subsystem: T must be >= 1");
  if (options.substeps < 1) throw std::invalid_argument("simulate_subsystem: substeps must be >= 1");
  if (!(options.tau > 0.0)) throw std::invalid_argument("simulate_subsystem: tau must be positive");

  const Eigen::MatrixXd& A = PlantOracle::A(sub);
  const Eigen::MatrixXd& B = PlantOracle::B(sub);
  const Eigen::MatrixXd D = sub.adversarial_matrix();
  auto rhs = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& bias) -> Eigen::VectorXd {
    return A * eval_basis(sub.basis(), x) + bias;
  };

  TrajectoryData data;
  data.tau = options.tau;
  data.t0 = options.t0;
  data.U0T = inputs;
  data.W0T = w;
  data.X0T.resize(n, T);
  data.X1T.resize(n, T);

  const double h = options.tau / options.substeps;
  Eigen::VectorXd x = x0;
  const int steps = options.mode == DerivativeMode::finite_difference ? T : T - 1;
  for (int k = 0; k <= steps; ++k) {
    if (!x.allFinite()) {
      throw DivergenceError("state diverged before sample " + std::to_string(k), k);
    }
    const int hold = std::min(k, T - 1);
    Eigen::VectorXd bias = B * inputs.col(hold);
    if (D.cols() > 0) bias += D * w.col(hold);
    if (k < T) {
      data.X0T.col(k) = x;
      if (options.mode == DerivativeMode::exact) data.X1T.col(k) = rhs(x, bias);
    }
    if (k > 0 && options.mode == DerivativeMode::finite_difference) {
      data.X1T.col(k - 1) = (x - data.X0T.col(k - 1)) / options.tau;
    }
    if (k == steps) break;
    for (int s = 0; s < options.substeps; ++s) {
      const Eigen::VectorXd k1 = rhs(x, bias);
      const Eigen::VectorXd k2 = rhs(x + 0.5 * h * k1, bias);
      const Eigen::VectorXd k3 = rhs(x + 0.5 * h * k2, bias);
      const Eigen::VectorXd k4 = rhs(x + h * k3, bias);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  if (!data.X1T.allFinite()) throw DivergenceError("non-finite state derivative", T - 1);
  data.J0T = build_monomial_traj(synthesis_basis, data.X0T);
  return data;
}

Eigen::MatrixXd build_monomial_traj(const MonomialBasis& basis, const Eigen::Ref<const Eigen::MatrixXd>& X0T) {
  if (X0T.rows() != basis.nvars()) {
    throw DimensionError("build_monomial_traj: state rows do not match basis variables");
  }
  Eigen::MatrixXd J(basis.size(), X0T.cols());
  for (Eigen::Index k = 0; k < X0T.cols(); ++k) J.col(k) = eval_basis(basis, X0T.col(k));
  return J;
}

RankReport check_rank(const Eigen::Ref<const Eigen::MatrixXd>& J0T, double rtol) {
  RankReport r;
  if (J0T.size() == 0 || !J0T.allFinite()) return r;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J0T);
  const auto& s = svd.singularValues();
  r.sigma_max = s.maxCoeff();
  r.sigma_min = J0T.rows() <= J0T.cols() ? s.minCoeff() : 0.0;
  r.condition = r.sigma_min > 0.0 ? r.sigma_max / r.sigma_min : std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s[k] > rtol * r.sigma_max) ++r.rank;
  }
  r.ok = J0T.cols() > J0T.rows() && r.sigma_max > 0.0 && r.sigma_min > rtol * r.sigma_max;
  return r;
}

void write_trajectory_csv(const TrajectoryData& d, std::ostream& os) {
  os << "t";
  for (int c = 0; c < d.m(); ++c) os << ",u" << c + 1;
  for (int c = 0; c < d.sigma(); ++c) os << ",w" << c + 1;
  for (int c = 0; c < d.n(); ++c) os << ",x" << c + 1;
  for (int c = 0; c < d.n(); ++c) os << ",dx" << c + 1;
  os << '\n';
  os << std::setprecision(17);
  for (int k = 0; k < d.T(); ++k) {
    os << d.t0 + k * d.tau;
    for (int c = 0; c < d.m(); ++c) os << ',' << d.U0T(c, k);
    for (int c = 0; c < d.sigma(); ++c) os << ',' << d.W0T(c, k);
    for (int c = 0; c < d.n(); ++c) os << ',' << d.X0T(c, k);
    for (int c = 0; c < d.n(); ++c) os << ',' << d.X1T(c, k);
    os << '\n';
  }
}

TrajectoryData read_trajectory_csv(std::istream& is, const MonomialBasis& basis, const std::string& id) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("trajectory CSV is empty");
  int m = 0, sigma = 0, n = 0, dn = 0;
  {
    std::stringstream ss(line);
    std::string col;
    std::getline(ss, col, ',');
    if (col != "t") throw std::runtime_error("trajectory CSV must start with column 't'");
    while (std::getline(ss, col, ',')) {
      if (col.rfind("dx", 0) == 0) ++dn;
      else if (col[0] == 'u') ++m;
      else if (col[0] == 'w') ++sigma;
      else if (col[0] == 'x') ++n;
      else throw std::runtime_error("unexpected trajectory CSV column '" + col + "'");
    }
  }
  if (n != dn) throw std::runtime_error("trajectory CSV has mismatched x/dx columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != 1 + m + sigma + 2 * n) {
      throw std::runtime_error("trajectory CSV row has wrong number of columns");
    }
    rows.push_back(std::move(row));
  }
  const int T = static_cast<int>(rows.size());
  TrajectoryData d;
  d.id = id;
  d.U0T.resize(m, T);
  d.W0T.resize(sigma, T);
  d.X0T.resize(n, T);
  d.X1T.resize(n, T);
  for (int k = 0; k < T; ++k) {
    const auto& r = rows[k];
    int p = 1;
    for (int c = 0; c < m; ++c) d.U0T(c, k) = r[p++];
    for (int c = 0; c < sigma; ++c) d.W0T(c, k) = r[p++];
    for (int c = 0; c < n; ++c) d.X0T(c, k) = r[p++];
    for (int c = 0; c < n; ++c) d.X1T(c, k) = r[p++];
  }
  if (T > 0) d.t0 = rows[0][0];
  if (T > 1) d.tau = rows[1][0] - rows[0][0];
  d.J0T = build_monomial_traj(basis, d.X0T);
  return d;
}

}  // namespace ddclf
