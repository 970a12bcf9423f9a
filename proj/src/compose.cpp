#include "ddclf/compose.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace ddclf {

SubsystemGains gains_of(const IssCertificate& cert) {
  return {cert.kappa, cert.rho, cert.alpha_lo, cert.alpha_hi};
}

Eigen::SparseMatrix<double> build_gain_matrix(const std::vector<SubsystemGains>& gains, const Topology& topology,
                                              bool dense) {
  const int M = static_cast<int>(gains.size());
  if (M != topology.M) {
    throw DimensionError("build_gain_matrix: " + std::to_string(M) + " certificates for " +
                         std::to_string(topology.M) + " subsystems");
  }
  for (int j = 0; j < M; ++j) {
    if (!(gains[j].alpha_lo > 0)) throw std::invalid_argument("subsystem " + std::to_string(j + 1) + " has alpha_lo <= 0");
  }
  std::vector<Eigen::Triplet<double>> trip;
  if (dense) {
    trip.reserve(static_cast<std::size_t>(M) * (M > 0 ? M - 1 : 0));
    for (int j = 0; j < M; ++j) {
      for (int i = 0; i < M; ++i) {
        if (i != j) trip.emplace_back(i, j, gains[i].rho / gains[j].alpha_lo);
      }
    }
  } else {
    trip.reserve(topology.edges.size());
    for (const Edge& e : topology.edges) {
      if (e.source == e.target) continue;
      trip.emplace_back(e.target, e.source, gains[e.target].rho / gains[e.source].alpha_lo);
    }
  }
  Eigen::SparseMatrix<double> R(M, M);
  R.setFromTriplets(trip.begin(), trip.end());
  return R;
}

SmallGainResult small_gain_check(const std::vector<SubsystemGains>& gains, const Eigen::SparseMatrix<double>& rho_hat) {
  const int M = static_cast<int>(gains.size());
  if (rho_hat.rows() != M || rho_hat.cols() != M) throw DimensionError("small_gain_check: gain matrix size");
  SmallGainResult r;
  r.mu.resize(M);
  for (int j = 0; j < M; ++j) {
    double col = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(rho_hat, j); it; ++it) col += it.value();
    r.mu(j) = -gains[j].kappa + col;
    if (!(r.mu(j) < 0)) r.offending.push_back(j);
  }
  r.feasible = r.offending.empty();
  return r;
}

NetworkConstants compose_constants(const std::vector<SubsystemGains>& gains, const Eigen::SparseMatrix<double>& rho_hat,
                                   double mu_margin) {
  if (gains.empty()) throw std::invalid_argument("compose: no subsystems");
  if (!(mu_margin > 0 && mu_margin < 1)) throw std::invalid_argument("mu_margin must lie in (0, 1)");
  const SmallGainResult sg = small_gain_check(gains, rho_hat);
  if (!sg.feasible) {
    std::ostringstream os;
    os << std::setprecision(6) << "small-gain condition fails at";
    const std::size_t shown = std::min<std::size_t>(sg.offending.size(), 10);
    for (std::size_t k = 0; k < shown; ++k) {
      const int j = sg.offending[k];
      os << (k ? "," : "") << " subsystem " << j + 1 << " (mu = " << sg.mu(j) << ")";
    }
    if (shown < sg.offending.size()) os << " and " << sg.offending.size() - shown << " more";
    os << "; increase kappa_j or alpha_lo_j there, or decrease pi_i of the subsystems it feeds";
    throw CompositionError(os.str(), sg.offending);
  }
  NetworkConstants c;
  c.mu = sg.mu;
  c.mu_star = (1.0 - mu_margin) * sg.mu.maxCoeff();
  c.kappa = -c.mu_star;
  c.alpha_lo = gains[0].alpha_lo;
  c.alpha_hi = gains[0].alpha_hi;
  for (const auto& g : gains) {
    c.alpha_lo = std::min(c.alpha_lo, g.alpha_lo);
    c.alpha_hi = std::max(c.alpha_hi, g.alpha_hi);
  }
  return c;
}

NetworkCertificate compose_clf(std::vector<IssCertificate> certs, const Topology& topology,
                               const ComposeOptions& options) {
  NetworkCertificate net;
  net.gains.reserve(certs.size());
  for (const auto& c : certs) net.gains.push_back(gains_of(c));
  net.certs = std::move(certs);
  net.rho_hat = build_gain_matrix(net.gains, topology, options.dense_gains);
  net.constants = compose_constants(net.gains, net.rho_hat, options.mu_margin);
  return net;
}

CertificateValue eval_network_certificate(const NetworkCertificate& net, const Eigen::Ref<const Eigen::VectorXd>& x) {
  int n = 0, m = 0;
  for (const auto& c : net.certs) {
    n += c.n();
    m += c.m();
  }
  if (x.size() != n) {
    throw DimensionError("eval_network_certificate: state of length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(n));
  }
  CertificateValue out;
  out.u.resize(m);
  int xo = 0, uo = 0;
  for (const auto& c : net.certs) {
    const auto v = eval_certificate(c, x.segment(xo, c.n()));
    out.V += v.V;
    out.u.segment(uo, c.m()) = v.u;
    xo += c.n();
    uo += c.m();
  }
  return out;
}

void write_network_report(const NetworkCertificate& net, std::ostream& os) {
  const auto old = os.precision(17);
  const auto& c = net.constants;
  os << "ddclf-network 1\n";
  os << "M " << net.M() << '\n';
  os << "kappa " << c.kappa << '\n';
  os << "mu_star " << c.mu_star << '\n';
  os << "alpha_lo " << c.alpha_lo << '\n';
  os << "alpha_hi " << c.alpha_hi << '\n';
  os << "subsystems\n";
  for (int i = 0; i < net.M(); ++i) {
    const auto& g = net.gains[i];
    os << i + 1 << ' ' << g.kappa << ' ' << g.rho << ' ' << g.alpha_lo << ' ' << g.alpha_hi << ' ' << c.mu(i) << '\n';
  }
  os << "rho_hat " << net.rho_hat.nonZeros() << '\n';
  for (int j = 0; j < net.rho_hat.outerSize(); ++j) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(net.rho_hat, j); it; ++it) {
      os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
    }
  }
  os << "end\n";
  os.precision(old);
}

namespace {

void expect_word(std::istream& is, const std::string& word) {
  std::string got;
  if (!(is >> got) || got != word) throw std::runtime_error("network report: expected '" + word + "', got '" + got + "'");
}

template <typename T>
T read_value(std::istream& is, const std::string& what) {
  T v{};
  if (!(is >> v)) throw std::runtime_error("network report: bad " + what);
  return v;
}

}  // namespace

NetworkReport read_network_report(std::istream& is) {
  NetworkReport r;
  expect_word(is, "ddclf-network");
  if (read_value<int>(is, "version") != 1) throw std::runtime_error("network report: unsupported version");
  expect_word(is, "M");
  const int M = read_value<int>(is, "M");
  if (M < 1) throw std::runtime_error("network report: bad M");
  auto& c = r.constants;
  expect_word(is, "kappa");
  c.kappa = read_value<double>(is, "kappa");
  expect_word(is, "mu_star");
  c.mu_star = read_value<double>(is, "mu_star");
  expect_word(is, "alpha_lo");
  c.alpha_lo = read_value<double>(is, "alpha_lo");
  expect_word(is, "alpha_hi");
  c.alpha_hi = read_value<double>(is, "alpha_hi");
  expect_word(is, "subsystems");
  c.mu.resize(M);
  r.gains.resize(M);
  for (int i = 0; i < M; ++i) {
    if (read_value<int>(is, "subsystem index") != i + 1) throw std::runtime_error("network report: subsystem order");
    auto& g = r.gains[i];
    g.kappa = read_value<double>(is, "kappa");
    g.rho = read_value<double>(is, "rho");
    g.alpha_lo = read_value<double>(is, "alpha_lo");
    g.alpha_hi = read_value<double>(is, "alpha_hi");
    c.mu(i) = read_value<double>(is, "mu");
  }
  expect_word(is, "rho_hat");
  const long nnz = read_value<long>(is, "rho_hat count");
  std::vector<Eigen::Triplet<double>> trip;
  for (long k = 0; k < nnz; ++k) {
    const int i = read_value<int>(is, "row");
    const int j = read_value<int>(is, "column");
    const double v = read_value<double>(is, "value");
    if (i < 1 || i > M || j < 1 || j > M) throw std::runtime_error("network report: rho_hat index out of range");
    trip.emplace_back(i - 1, j - 1, v);
  }
  r.rho_hat.resize(M, M);
  r.rho_hat.setFromTriplets(trip.begin(), trip.end());
  expect_word(is, "end");
  return r;
}

void write_subsystem_csv(const NetworkCertificate& net, std::ostream& os) {
  const auto old = os.precision(17);
  os << "subsystem,kappa,pi,rho,alpha_lo,alpha_hi,mu\n";
  for (int i = 0; i < net.M(); ++i) {
    const auto& g = net.gains[i];
    os << i + 1 << ',' << g.kappa << ',' << net.certs[i].pi << ',' << g.rho << ',' << g.alpha_lo << ',' << g.alpha_hi
       << ',' << net.constants.mu(i) << '\n';
  }
  os.precision(old);
}

double required_alpha(const std::vector<double>& rho, const std::vector<double>& kappa, const Topology& topology, int j,
                      double factor, bool dense) {
  if (j < 0 || j >= topology.M) throw std::out_of_range("required_alpha: subsystem index");
  double sum = 0.0;
  if (dense) {
    for (int i = 0; i < topology.M; ++i) {
      if (i != j) sum += rho[i];
    }
  } else {
    for (int i : topology.targets_of(j)) {
      if (i != j) sum += rho[i];
    }
  }
  return factor * sum / kappa[j];
}

}  // namespace ddclf
