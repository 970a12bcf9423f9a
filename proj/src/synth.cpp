#include "ddclf/synth.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "ddclf/sos.hpp"

namespace ddclf {

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M) { return 0.5 * (M + M.transpose()); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

// Per-monomial coefficient matrices of the Gram form (z (x) I)^T Q (z (x) I).
std::map<Monomial, Eigen::MatrixXd> gram_coefficients(const SosConstraint& c, const Eigen::MatrixXd& Q, int q) {
  std::map<Monomial, Eigen::MatrixXd> out;
  const int L = static_cast<int>(c.index.size());
  for (int a = 0; a < L; ++a) {
    for (int b = 0; b < L; ++b) {
      const auto& [la, za] = c.index[a];
      const auto& [lb, zb] = c.index[b];
      auto it = out.find(za * zb);
      if (it == out.end()) it = out.emplace(za * zb, Eigen::MatrixXd::Zero(q, q)).first;
      it->second(la, lb) += Q(a, b);
    }
  }
  return out;
}

// Phi_beta (T x n) minimizing |U Phi_beta|^2 + delta |Phi_beta|^2 subject to
// J Phi_beta = R1 and Z Phi_beta + Phi_beta^T Z^T = R2.
Eigen::MatrixXd least_gain_phi(const Eigen::MatrixXd& J, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& U,
                               const Eigen::MatrixXd& R1, const Eigen::MatrixXd& R2) {
  const int N = static_cast<int>(J.rows());
  const int T = static_cast<int>(J.cols());
  const int n = static_cast<int>(Z.rows());
  const int m = static_cast<int>(U.rows());
  const int rows = N * n + n * (n + 1) / 2;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, T * n);
  Eigen::VectorXd b(rows);
  int r = 0;
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < N; ++k, ++r) {
      A.block(r, j * T, 1, T) = J.row(k);
      b(r) = R1(k, j);
    }
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i, ++r) {
      A.block(r, j * T, 1, T) += Z.row(i);
      A.block(r, i * T, 1, T) += Z.row(j);
      b(r) = R2(i, j);
    }
  }
  for (int k = 0; k < rows; ++k) {
    const double s = A.row(k).norm();
    if (s > 0) {
      A.row(k) /= s;
      b(k) /= s;
    }
  }
  // H = I_n (x) (U^T U + delta I); H^-1 through the Woodbury identity.
  const Eigen::MatrixXd UUt = U * U.transpose();
  const double delta = 1e-6 * std::max(1.0, m > 0 ? UUt.trace() / T : 1.0);
  const Eigen::LDLT<Eigen::MatrixXd> small(UUt + delta * Eigen::MatrixXd::Identity(m, m));
  Eigen::MatrixXd HinvAt(T * n, rows);
  for (int k = 0; k < rows; ++k) {
    for (int j = 0; j < n; ++j) {
      const Eigen::VectorXd v = A.row(k).segment(j * T, T).transpose();
      Eigen::VectorXd hv = v;
      if (m > 0) hv -= U.transpose() * small.solve(U * v);
      HinvAt.col(k).segment(j * T, T) = hv / delta;
    }
  }
  const Eigen::MatrixXd G = A * HinvAt;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(G);
  cod.setThreshold(1e-12);
  Eigen::VectorXd phi = HinvAt * cod.solve(b);
  for (int it = 0; it < 3; ++it) phi += HinvAt * cod.solve(b - A * phi);
  return Eigen::Map<Eigen::MatrixXd>(phi.data(), T, n);
}

}  // namespace

double adversarial_gain(const Eigen::Ref<const Eigen::MatrixXd>& D, double pi) {
  if (!(pi > 0)) throw std::invalid_argument("pi must be positive");
  if (D.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(D);
  const double s = svd.singularValues()(0);
  return s * s / pi;
}

IssCertificate synthesize_iss(const TrajectoryData& traj, const MonomialBasis& basis,
                              const Eigen::Ref<const Eigen::MatrixXd>& D, const SynthOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const int n = traj.n();
  const int T = traj.T();
  const int N = basis.size();
  if (basis.nvars() != n) throw DimensionError("synthesis basis has the wrong number of variables");
  if (traj.J0T.rows() != N || traj.J0T.cols() != T) {
    throw DimensionError("monomial trajectory does not match the synthesis basis");
  }
  if (D.rows() != n || D.cols() != traj.sigma()) {
    throw DimensionError("adversarial matrix must be " + std::to_string(n) + " x " + std::to_string(traj.sigma()));
  }
  if (!(options.pi > 0) || !(options.kappa > 0) || !(options.eps > 0)) {
    throw std::invalid_argument("kappa, pi and eps must be positive");
  }

  const RankReport rank = check_rank(traj.J0T, options.rank_rtol);
  if (!rank.ok) {
    std::string why = T <= N ? "T = " + std::to_string(T) + " must exceed N = " + std::to_string(N)
                             : "condition number " + fmt(rank.condition);
    throw SynthesisError(SynthesisError::Kind::rank_gate,
                         "monomial trajectory J0T fails the rank gate (" + why +
                             "); collect a longer or richer trajectory");
  }

  const int phi_degree = options.phi_degree >= 0 ? options.phi_degree : std::max(0, basis.max_degree() - 1);
  const auto phi_monos = monomials_up_to(n, 0, phi_degree);
  const PolyMatrix aleph = build_transformation(basis, options.aleph_rule);
  const Eigen::MatrixXd Z = traj.X1T - D * traj.W0T;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

  Program prog;
  // phi_vars[b](t, j) is the coefficient of phi_monos[b] in Phi(t, j).
  std::vector<std::vector<LinExpr>> phi_vars(phi_monos.size(), std::vector<LinExpr>(static_cast<std::size_t>(T) * n));
  PolyExprMatrix Phi(T, n, n);
  for (std::size_t b = 0; b < phi_monos.size(); ++b) {
    for (int j = 0; j < n; ++j) {
      for (int t = 0; t < T; ++t) {
        LinExpr v = prog.new_free();
        phi_vars[b][static_cast<std::size_t>(j) * T + t] = v;
        Phi(t, j).add_term(phi_monos[b], v);
      }
    }
  }
  const int free_count = prog.num_variables();
  const int xi_block = prog.new_psd(n);
  PolyExprMatrix Xi(n, n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Xi(i, j) = PolyExpr::constant(n, prog.psd_entry(xi_block, i, j) + (i == j ? options.eps : 0.0));
    }
  }

  compile_poly_equality(prog, traj.J0T * Phi, aleph * Xi);

  const PolyExprMatrix ZPhi = Z * Phi;
  PolyExprMatrix S = (ZPhi + ZPhi.transpose() + PolyExprMatrix::from_polymatrix(PolyMatrix::constant(options.pi * I, n)) +
                      Xi * options.kappa) *
                     -1.0;
  const SosConstraint sos = compile_sos_matrix(prog, S);

  int psd_order = n + static_cast<int>(sos.index.size());
  if (options.min_alpha > 0) {
    if (options.min_alpha * options.eps >= 1.0) {
      throw std::invalid_argument("min_alpha must stay below 1/eps");
    }
    const int y = prog.new_psd(n);
    psd_order += n;
    const double cap = 1.0 / options.min_alpha;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        prog.add_equality(prog.psd_entry(y, i, j) + prog.psd_entry(xi_block, i, j) +
                          (i == j ? options.eps - cap : 0.0));
      }
    }
  }

  const Program::Result res = prog.solve(options.sdp);
  if (res.sdp.status == SdpStatus::infeasible) {
    throw SynthesisError(SynthesisError::Kind::infeasible,
                         "SOS program is infeasible for kappa = " + fmt(options.kappa) + ", pi = " + fmt(options.pi) +
                             (options.min_alpha > 0 ? ", min_alpha = " + fmt(options.min_alpha) : std::string()) +
                             " (T = " + std::to_string(T) +
                             "); try a longer trajectory (larger T), richer excitation, or smaller kappa");
  }
  if (!res.sdp.ok()) {
    throw SynthesisError(SynthesisError::Kind::numerical,
                         "SDP solver stopped with status " + to_string(res.sdp.status) + " after " +
                             std::to_string(res.sdp.iterations) + " iterations (primal residual " +
                             fmt(res.sdp.primal_residual) + ", dual residual " + fmt(res.sdp.dual_residual) + ")");
  }

  IssCertificate cert;
  cert.Xi = symmetrize(prog.psd_value(res, xi_block)) + options.eps * I;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cert.Xi);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(options.eps);
  cert.P = symmetrize(es.eigenvectors() * lam.cwiseInverse().asDiagonal() * es.eigenvectors().transpose());

  std::vector<Eigen::MatrixXd> phi_val(phi_monos.size());
  for (std::size_t b = 0; b < phi_monos.size(); ++b) {
    phi_val[b].resize(T, n);
    for (int j = 0; j < n; ++j) {
      for (int t = 0; t < T; ++t) phi_val[b](t, j) = res.value(phi_vars[b][static_cast<std::size_t>(j) * T + t]);
    }
  }

  if (options.polish) {
    std::map<Monomial, Eigen::MatrixXd> gram;
    if (sos.block >= 0) gram = gram_coefficients(sos, prog.psd_value(res, sos.block), n);
    for (std::size_t b = 0; b < phi_monos.size(); ++b) {
      const Eigen::MatrixXd R1 = aleph.coefficient(phi_monos[b]) * cert.Xi;
      Eigen::MatrixXd R2 = Eigen::MatrixXd::Zero(n, n);
      auto it = gram.find(phi_monos[b]);
      if (it != gram.end()) R2 = -symmetrize(it->second);
      if (phi_monos[b].degree() == 0) R2 -= options.pi * I + options.kappa * cert.Xi;
      const Eigen::MatrixXd cand = least_gain_phi(traj.J0T, Z, traj.U0T, R1, R2);
      const double before = (traj.J0T * phi_val[b] - R1).norm();
      const double after = (traj.J0T * cand - R1).norm();
      const double sym_after = (Z * cand + (Z * cand).transpose() - R2).norm();
      const double scale = 1.0 + R1.norm() + R2.norm();
      if (after <= std::max(before, 1e-9 * scale) && sym_after <= 1e-7 * scale) phi_val[b] = cand;
    }
  }

  cert.Phi = PolyMatrix(T, n, n);
  for (std::size_t b = 0; b < phi_monos.size(); ++b) {
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < n; ++j) cert.Phi(t, j).add_term(phi_monos[b], phi_val[b](t, j));
    }
  }
  cert.K = (traj.U0T * cert.Phi) * cert.P;
  cert.D = D;
  cert.basis = basis;
  cert.aleph_rule = options.aleph_rule;
  cert.kappa = options.kappa;
  cert.pi = options.pi;
  cert.rho = adversarial_gain(D, options.pi);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ps(cert.P);
  cert.alpha_lo = ps.eigenvalues().minCoeff();
  cert.alpha_hi = ps.eigenvalues().maxCoeff();
  cert.data_ref = traj.id;
  cert.stats.constraints = prog.num_equalities();
  cert.stats.free_variables = free_count;
  cert.stats.psd_order = psd_order;
  cert.stats.sdp_iterations = res.sdp.iterations;
  cert.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return cert;
}

IssCertificate synthesize_iss_search(const TrajectoryData& traj, const MonomialBasis& basis,
                                     const Eigen::Ref<const Eigen::MatrixXd>& D, SynthOptions options,
                                     const SearchOptions& search) {
  std::vector<double> pis = search.pis;
  if (pis.empty()) pis.push_back(options.pi);
  const double kappa0 = options.kappa;
  std::string last;
  for (double pi : pis) {
    options.pi = pi;
    options.kappa = kappa0;
    for (int h = 0; h <= search.kappa_halvings; ++h, options.kappa *= 0.5) {
      try {
        return synthesize_iss(traj, basis, D, options);
      } catch (const SynthesisError& e) {
        if (e.kind() == SynthesisError::Kind::rank_gate) throw;
        last = e.what();
      }
    }
  }
  throw SynthesisError(SynthesisError::Kind::infeasible, "no (pi, kappa) candidate succeeded; last: " + last);
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0) || !(hi >= lo) || count < 1) throw std::invalid_argument("log_grid: need 0 < lo <= hi, count >= 1");
  std::vector<double> out;
  if (count == 1) return {lo};
  for (int k = 0; k < count; ++k) {
    out.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * k / (count - 1)));
  }
  return out;
}

CertificateValue eval_certificate(const IssCertificate& cert, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != cert.n()) throw DimensionError("eval_certificate: state has the wrong length");
  CertificateValue v;
  v.V = x.dot(cert.P * x);
  v.u = eval_polymatrix(cert.K, x) * x;
  return v;
}

double lemma1_residual(const IssCertificate& cert, const TrajectoryData& traj, const Subsystem& sub,
                       const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  const Eigen::MatrixXd Z = traj.X1T - cert.D * traj.W0T;
  double worst = 0.0;
  for (int k = 0; k < samples.cols(); ++k) {
    const Eigen::VectorXd x = samples.col(k);
    const Eigen::VectorXd u = eval_polymatrix(cert.K, x) * x;
    const Eigen::VectorXd lhs = Z * (eval_polymatrix(cert.Phi, x) * (cert.P * x));
    const Eigen::VectorXd rhs = PlantOracle::drift(sub, x, u);
    worst = std::max(worst, (lhs - rhs).norm() / (1.0 + x.norm()));
  }
  return worst;
}

namespace {

void write_matrix(std::ostream& os, const char* name, const Eigen::MatrixXd& M) {
  os << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
  for (int i = 0; i < M.rows(); ++i) {
    for (int j = 0; j < M.cols(); ++j) os << (j ? " " : "") << M(i, j);
    os << '\n';
  }
}

void write_polymatrix(std::ostream& os, const char* name, const PolyMatrix& pm) {
  std::size_t terms = 0;
  for (int i = 0; i < pm.rows(); ++i) {
    for (int j = 0; j < pm.cols(); ++j) terms += pm(i, j).terms().size();
  }
  os << name << ' ' << pm.rows() << ' ' << pm.cols() << ' ' << terms << '\n';
  for (int i = 0; i < pm.rows(); ++i) {
    for (int j = 0; j < pm.cols(); ++j) {
      for (const auto& [m, c] : pm(i, j).terms()) os << i << ' ' << j << ' ' << m.to_string() << ' ' << c << '\n';
    }
  }
}

void expect(std::istream& is, const std::string& word) {
  std::string tok;
  if (!(is >> tok) || tok != word) {
    throw std::runtime_error("certificate: expected '" + word + "', got '" + tok + "'");
  }
}

Eigen::MatrixXd read_matrix(std::istream& is, const std::string& name) {
  expect(is, name);
  int r = 0, c = 0;
  if (!(is >> r >> c) || r < 0 || c < 0) throw std::runtime_error("certificate: bad shape for " + name);
  Eigen::MatrixXd M(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      if (!(is >> M(i, j))) throw std::runtime_error("certificate: truncated matrix " + name);
    }
  }
  return M;
}

PolyMatrix read_polymatrix(std::istream& is, const std::string& name, int nvars) {
  expect(is, name);
  int r = 0, c = 0;
  std::size_t count = 0;
  if (!(is >> r >> c >> count)) throw std::runtime_error("certificate: bad header for " + name);
  PolyMatrix pm(r, c, nvars);
  for (std::size_t k = 0; k < count; ++k) {
    int i = 0, j = 0;
    std::string mono;
    double v = 0;
    if (!(is >> i >> j >> mono >> v) || i < 0 || i >= r || j < 0 || j >= c) {
      throw std::runtime_error("certificate: bad entry in " + name);
    }
    pm(i, j).add_term(Monomial::parse(mono, nvars), v);
  }
  return pm;
}

double read_scalar(std::istream& is, const std::string& name) {
  expect(is, name);
  double v = 0;
  if (!(is >> v)) throw std::runtime_error("certificate: bad value for " + name);
  return v;
}

}  // namespace

void write_certificate(const IssCertificate& cert, std::ostream& os) {
  const auto old = os.precision(17);
  os << "ddclf-certificate 1\n";
  os << "data_ref " << (cert.data_ref.empty() ? "-" : cert.data_ref) << '\n';
  os << "n " << cert.n() << '\n';
  os << "basis " << cert.basis.to_string() << '\n';
  os << "aleph " << to_string(cert.aleph_rule) << '\n';
  os << "kappa " << cert.kappa << '\n';
  os << "pi " << cert.pi << '\n';
  os << "rho " << cert.rho << '\n';
  os << "alpha_lo " << cert.alpha_lo << '\n';
  os << "alpha_hi " << cert.alpha_hi << '\n';
  write_matrix(os, "P", cert.P);
  write_matrix(os, "Xi", cert.Xi);
  write_matrix(os, "D", cert.D);
  write_polymatrix(os, "Phi", cert.Phi);
  write_polymatrix(os, "K", cert.K);
  os << "end\n";
  os.precision(old);
}

IssCertificate read_certificate(std::istream& is) {
  expect(is, "ddclf-certificate");
  int version = 0;
  if (!(is >> version) || version != 1) throw std::runtime_error("certificate: unsupported version");
  IssCertificate cert;
  expect(is, "data_ref");
  is >> cert.data_ref;
  if (cert.data_ref == "-") cert.data_ref.clear();
  expect(is, "n");
  int n = 0;
  if (!(is >> n) || n < 1) throw std::runtime_error("certificate: bad state dimension");
  expect(is, "basis");
  std::string basis;
  is >> basis;
  cert.basis = MonomialBasis::parse(basis, n);
  expect(is, "aleph");
  std::string rule;
  is >> rule;
  cert.aleph_rule = parse_aleph_rule(rule);
  cert.kappa = read_scalar(is, "kappa");
  cert.pi = read_scalar(is, "pi");
  cert.rho = read_scalar(is, "rho");
  cert.alpha_lo = read_scalar(is, "alpha_lo");
  cert.alpha_hi = read_scalar(is, "alpha_hi");
  cert.P = read_matrix(is, "P");
  cert.Xi = read_matrix(is, "Xi");
  cert.D = read_matrix(is, "D");
  cert.Phi = read_polymatrix(is, "Phi", n);
  cert.K = read_polymatrix(is, "K", n);
  expect(is, "end");
  if (cert.P.rows() != n || cert.P.cols() != n || cert.Xi.rows() != n || cert.D.rows() != n || cert.Phi.cols() != n ||
      cert.K.cols() != n) {
    throw std::runtime_error("certificate: inconsistent dimensions");
  }
  return cert;
}

}  // namespace ddclf
