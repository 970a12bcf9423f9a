#include "ddclf/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <random>
#include <thread>

namespace ddclf {

namespace {

// K(x) x as sum over monomials of (coefficient matrix) * monomial(x) * x.
class ControllerEval {
 public:
  explicit ControllerEval(const NetworkCertificate& cert) {
    for (const auto& c : cert.certs) {
      Block b;
      b.n = c.n();
      b.m = c.m();
      for (const auto& mono : c.K.support()) b.terms.emplace_back(mono, c.K.coefficient(mono));
      blocks_.push_back(std::move(b));
      n_ += c.n();
      m_ += c.m();
    }
  }

  int n() const { return n_; }
  int m() const { return m_; }

  Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(m_);
    int xo = 0, uo = 0;
    for (const auto& b : blocks_) {
      const auto xi = x.segment(xo, b.n);
      for (const auto& [mono, C] : b.terms) u.segment(uo, b.m).noalias() += (mono.evaluate(xi) * C) * xi;
      xo += b.n;
      uo += b.m;
    }
    return u;
  }

 private:
  struct Block {
    int n = 0, m = 0;
    std::vector<std::pair<Monomial, Eigen::MatrixXd>> terms;
  };
  std::vector<Block> blocks_;
  int n_ = 0, m_ = 0;
};

double network_value(const NetworkCertificate& cert, const Eigen::Ref<const Eigen::VectorXd>& x) {
  double V = 0.0;
  int xo = 0;
  for (const auto& c : cert.certs) {
    const auto xi = x.segment(xo, c.n());
    V += xi.dot(c.P * xi);
    xo += c.n();
  }
  return V;
}

SimulationResult simulate(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& x0, const SimOptions& opt,
                          const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& control,
                          const std::function<double(const Eigen::VectorXd&)>& value, double kappa) {
  if (x0.size() != net.n()) throw DimensionError("simulation: x0 has the wrong length");
  if (!x0.allFinite()) throw std::invalid_argument("simulation: x0 must be finite");
  if (!(opt.horizon > 0) || !(opt.tau > 0) || opt.substeps < 1 || opt.record_stride < 1) {
    throw std::invalid_argument("simulation: horizon, tau, substeps and stride must be positive");
  }
  const long steps = std::max<long>(1, std::lround(opt.horizon / opt.tau));
  const double h = opt.tau / opt.substeps;
  const long kept = steps / opt.record_stride + 1;

  SimulationResult r;
  r.t.resize(kept);
  r.X.resize(net.n(), kept);
  r.U.resize(net.m(), kept);
  r.V.resize(kept);
  r.initial_norm = x0.norm();

  auto field = [&](const Eigen::VectorXd& x) { return network_vector_field(net, x, control(x)); };
  const double decay = std::exp(-(1.0 - opt.decay_band) * kappa * opt.tau);

  Eigen::VectorXd x = x0;
  double V = value(x);
  long rec = 0;
  auto record = [&](long k) {
    r.t(rec) = k * opt.tau;
    r.X.col(rec) = x;
    r.U.col(rec) = control(x);
    r.V(rec) = V;
    ++rec;
  };
  record(0);
  for (long k = 1; k <= steps; ++k) {
    for (int s = 0; s < opt.substeps; ++s) {
      const Eigen::VectorXd k1 = field(x);
      const Eigen::VectorXd k2 = field(x + 0.5 * h * k1);
      const Eigen::VectorXd k3 = field(x + 0.5 * h * k2);
      const Eigen::VectorXd k4 = field(x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!x.allFinite() || x.norm() > opt.divergence_bound) {
      r.diverged = true;
      break;
    }
    const double Vn = value(x);
    const double slack = opt.v_slack * (1.0 + V);
    if (Vn > V + slack) ++r.v_monotone_violations;
    if (kappa > 0 && Vn > V * decay + slack) ++r.v_decay_violations;
    V = Vn;
    if (k % opt.record_stride == 0) record(k);
  }
  r.t.conservativeResize(rec);
  r.X.conservativeResize(Eigen::NoChange, rec);
  r.U.conservativeResize(Eigen::NoChange, rec);
  r.V.conservativeResize(rec);
  r.final_norm = r.diverged ? std::numeric_limits<double>::infinity() : x.norm();
  r.converged = !r.diverged && r.final_norm <= opt.convergence_rtol * r.initial_norm;
  return r;
}

struct Tracker {
  double worst = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd at;
  void offer(double d, const Eigen::VectorXd& p) {
    if (d > worst) {
      worst = d;
      at = p;
    }
  }
};

// Runs `shard_fn(shard, rng, trackers)` over fixed shards on a worker pool and
// reduces the trackers in shard order.
SuiteReport run_shards(const std::vector<std::string>& names, const SuiteOptions& opt,
                       const std::function<void(long, std::mt19937_64&, std::vector<Tracker>&)>& sample) {
  if (opt.samples < 0 || opt.shards < 1) throw std::invalid_argument("suite: bad sample or shard count");
  const int shards = opt.shards;
  std::vector<std::vector<Tracker>> per(shards, std::vector<Tracker>(names.size()));
  std::vector<long> counts(shards, 0);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int s = next++; s < shards; s = next++) {
      std::seed_seq seq{static_cast<std::uint64_t>(opt.seed), static_cast<std::uint64_t>(s)};
      std::mt19937_64 rng(seq);
      const long lo = opt.samples * s / shards, hi = opt.samples * (s + 1) / shards;
      for (long k = lo; k < hi; ++k) sample(k, rng, per[s]);
      counts[s] = hi - lo;
    }
  };
  const int workers = std::max(1, std::min(opt.workers, shards));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SuiteReport rep;
  for (std::size_t c = 0; c < names.size(); ++c) {
    Tracker total;
    long n = 0;
    for (int s = 0; s < shards; ++s) {
      if (counts[s] > 0) total.offer(per[s][c].worst, per[s][c].at);
      n += counts[s];
    }
    ConditionReport cr;
    cr.name = names[c];
    cr.max_defect = n > 0 ? total.worst : 0.0;
    cr.argmax = total.at;
    cr.samples = n;
    rep.conditions.push_back(std::move(cr));
  }
  return rep;
}

double max_eig(const Eigen::MatrixXd& S) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

}  // namespace

SimulationResult simulate_closed_loop(const Network& net, const NetworkCertificate& cert,
                                      const Eigen::Ref<const Eigen::VectorXd>& x0, const SimOptions& options) {
  const ControllerEval ctrl(cert);
  if (ctrl.n() != net.n() || ctrl.m() != net.m()) throw DimensionError("certificate does not match the network");
  return simulate(
      net, x0, options, [&](const Eigen::VectorXd& x) { return ctrl(x); },
      [&](const Eigen::VectorXd& x) { return network_value(cert, x); }, cert.kappa());
}

SimulationResult simulate_open_loop(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& x0,
                                    const SimOptions& options, const NetworkCertificate* cert) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(net.m());
  return simulate(
      net, x0, options, [&](const Eigen::VectorXd&) { return zero; },
      [&](const Eigen::VectorXd& x) { return cert ? network_value(*cert, x) : x.squaredNorm(); }, 0.0);
}

void write_simulation_csv(const SimulationResult& sim, std::ostream& os) {
  const auto old = os.precision(17);
  os << 't';
  for (int i = 0; i < sim.X.rows(); ++i) os << ",x" << i + 1;
  for (int i = 0; i < sim.U.rows(); ++i) os << ",u" << i + 1;
  os << ",V\n";
  for (int k = 0; k < sim.t.size(); ++k) {
    os << sim.t(k);
    for (int i = 0; i < sim.X.rows(); ++i) os << ',' << sim.X(i, k);
    for (int i = 0; i < sim.U.rows(); ++i) os << ',' << sim.U(i, k);
    os << ',' << sim.V(k) << '\n';
  }
  os.precision(old);
}

double SuiteReport::worst() const {
  double w = -std::numeric_limits<double>::infinity();
  for (const auto& c : conditions) w = std::max(w, c.max_defect);
  return conditions.empty() ? 0.0 : w;
}

SuiteReport run_inequality_suite(const IssCertificate& cert, const TrajectoryData& traj, const Subsystem& sub,
                                 const SuiteOptions& options) {
  const int n = cert.n();
  const int sigma = static_cast<int>(cert.D.cols());
  if (sub.n() != n || traj.n() != n) throw DimensionError("suite: certificate, data and subsystem disagree");
  const Eigen::MatrixXd Z = traj.X1T - cert.D * traj.W0T;
  const PolyMatrix aleph = build_transformation(cert.basis, cert.aleph_rule);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const double xi_norm = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cert.Xi).eigenvalues().cwiseAbs().maxCoeff();
  const double wb = options.w_box < 0 ? options.box : options.w_box;

  return run_shards({"(9)", "(10)", "con1", "con2"}, options,
                    [&](long, std::mt19937_64& rng, std::vector<Tracker>& tr) {
                      std::uniform_real_distribution<double> ux(-options.box, options.box), uw(-wb, wb);
                      Eigen::VectorXd x(n), w(sigma);
                      for (int i = 0; i < n; ++i) x(i) = ux(rng);
                      for (int i = 0; i < sigma; ++i) w(i) = uw(rng);

                      const double V = x.dot(cert.P * x);
                      const double x2 = x.squaredNorm();
                      tr[0].offer(std::max(cert.alpha_lo * x2 - V, V - cert.alpha_hi * x2) / (1.0 + V), x);

                      const Eigen::VectorXd u = eval_polymatrix(cert.K, x) * x;
                      Eigen::VectorXd f = PlantOracle::drift(sub, x, u);
                      if (sigma > 0) f += cert.D * w;
                      const double LV = 2.0 * x.dot(cert.P * f);
                      const double rw = cert.rho * w.squaredNorm();
                      Eigen::VectorXd xw(n + sigma);
                      xw << x, w;
                      tr[1].offer((LV + cert.kappa * V - rw) / (1.0 + std::abs(LV) + cert.kappa * V + rw), xw);

                      const Eigen::MatrixXd Ph = eval_polymatrix(cert.Phi, x);
                      const Eigen::MatrixXd AX = eval_polymatrix(aleph, x) * cert.Xi;
                      tr[2].offer((traj.J0T * Ph - AX).cwiseAbs().maxCoeff() / (1.0 + AX.cwiseAbs().maxCoeff()), x);

                      const Eigen::MatrixXd ZP = Z * Ph;
                      const Eigen::MatrixXd C = ZP + ZP.transpose() + cert.pi * I;
                      const double cn = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(C, Eigen::EigenvaluesOnly)
                                            .eigenvalues()
                                            .cwiseAbs()
                                            .maxCoeff();
                      tr[3].offer(max_eig(C + cert.kappa * cert.Xi) / (1.0 + cn + cert.kappa * xi_norm), x);
                    });
}

SuiteReport run_inequality_suite(const NetworkCertificate& cert, const Network& net, const SuiteOptions& options) {
  const ControllerEval ctrl(cert);
  if (ctrl.n() != net.n() || ctrl.m() != net.m()) throw DimensionError("certificate does not match the network");
  const auto& c = cert.constants;
  return run_shards({"(5)", "(6)"}, options, [&](long, std::mt19937_64& rng, std::vector<Tracker>& tr) {
    std::uniform_real_distribution<double> ux(-options.box, options.box);
    Eigen::VectorXd x(net.n());
    for (int i = 0; i < x.size(); ++i) x(i) = ux(rng);
    const double V = network_value(cert, x);
    const double x2 = x.squaredNorm();
    tr[0].offer(std::max(c.alpha_lo * x2 - V, V - c.alpha_hi * x2) / (1.0 + V), x);

    const Eigen::VectorXd f = network_vector_field(net, x, ctrl(x));
    double LV = 0.0;
    int xo = 0;
    for (const auto& ci : cert.certs) {
      LV += 2.0 * x.segment(xo, ci.n()).dot(ci.P * f.segment(xo, ci.n()));
      xo += ci.n();
    }
    tr[1].offer((LV + c.kappa * V) / (1.0 + std::abs(LV) + c.kappa * V), x);
  });
}

void write_suite_report(const SuiteReport& report, std::ostream& os) {
  const auto old = os.precision(6);
  os << "condition max_defect samples argmax\n";
  for (const auto& c : report.conditions) {
    os << c.name << ' ' << c.max_defect << ' ' << c.samples << " [";
    for (int i = 0; i < c.argmax.size(); ++i) os << (i ? " " : "") << c.argmax(i);
    os << "]\n";
  }
  os.precision(old);
}

SuiteReport read_suite_report(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "condition max_defect samples argmax") {
    throw std::runtime_error("suite report: missing header");
  }
  SuiteReport r;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto open = line.find('[');
    const auto close = line.rfind(']');
    if (open == std::string::npos || close == std::string::npos || close < open) {
      throw std::runtime_error("suite report: malformed line '" + line + "'");
    }
    std::istringstream head(line.substr(0, open));
    ConditionReport c;
    if (!(head >> c.name >> c.max_defect >> c.samples)) throw std::runtime_error("suite report: malformed line '" + line + "'");
    std::istringstream body(line.substr(open + 1, close - open - 1));
    std::vector<double> v;
    double d;
    while (body >> d) v.push_back(d);
    c.argmax = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    r.conditions.push_back(std::move(c));
  }
  return r;
}

}  // namespace ddclf
