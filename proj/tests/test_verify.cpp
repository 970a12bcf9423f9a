#include <random>
#include <sstream>

#include "doctest.h"
#include "ddclf/verify.hpp"

using namespace ddclf;

namespace {

struct Synthesized {
  Network net;
  std::vector<TrajectoryData> data;
  NetworkCertificate cert;
};

Synthesized synthesize_all(const std::string& name, int M, const std::string& kind, int degree, int T, double tau,
                           double kappa, double pi, double amp = 100.0) {
  auto bench = benchmark_catalog(name, M, kind);
  Synthesized s;
  std::vector<IssCertificate> certs;
  for (int i = 0; i < M; ++i) {
    const Subsystem& sub = bench.subsystems[i];
    const auto basis = make_basis(sub.n(), degree);
    std::mt19937_64 rng(100 + i);
    std::uniform_real_distribution<double> box(-1, 1);
    Eigen::VectorXd x0(sub.n());
    for (int k = 0; k < sub.n(); ++k) x0(k) = box(rng);
    Eigen::MatrixXd w(sub.sigma(), T);
    for (int k = 0; k < w.size(); ++k) w.data()[k] = box(rng);
    CollectOptions co;
    co.tau = tau;
    s.data.push_back(simulate_subsystem(
        sub, basis, x0, generate_excitation(ExcitationKind::uniform_random, 200 + i, sub.m(), T, amp), w, co));
    SynthOptions opt;
    opt.kappa = kappa;
    opt.pi = pi;
    certs.push_back(synthesize_iss(s.data.back(), basis, sub.adversarial_matrix(), opt));
  }
  s.cert = compose_clf(std::move(certs), bench.topology);
  s.net = assemble_network(bench.subsystems, bench.topology);
  return s;
}

Eigen::VectorXd random_box(int n, double r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-r, r);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = box(rng);
  return x;
}

}  // namespace

TEST_CASE("closed loop from the origin stays there") {
  auto s = synthesize_all("spacecraft", 2, "ring", 2, 15, 0.01, 0.1, 0.001);
  SimOptions opt;
  opt.horizon = 1.0;
  auto r = simulate_closed_loop(s.net, s.cert, Eigen::VectorXd::Zero(6), opt);
  CHECK(r.converged);
  CHECK(r.X.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.t.size() == 101);
  auto o = simulate_open_loop(s.net, Eigen::VectorXd::Zero(6), opt);
  CHECK(o.X.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar certified system decays monotonically") {
  Eigen::MatrixXd A(1, 1), B(1, 1);
  A << 1.0;
  B << 1.0;
  Subsystem sub(make_basis(1, 1), A, B);
  const auto basis = make_basis(1, 1);
  CollectOptions co;
  auto traj = simulate_subsystem(sub, basis, Eigen::VectorXd::Constant(1, 0.5),
                                 generate_excitation(ExcitationKind::uniform_random, 3, 1, 10, 1.0),
                                 Eigen::MatrixXd(0, 10), co);
  SynthOptions opt;
  opt.kappa = 0.5;
  opt.pi = 1.0;
  opt.phi_degree = 0;
  auto cert = synthesize_iss(traj, basis, Eigen::MatrixXd(1, 0), opt);
  const double k = cert.K(0, 0).coefficient(Monomial::constant(1));
  CHECK(k < -1.0);
  auto top = custom_topology(1, {});
  auto net = compose_clf({cert}, top);
  SimOptions so;
  so.horizon = 20.0 / opt.kappa;
  auto r = simulate_closed_loop(assemble_network({sub}, top), net, Eigen::VectorXd::Constant(1, 2.0), so);
  CHECK(r.converged);
  CHECK(r.v_monotone_violations == 0);
  CHECK(r.v_decay_violations == 0);
  CHECK(r.final_norm <= 1e-3 * 2.0);
  // Closed form x(t) = x0 exp((1 + k) t) at t = 1.
  CHECK(r.X(0, 100) == doctest::Approx(2.0 * std::exp(1.0 + k)).epsilon(1e-9));
}

TEST_CASE("spacecraft ring: closed loop converges from a large box, open loop does not") {
  auto s = synthesize_all("spacecraft", 4, "ring", 2, 15, 0.01, 0.1, 0.001);
  SimOptions opt;
  opt.record_stride = 10;
  const Eigen::VectorXd x0 = random_box(12, 400.0, 5);
  auto r = simulate_closed_loop(s.net, s.cert, x0, opt);
  MESSAGE("final " << r.final_norm << " of " << r.initial_norm << " mono " << r.v_monotone_violations << " decay "
                   << r.v_decay_violations);
  CHECK(r.converged);
  CHECK(r.v_monotone_violations == 0);
  CHECK(r.v_decay_violations == 0);

  auto o = simulate_open_loop(s.net, x0, opt, &s.cert);
  CHECK_FALSE(o.converged);

  SimOptions half = opt;
  half.tau *= 0.5;
  half.record_stride *= 2;
  auto rh = simulate_closed_loop(s.net, s.cert, x0, half);
  CHECK(rh.v_monotone_violations <= r.v_monotone_violations);

  std::stringstream ss;
  write_simulation_csv(r, ss);
  std::string head;
  std::getline(ss, head);
  CHECK(head.rfind("t,x1,", 0) == 0);
  CHECK(head.substr(head.size() - 2) == ",V");
}

TEST_CASE("academic subsystem open loop grows") {
  auto bench = benchmark_catalog("academic", 1, "none");
  auto net = assemble_network(bench.subsystems, bench.topology);
  SimOptions opt;
  opt.horizon = 2.0;
  auto r = simulate_open_loop(net, Eigen::Vector2d(1.0, 0.0), opt);
  CHECK_FALSE(r.converged);
  CHECK((r.diverged || r.final_norm > 1.0));
  CHECK(r.X.col(r.X.cols() - 1).norm() > r.X.col(0).norm());
}

TEST_CASE("inequality suites") {
  auto s = synthesize_all("spacecraft", 3, "ring", 2, 15, 0.01, 0.1, 0.001);
  auto bench = benchmark_catalog("spacecraft", 3, "ring");
  SuiteOptions so;
  so.samples = 2000;
  so.box = 5.0;
  const auto rep = run_inequality_suite(s.cert.certs[0], s.data[0], bench.subsystems[0], so);
  REQUIRE(rep.conditions.size() == 4);
  for (const auto& c : rep.conditions) MESSAGE(c.name << " " << c.max_defect);
  CHECK(rep.ok(1e-6));

  so.workers = 3;
  const auto rep3 = run_inequality_suite(s.cert.certs[0], s.data[0], bench.subsystems[0], so);
  for (std::size_t c = 0; c < rep.conditions.size(); ++c) {
    CHECK(rep3.conditions[c].max_defect == rep.conditions[c].max_defect);
  }

  IssCertificate bad = s.cert.certs[0];
  bad.K = PolyMatrix::constant(10.0 * Eigen::MatrixXd::Identity(3, 3), 3) * bad.K;
  // Over-scaled cancellation of the gyroscopic terms only dominates the quadratic decay far out.
  SuiteOptions wide = so;
  wide.box = 1e4;
  const auto tampered = run_inequality_suite(bad, s.data[0], bench.subsystems[0], wide);
  MESSAGE("tampered " << tampered.conditions[1].max_defect);
  CHECK(tampered.conditions[1].max_defect > 1e-6);

  SuiteOptions point = so;
  point.box = 0.0;
  point.samples = 10;
  const auto at0 = run_inequality_suite(s.cert.certs[0], s.data[0], bench.subsystems[0], point);
  CHECK(at0.conditions[0].max_defect <= 0.0);
  CHECK(at0.conditions[1].max_defect <= 0.0);
  CHECK(at0.conditions[2].max_defect <= 1e-12);
  CHECK(at0.conditions[3].max_defect <= 0.0);

  SuiteOptions ns;
  ns.samples = 2000;
  ns.box = 400.0;
  const auto net = run_inequality_suite(s.cert, s.net, ns);
  REQUIRE(net.conditions.size() == 2);
  for (const auto& c : net.conditions) MESSAGE(c.name << " " << c.max_defect);
  CHECK(net.ok(1e-6));
  std::stringstream out;
  write_suite_report(net, out);
  CHECK(out.str().find("(6)") != std::string::npos);
  const auto back = read_suite_report(out);
  REQUIRE(back.conditions.size() == 2);
  CHECK(back.conditions[1].name == "(6)");
  CHECK(back.conditions[1].samples == net.conditions[1].samples);
  CHECK(back.conditions[1].argmax.size() == 9);
}
