#include <random>
#include <sstream>

#include "doctest.h"
#include "ddclf/compose.hpp"

using namespace ddclf;

namespace {

std::vector<SubsystemGains> uniform(int M, double kappa, double rho, double alpha_lo, double alpha_hi = 0) {
  return std::vector<SubsystemGains>(M, SubsystemGains{kappa, rho, alpha_lo, alpha_hi > 0 ? alpha_hi : alpha_lo});
}

double network_kappa(TopologyKind kind, int M, double kappa, double rho, double alpha_lo) {
  const auto g = uniform(M, kappa, rho, alpha_lo);
  return compose_constants(g, build_gain_matrix(g, build_topology(kind, M))).kappa;
}

IssCertificate toy_cert(double p1, double p2, double k) {
  IssCertificate c;
  c.P = Eigen::Vector2d(p1, p2).asDiagonal();
  c.Xi = c.P.inverse();
  c.K = PolyMatrix::constant(k * Eigen::MatrixXd::Identity(2, 2), 2);
  c.kappa = 1.0;
  c.rho = 0.01;
  c.alpha_lo = std::min(p1, p2);
  c.alpha_hi = std::max(p1, p2);
  return c;
}

}  // namespace

TEST_CASE("gain matrix follows the edges") {
  auto none = build_gain_matrix(uniform(2, 1, 1, 1), custom_topology(2, {}));
  CHECK(none.nonZeros() == 0);

  std::vector<SubsystemGains> g{{1, 1, 1, 1}, {1, 2, 1, 1}, {1, 3, 1, 1}};
  Eigen::MatrixXd R = build_gain_matrix(g, build_topology(TopologyKind::ring, 3));
  Eigen::Matrix3d expect;
  expect << 0, 0, 1, 2, 0, 0, 0, 3, 0;
  CHECK((R - expect).norm() == 0.0);

  auto star = build_gain_matrix(uniform(1000, 1, 0.60205, 1468.2), build_topology(TopologyKind::star, 1000));
  CHECK(star.nonZeros() == 999);
  CHECK(Eigen::MatrixXd(star.col(0)).sum() == doctest::Approx(999 * 0.60205 / 1468.2));
  CHECK(star.diagonal().cwiseAbs().sum() == 0.0);

  Eigen::MatrixXd D = build_gain_matrix(g, build_topology(TopologyKind::ring, 3), true);
  CHECK(D(0, 1) == doctest::Approx(1.0));
  CHECK(D.diagonal().norm() == 0.0);
}

TEST_CASE("reported network decay rates") {
  CHECK(network_kappa(TopologyKind::fully_connected, 1000, 0.1, 1.3957e-5, 2.6603) ==
        doctest::Approx(0.0948).epsilon(1e-3));
  CHECK(network_kappa(TopologyKind::ring, 2000, 1e-6, 1.2823e-5, 296.388) == doctest::Approx(9.5674e-7).epsilon(1e-3));
  CHECK(network_kappa(TopologyKind::binary_tree, 2047, 0.1, 0.68799, 4462.1) == doctest::Approx(0.0997).epsilon(1e-3));
  CHECK(network_kappa(TopologyKind::star, 1000, 1.0, 0.60205, 1468.2) == doctest::Approx(0.5903).epsilon(1e-3));
  CHECK(network_kappa(TopologyKind::line, 2000, 1e-4, 7.671137e-6, 32.6154) ==
        doctest::Approx(9.9765e-5).epsilon(1e-3));
}

TEST_CASE("small-gain vector and constants") {
  const auto g = uniform(2047, 0.1, 0.68799, 4462.1);
  const auto sg = small_gain_check(g, build_gain_matrix(g, build_topology(TopologyKind::binary_tree, 2047)));
  REQUIRE(sg.feasible);
  CHECK(sg.mu(0) == doctest::Approx(-0.1 + 2 * 0.68799 / 4462.1));
  CHECK(sg.mu(2046) == doctest::Approx(-0.1));

  std::vector<SubsystemGains> one{{0.3, 5.0, 2.0, 4.0}};
  auto c = compose_constants(one, build_gain_matrix(one, build_topology(TopologyKind::ring, 1)), 0.25);
  CHECK(c.kappa == doctest::Approx(0.225));
  CHECK(c.alpha_lo == 2.0);
  CHECK(c.alpha_hi == 4.0);
}

TEST_CASE("infeasible composition names the offending subsystems") {
  std::vector<SubsystemGains> g{{0.1, 1.0, 1.0, 1.0}, {0.1, 1e-3, 1.0, 1.0}, {0.1, 1e-3, 1.0, 1.0}};
  // Line 1 -> 2 -> 3: column 1 collects rho_2 / alpha_1, column 2 collects rho_3 / alpha_2.
  auto t = build_topology(TopologyKind::line, 3);
  g[1].rho = 0.5;
  try {
    compose_constants(g, build_gain_matrix(g, t));
    FAIL("expected failure");
  } catch (const CompositionError& e) {
    REQUIRE(e.offending().size() == 1);
    CHECK(e.offending()[0] == 0);
    CHECK(std::string(e.what()).find("subsystem 1") != std::string::npos);
  }
}

TEST_CASE("relabelling permutes mu and keeps the constants") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const int M = 6;
  std::vector<SubsystemGains> g(M);
  for (auto& s : g) s = {u(rng), 0.01 * u(rng), u(rng), 3.0 + u(rng)};
  std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 0}, {3, 4}, {5, 4}, {0, 5}};
  const auto base = compose_constants(g, build_gain_matrix(g, custom_topology(M, edges)));

  std::vector<int> perm{3, 5, 0, 1, 4, 2};  // old label -> new label
  std::vector<SubsystemGains> gp(M);
  for (int i = 0; i < M; ++i) gp[perm[i]] = g[i];
  std::vector<Edge> ep;
  for (const auto& e : edges) ep.push_back({perm[e.source], perm[e.target]});
  const auto moved = compose_constants(gp, build_gain_matrix(gp, custom_topology(M, ep)));
  for (int i = 0; i < M; ++i) CHECK(moved.mu(perm[i]) == doctest::Approx(base.mu(i)).epsilon(1e-14));
  CHECK(moved.kappa == doctest::Approx(base.kappa).epsilon(1e-14));
  CHECK(moved.alpha_lo == base.alpha_lo);
  CHECK(moved.alpha_hi == base.alpha_hi);

  // Dropping any edge never raises a column sum.
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto fewer = edges;
    fewer.erase(fewer.begin() + static_cast<long>(k));
    const auto sg = small_gain_check(g, build_gain_matrix(g, custom_topology(M, fewer)));
    for (int j = 0; j < M; ++j) CHECK(sg.mu(j) <= base.mu(j) + 1e-15);
  }
}

TEST_CASE("network certificate evaluation") {
  std::vector<IssCertificate> certs{toy_cert(1.0, 2.0, -1.0), toy_cert(1.0, 2.0, -1.0)};
  auto net = compose_clf(certs, build_topology(TopologyKind::ring, 2));
  const auto zero = eval_network_certificate(net, Eigen::VectorXd::Zero(4));
  CHECK(zero.V == 0.0);
  CHECK(zero.u.norm() == 0.0);

  Eigen::VectorXd x(4);
  x << 0.3, -1.2, 0, 0;
  CHECK(eval_network_certificate(net, x).V == doctest::Approx(eval_certificate(certs[0], x.head(2)).V));
  CHECK_THROWS_AS(eval_network_certificate(net, Eigen::VectorXd::Zero(3)), DimensionError);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> box(-10, 10);
  for (int k = 0; k < 1000; ++k) {
    for (int i = 0; i < 4; ++i) x(i) = box(rng);
    const double V = eval_network_certificate(net, x).V;
    CHECK(net.constants.alpha_lo * x.squaredNorm() <= V * (1 + 1e-9));
    CHECK(V <= net.constants.alpha_hi * x.squaredNorm() * (1 + 1e-9));
  }

  std::stringstream rep, csv;
  write_network_report(net, rep);
  write_subsystem_csv(net, csv);
  std::string line;
  std::getline(csv, line);
  CHECK(line == "subsystem,kappa,pi,rho,alpha_lo,alpha_hi,mu");
  CHECK(rep.str().find("rho_hat 2") != std::string::npos);

  const auto back = read_network_report(rep);
  REQUIRE(back.M() == 2);
  CHECK(back.constants.kappa == net.constants.kappa);
  CHECK(back.constants.mu(1) == net.constants.mu(1));
  CHECK(back.gains[1].alpha_hi == net.gains[1].alpha_hi);
  CHECK((Eigen::MatrixXd(back.rho_hat) - Eigen::MatrixXd(net.rho_hat)).norm() == 0.0);
  std::stringstream broken("ddclf-network 1\nM 2\nkappa x\n");
  CHECK_THROWS(read_network_report(broken));
}

TEST_CASE("required alpha gives the requested margin") {
  auto t = build_topology(TopologyKind::star, 5);
  std::vector<double> rho(5, 0.2), kappa(5, 0.1);
  const double a0 = required_alpha(rho, kappa, t, 0, 10.0);
  CHECK(a0 == doctest::Approx(10.0 * 4 * 0.2 / 0.1));
  CHECK(required_alpha(rho, kappa, t, 3, 10.0) == 0.0);
  std::vector<SubsystemGains> g(5, SubsystemGains{0.1, 0.2, 1.0, 1.0});
  g[0].alpha_lo = a0;
  const auto sg = small_gain_check(g, build_gain_matrix(g, t));
  CHECK(sg.mu(0) == doctest::Approx(-0.09));
}
