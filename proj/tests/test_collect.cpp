#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ddclf/collect.hpp"

using namespace ddclf;

namespace {

Subsystem scalar_decay() {
  Eigen::MatrixXd A(1, 1), B(1, 1);
  A << -1;
  B << 1;
  return Subsystem(make_basis(1, 1), A, B);
}

TrajectoryData collect(const Subsystem& s, const MonomialBasis& basis, const Eigen::VectorXd& x0, int T,
                       double tau, int substeps, DerivativeMode mode = DerivativeMode::exact,
                       std::uint64_t seed = 5, double amp = 1.0) {
  Eigen::MatrixXd u = generate_excitation(ExcitationKind::uniform_random, seed, s.m(), T, amp);
  Eigen::MatrixXd w = s.sigma() ? generate_excitation(ExcitationKind::uniform_random, seed + 1, s.sigma(), T, amp)
                                : Eigen::MatrixXd(0, T);
  CollectOptions opt;
  opt.tau = tau;
  opt.substeps = substeps;
  opt.mode = mode;
  return simulate_subsystem(s, basis, x0, u, w, opt);
}

}  // namespace

TEST_CASE("excitation is deterministic and bounded") {
  auto a = generate_excitation(ExcitationKind::uniform_random, 7, 1, 3, 1.0);
  auto b = generate_excitation(ExcitationKind::uniform_random, 7, 1, 3, 1.0);
  CHECK(a == b);
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
  CHECK_THROWS(generate_excitation(ExcitationKind::uniform_random, 7, 1, 3, 0.0));
  auto ms = generate_excitation(ExcitationKind::multisine, 3, 3, 100, 2.5);
  CHECK(ms.rows() == 3);
  CHECK(ms.cols() == 100);
  CHECK(ms.cwiseAbs().maxCoeff() <= 2.5);
  CHECK(ms.cwiseAbs().maxCoeff() > 0.0);
  CHECK(parse_excitation_kind("multisine") == ExcitationKind::multisine);
  CHECK_THROWS(parse_excitation_kind("chirp"));
}

TEST_CASE("scalar decay matches the closed form") {
  Subsystem s = scalar_decay();
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(1, 3);
  CollectOptions opt;
  opt.tau = 0.1;
  opt.substeps = 10;
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  auto d = simulate_subsystem(s, s.basis(), x0, u, Eigen::MatrixXd(0, 3), opt);
  CHECK(d.X0T(0, 1) == doctest::Approx(std::exp(-0.1)).epsilon(1e-6));
  CHECK(d.X0T(0, 2) == doctest::Approx(std::exp(-0.2)).epsilon(1e-6));
  CHECK(d.X1T(0, 1) == doctest::Approx(-d.X0T(0, 1)));
}

TEST_CASE("equilibrium stays at zero") {
  auto bench = benchmark_catalog("lu", 2, "line");
  const auto& s = bench.subsystems[1];
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(1, 20);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 20);
  auto d = simulate_subsystem(s, make_basis(3, 2), Eigen::VectorXd::Zero(3), u, w, CollectOptions{});
  CHECK(d.X0T.isZero());
  CHECK(d.X1T.isZero());
  CHECK(d.J0T.isZero());
}

TEST_CASE("exact mode satisfies the data identity") {
  for (const char* name : {"spacecraft", "academic", "lu"}) {
    auto bench = benchmark_catalog(name, 2, "line");
    const auto& s = bench.subsystems[1];
    const int n = s.n();
    auto basis = make_basis(n, 2);
    Eigen::VectorXd x0 = Eigen::VectorXd::Constant(n, 0.3);
    auto d = collect(s, basis, x0, 40, 0.01, 10);
    CHECK(d.J0T.rows() == basis.size());
    for (int k = 0; k < d.T(); ++k) {
      Eigen::VectorXd f = PlantOracle::vector_field(s, d.X0T.col(k), d.U0T.col(k), d.W0T.col(k));
      CHECK((d.X1T.col(k) - f).norm() <= 1e-12 * (1.0 + f.norm()));
      CHECK(d.J0T.col(k) == eval_basis(basis, d.X0T.col(k)));
    }
    // X1 - D W0 = A_syn J0 + B U0 with A embedded into the synthesis basis.
    Eigen::MatrixXd Asyn = Eigen::MatrixXd::Zero(n, basis.size());
    for (int c = 0; c < s.basis().size(); ++c) Asyn.col(basis.find(s.basis()[c])) = PlantOracle::A(s).col(c);
    Eigen::MatrixXd lhs = d.X1T - s.adversarial_matrix() * d.W0T;
    Eigen::MatrixXd rhs = Asyn * d.J0T + PlantOracle::B(s) * d.U0T;
    CHECK((lhs - rhs).norm() <= 1e-10 * rhs.norm());
  }
}

TEST_CASE("RK4 refinement converges at fourth order") {
  auto bench = benchmark_catalog("lu", 1, "none");
  const auto& s = bench.subsystems[0];
  Eigen::VectorXd x0(3);
  x0 << 0.5, -0.4, 0.3;
  auto basis = make_basis(3, 2);
  auto ref = collect(s, basis, x0, 30, 0.02, 1000);
  auto c10 = collect(s, basis, x0, 30, 0.02, 10);
  auto c20 = collect(s, basis, x0, 30, 0.02, 20);
  const double e10 = (c10.X0T - ref.X0T).norm();
  const double e20 = (c20.X0T - ref.X0T).norm();
  CHECK(e10 > 0.0);
  CHECK(e10 / e20 >= 8.0);
}

TEST_CASE("finite differences converge at first order") {
  auto bench = benchmark_catalog("academic", 1, "none");
  const auto& s = bench.subsystems[0];
  Eigen::Vector2d x0(0.2, -0.1);
  Eigen::MatrixXd u = Eigen::MatrixXd::Constant(1, 2, 0.5);
  double prev = 0.0;
  for (double tau : {1e-2, 5e-3, 2.5e-3}) {
    CollectOptions opt;
    opt.tau = tau;
    opt.substeps = 10;
    opt.mode = DerivativeMode::finite_difference;
    auto fd = simulate_subsystem(s, s.basis(), x0, u, Eigen::MatrixXd(0, 2), opt);
    opt.mode = DerivativeMode::exact;
    auto ex = simulate_subsystem(s, s.basis(), x0, u, Eigen::MatrixXd(0, 2), opt);
    const double err = (fd.X1T.col(0) - ex.X1T.col(0)).norm();
    if (prev > 0.0) CHECK(prev / err == doctest::Approx(2.0).epsilon(0.05));
    prev = err;
  }
}

TEST_CASE("divergence names the sample") {
  Eigen::MatrixXd A(1, 2), B(1, 1);
  A << 0, 1;  // dx = x^2 blows up in finite time from x0 = 1 at t = 1
  B << 0;
  Subsystem s(make_basis(1, 2), A, B);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(1, 50);
  CollectOptions opt;
  opt.tau = 0.1;
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  try {
    simulate_subsystem(s, s.basis(), x0, u, Eigen::MatrixXd(0, 50), opt);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.sample() > 5);
    CHECK(e.sample() < 50);
    CHECK(std::string(e.what()).find(std::to_string(e.sample())) != std::string::npos);
  }
}

TEST_CASE("monomial trajectory") {
  Eigen::MatrixXd X(1, 3);
  X << 1, 2, 3;
  CHECK(build_monomial_traj(make_basis(1, 1), X) == X);
  Eigen::MatrixXd X2(2, 2);
  X2 << 1, 2, 1, 3;
  Eigen::MatrixXd J(3, 2);
  J << 1, 2, 1, 3, 1, 6;
  CHECK(build_monomial_traj(MonomialBasis::parse("x1;x2;x1*x2", 2), X2) == J);
  Eigen::MatrixXd X3 = Eigen::MatrixXd::Zero(2, 1);
  CHECK(build_monomial_traj(make_basis(2, 2), X3).isZero());
  CHECK_THROWS_AS(build_monomial_traj(make_basis(3, 1), X2), DimensionError);
}

TEST_CASE("rank gate") {
  Eigen::MatrixXd J(1, 3);
  J << 1, 2, 3;
  auto r = check_rank(J);
  CHECK(r.ok);
  CHECK(r.rank == 1);

  Eigen::MatrixXd C(2, 4);
  C << 1, 1, 1, 1, 1, 1, 1, 1;
  auto rc = check_rank(C);
  CHECK_FALSE(rc.ok);
  CHECK(rc.rank == 1);

  Eigen::MatrixXd sq = Eigen::MatrixXd::Identity(3, 3);
  CHECK_FALSE(check_rank(sq).ok);  // T must exceed N

  auto bench = benchmark_catalog("spacecraft", 1, "none");
  auto d = collect(bench.subsystems[0], make_basis(3, 2), Eigen::Vector3d(0.5, -0.2, 0.8), 100, 0.01, 10,
                   DerivativeMode::exact, 9, 100.0);
  auto rs = check_rank(d.J0T);
  CHECK(d.T() > d.J0T.rows());
  CHECK(rs.ok);
  CHECK(rs.rank == 9);
}

TEST_CASE("trajectory CSV round trip") {
  auto bench = benchmark_catalog("academic", 2, "line");
  auto basis = make_basis(2, 2);
  auto d = collect(bench.subsystems[1], basis, Eigen::Vector2d(0.1, 0.2), 12, 0.01, 10);
  std::stringstream ss;
  write_trajectory_csv(d, ss);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  CHECK(header == "t,u1,w1,w2,x1,x2,dx1,dx2");
  auto back = read_trajectory_csv(ss, basis, "copy");
  CHECK(back.U0T == d.U0T);
  CHECK(back.W0T == d.W0T);
  CHECK(back.X0T == d.X0T);
  CHECK(back.X1T == d.X1T);
  CHECK(back.J0T == d.J0T);
  CHECK(back.tau == doctest::Approx(d.tau));
}
