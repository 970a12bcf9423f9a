#include <sstream>

#include "doctest.h"
#include "ddclf/sdp.hpp"

using namespace ddclf;

namespace {

// minimize c * tr(X) subject to X - S = I, X, S PSD 2x2.
SdpProblem trace_above_identity(double c) {
  SdpProblem p;
  const int X = p.add_block(BlockKind::psd, 2);
  const int S = p.add_block(BlockKind::psd, 2);
  p.objective = {{X, 0, 0, c}, {X, 1, 1, c}};
  for (int i = 0; i < 2; ++i) {
    for (int j = i; j < 2; ++j) {
      p.add_constraint({{X, i, j, 1.0}, {S, i, j, -1.0}}, i == j ? 1.0 : 0.0);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("minimize trace above the identity") {
  auto sol = solve_sdp(trace_above_identity(1.0));
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.primal_objective == doctest::Approx(2.0).epsilon(1e-8));
  CHECK((sol.X[0] - Eigen::Matrix2d::Identity()).norm() < 1e-7);
  CHECK(sol.primal_residual <= 1e-8);
  CHECK(std::abs(sol.primal_objective - sol.dual_objective) <= 10 * 1e-8 * (1 + std::abs(sol.primal_objective)));
}

TEST_CASE("objective scaling leaves the optimizer unchanged") {
  auto a = solve_sdp(trace_above_identity(1.0));
  auto b = solve_sdp(trace_above_identity(250.0));
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK((a.X[0] - b.X[0]).norm() < 1e-6);
}

TEST_CASE("scalar Lyapunov feasibility") {
  // p - s1 = 1, -2p + s2 = -1 with p, s1, s2 >= 0.
  SdpProblem p;
  const int d = p.add_block(BlockKind::diagonal, 3);
  p.add_constraint({{d, 0, 0, 1.0}, {d, 1, 1, -1.0}}, 1.0);
  p.add_constraint({{d, 0, 0, -2.0}, {d, 2, 2, 1.0}}, -1.0);
  auto sol = solve_sdp(p);
  REQUIRE(sol.status == SdpStatus::feasible);
  const double pv = sol.X[0](0, 0);
  CHECK(pv >= 1.0 - 1e-8);
  CHECK(-2.0 * pv <= -1.0 + 1e-8);
  CHECK(sol.X[0].minCoeff() >= 0.0);
}

TEST_CASE("trace bound contradiction is infeasible") {
  SdpProblem p = trace_above_identity(0.0);
  p.objective.clear();
  p.add_constraint({{0, 0, 0, 1.0}, {0, 1, 1, 1.0}}, 1.0);
  auto sol = solve_sdp(p);
  CHECK(sol.status == SdpStatus::infeasible);
}

TEST_CASE("inconsistent duplicated equalities are infeasible") {
  SdpProblem p;
  const int d = p.add_block(BlockKind::diagonal, 2);
  p.add_constraint({{d, 0, 0, 1.0}, {d, 1, 1, 1.0}}, 1.0);
  p.add_constraint({{d, 0, 0, 2.0}, {d, 1, 1, 2.0}}, 3.0);
  auto sol = solve_sdp(p);
  CHECK(sol.status == SdpStatus::infeasible);
}

TEST_CASE("consistent duplicated equalities are removed") {
  SdpProblem p;
  const int X = p.add_block(BlockKind::psd, 2);
  p.objective = {{X, 0, 0, 1.0}, {X, 1, 1, 2.0}};
  p.add_constraint({{X, 0, 0, 1.0}, {X, 1, 1, 1.0}}, 1.0);
  p.add_constraint({{X, 0, 0, 3.0}, {X, 1, 1, 3.0}}, 3.0);
  p.add_constraint({}, 0.0);
  auto sol = solve_sdp(p);
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.removed_constraints == 2);
  CHECK(sol.primal_objective == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.X[0](0, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("max-eigenvalue SDP matches the eigensolver") {
  // minimize t subject to t I - A = S, S PSD; free t split as t+ - t-.
  Eigen::Matrix3d A;
  A << 2, -1, 0.5, -1, 3, 0.2, 0.5, 0.2, 1;
  SdpProblem p;
  const int S = p.add_block(BlockKind::psd, 3);
  const int t = p.add_block(BlockKind::diagonal, 2);
  p.objective = {{t, 0, 0, 1.0}, {t, 1, 1, -1.0}};
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      std::vector<SdpEntry> e{{S, i, j, i == j ? -1.0 : -0.5}};
      if (i == j) {
        e.push_back({t, 0, 0, 1.0});
        e.push_back({t, 1, 1, -1.0});
      }
      p.add_constraint(e, A(i, j));
    }
  }
  auto sol = solve_sdp(p);
  REQUIRE(sol.status == SdpStatus::optimal);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(A);
  CHECK(sol.primal_objective == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-7));
}

TEST_CASE("validation and dump") {
  SdpProblem bad;
  CHECK_THROWS(solve_sdp(bad));
  SdpProblem p = trace_above_identity(1.0);
  p.constraints[0].push_back({0, 1, 0, 1.0});
  CHECK_THROWS(p.validate());

  std::stringstream ss;
  write_sdpa(trace_above_identity(1.0), ss);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "3 = number of constraints");
  std::getline(ss, line);
  CHECK(line == "2 = number of blocks");
  std::getline(ss, line);
  CHECK(line == "2 2");
  CHECK(to_string(SdpStatus::numerical_failure) == "numerical-failure");
}
