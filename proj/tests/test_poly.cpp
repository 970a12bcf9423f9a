#include <random>
#include <set>

#include "doctest.h"
#include "ddclf/poly.hpp"

using namespace ddclf;

namespace {

long binom(int n, int k) {
  long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

TEST_CASE("make_basis sizes and ordering") {
  auto b11 = make_basis(1, 1);
  CHECK(b11.size() == 1);
  CHECK(b11.to_string() == "x1");

  auto b22 = make_basis(2, 2);
  CHECK(b22.size() == 5);
  CHECK(b22.to_string() == "x1;x2;x1^2;x1*x2;x2^2");

  CHECK(make_basis(3, 2).size() == 9);

  for (int n = 1; n <= 4; ++n) {
    for (int d = 1; d <= 4; ++d) {
      auto b = make_basis(n, d);
      CHECK(b.size() == binom(n + d, d) - 1);
      std::set<std::vector<int>> seen;
      for (const auto& m : b.entries()) seen.insert(m.exponents());
      CHECK(static_cast<int>(seen.size()) == b.size());
    }
  }
  CHECK_THROWS(make_basis(0, 2));
  CHECK_THROWS(make_basis(2, 0));
}

TEST_CASE("basis validation") {
  CHECK_THROWS(MonomialBasis::parse("x2;x1", 2));
  CHECK_THROWS(MonomialBasis::parse("x1;x2;x1", 2));
  CHECK_THROWS(MonomialBasis::parse("x1;x2;1", 2));
  CHECK_THROWS(MonomialBasis::parse("x1", 2));
  auto b = MonomialBasis::parse("x1;x2;x1*x2", 2);
  CHECK(b.size() == 3);
  CHECK(b.max_degree() == 2);
  CHECK(MonomialBasis::parse(b.to_string(), 2).entries() == b.entries());
}

TEST_CASE("monomial text round trip") {
  auto m = Monomial::parse("x1^2*x3", 3);
  CHECK(m.exponents() == std::vector<int>{2, 0, 1});
  CHECK(m.to_string() == "x1^2*x3");
  CHECK(Monomial::parse("1", 2).degree() == 0);
  CHECK_THROWS(Monomial::parse("x4", 3));
  CHECK_THROWS(Monomial::parse("y1", 3));
}

TEST_CASE("eval_basis") {
  auto b = MonomialBasis::parse("x1;x2;x1*x2", 2);
  CHECK(eval_basis(b, Eigen::Vector2d(0, 0)).isZero());
  CHECK(eval_basis(b, Eigen::Vector2d(2, 3)) == Eigen::Vector3d(2, 3, 6));
  CHECK(eval_basis(make_basis(2, 2), Eigen::Vector2d(1, 1)) == Eigen::VectorXd::Ones(5));
  CHECK_THROWS_AS(eval_basis(b, Eigen::Vector3d(1, 2, 3)), DimensionError);
}

TEST_CASE("polynomial arithmetic stays canonical") {
  const int n = 2;
  Polynomial p = Polynomial::monomial(Monomial::variable(n, 0), 2.0);
  Polynomial q = Polynomial::monomial(Monomial::variable(n, 0), -2.0);
  CHECK((p + q).is_zero());
  Polynomial r = (p + Polynomial::constant(n, 1.0)) * (p - Polynomial::constant(n, 1.0));
  CHECK(r.terms().size() == 2);
  CHECK(r.evaluate(Eigen::Vector2d(3, 0)) == doctest::Approx(35.0));
}

TEST_CASE("transformation on the small basis") {
  auto b = MonomialBasis::parse("x1;x2;x1*x2", 2);
  PolyMatrix aleph = build_transformation(b);
  CHECK(aleph.rows() == 3);
  CHECK(aleph.cols() == 2);
  Eigen::MatrixXd expect(3, 2);
  expect << 1, 0, 0, 1, 3, 0;
  CHECK(eval_polymatrix(aleph, Eigen::Vector2d(2, 3)) == expect);
  CHECK(eval_polymatrix(aleph, Eigen::Vector2d(2, 3)) * Eigen::Vector2d(2, 3) == Eigen::Vector3d(2, 3, 6));

  PolyMatrix largest = build_transformation(b, AlephRule::largest_index);
  expect << 1, 0, 0, 1, 0, 2;
  CHECK(eval_polymatrix(largest, Eigen::Vector2d(2, 3)) == expect);
}

TEST_CASE("transformation reproduces the spacecraft basis symbolically") {
  auto b = make_basis(3, 2);
  for (AlephRule rule : {AlephRule::smallest_index, AlephRule::largest_index}) {
    PolyMatrix aleph = build_transformation(b, rule);
    // Symbolic product aleph(x) * x against the basis itself.
    PolyMatrix x(3, 1, 3);
    for (int j = 0; j < 3; ++j) x(j, 0) = Polynomial::monomial(Monomial::variable(3, j));
    PolyMatrix prod = aleph * x;
    for (int k = 0; k < b.size(); ++k) {
      CHECK(prod(k, 0) == Polynomial::monomial(b[k]));
    }
    for (int k = 0; k < b.size(); ++k) {
      int nz = 0;
      for (int j = 0; j < 3; ++j) nz += aleph(k, j).is_zero() ? 0 : 1;
      CHECK(nz == 1);
    }
    CHECK(eval_polymatrix(aleph, Eigen::Vector3d(0.3, -2, 7)).topRows(3).isIdentity());
  }
}

TEST_CASE("transformation identity holds numerically on random bases") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> box(-3.0, 3.0);
  for (int n = 1; n <= 4; ++n) {
    for (int d = 1; d <= 4; ++d) {
      auto b = make_basis(n, d);
      auto aleph = build_transformation(b);
      for (int s = 0; s < 20; ++s) {
        Eigen::VectorXd x(n);
        for (int j = 0; j < n; ++j) x[j] = box(rng);
        Eigen::VectorXd lhs = eval_polymatrix(aleph, x) * x;
        Eigen::VectorXd rhs = eval_basis(b, x);
        CHECK((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
      }
    }
  }
}

TEST_CASE("polymatrix evaluation") {
  Eigen::MatrixXd c(2, 2);
  c << 1, 2, 3, 4;
  auto pc = PolyMatrix::constant(c, 3);
  CHECK(eval_polymatrix(pc, Eigen::Vector3d(5, 6, 7)) == c);
  PolyMatrix z(2, 3, 2);
  CHECK(eval_polymatrix(z, Eigen::Vector2d(0.1, -4)).isZero());
  CHECK(z.nonzero_entries() == 0);
  CHECK_THROWS_AS(eval_polymatrix(z, Eigen::Vector3d(1, 2, 3)), DimensionError);
}

TEST_CASE("polymatrix products with constant matrices") {
  auto aleph = build_transformation(make_basis(2, 2));
  Eigen::MatrixXd L = Eigen::MatrixXd::Random(3, 5);
  Eigen::MatrixXd R = Eigen::MatrixXd::Random(2, 4);
  Eigen::Vector2d x(0.7, -1.3);
  CHECK((eval_polymatrix(L * aleph, x) - L * eval_polymatrix(aleph, x)).norm() < 1e-12);
  CHECK((eval_polymatrix(aleph * R, x) - eval_polymatrix(aleph, x) * R).norm() < 1e-12);
  CHECK((eval_polymatrix(aleph.transpose(), x) - eval_polymatrix(aleph, x).transpose()).norm() == 0.0);
}

TEST_CASE("aleph rule parsing") {
  CHECK(parse_aleph_rule("smallest") == AlephRule::smallest_index);
  CHECK(parse_aleph_rule("largest") == AlephRule::largest_index);
  CHECK(to_string(AlephRule::largest_index) == "largest");
  CHECK_THROWS(parse_aleph_rule("middle"));
}
