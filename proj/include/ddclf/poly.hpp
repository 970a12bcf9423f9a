// Polynomial algebra over real coefficients: monomials, monomial bases,
// sparse polynomials and polynomial matrices.
#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddclf {

/// Thrown on mismatched dimensions anywhere in the library.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exponent multi-index x^alpha over a fixed number of variables.
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(std::vector<int> exponents);

  static Monomial constant(int nvars) { return Monomial(std::vector<int>(nvars, 0)); }
  static Monomial variable(int nvars, int index);

  int nvars() const { return static_cast<int>(exps_.size()); }
  int degree() const;
  int operator[](int j) const { return exps_[j]; }
  const std::vector<int>& exponents() const { return exps_; }

  Monomial operator*(const Monomial& other) const;
  /// Divides out x_j once; requires exponent j >= 1.
  Monomial divide_variable(int j) const;
  double evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Graded order: lower degree first, ties by descending lexicographic
  /// exponent (x1^2 before x1*x2 before x2^2).
  bool operator<(const Monomial& other) const;
  bool operator==(const Monomial& other) const { return exps_ == other.exps_; }
  bool operator!=(const Monomial& other) const { return !(*this == other); }

  /// Textual form "x1^2*x3", or "1" for the constant monomial.
  std::string to_string() const;
  static Monomial parse(const std::string& text, int nvars);

 private:
  std::vector<int> exps_;
};

/// Ordered monomial vector F(x) with F(0) = 0 whose first n entries are
/// the linear monomials x1..xn in order.
class MonomialBasis {
 public:
  MonomialBasis() = default;
  /// Validates the entries; throws std::invalid_argument on violation.
  MonomialBasis(int nvars, std::vector<Monomial> entries);

  int nvars() const { return n_; }
  int size() const { return static_cast<int>(entries_.size()); }
  int max_degree() const;
  const Monomial& operator[](int k) const { return entries_[k]; }
  const std::vector<Monomial>& entries() const { return entries_; }
  /// Index of m in the basis, or -1.
  int find(const Monomial& m) const;

  std::string to_string() const;
  static MonomialBasis parse(const std::string& text, int nvars);

 private:
  int n_ = 0;
  std::vector<Monomial> entries_;
};

/// All monomials of total degree 1..d, degree-1 monomials first; N = C(n+d,d)-1.
MonomialBasis make_basis(int n, int d);

/// Monomials of total degree lo..hi in graded order (degree 0 allowed).
std::vector<Monomial> monomials_up_to(int n, int lo, int hi);

Eigen::VectorXd eval_basis(const MonomialBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Sparse polynomial in canonical form: no stored zero coefficients.
class Polynomial {
 public:
  using Terms = std::map<Monomial, double>;

  Polynomial() = default;
  explicit Polynomial(int nvars) : n_(nvars) {}
  static Polynomial constant(int nvars, double c);
  static Polynomial monomial(const Monomial& m, double c = 1.0);

  int nvars() const { return n_; }
  bool is_zero() const { return terms_.empty(); }
  int degree() const;
  const Terms& terms() const { return terms_; }
  double coefficient(const Monomial& m) const;

  /// Adds c*m, pruning a resulting zero.
  void add_term(const Monomial& m, double c);

  Polynomial& operator+=(const Polynomial& other);
  Polynomial& operator-=(const Polynomial& other);
  Polynomial& operator*=(double s);
  Polynomial operator+(const Polynomial& other) const;
  Polynomial operator-(const Polynomial& other) const;
  Polynomial operator*(const Polynomial& other) const;
  Polynomial operator*(double s) const;
  bool operator==(const Polynomial& other) const { return n_ == other.n_ && terms_ == other.terms_; }

  double evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  std::string to_string() const;

 private:
  void check_vars(const Polynomial& other) const;

  int n_ = 0;
  Terms terms_;
};

/// Dense-shaped matrix of sparse polynomials in a common variable set.
class PolyMatrix {
 public:
  PolyMatrix() = default;
  PolyMatrix(int rows, int cols, int nvars);
  static PolyMatrix constant(const Eigen::MatrixXd& c, int nvars);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nvars() const { return n_; }

  Polynomial& operator()(int r, int c) { return entries_[static_cast<std::size_t>(r) * cols_ + c]; }
  const Polynomial& operator()(int r, int c) const {
    return entries_[static_cast<std::size_t>(r) * cols_ + c];
  }

  int degree() const;
  /// Monomials appearing anywhere in the matrix, sorted.
  std::vector<Monomial> support() const;
  /// Coefficient matrix of a single monomial.
  Eigen::MatrixXd coefficient(const Monomial& m) const;
  std::size_t nonzero_entries() const;

  PolyMatrix operator*(const PolyMatrix& other) const;
  PolyMatrix operator+(const PolyMatrix& other) const;
  PolyMatrix operator-(const PolyMatrix& other) const;
  PolyMatrix transpose() const;
  bool operator==(const PolyMatrix& other) const;

 private:
  int rows_ = 0, cols_ = 0, n_ = 0;
  std::vector<Polynomial> entries_;
};

PolyMatrix operator*(const Eigen::MatrixXd& lhs, const PolyMatrix& rhs);
PolyMatrix operator*(const PolyMatrix& lhs, const Eigen::MatrixXd& rhs);

Eigen::MatrixXd eval_polymatrix(const PolyMatrix& pm, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Which variable a monomial row of the transformation factors out.
enum class AlephRule { smallest_index, largest_index };

AlephRule parse_aleph_rule(const std::string& text);
std::string to_string(AlephRule rule);

/// State-dependent transformation aleph(x) (N x n) with aleph(x) x = F(x).
/// Each row holds a single entry: x^(alpha - e_j) in column j, where j is
/// the smallest (or largest) variable index with alpha_j >= 1.
PolyMatrix build_transformation(const MonomialBasis& basis,
                                AlephRule rule = AlephRule::smallest_index);

}  // namespace ddclf
