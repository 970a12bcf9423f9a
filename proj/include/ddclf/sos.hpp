// Modeling layer over the SDP solver: affine expressions in scalar decision
// variables, polynomials and polynomial matrices with such coefficients, and
// compilers for polynomial identities and SOS-matrix constraints.
#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ddclf/poly.hpp"
#include "ddclf/sdp.hpp"

namespace ddclf {

/// Raised when a product would be nonlinear in the decision variables.
class NonlinearError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// constant + sum_k coef_k * var_k, terms sorted by variable id, no zeros.
class LinExpr {
 public:
  LinExpr() = default;
  LinExpr(double c) : constant_(c) {}  // NOLINT: implicit by design
  static LinExpr variable(int id, double coef = 1.0);

  double constant() const { return constant_; }
  const std::vector<std::pair<int, double>>& terms() const { return terms_; }
  bool is_constant() const { return terms_.empty(); }
  bool is_zero() const { return terms_.empty() && constant_ == 0.0; }

  LinExpr& operator+=(const LinExpr& o);
  LinExpr& operator-=(const LinExpr& o);
  LinExpr& operator*=(double s);
  /// this += s * o without a temporary.
  void add_scaled(const LinExpr& o, double s);

  double evaluate(const std::vector<double>& values) const;

 private:
  std::vector<std::pair<int, double>> terms_;
  double constant_ = 0.0;
};

LinExpr operator+(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a, const LinExpr& b);
LinExpr operator*(LinExpr a, double s);
LinExpr operator*(double s, LinExpr a);

/// Polynomial in the state variables whose coefficients are LinExpr.
class PolyExpr {
 public:
  using Terms = std::map<Monomial, LinExpr>;

  PolyExpr() = default;
  explicit PolyExpr(int nvars) : n_(nvars) {}
  static PolyExpr from_polynomial(const Polynomial& p);
  static PolyExpr constant(int nvars, const LinExpr& c);

  int nvars() const { return n_; }
  const Terms& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  /// True when no coefficient involves a decision variable.
  bool is_numeric() const;
  int degree() const;
  LinExpr coefficient(const Monomial& m) const;

  void add_term(const Monomial& m, const LinExpr& c, double scale = 1.0);

  PolyExpr& operator+=(const PolyExpr& o);
  PolyExpr& operator-=(const PolyExpr& o);
  PolyExpr operator+(const PolyExpr& o) const;
  PolyExpr operator-(const PolyExpr& o) const;
  PolyExpr operator*(double s) const;
  PolyExpr operator*(const Polynomial& p) const;
  /// Throws NonlinearError unless one factor is numeric.
  PolyExpr operator*(const PolyExpr& o) const;

  Polynomial evaluate(const std::vector<double>& values) const;

 private:
  int n_ = 0;
  Terms terms_;
};

class PolyExprMatrix {
 public:
  PolyExprMatrix() = default;
  PolyExprMatrix(int rows, int cols, int nvars);
  static PolyExprMatrix from_polymatrix(const PolyMatrix& pm);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nvars() const { return n_; }
  PolyExpr& operator()(int r, int c) { return e_[static_cast<std::size_t>(r) * cols_ + c]; }
  const PolyExpr& operator()(int r, int c) const { return e_[static_cast<std::size_t>(r) * cols_ + c]; }

  int degree() const;
  PolyExprMatrix transpose() const;
  PolyExprMatrix operator+(const PolyExprMatrix& o) const;
  PolyExprMatrix operator-(const PolyExprMatrix& o) const;
  PolyExprMatrix operator*(double s) const;
  PolyExprMatrix operator*(const PolyExprMatrix& o) const;

  PolyMatrix evaluate(const std::vector<double>& values) const;

 private:
  int rows_ = 0, cols_ = 0, n_ = 0;
  std::vector<PolyExpr> e_;
};

PolyExprMatrix operator*(const Eigen::MatrixXd& lhs, const PolyExprMatrix& rhs);
PolyExprMatrix operator*(const PolyExprMatrix& lhs, const Eigen::MatrixXd& rhs);
PolyExprMatrix operator*(const PolyMatrix& lhs, const PolyExprMatrix& rhs);

/// A collection of scalar decision variables (free scalars and entries of
/// PSD matrix blocks) and linear equalities among them.
class Program {
 public:
  int num_variables() const { return static_cast<int>(vars_.size()); }
  int num_equalities() const { return static_cast<int>(equalities_.size()); }

  LinExpr new_free();
  /// New PSD block of the given size; returns its handle.
  int new_psd(int size);
  int psd_size(int handle) const { return psd_[handle].size; }
  /// Entry (i, j) of a PSD block, symmetric in (i, j).
  LinExpr psd_entry(int handle, int i, int j) const;

  /// Adds the constraint e == 0. Trivial 0 == 0 constraints are dropped.
  void add_equality(const LinExpr& e);

  /// The SDP actually solved: free variables are eliminated by projecting
  /// the equalities onto the left null space of their coefficient columns
  /// and recovered afterwards as the least-norm solution.
  SdpProblem to_sdp() const;

  struct Result {
    SdpSolution sdp;
    std::vector<double> values;  // per decision variable

    double value(const LinExpr& e) const { return e.evaluate(values); }
    Eigen::MatrixXd value(const std::vector<std::vector<LinExpr>>& m) const;
    PolyMatrix value(const PolyExprMatrix& m) const { return m.evaluate(values); }
  };
  Result solve(const SdpOptions& options = {}) const;
  /// Block-matrix value of a PSD handle in a solved result.
  Eigen::MatrixXd psd_value(const Result& r, int handle) const;

 private:
  struct VarRef {
    bool free = false;
    int index = 0;  // free: free-variable index; psd: block handle
    int i = 0, j = 0;
  };
  struct PsdBlock {
    int size = 0;
    std::vector<int> ids;  // packed upper triangle, column-wise
  };
  struct Reduced {
    SdpProblem problem;
    Eigen::MatrixXd Af, As;  // row-scaled equality coefficients (free / PSD)
    Eigen::VectorXd b;
    std::vector<int> column;  // var id -> column in Af or As
  };
  Reduced reduce() const;

  std::vector<VarRef> vars_;
  std::vector<PsdBlock> psd_;
  int free_count_ = 0;
  std::vector<LinExpr> equalities_;
};

/// Adds one equality per (row, col, monomial) coefficient of lhs - rhs;
/// returns the number added.
int compile_poly_equality(Program& prog, const PolyExprMatrix& lhs, const PolyExprMatrix& rhs);

struct SosOptions {
  /// Gram monomials z; default: all monomials of degree 0..ceil(deg S / 2)
  /// in the variables that occur in S.
  std::optional<std::vector<Monomial>> gram_basis;
  /// Per-row Newton-polytope reduction of the Gram basis.
  bool prune = true;
};

struct SosConstraint {
  int block = -1;  // PSD handle of Q, -1 when every row pruned empty
  std::vector<std::pair<int, Monomial>> index;  // (row l, z_a) per Q position
  int equalities = 0;
};

/// Constrains the symmetric part of S(x) to equal (z (x) I)^T Q (z (x) I)
/// with Q PSD, where row l of S only pairs with the Gram monomials kept for
/// it. Throws std::invalid_argument naming a monomial that no product of
/// Gram monomials can produce.
SosConstraint compile_sos_matrix(Program& prog, const PolyExprMatrix& S, const SosOptions& options = {});

/// Reconstructs (z (x) I)^T Q (z (x) I) at x for a solved constraint.
Eigen::MatrixXd gram_form(const SosConstraint& c, const Eigen::MatrixXd& Q, int q,
                          const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace ddclf
