#include "ddclf/sos.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace ddclf {

namespace {

// Relative pivot threshold for the free-variable columns.
constexpr double kFreeRankTol = 1e-10;

}  // namespace

// ----------------------------------------------------------------- LinExpr

LinExpr LinExpr::variable(int id, double coef) {
  LinExpr e;
  if (coef != 0.0) e.terms_.emplace_back(id, coef);
  return e;
}

void LinExpr::add_scaled(const LinExpr& o, double s) {
  constant_ += s * o.constant_;
  if (o.terms_.empty() || s == 0.0) return;
  std::vector<std::pair<int, double>> out;
  out.reserve(terms_.size() + o.terms_.size());
  auto a = terms_.begin();
  auto b = o.terms_.begin();
  while (a != terms_.end() || b != o.terms_.end()) {
    if (b == o.terms_.end() || (a != terms_.end() && a->first < b->first)) {
      out.push_back(*a++);
    } else if (a == terms_.end() || b->first < a->first) {
      out.emplace_back(b->first, s * b->second);
      ++b;
    } else {
      const double v = a->second + s * b->second;
      if (v != 0.0) out.emplace_back(a->first, v);
      ++a;
      ++b;
    }
  }
  terms_ = std::move(out);
}

LinExpr& LinExpr::operator+=(const LinExpr& o) {
  add_scaled(o, 1.0);
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
  add_scaled(o, -1.0);
  return *this;
}

LinExpr& LinExpr::operator*=(double s) {
  constant_ *= s;
  if (s == 0.0) {
    terms_.clear();
  } else {
    for (auto& t : terms_) t.second *= s;
  }
  return *this;
}

double LinExpr::evaluate(const std::vector<double>& values) const {
  double v = constant_;
  for (const auto& [id, c] : terms_) v += c * values.at(id);
  return v;
}

LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
LinExpr operator*(LinExpr a, double s) { return a *= s; }
LinExpr operator*(double s, LinExpr a) { return a *= s; }

// ---------------------------------------------------------------- PolyExpr

PolyExpr PolyExpr::from_polynomial(const Polynomial& p) {
  PolyExpr e(p.nvars());
  for (const auto& [m, c] : p.terms()) e.terms_.emplace(m, LinExpr(c));
  return e;
}

PolyExpr PolyExpr::constant(int nvars, const LinExpr& c) {
  PolyExpr e(nvars);
  e.add_term(Monomial::constant(nvars), c);
  return e;
}

bool PolyExpr::is_numeric() const {
  for (const auto& [m, c] : terms_) {
    if (!c.is_constant()) return false;
  }
  return true;
}

int PolyExpr::degree() const { return terms_.empty() ? -1 : terms_.rbegin()->first.degree(); }

LinExpr PolyExpr::coefficient(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? LinExpr() : it->second;
}

void PolyExpr::add_term(const Monomial& m, const LinExpr& c, double scale) {
  if (m.nvars() != n_) throw DimensionError("PolyExpr: monomial variable count mismatch");
  if (c.is_zero() || scale == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(m);
  it->second.add_scaled(c, scale);
  if (it->second.is_zero()) terms_.erase(it);
}

PolyExpr& PolyExpr::operator+=(const PolyExpr& o) {
  if (o.n_ != n_) throw DimensionError("PolyExpr: variable count mismatch");
  for (const auto& [m, c] : o.terms_) add_term(m, c);
  return *this;
}

PolyExpr& PolyExpr::operator-=(const PolyExpr& o) {
  if (o.n_ != n_) throw DimensionError("PolyExpr: variable count mismatch");
  for (const auto& [m, c] : o.terms_) add_term(m, c, -1.0);
  return *this;
}

PolyExpr PolyExpr::operator+(const PolyExpr& o) const {
  PolyExpr r = *this;
  return r += o;
}

PolyExpr PolyExpr::operator-(const PolyExpr& o) const {
  PolyExpr r = *this;
  return r -= o;
}

PolyExpr PolyExpr::operator*(double s) const {
  PolyExpr r(n_);
  for (const auto& [m, c] : terms_) r.add_term(m, c, s);
  return r;
}

PolyExpr PolyExpr::operator*(const Polynomial& p) const {
  if (p.nvars() != n_) throw DimensionError("PolyExpr: variable count mismatch");
  PolyExpr r(n_);
  for (const auto& [m, c] : terms_) {
    for (const auto& [pm, pc] : p.terms()) r.add_term(m * pm, c, pc);
  }
  return r;
}

PolyExpr PolyExpr::operator*(const PolyExpr& o) const {
  if (o.n_ != n_) throw DimensionError("PolyExpr: variable count mismatch");
  const bool a_num = is_numeric(), b_num = o.is_numeric();
  if (!a_num && !b_num) throw NonlinearError("product of two expressions in the decision variables");
  const PolyExpr& expr = a_num ? o : *this;
  const PolyExpr& num = a_num ? *this : o;
  PolyExpr r(n_);
  for (const auto& [m, c] : expr.terms_) {
    for (const auto& [nm, nc] : num.terms_) r.add_term(m * nm, c, nc.constant());
  }
  return r;
}

Polynomial PolyExpr::evaluate(const std::vector<double>& values) const {
  Polynomial p(n_);
  for (const auto& [m, c] : terms_) p.add_term(m, c.evaluate(values));
  return p;
}

// ---------------------------------------------------------- PolyExprMatrix

PolyExprMatrix::PolyExprMatrix(int rows, int cols, int nvars)
    : rows_(rows), cols_(cols), n_(nvars), e_(static_cast<std::size_t>(rows) * cols, PolyExpr(nvars)) {
  if (rows < 0 || cols < 0) throw DimensionError("PolyExprMatrix: negative shape");
}

PolyExprMatrix PolyExprMatrix::from_polymatrix(const PolyMatrix& pm) {
  PolyExprMatrix r(pm.rows(), pm.cols(), pm.nvars());
  for (int i = 0; i < pm.rows(); ++i) {
    for (int j = 0; j < pm.cols(); ++j) r(i, j) = PolyExpr::from_polynomial(pm(i, j));
  }
  return r;
}

int PolyExprMatrix::degree() const {
  int d = -1;
  for (const auto& e : e_) d = std::max(d, e.degree());
  return d;
}

PolyExprMatrix PolyExprMatrix::transpose() const {
  PolyExprMatrix r(cols_, rows_, n_);
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) r(j, i) = (*this)(i, j);
  }
  return r;
}

PolyExprMatrix PolyExprMatrix::operator+(const PolyExprMatrix& o) const {
  if (o.rows_ != rows_ || o.cols_ != cols_) throw DimensionError("PolyExprMatrix: shape mismatch in +");
  PolyExprMatrix r = *this;
  for (std::size_t k = 0; k < e_.size(); ++k) r.e_[k] += o.e_[k];
  return r;
}

PolyExprMatrix PolyExprMatrix::operator-(const PolyExprMatrix& o) const {
  if (o.rows_ != rows_ || o.cols_ != cols_) throw DimensionError("PolyExprMatrix: shape mismatch in -");
  PolyExprMatrix r = *this;
  for (std::size_t k = 0; k < e_.size(); ++k) r.e_[k] -= o.e_[k];
  return r;
}

PolyExprMatrix PolyExprMatrix::operator*(double s) const {
  PolyExprMatrix r(rows_, cols_, n_);
  for (std::size_t k = 0; k < e_.size(); ++k) r.e_[k] = e_[k] * s;
  return r;
}

PolyExprMatrix PolyExprMatrix::operator*(const PolyExprMatrix& o) const {
  if (cols_ != o.rows_) throw DimensionError("PolyExprMatrix: inner dimension mismatch");
  PolyExprMatrix r(rows_, o.cols_, n_);
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < o.cols_; ++j) {
      for (int k = 0; k < cols_; ++k) {
        if ((*this)(i, k).is_zero() || o(k, j).is_zero()) continue;
        r(i, j) += (*this)(i, k) * o(k, j);
      }
    }
  }
  return r;
}

PolyMatrix PolyExprMatrix::evaluate(const std::vector<double>& values) const {
  PolyMatrix r(rows_, cols_, n_);
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) r(i, j) = (*this)(i, j).evaluate(values);
  }
  return r;
}

PolyExprMatrix operator*(const Eigen::MatrixXd& lhs, const PolyExprMatrix& rhs) {
  if (lhs.cols() != rhs.rows()) throw DimensionError("matrix * PolyExprMatrix: inner dimension mismatch");
  PolyExprMatrix r(static_cast<int>(lhs.rows()), rhs.cols(), rhs.nvars());
  for (int j = 0; j < rhs.cols(); ++j) {
    for (int k = 0; k < rhs.rows(); ++k) {
      const PolyExpr& e = rhs(k, j);
      if (e.is_zero()) continue;
      for (int i = 0; i < lhs.rows(); ++i) {
        const double a = lhs(i, k);
        if (a == 0.0) continue;
        for (const auto& [m, c] : e.terms()) r(i, j).add_term(m, c, a);
      }
    }
  }
  return r;
}

PolyExprMatrix operator*(const PolyExprMatrix& lhs, const Eigen::MatrixXd& rhs) {
  return (rhs.transpose() * lhs.transpose()).transpose();
}

PolyExprMatrix operator*(const PolyMatrix& lhs, const PolyExprMatrix& rhs) {
  if (lhs.cols() != rhs.rows()) throw DimensionError("PolyMatrix * PolyExprMatrix: inner dimension mismatch");
  if (lhs.nvars() != rhs.nvars()) throw DimensionError("PolyMatrix * PolyExprMatrix: variable count mismatch");
  PolyExprMatrix r(lhs.rows(), rhs.cols(), rhs.nvars());
  for (int i = 0; i < lhs.rows(); ++i) {
    for (int k = 0; k < lhs.cols(); ++k) {
      if (lhs(i, k).is_zero()) continue;
      for (int j = 0; j < rhs.cols(); ++j) {
        if (rhs(k, j).is_zero()) continue;
        r(i, j) += rhs(k, j) * lhs(i, k);
      }
    }
  }
  return r;
}

// ----------------------------------------------------------------- Program

LinExpr Program::new_free() {
  VarRef v;
  v.free = true;
  v.index = free_count_++;
  vars_.push_back(v);
  return LinExpr::variable(num_variables() - 1);
}

int Program::new_psd(int size) {
  if (size < 1) throw std::invalid_argument("PSD block size must be positive");
  PsdBlock blk;
  blk.size = size;
  const int handle = static_cast<int>(psd_.size());
  for (int j = 0; j < size; ++j) {
    for (int i = 0; i <= j; ++i) {
      VarRef v;
      v.index = handle;
      v.i = i;
      v.j = j;
      vars_.push_back(v);
      blk.ids.push_back(num_variables() - 1);
    }
  }
  psd_.push_back(std::move(blk));
  return handle;
}

LinExpr Program::psd_entry(int handle, int i, int j) const {
  const auto& blk = psd_.at(handle);
  if (i < 0 || j < 0 || i >= blk.size || j >= blk.size) throw std::out_of_range("PSD entry out of range");
  if (i > j) std::swap(i, j);
  return LinExpr::variable(blk.ids[j * (j + 1) / 2 + i]);
}

void Program::add_equality(const LinExpr& e) {
  if (e.is_zero()) return;
  equalities_.push_back(e);
}

Program::Reduced Program::reduce() const {
  const int E = num_equalities();
  Reduced red;
  red.column.assign(vars_.size(), -1);
  int nf = 0, ns = 0;
  for (std::size_t id = 0; id < vars_.size(); ++id) red.column[id] = vars_[id].free ? nf++ : ns++;
  red.Af = Eigen::MatrixXd::Zero(E, nf);
  red.As = Eigen::MatrixXd::Zero(E, ns);
  red.b.resize(E);
  for (int k = 0; k < E; ++k) {
    const LinExpr& eq = equalities_[k];
    for (const auto& [id, c] : eq.terms()) {
      if (vars_[id].free) red.Af(k, red.column[id]) += c;
      else red.As(k, red.column[id]) += c;
    }
    red.b(k) = -eq.constant();
    const double scale = std::sqrt(red.Af.row(k).squaredNorm() + red.As.row(k).squaredNorm());
    if (scale > 0) {
      red.Af.row(k) /= scale;
      red.As.row(k) /= scale;
      red.b(k) /= scale;
    }
  }

  // Project the equalities onto the left null space of the free columns.
  Eigen::MatrixXd Nt;
  if (nf > 0 && E > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(red.Af);
    qr.setThreshold(kFreeRankTol);
    const int r = static_cast<int>(qr.rank());
    Eigen::MatrixXd Q = qr.householderQ();
    Nt = Q.rightCols(E - r).transpose();
  } else {
    Nt = Eigen::MatrixXd::Identity(E, E);
  }
  const Eigen::MatrixXd A = Nt * red.As;
  const Eigen::VectorXd b = Nt * red.b;

  std::vector<int> psd_col_var(ns);
  for (std::size_t id = 0; id < vars_.size(); ++id) {
    if (!vars_[id].free) psd_col_var[red.column[id]] = static_cast<int>(id);
  }
  for (const auto& blk : psd_) red.problem.add_block(BlockKind::psd, blk.size);
  for (int k = 0; k < A.rows(); ++k) {
    const double cut = 1e-14 * std::max(A.row(k).cwiseAbs().maxCoeff(), std::abs(b(k)));
    std::vector<SdpEntry> entries;
    for (int c = 0; c < ns; ++c) {
      const double v = A(k, c);
      if (std::abs(v) <= cut) continue;
      const VarRef& ref = vars_[psd_col_var[c]];
      entries.push_back({ref.index, ref.i, ref.j, ref.i == ref.j ? v : 0.5 * v});
    }
    red.problem.add_constraint(std::move(entries), std::abs(b(k)) <= cut ? 0.0 : b(k));
  }
  return red;
}

SdpProblem Program::to_sdp() const { return reduce().problem; }

Program::Result Program::solve(const SdpOptions& options) const {
  Result r;
  Reduced red = reduce();
  const SdpProblem& p = red.problem;
  if (p.constraints.empty() || p.blocks.empty()) {
    // Nothing couples the matrix variables; the identity point is strictly feasible.
    r.sdp.status = SdpStatus::feasible;
    for (std::size_t k = 0; k < p.constraints.size(); ++k) {
      if (p.rhs[k] != 0.0) r.sdp.status = SdpStatus::infeasible;
    }
    if (r.sdp.status == SdpStatus::infeasible) return r;
    for (const auto& blk : p.blocks) r.sdp.X.push_back(Eigen::MatrixXd::Identity(blk.size, blk.size));
  } else {
    r.sdp = solve_sdp(p, options);
  }
  r.values.assign(vars_.size(), 0.0);
  if (r.sdp.X.size() != psd_.size()) return r;
  Eigen::VectorXd s(red.As.cols());
  for (std::size_t id = 0; id < vars_.size(); ++id) {
    const VarRef& v = vars_[id];
    if (v.free) continue;
    r.values[id] = r.sdp.X[v.index](v.i, v.j);
    s(red.column[id]) = r.values[id];
  }
  if (red.Af.cols() > 0) {
    const Eigen::VectorXd rhs = red.b - red.As * s;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(red.Af);
    cod.setThreshold(kFreeRankTol);
    const Eigen::VectorXd xf = red.Af.rows() > 0 ? Eigen::VectorXd(cod.solve(rhs))
                                                  : Eigen::VectorXd::Zero(red.Af.cols());
    for (std::size_t id = 0; id < vars_.size(); ++id) {
      if (vars_[id].free) r.values[id] = xf(red.column[id]);
    }
    const double resid = (red.Af * xf - rhs).cwiseAbs().maxCoeff();
    r.sdp.primal_residual = std::max(r.sdp.primal_residual, resid / (1.0 + red.b.cwiseAbs().maxCoeff()));
  }
  return r;
}

Eigen::MatrixXd Program::Result::value(const std::vector<std::vector<LinExpr>>& m) const {
  const int rows = static_cast<int>(m.size());
  const int cols = rows ? static_cast<int>(m[0].size()) : 0;
  Eigen::MatrixXd out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out(i, j) = m[i][j].evaluate(values);
  }
  return out;
}

Eigen::MatrixXd Program::psd_value(const Result& r, int handle) const {
  const int s = psd_.at(handle).size;
  Eigen::MatrixXd Q(s, s);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) Q(i, j) = r.value(psd_entry(handle, i, j));
  }
  return Q;
}

// --------------------------------------------------------------- compilers

int compile_poly_equality(Program& prog, const PolyExprMatrix& lhs, const PolyExprMatrix& rhs) {
  if (lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols()) {
    throw DimensionError("compile_poly_equality: shape mismatch");
  }
  if (lhs.nvars() != rhs.nvars()) throw DimensionError("compile_poly_equality: variable count mismatch");
  int count = 0;
  for (int i = 0; i < lhs.rows(); ++i) {
    for (int j = 0; j < lhs.cols(); ++j) {
      std::set<Monomial> mons;
      for (const auto& t : lhs(i, j).terms()) mons.insert(t.first);
      for (const auto& t : rhs(i, j).terms()) mons.insert(t.first);
      for (const auto& m : mons) {
        LinExpr e = lhs(i, j).coefficient(m) - rhs(i, j).coefficient(m);
        prog.add_equality(e);
        ++count;
      }
    }
  }
  return count;
}

namespace {

struct Support {
  bool empty = true;
  int max_deg = 0;
  int min_deg = 0;
  std::vector<int> max_var;
};

Support support_of(const PolyExpr& p, int n) {
  Support s;
  s.max_var.assign(n, 0);
  for (const auto& [m, c] : p.terms()) {
    if (c.is_zero()) continue;
    const int d = m.degree();
    if (s.empty) {
      s.max_deg = s.min_deg = d;
      s.empty = false;
    } else {
      s.max_deg = std::max(s.max_deg, d);
      s.min_deg = std::min(s.min_deg, d);
    }
    for (int j = 0; j < n; ++j) s.max_var[j] = std::max(s.max_var[j], m[j]);
  }
  return s;
}

}  // namespace

SosConstraint compile_sos_matrix(Program& prog, const PolyExprMatrix& S, const SosOptions& options) {
  const int q = S.rows();
  const int n = S.nvars();
  if (S.cols() != q) throw DimensionError("compile_sos_matrix: matrix must be square");
  SosConstraint out;

  // Symmetric part, upper triangle.
  std::vector<std::vector<PolyExpr>> sym(q, std::vector<PolyExpr>(q, PolyExpr(n)));
  for (int l = 0; l < q; ++l) {
    for (int m = l; m < q; ++m) sym[l][m] = l == m ? S(l, l) : (S(l, m) + S(m, l)) * 0.5;
  }

  std::vector<Monomial> base;
  if (options.gram_basis) {
    base = *options.gram_basis;
    for (const auto& z : base) {
      if (z.nvars() != n) throw DimensionError("compile_sos_matrix: gram monomial variable count mismatch");
    }
  } else {
    int deg = 0;
    std::vector<bool> occurs(n, false);
    for (int l = 0; l < q; ++l) {
      for (int m = l; m < q; ++m) {
        for (const auto& [mono, c] : sym[l][m].terms()) {
          deg = std::max(deg, mono.degree());
          for (int j = 0; j < n; ++j) occurs[j] = occurs[j] || mono[j] > 0;
        }
      }
    }
    for (const auto& z : monomials_up_to(n, 0, (deg + 1) / 2)) {
      bool ok = true;
      for (int j = 0; j < n; ++j) ok = ok && (occurs[j] || z[j] == 0);
      if (ok) base.push_back(z);
    }
  }

  // Monomials reachable by the unpruned basis.
  std::set<Monomial> reachable;
  for (std::size_t a = 0; a < base.size(); ++a) {
    for (std::size_t b = a; b < base.size(); ++b) reachable.insert(base[a] * base[b]);
  }
  for (int l = 0; l < q; ++l) {
    for (int m = l; m < q; ++m) {
      for (const auto& [mono, c] : sym[l][m].terms()) {
        if (!reachable.count(mono)) {
          throw std::invalid_argument("compile_sos_matrix: monomial " + mono.to_string() +
                                      " is not a product of two Gram monomials");
        }
      }
    }
  }

  // Per-row Gram monomials.
  std::vector<std::vector<int>> rows(q);
  for (int l = 0; l < q; ++l) {
    const Support s = support_of(sym[l][l], n);
    for (std::size_t a = 0; a < base.size(); ++a) {
      if (options.prune) {
        if (s.empty) continue;
        const int d2 = 2 * base[a].degree();
        if (d2 > s.max_deg || d2 < s.min_deg) continue;
        bool ok = true;
        for (int j = 0; j < n; ++j) ok = ok && 2 * base[a][j] <= s.max_var[j];
        if (!ok) continue;
      }
      rows[l].push_back(static_cast<int>(a));
    }
  }
  std::vector<std::vector<int>> pos(q);
  int L = 0;
  for (int l = 0; l < q; ++l) {
    for (int a : rows[l]) {
      pos[l].push_back(L++);
      out.index.emplace_back(l, base[a]);
    }
  }
  if (L > 0) out.block = prog.new_psd(L);

  const int before = prog.num_equalities();
  for (int l = 0; l < q; ++l) {
    for (int m = l; m < q; ++m) {
      std::map<Monomial, LinExpr> gram;
      for (std::size_t ia = 0; ia < rows[l].size(); ++ia) {
        const std::size_t start = l == m ? ia : 0;
        for (std::size_t ib = start; ib < rows[m].size(); ++ib) {
          const Monomial prod = base[rows[l][ia]] * base[rows[m][ib]];
          const double coef = (l == m && ia != ib) ? 2.0 : 1.0;
          gram[prod].add_scaled(prog.psd_entry(out.block, pos[l][ia], pos[m][ib]), coef);
        }
      }
      for (const auto& [mono, c] : sym[l][m].terms()) gram.try_emplace(mono);
      for (const auto& [mono, g] : gram) {
        prog.add_equality(g - sym[l][m].coefficient(mono));
      }
    }
  }
  out.equalities = prog.num_equalities() - before;
  return out;
}

Eigen::MatrixXd gram_form(const SosConstraint& c, const Eigen::MatrixXd& Q, int q,
                          const Eigen::Ref<const Eigen::VectorXd>& x) {
  const int L = static_cast<int>(c.index.size());
  if (Q.rows() != L || Q.cols() != L) throw DimensionError("gram_form: Q has the wrong size");
  Eigen::MatrixXd Zt = Eigen::MatrixXd::Zero(L, q);
  for (int p = 0; p < L; ++p) Zt(p, c.index[p].first) = c.index[p].second.evaluate(x);
  return Zt.transpose() * Q * Zt;
}

}  // namespace ddclf
