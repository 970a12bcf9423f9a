#include "ddclf/poly.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace ddclf {

// ---------------------------------------------------------------- Monomial

Monomial::Monomial(std::vector<int> exponents) : exps_(std::move(exponents)) {
  for (int e : exps_) {
    if (e < 0) throw std::invalid_argument("monomial exponent must be non-negative");
  }
}

Monomial Monomial::variable(int nvars, int index) {
  if (index < 0 || index >= nvars) throw std::out_of_range("variable index out of range");
  std::vector<int> e(nvars, 0);
  e[index] = 1;
  return Monomial(std::move(e));
}

int Monomial::degree() const { return std::accumulate(exps_.begin(), exps_.end(), 0); }

Monomial Monomial::operator*(const Monomial& other) const {
  if (nvars() != other.nvars()) throw DimensionError("monomial variable count mismatch");
  std::vector<int> e(exps_);
  for (int j = 0; j < nvars(); ++j) e[j] += other.exps_[j];
  return Monomial(std::move(e));
}

Monomial Monomial::divide_variable(int j) const {
  if (exps_.at(j) < 1) throw std::invalid_argument("monomial does not contain variable");
  std::vector<int> e(exps_);
  --e[j];
  return Monomial(std::move(e));
}

double Monomial::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != nvars()) throw DimensionError("monomial evaluated at vector of wrong length");
  double v = 1.0;
  for (int j = 0; j < nvars(); ++j) {
    for (int p = 0; p < exps_[j]; ++p) v *= x[j];
  }
  return v;
}

bool Monomial::operator<(const Monomial& other) const {
  const int da = degree(), db = other.degree();
  if (da != db) return da < db;
  // Within a degree, larger lexicographic exponent comes first.
  return std::lexicographical_compare(other.exps_.begin(), other.exps_.end(), exps_.begin(),
                                      exps_.end());
}

std::string Monomial::to_string() const {
  std::string out;
  for (int j = 0; j < nvars(); ++j) {
    if (exps_[j] == 0) continue;
    if (!out.empty()) out += '*';
    out += 'x' + std::to_string(j + 1);
    if (exps_[j] > 1) out += '^' + std::to_string(exps_[j]);
  }
  return out.empty() ? "1" : out;
}

Monomial Monomial::parse(const std::string& text, int nvars) {
  std::vector<int> e(nvars, 0);
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  }
  if (s == "1") return Monomial(std::move(e));
  std::stringstream ss(s);
  std::string factor;
  while (std::getline(ss, factor, '*')) {
    if (factor.size() < 2 || factor[0] != 'x') {
      throw std::invalid_argument("bad monomial factor '" + factor + "' in '" + text + "'");
    }
    const auto caret = factor.find('^');
    int var = 0, pw = 1;
    try {
      var = std::stoi(factor.substr(1, caret == std::string::npos ? std::string::npos : caret - 1));
      if (caret != std::string::npos) pw = std::stoi(factor.substr(caret + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad monomial factor '" + factor + "' in '" + text + "'");
    }
    if (var < 1 || var > nvars || pw < 1) {
      throw std::invalid_argument("monomial factor out of range in '" + text + "'");
    }
    e[var - 1] += pw;
  }
  return Monomial(std::move(e));
}

// ----------------------------------------------------------- MonomialBasis

MonomialBasis::MonomialBasis(int nvars, std::vector<Monomial> entries)
    : n_(nvars), entries_(std::move(entries)) {
  if (n_ < 1) throw std::invalid_argument("basis needs at least one variable");
  if (size() < n_) throw std::invalid_argument("basis must contain the n linear monomials");
  std::set<Monomial> seen;
  for (int k = 0; k < size(); ++k) {
    const Monomial& m = entries_[k];
    if (m.nvars() != n_) throw DimensionError("basis monomial has wrong variable count");
    if (m.degree() < 1) throw std::invalid_argument("basis monomial of degree 0 violates F(0)=0");
    if (k < n_ && m != Monomial::variable(n_, k)) {
      throw std::invalid_argument("basis entry " + std::to_string(k + 1) + " must be x" +
                                  std::to_string(k + 1));
    }
    if (!seen.insert(m).second) {
      throw std::invalid_argument("duplicate basis monomial " + m.to_string());
    }
  }
}

int MonomialBasis::max_degree() const {
  int d = 0;
  for (const auto& m : entries_) d = std::max(d, m.degree());
  return d;
}

int MonomialBasis::find(const Monomial& m) const {
  const auto it = std::find(entries_.begin(), entries_.end(), m);
  return it == entries_.end() ? -1 : static_cast<int>(it - entries_.begin());
}

std::string MonomialBasis::to_string() const {
  std::string out;
  for (const auto& m : entries_) {
    if (!out.empty()) out += ';';
    out += m.to_string();
  }
  return out;
}

MonomialBasis MonomialBasis::parse(const std::string& text, int nvars) {
  std::vector<Monomial> entries;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    entries.push_back(Monomial::parse(item, nvars));
  }
  return MonomialBasis(nvars, std::move(entries));
}

namespace {

// Exponent vectors of total degree d over n variables, descending lex.
void enumerate_degree(int n, int d, int var, std::vector<int>& cur, std::vector<Monomial>& out) {
  if (var == n - 1) {
    cur[var] = d;
    out.emplace_back(cur);
    cur[var] = 0;
    return;
  }
  for (int e = d; e >= 0; --e) {
    cur[var] = e;
    enumerate_degree(n, d - e, var + 1, cur, out);
  }
  cur[var] = 0;
}

}  // namespace

std::vector<Monomial> monomials_up_to(int n, int lo, int hi) {
  if (n < 1) throw std::invalid_argument("monomial enumeration needs n >= 1");
  std::vector<Monomial> out;
  std::vector<int> cur(n, 0);
  for (int d = std::max(lo, 0); d <= hi; ++d) enumerate_degree(n, d, 0, cur, out);
  return out;
}

MonomialBasis make_basis(int n, int d) {
  if (n < 1) throw std::invalid_argument("make_basis: state dimension must be >= 1");
  if (d < 1) throw std::invalid_argument("make_basis: degree must be >= 1");
  return MonomialBasis(n, monomials_up_to(n, 1, d));
}

Eigen::VectorXd eval_basis(const MonomialBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != basis.nvars()) {
    throw DimensionError("eval_basis: expected state of length " + std::to_string(basis.nvars()) +
                         ", got " + std::to_string(x.size()));
  }
  Eigen::VectorXd f(basis.size());
  for (int k = 0; k < basis.size(); ++k) f[k] = basis[k].evaluate(x);
  return f;
}

// -------------------------------------------------------------- Polynomial

Polynomial Polynomial::constant(int nvars, double c) {
  Polynomial p(nvars);
  p.add_term(Monomial::constant(nvars), c);
  return p;
}

Polynomial Polynomial::monomial(const Monomial& m, double c) {
  Polynomial p(m.nvars());
  p.add_term(m, c);
  return p;
}

int Polynomial::degree() const {
  int d = -1;
  for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
  return d;
}

double Polynomial::coefficient(const Monomial& m) const {
  const auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

void Polynomial::add_term(const Monomial& m, double c) {
  if (m.nvars() != n_) throw DimensionError("polynomial term has wrong variable count");
  if (c == 0.0) return;
  auto [it, inserted] = terms_.emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

void Polynomial::check_vars(const Polynomial& other) const {
  if (n_ != other.n_) throw DimensionError("polynomial variable count mismatch");
}

Polynomial& Polynomial::operator+=(const Polynomial& other) {
  check_vars(other);
  for (const auto& [m, c] : other.terms_) add_term(m, c);
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& other) {
  check_vars(other);
  for (const auto& [m, c] : other.terms_) add_term(m, -c);
  return *this;
}

Polynomial& Polynomial::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& [m, c] : terms_) c *= s;
  return *this;
}

Polynomial Polynomial::operator+(const Polynomial& other) const {
  Polynomial r(*this);
  r += other;
  return r;
}

Polynomial Polynomial::operator-(const Polynomial& other) const {
  Polynomial r(*this);
  r -= other;
  return r;
}

Polynomial Polynomial::operator*(const Polynomial& other) const {
  check_vars(other);
  Polynomial r(n_);
  for (const auto& [ma, ca] : terms_) {
    for (const auto& [mb, cb] : other.terms_) r.add_term(ma * mb, ca * cb);
  }
  return r;
}

Polynomial Polynomial::operator*(double s) const {
  Polynomial r(*this);
  r *= s;
  return r;
}

double Polynomial::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != n_) throw DimensionError("polynomial evaluated at vector of wrong length");
  double v = 0.0;
  for (const auto& [m, c] : terms_) v += c * m.evaluate(x);
  return v;
}

std::string Polynomial::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (const auto& [m, c] : terms_) {
    if (!first) os << " + ";
    os << c;
    if (m.degree() > 0) os << '*' << m.to_string();
    first = false;
  }
  return os.str();
}

// -------------------------------------------------------------- PolyMatrix

PolyMatrix::PolyMatrix(int rows, int cols, int nvars)
    : rows_(rows), cols_(cols), n_(nvars),
      entries_(static_cast<std::size_t>(rows) * cols, Polynomial(nvars)) {
  if (rows < 0 || cols < 0) throw DimensionError("negative PolyMatrix shape");
}

PolyMatrix PolyMatrix::constant(const Eigen::MatrixXd& c, int nvars) {
  PolyMatrix pm(static_cast<int>(c.rows()), static_cast<int>(c.cols()), nvars);
  const Monomial one = Monomial::constant(nvars);
  for (int r = 0; r < pm.rows(); ++r) {
    for (int k = 0; k < pm.cols(); ++k) pm(r, k).add_term(one, c(r, k));
  }
  return pm;
}

int PolyMatrix::degree() const {
  int d = -1;
  for (const auto& p : entries_) d = std::max(d, p.degree());
  return d;
}

std::vector<Monomial> PolyMatrix::support() const {
  std::set<Monomial> s;
  for (const auto& p : entries_) {
    for (const auto& [m, c] : p.terms()) s.insert(m);
  }
  return {s.begin(), s.end()};
}

Eigen::MatrixXd PolyMatrix::coefficient(const Monomial& m) const {
  Eigen::MatrixXd out(rows_, cols_);
  for (int r = 0; r < rows_; ++r) {
    for (int k = 0; k < cols_; ++k) out(r, k) = (*this)(r, k).coefficient(m);
  }
  return out;
}

std::size_t PolyMatrix::nonzero_entries() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const Polynomial& p) { return !p.is_zero(); }));
}

PolyMatrix PolyMatrix::operator*(const PolyMatrix& other) const {
  if (cols_ != other.rows_ || n_ != other.n_) throw DimensionError("PolyMatrix product shape mismatch");
  PolyMatrix out(rows_, other.cols_, n_);
  for (int r = 0; r < rows_; ++r) {
    for (int k = 0; k < cols_; ++k) {
      const Polynomial& a = (*this)(r, k);
      if (a.is_zero()) continue;
      for (int c = 0; c < other.cols_; ++c) {
        const Polynomial& b = other(k, c);
        if (!b.is_zero()) out(r, c) += a * b;
      }
    }
  }
  return out;
}

PolyMatrix PolyMatrix::operator+(const PolyMatrix& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_ || n_ != other.n_) {
    throw DimensionError("PolyMatrix sum shape mismatch");
  }
  PolyMatrix out(*this);
  for (std::size_t i = 0; i < entries_.size(); ++i) out.entries_[i] += other.entries_[i];
  return out;
}

PolyMatrix PolyMatrix::operator-(const PolyMatrix& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_ || n_ != other.n_) {
    throw DimensionError("PolyMatrix difference shape mismatch");
  }
  PolyMatrix out(*this);
  for (std::size_t i = 0; i < entries_.size(); ++i) out.entries_[i] -= other.entries_[i];
  return out;
}

PolyMatrix PolyMatrix::transpose() const {
  PolyMatrix out(cols_, rows_, n_);
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  }
  return out;
}

bool PolyMatrix::operator==(const PolyMatrix& other) const {
  return rows_ == other.rows_ && cols_ == other.cols_ && n_ == other.n_ && entries_ == other.entries_;
}

PolyMatrix operator*(const Eigen::MatrixXd& lhs, const PolyMatrix& rhs) {
  if (lhs.cols() != rhs.rows()) throw DimensionError("matrix * PolyMatrix shape mismatch");
  PolyMatrix out(static_cast<int>(lhs.rows()), rhs.cols(), rhs.nvars());
  for (int r = 0; r < out.rows(); ++r) {
    for (int k = 0; k < rhs.rows(); ++k) {
      const double a = lhs(r, k);
      if (a == 0.0) continue;
      for (int c = 0; c < rhs.cols(); ++c) {
        if (!rhs(k, c).is_zero()) out(r, c) += rhs(k, c) * a;
      }
    }
  }
  return out;
}

PolyMatrix operator*(const PolyMatrix& lhs, const Eigen::MatrixXd& rhs) {
  if (lhs.cols() != rhs.rows()) throw DimensionError("PolyMatrix * matrix shape mismatch");
  PolyMatrix out(lhs.rows(), static_cast<int>(rhs.cols()), lhs.nvars());
  for (int r = 0; r < lhs.rows(); ++r) {
    for (int k = 0; k < lhs.cols(); ++k) {
      if (lhs(r, k).is_zero()) continue;
      for (int c = 0; c < out.cols(); ++c) {
        const double b = rhs(k, c);
        if (b != 0.0) out(r, c) += lhs(r, k) * b;
      }
    }
  }
  return out;
}

Eigen::MatrixXd eval_polymatrix(const PolyMatrix& pm, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != pm.nvars()) {
    throw DimensionError("eval_polymatrix: expected " + std::to_string(pm.nvars()) +
                         " variables, got " + std::to_string(x.size()));
  }
  Eigen::MatrixXd out(pm.rows(), pm.cols());
  for (int r = 0; r < pm.rows(); ++r) {
    for (int c = 0; c < pm.cols(); ++c) out(r, c) = pm(r, c).evaluate(x);
  }
  return out;
}

// ---------------------------------------------------------- transformation

AlephRule parse_aleph_rule(const std::string& text) {
  if (text == "smallest" || text == "smallest-index") return AlephRule::smallest_index;
  if (text == "largest" || text == "largest-index") return AlephRule::largest_index;
  throw std::invalid_argument("unknown transformation rule '" + text + "'");
}

std::string to_string(AlephRule rule) {
  return rule == AlephRule::smallest_index ? "smallest" : "largest";
}

PolyMatrix build_transformation(const MonomialBasis& basis, AlephRule rule) {
  const int n = basis.nvars();
  PolyMatrix aleph(basis.size(), n, n);
  for (int k = 0; k < basis.size(); ++k) {
    const Monomial& m = basis[k];
    int j = -1;
    if (rule == AlephRule::smallest_index) {
      for (int v = 0; v < n && j < 0; ++v) {
        if (m[v] >= 1) j = v;
      }
    } else {
      for (int v = n - 1; v >= 0 && j < 0; --v) {
        if (m[v] >= 1) j = v;
      }
    }
    aleph(k, j).add_term(m.divide_variable(j), 1.0);
  }
  return aleph;
}

}  // namespace ddclf
