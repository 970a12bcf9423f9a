#include "ddclf/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace ddclf {

int SdpProblem::add_block(BlockKind kind, int size) {
  if (size < 1) throw std::invalid_argument("SDP block size must be positive");
  blocks.push_back({kind, size});
  return static_cast<int>(blocks.size()) - 1;
}

int SdpProblem::add_constraint(std::vector<SdpEntry> entries, double b) {
  constraints.push_back(std::move(entries));
  rhs.push_back(b);
  return static_cast<int>(constraints.size()) - 1;
}

int SdpProblem::order() const {
  int n = 0;
  for (const auto& b : blocks) n += b.size;
  return n;
}

namespace {

void check_entry(const SdpProblem& p, const SdpEntry& e, const char* where) {
  if (e.block < 0 || e.block >= static_cast<int>(p.blocks.size())) {
    throw std::invalid_argument(std::string(where) + ": entry refers to a missing block");
  }
  const auto& blk = p.blocks[e.block];
  if (e.row < 0 || e.col < e.row || e.col >= blk.size) {
    throw std::invalid_argument(std::string(where) + ": entry index outside the upper triangle");
  }
  if (blk.kind == BlockKind::diagonal && e.row != e.col) {
    throw std::invalid_argument(std::string(where) + ": off-diagonal entry in a diagonal block");
  }
  if (!std::isfinite(e.value)) throw std::invalid_argument(std::string(where) + ": non-finite coefficient");
}

}  // namespace

void SdpProblem::validate() const {
  if (blocks.empty()) throw std::invalid_argument("SDP problem has no blocks");
  if (constraints.size() != rhs.size()) throw std::invalid_argument("SDP constraint/rhs count mismatch");
  for (const auto& e : objective) check_entry(*this, e, "objective");
  for (const auto& c : constraints) {
    for (const auto& e : c) check_entry(*this, e, "constraint");
  }
  for (double b : rhs) {
    if (!std::isfinite(b)) throw std::invalid_argument("SDP right-hand side is not finite");
  }
  bool objective_zero = true;
  for (const auto& e : objective) objective_zero = objective_zero && e.value == 0.0;
  if (constraints.empty() && objective_zero) {
    throw std::invalid_argument("SDP problem has neither constraints nor an objective");
  }
}

std::string to_string(SdpStatus status) {
  switch (status) {
    case SdpStatus::optimal: return "optimal";
    case SdpStatus::feasible: return "feasible";
    case SdpStatus::infeasible: return "infeasible";
    case SdpStatus::max_iterations: return "max-iterations";
    case SdpStatus::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

namespace {

struct Triple {
  int i, j;
  double v;
};

struct Touch {
  int k;  // constraint index (after presolve)
  std::vector<Triple> entries;
};

using Blocks = std::vector<Eigen::MatrixXd>;

class Solver {
 public:
  Solver(const SdpProblem& p, const SdpOptions& opt) : p_(p), opt_(opt) {}

  SdpSolution run();

 private:
  bool presolve(SdpSolution& out);
  void initial_point();
  Eigen::VectorXd apply_A(const Blocks& X) const;
  Blocks apply_At(const Eigen::VectorXd& y) const;
  Blocks dual_residual(const Blocks& C, const Eigen::VectorXd& y, const Blocks& S) const;
  double inner(const Blocks& A, const Blocks& B) const;
  double fro(const Blocks& A) const;
  double min_eig(const Blocks& A) const;
  bool build_schur(const Blocks& Sinv);
  Eigen::VectorXd solve_schur(const Eigen::VectorXd& h) const;
  double max_step(const Blocks& X, const Blocks& dX) const;
  void direction(const Blocks& Sinv, const Blocks& Rd, const Eigen::VectorXd& Rp, double sigma_mu,
                 const Blocks* corr, Blocks& dX, Eigen::VectorXd& dy, Blocks& dS) const;
  void finish(SdpSolution& out, SdpStatus status);

  const SdpProblem& p_;
  SdpOptions opt_;
  int nb_ = 0;
  int m_ = 0;
  std::vector<int> kept_;        // original constraint index per internal row
  Eigen::VectorXd b_;            // scaled right-hand side
  Eigen::VectorXd row_scale_;    // internal row = original row / row_scale
  std::vector<std::vector<Touch>> psd_touch_;  // per psd block
  std::vector<Eigen::MatrixXd> diag_coef_;     // per diagonal block, m x s
  Blocks C_;
  Blocks X_, S_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd M_;
  Eigen::LLT<Eigen::MatrixXd> schur_;
  double b_norm_inf_ = 0.0;
  double c_norm_ = 0.0;
  bool feasibility_ = false;
};

bool is_psd(const SdpProblem& p, int b) { return p.blocks[b].kind == BlockKind::psd; }

Eigen::MatrixXd zero_block(const SdpBlock& blk) {
  return blk.kind == BlockKind::psd ? Eigen::MatrixXd::Zero(blk.size, blk.size)
                                    : Eigen::MatrixXd::Zero(blk.size, 1);
}

bool Solver::presolve(SdpSolution& out) {
  nb_ = static_cast<int>(p_.blocks.size());
  std::vector<int> offset(nb_ + 1, 0);
  for (int b = 0; b < nb_; ++b) {
    const int s = p_.blocks[b].size;
    offset[b + 1] = offset[b] + (is_psd(p_, b) ? s * (s + 1) / 2 : s);
  }
  C_.clear();
  for (int b = 0; b < nb_; ++b) C_.push_back(zero_block(p_.blocks[b]));
  for (const auto& e : p_.objective) {
    if (is_psd(p_, e.block)) {
      C_[e.block](e.row, e.col) += e.value;
      if (e.row != e.col) C_[e.block](e.col, e.row) += e.value;
    } else {
      C_[e.block](e.row, 0) += e.value;
    }
  }
  c_norm_ = fro(C_);
  feasibility_ = c_norm_ == 0.0;
  auto vec_index = [&](int b, int i, int j) {
    // column-wise packed upper triangle
    return offset[b] + (is_psd(p_, b) ? j * (j + 1) / 2 + i : i);
  };
  const int m0 = p_.num_constraints();
  Eigen::MatrixXd At = Eigen::MatrixXd::Zero(offset[nb_], m0);
  Eigen::VectorXd norms(m0);
  for (int k = 0; k < m0; ++k) {
    for (const auto& e : p_.constraints[k]) {
      At(vec_index(e.block, e.row, e.col), k) += (e.row == e.col ? 1.0 : 2.0) * e.value;
    }
    norms[k] = At.col(k).norm();
  }
  Eigen::VectorXd b0 = Eigen::Map<const Eigen::VectorXd>(p_.rhs.data(), m0);

  // Zero rows are dependent by definition; everything else goes through a
  // rank-revealing QR on the normalized rows.
  std::vector<int> candidates;
  for (int k = 0; k < m0; ++k) {
    if (norms[k] > 0.0) candidates.push_back(k);
    else if (std::abs(b0[k]) > opt_.tol * (1.0 + b0.lpNorm<Eigen::Infinity>())) return false;
  }
  Eigen::MatrixXd An(At.rows(), candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) An.col(c) = At.col(candidates[c]) / norms[candidates[c]];
  std::vector<int> kept;
  if (!candidates.empty()) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(An);
    qr.setThreshold(1e-10);
    const int r = static_cast<int>(qr.rank());
    for (int c = 0; c < r; ++c) kept.push_back(candidates[qr.colsPermutation().indices()[c]]);
    std::sort(kept.begin(), kept.end());
    if (r < static_cast<int>(candidates.size())) {
      // Consistency of the dropped rows: least-norm solution of the kept ones.
      Eigen::MatrixXd Ak(At.rows(), r);
      Eigen::VectorXd bk(r);
      for (int c = 0; c < r; ++c) {
        Ak.col(c) = At.col(kept[c]);
        bk[c] = b0[kept[c]];
      }
      Eigen::VectorXd lam = (Ak.transpose() * Ak).ldlt().solve(bk);
      Eigen::VectorXd xls = Ak * lam;
      const double scale = 1.0 + b0.lpNorm<Eigen::Infinity>();
      for (int k : candidates) {
        const double res = At.col(k).dot(xls) - b0[k];
        if (std::abs(res) > 1e-7 * scale * std::max(1.0, norms[k] * xls.lpNorm<Eigen::Infinity>())) {
          return false;
        }
      }
    }
  }
  kept_ = kept;
  m_ = static_cast<int>(kept_.size());
  out.removed_constraints = m0 - m_;

  row_scale_.resize(m_);
  b_.resize(m_);
  for (int r = 0; r < m_; ++r) {
    row_scale_[r] = norms[kept_[r]];
    b_[r] = b0[kept_[r]] / row_scale_[r];
  }
  b_norm_inf_ = b0.size() ? b0.lpNorm<Eigen::Infinity>() : 0.0;

  psd_touch_.assign(nb_, {});
  diag_coef_.assign(nb_, Eigen::MatrixXd());
  for (int b = 0; b < nb_; ++b) {
    if (!is_psd(p_, b)) diag_coef_[b] = Eigen::MatrixXd::Zero(m_, p_.blocks[b].size);
  }
  std::vector<std::vector<int>> slot(nb_, std::vector<int>(m_, -1));
  for (int r = 0; r < m_; ++r) {
    const int k = kept_[r];
    const double s = row_scale_[r];
    for (const auto& e : p_.constraints[k]) {
      if (e.value == 0.0) continue;
      if (is_psd(p_, e.block)) {
        auto& list = psd_touch_[e.block];
        if (slot[e.block][r] < 0) {
          slot[e.block][r] = static_cast<int>(list.size());
          list.push_back({r, {}});
        }
        list[slot[e.block][r]].entries.push_back({e.row, e.col, e.value / s});
      } else {
        diag_coef_[e.block](r, e.row) += e.value / s;
      }
    }
  }
  return true;
}

Eigen::VectorXd Solver::apply_A(const Blocks& X) const {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(m_);
  for (int b = 0; b < nb_; ++b) {
    if (is_psd(p_, b)) {
      for (const auto& t : psd_touch_[b]) {
        double acc = 0.0;
        for (const auto& e : t.entries) {
          acc += e.i == e.j ? e.v * X[b](e.i, e.j) : e.v * (X[b](e.i, e.j) + X[b](e.j, e.i));
        }
        r[t.k] += acc;
      }
    } else {
      r += diag_coef_[b] * X[b];
    }
  }
  return r;
}

Blocks Solver::apply_At(const Eigen::VectorXd& y) const {
  Blocks out;
  for (int b = 0; b < nb_; ++b) {
    Eigen::MatrixXd Z = zero_block(p_.blocks[b]);
    if (is_psd(p_, b)) {
      for (const auto& t : psd_touch_[b]) {
        for (const auto& e : t.entries) {
          Z(e.i, e.j) += e.v * y[t.k];
          if (e.i != e.j) Z(e.j, e.i) += e.v * y[t.k];
        }
      }
    } else {
      Z = diag_coef_[b].transpose() * y;
    }
    out.push_back(std::move(Z));
  }
  return out;
}

Blocks Solver::dual_residual(const Blocks& C, const Eigen::VectorXd& y, const Blocks& S) const {
  Blocks At = apply_At(y);
  for (int b = 0; b < nb_; ++b) At[b] = C[b] - At[b] - S[b];
  return At;
}

double Solver::inner(const Blocks& A, const Blocks& B) const {
  double s = 0.0;
  for (int b = 0; b < nb_; ++b) s += A[b].cwiseProduct(B[b]).sum();
  return s;
}

double Solver::fro(const Blocks& A) const {
  double s = 0.0;
  for (const auto& a : A) s += a.squaredNorm();
  return std::sqrt(s);
}

double Solver::min_eig(const Blocks& A) const {
  double lo = std::numeric_limits<double>::infinity();
  for (int b = 0; b < nb_; ++b) {
    if (is_psd(p_, b)) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A[b], Eigen::EigenvaluesOnly);
      lo = std::min(lo, es.eigenvalues().minCoeff());
    } else {
      lo = std::min(lo, A[b].minCoeff());
    }
  }
  return lo;
}

void Solver::initial_point() {
  X_.clear();
  S_.clear();
  for (int b = 0; b < nb_; ++b) {
    const int s = p_.blocks[b].size;
    double xi = std::max(10.0, std::sqrt(static_cast<double>(s)));
    double eta = std::max(10.0, std::sqrt(static_cast<double>(s)));
    eta = std::max(eta, C_[b].norm());
    if (is_psd(p_, b)) {
      for (const auto& t : psd_touch_[b]) {
        double nrm = 0.0;
        for (const auto& e : t.entries) nrm += (e.i == e.j ? 1.0 : 2.0) * e.v * e.v;
        nrm = std::sqrt(nrm);
        xi = std::max(xi, s * (1.0 + std::abs(b_[t.k])) / (1.0 + nrm));
        eta = std::max(eta, nrm);
      }
      X_.push_back(xi * Eigen::MatrixXd::Identity(s, s));
      S_.push_back(eta * Eigen::MatrixXd::Identity(s, s));
    } else {
      for (int r = 0; r < m_; ++r) {
        const double nrm = diag_coef_[b].row(r).norm();
        if (nrm == 0.0) continue;
        xi = std::max(xi, (1.0 + std::abs(b_[r])) / (1.0 + nrm));
        eta = std::max(eta, nrm);
      }
      X_.push_back(Eigen::MatrixXd::Constant(s, 1, xi));
      S_.push_back(Eigen::MatrixXd::Constant(s, 1, eta));
    }
  }
  y_ = Eigen::VectorXd::Zero(m_);
}

bool Solver::build_schur(const Blocks& Sinv) {
  M_ = Eigen::MatrixXd::Zero(m_, m_);
  for (int b = 0; b < nb_; ++b) {
    if (is_psd(p_, b)) {
      const auto& X = X_[b];
      const auto& Si = Sinv[b];
      const int s = p_.blocks[b].size;
      Eigen::MatrixXd G(s, s);
      for (const auto& tk : psd_touch_[b]) {
        G.setZero();
        for (const auto& e : tk.entries) {
          G.noalias() += e.v * X.col(e.i) * Si.row(e.j);
          if (e.i != e.j) G.noalias() += e.v * X.col(e.j) * Si.row(e.i);
        }
        for (const auto& tl : psd_touch_[b]) {
          double acc = 0.0;
          for (const auto& e : tl.entries) {
            acc += e.i == e.j ? e.v * G(e.i, e.j) : e.v * (G(e.i, e.j) + G(e.j, e.i));
          }
          M_(tk.k, tl.k) += acc;
        }
      }
    } else {
      const Eigen::VectorXd w = X_[b].col(0).cwiseQuotient(S_[b].col(0));
      M_.noalias() += diag_coef_[b] * w.asDiagonal() * diag_coef_[b].transpose();
    }
  }
  M_ = 0.5 * (M_ + M_.transpose()).eval();
  const double maxdiag = m_ ? std::max(1.0, M_.diagonal().cwiseAbs().maxCoeff()) : 1.0;
  double reg = opt_.regularization;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd Mr = M_;
    Mr.diagonal().array() += reg * maxdiag;
    schur_.compute(Mr);
    if (schur_.info() == Eigen::Success) return true;
    reg *= 100.0;
  }
  return false;
}

Eigen::VectorXd Solver::solve_schur(const Eigen::VectorXd& h) const {
  if (m_ == 0) return Eigen::VectorXd();
  // The factor carries the static regularization; refine against the exact M.
  Eigen::VectorXd dy = schur_.solve(h);
  for (int it = 0; it < 3; ++it) dy += schur_.solve(h - M_ * dy);
  return dy;
}

double Solver::max_step(const Blocks& X, const Blocks& dX) const {
  double alpha = std::numeric_limits<double>::infinity();
  for (int b = 0; b < nb_; ++b) {
    if (is_psd(p_, b)) {
      Eigen::LLT<Eigen::MatrixXd> llt(X[b]);
      if (llt.info() != Eigen::Success) return 0.0;
      Eigen::MatrixXd W = llt.matrixL().solve(dX[b]);
      W = llt.matrixL().solve(W.transpose()).transpose();
      W = 0.5 * (W + W.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W, Eigen::EigenvaluesOnly);
      const double lmin = es.eigenvalues().minCoeff();
      if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
    } else {
      for (Eigen::Index d = 0; d < X[b].rows(); ++d) {
        if (dX[b](d, 0) < 0.0) alpha = std::min(alpha, -X[b](d, 0) / dX[b](d, 0));
      }
    }
  }
  return alpha;
}

void Solver::direction(const Blocks& Sinv, const Blocks& Rd, const Eigen::VectorXd& Rp, double sigma_mu,
                       const Blocks* corr, Blocks& dX, Eigen::VectorXd& dy, Blocks& dS) const {
  Blocks R(nb_);
  for (int b = 0; b < nb_; ++b) {
    if (is_psd(p_, b)) {
      const int s = p_.blocks[b].size;
      Eigen::MatrixXd T = sigma_mu * Eigen::MatrixXd::Identity(s, s) - X_[b] * Rd[b];
      if (corr) T -= (*corr)[b];
      R[b] = T * Sinv[b] - X_[b];
    } else {
      Eigen::ArrayXd T = sigma_mu - X_[b].col(0).array() * Rd[b].col(0).array();
      if (corr) T -= (*corr)[b].col(0).array();
      R[b] = (T / S_[b].col(0).array() - X_[b].col(0).array()).matrix();
    }
  }
  const Eigen::VectorXd h = Rp - apply_A(R);
  dy = solve_schur(h);
  dS = apply_At(dy);
  for (int b = 0; b < nb_; ++b) dS[b] = Rd[b] - dS[b];
  dX.assign(nb_, Eigen::MatrixXd());
  for (int b = 0; b < nb_; ++b) {
    if (is_psd(p_, b)) {
      const int s = p_.blocks[b].size;
      Eigen::MatrixXd T = sigma_mu * Eigen::MatrixXd::Identity(s, s) - X_[b] * dS[b];
      if (corr) T -= (*corr)[b];
      Eigen::MatrixXd D = T * Sinv[b] - X_[b];
      dX[b] = 0.5 * (D + D.transpose());
    } else {
      Eigen::ArrayXd T = sigma_mu - X_[b].col(0).array() * dS[b].col(0).array();
      if (corr) T -= (*corr)[b].col(0).array();
      dX[b] = (T / S_[b].col(0).array() - X_[b].col(0).array()).matrix();
    }
  }
}

void Solver::finish(SdpSolution& out, SdpStatus status) {
  out.status = status;
  out.X = X_;
  out.S = S_;
  out.y = Eigen::VectorXd::Zero(p_.num_constraints());
  for (int r = 0; r < m_; ++r) out.y[kept_[r]] = y_[r] / row_scale_[r];
  for (int b = 0; b < nb_; ++b) {
    if (is_psd(p_, b)) out.X[b] = 0.5 * (out.X[b] + out.X[b].transpose()).eval();
  }
  // Residuals on the original (unscaled, unreduced) problem.
  double pobj = 0.0;
  for (const auto& e : p_.objective) {
    const double x = is_psd(p_, e.block) ? out.X[e.block](e.row, e.col) : out.X[e.block](e.row, 0);
    pobj += (e.row == e.col ? 1.0 : 2.0) * e.value * x;
  }
  double rp = 0.0;
  for (int k = 0; k < p_.num_constraints(); ++k) {
    double acc = 0.0;
    for (const auto& e : p_.constraints[k]) {
      const double x = is_psd(p_, e.block) ? out.X[e.block](e.row, e.col) : out.X[e.block](e.row, 0);
      acc += (e.row == e.col ? 1.0 : 2.0) * e.value * x;
    }
    rp = std::max(rp, std::abs(p_.rhs[k] - acc));
  }
  double dobj = 0.0;
  for (int k = 0; k < p_.num_constraints(); ++k) dobj += p_.rhs[k] * out.y[k];
  out.primal_objective = pobj;
  out.dual_objective = dobj;
  out.primal_residual = rp / (1.0 + b_norm_inf_);
  out.dual_residual = fro(dual_residual(C_, y_, S_)) / (1.0 + c_norm_);
  out.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
}

SdpSolution Solver::run() {
  p_.validate();
  SdpSolution out;
  if (!presolve(out)) {
    // Inconsistent equality system: no X at all satisfies A(X) = b.
    nb_ = static_cast<int>(p_.blocks.size());
    for (const auto& blk : p_.blocks) {
      X_.push_back(zero_block(blk));
      S_.push_back(zero_block(blk));
    }
    m_ = 0;
    kept_.clear();
    psd_touch_.assign(nb_, {});
    diag_coef_.assign(nb_, Eigen::MatrixXd());
    for (int b = 0; b < nb_; ++b) {
      if (!is_psd(p_, b)) diag_coef_[b] = Eigen::MatrixXd::Zero(0, p_.blocks[b].size);
    }
    row_scale_.resize(0);
    b_.resize(0);
    y_.resize(0);
    finish(out, SdpStatus::infeasible);
    return out;
  }
  initial_point();
  const double n = p_.order();
  const double gamma = opt_.step_fraction;
  int stalled = 0;
  SdpStatus status = SdpStatus::max_iterations;

  for (int iter = 0;; ++iter) {
    out.iterations = iter;
    const Eigen::VectorXd Rp = b_ - apply_A(X_);
    const Blocks Rd = dual_residual(C_, y_, S_);
    const double pobj = inner(C_, X_);
    const double dobj = b_.dot(y_);
    const double mu = inner(X_, S_) / n;
    const double relp = (Rp.cwiseProduct(row_scale_)).lpNorm<Eigen::Infinity>() / (1.0 + b_norm_inf_);
    const double reld = fro(Rd) / (1.0 + c_norm_);
    const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    if (opt_.verbose) {
      std::fprintf(stderr, "sdp %3d  pobj %+.6e  dobj %+.6e  relp %.2e  reld %.2e  gap %.2e  mu %.2e\n", iter,
                   pobj, dobj, relp, reld, gap, mu);
    }
    if (feasibility_ ? relp <= opt_.tol : std::max({relp, reld, gap}) <= opt_.tol) {
      status = feasibility_ ? SdpStatus::feasible : SdpStatus::optimal;
      break;
    }
    // Farkas-type certificates from diverging iterates.
    if (dobj > 0.0) {
      Blocks Aty = apply_At(y_);
      for (auto& a : Aty) a = -a;
      const double viol = std::max(0.0, -min_eig(Aty));
      if (viol <= opt_.infeasibility_tol * dobj && relp > opt_.tol) {
        status = SdpStatus::infeasible;
        break;
      }
    }
    if (!feasibility_ && pobj < 0.0) {
      const double ax = (apply_A(X_).cwiseProduct(row_scale_)).lpNorm<Eigen::Infinity>();
      if (ax <= opt_.infeasibility_tol * (-pobj) && reld > opt_.tol) {
        status = SdpStatus::infeasible;
        break;
      }
    }
    if (iter >= opt_.max_iter) break;
    if (stalled >= 3) {
      status = SdpStatus::numerical_failure;
      break;
    }

    Blocks Sinv(nb_);
    bool ok = true;
    for (int b = 0; b < nb_ && ok; ++b) {
      if (is_psd(p_, b)) {
        Eigen::LLT<Eigen::MatrixXd> llt(S_[b]);
        if (llt.info() != Eigen::Success) ok = false;
        else Sinv[b] = llt.solve(Eigen::MatrixXd::Identity(S_[b].rows(), S_[b].cols()));
      } else {
        Sinv[b] = S_[b].cwiseInverse();
      }
    }
    if (!ok || !build_schur(Sinv)) {
      status = SdpStatus::numerical_failure;
      break;
    }

    Blocks dXa, dSa;
    Eigen::VectorXd dya;
    direction(Sinv, Rd, Rp, 0.0, nullptr, dXa, dya, dSa);
    const double ap_aff = std::min(1.0, max_step(X_, dXa));
    const double ad_aff = std::min(1.0, max_step(S_, dSa));
    double mu_aff = 0.0;
    for (int b = 0; b < nb_; ++b) {
      mu_aff += (X_[b] + ap_aff * dXa[b]).cwiseProduct(S_[b] + ad_aff * dSa[b]).sum();
    }
    mu_aff /= n;
    const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

    Blocks corr(nb_);
    for (int b = 0; b < nb_; ++b) {
      corr[b] = is_psd(p_, b) ? Eigen::MatrixXd(dXa[b] * dSa[b]) : Eigen::MatrixXd(dXa[b].cwiseProduct(dSa[b]));
    }
    Blocks dX, dS;
    Eigen::VectorXd dy;
    direction(Sinv, Rd, Rp, sigma * mu, &corr, dX, dy, dS);
    const double ap = std::min(1.0, gamma * max_step(X_, dX));
    const double ad = std::min(1.0, gamma * max_step(S_, dS));
    if (!std::isfinite(ap) || !std::isfinite(ad) || !dy.allFinite()) {
      status = SdpStatus::numerical_failure;
      break;
    }
    stalled = (ap < 1e-10 && ad < 1e-10) ? stalled + 1 : 0;
    for (int b = 0; b < nb_; ++b) {
      X_[b] += ap * dX[b];
      S_[b] += ad * dS[b];
      if (is_psd(p_, b)) {
        X_[b] = 0.5 * (X_[b] + X_[b].transpose()).eval();
        S_[b] = 0.5 * (S_[b] + S_[b].transpose()).eval();
      }
    }
    y_ += ad * dy;
  }
  finish(out, status);
  return out;
}

}  // namespace

SdpSolution solve_sdp(const SdpProblem& problem, const SdpOptions& options) {
  Solver solver(problem, options);
  return solver.run();
}

void write_sdpa(const SdpProblem& p, std::ostream& os) {
  os << p.num_constraints() << " = number of constraints\n";
  os << p.blocks.size() << " = number of blocks\n";
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    os << (b ? " " : "") << (p.blocks[b].kind == BlockKind::diagonal ? -p.blocks[b].size : p.blocks[b].size);
  }
  os << '\n';
  os.precision(17);
  for (std::size_t k = 0; k < p.rhs.size(); ++k) os << (k ? " " : "") << p.rhs[k];
  os << '\n';
  for (const auto& e : p.objective) {
    os << 0 << ' ' << e.block + 1 << ' ' << e.row + 1 << ' ' << e.col + 1 << ' ' << e.value << '\n';
  }
  for (std::size_t k = 0; k < p.constraints.size(); ++k) {
    for (const auto& e : p.constraints[k]) {
      os << k + 1 << ' ' << e.block + 1 << ' ' << e.row + 1 << ' ' << e.col + 1 << ' ' << e.value << '\n';
    }
  }
}

}  // namespace ddclf
