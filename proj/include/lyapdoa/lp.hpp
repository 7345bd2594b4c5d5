#pragma once

// Inequality-form linear programs with an optional separable proximal term,
//
//   minimize    c'x + 1/2 sum_j q_j (x_j - x0_j)^2
//   subject to  A x <= b,   x >= lower,
//
// and a bundled Mehrotra predictor-corrector interior-point solver.
//
// The normal equations (Q + G'WG) dx = r are formed in one of two ways. When the
// columns split into a small "dense" set D and a set S in which no two columns
// share a row, the S block of the normal matrix is diagonal and is eliminated
// first (a Schur complement onto D); this is the elimination order a minimum
// degree ordering picks for the learner programs. Otherwise the sparse normal
// matrix is factored by SimplicialLDLT with AMD ordering.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "lyapdoa/error.hpp"

namespace lyapdoa {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SparseColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinearProgram {
  Eigen::VectorXd c;
  SparseRowMatrix A;  // A x <= b
  Eigen::VectorXd b;
  Eigen::VectorXd lower;  // -inf for free variables
  // Proximal term 1/2 sum q_j (x_j - x0_j)^2; both empty for a pure LP.
  Eigen::VectorXd q;
  Eigen::VectorXd x0;
  // Rows that may be distributed across consensus blocks (empty: none).
  std::vector<std::uint8_t> divisible;

  [[nodiscard]] Eigen::Index num_vars() const noexcept { return c.size(); }
  [[nodiscard]] Eigen::Index num_rows() const noexcept { return A.rows(); }
  [[nodiscard]] Eigen::Index nnz() const noexcept { return A.nonZeros(); }
  [[nodiscard]] bool has_proximal() const noexcept { return q.size() > 0; }

  void validate() const {
    const Eigen::Index n = c.size();
    if (A.cols() != n) throw Error("LP: A has " + std::to_string(A.cols()) + " columns, expected " + std::to_string(n));
    if (b.size() != A.rows()) throw Error("LP: b length does not match the row count");
    if (lower.size() != n) throw Error("LP: lower bound vector has wrong length");
    if (q.size() != 0) {
      if (q.size() != n || x0.size() != n) throw Error("LP: proximal term has wrong length");
      for (Eigen::Index j = 0; j < n; ++j)
        if (!(q[j] > 0.0)) throw Error("LP: proximal weights must be strictly positive");
    }
    if (!divisible.empty() && static_cast<Eigen::Index>(divisible.size()) != A.rows())
      throw Error("LP: divisible flags must cover every row");
    for (Eigen::Index j = 0; j < n; ++j)
      if (std::isnan(lower[j]) || lower[j] == kInf) throw Error("LP: lower bounds must be finite or -inf");
  }

  [[nodiscard]] double objective(const Eigen::VectorXd& x) const {
    double v = c.dot(x);
    if (has_proximal()) v += 0.5 * (q.array() * (x - x0).array().square()).sum();
    return v;
  }

  /// Largest violation of A x <= b and x >= lower (0 when feasible).
  [[nodiscard]] double max_violation(const Eigen::VectorXd& x) const {
    double v = 0.0;
    if (A.rows() > 0) v = std::max(v, ((A * x) - b).maxCoeff());
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (lower[j] > -kInf) v = std::max(v, lower[j] - x[j]);
    return v;
  }
};

/// Builds an LP with all variables free.
inline LinearProgram make_lp(Eigen::VectorXd c, SparseRowMatrix A, Eigen::VectorXd b) {
  LinearProgram lp;
  lp.lower = Eigen::VectorXd::Constant(c.size(), -kInf);
  lp.c = std::move(c);
  lp.A = std::move(A);
  lp.b = std::move(b);
  return lp;
}

struct SolverTolerances {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iters = 200;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::IterationLimit: return "iteration_limit";
  }
  return "?";
}

struct IterateRecord {
  int iter = 0;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double primal_residual = 0.0;  // relative
  double dual_residual = 0.0;    // relative
  double mu = 0.0;
};

struct SolveResult {
  SolveStatus status = SolveStatus::IterationLimit;
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // multipliers of A x <= b
  double obj = 0.0;
  double dual_obj = 0.0;
  double primal_residual = 0.0;  // max violation of the original constraints
  double dual_residual = 0.0;    // relative stationarity residual
  double gap = 0.0;              // relative duality gap
  int iterations = 0;
  double seconds = 0.0;
  std::string message;
  std::vector<IterateRecord> trace;
};

/// Any solver accepting the same standard form.
class LpBackend {
 public:
  virtual ~LpBackend() = default;
  virtual SolveResult solve(const LinearProgram& lp, const SolverTolerances& tol) const = 0;
};

namespace ipm_detail {

inline std::string residual_summary(double rp, double rd, double gap) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "primal %.2e, dual %.2e, gap %.2e", rp, rd, gap);
  return buf;
}

// Equilibrated copy of an LP: x = col .* x_s, rows multiplied by row.
struct Scaled {
  SparseRowMatrix A;
  Eigen::VectorXd b, c, q, x0, lower, row, col;
  double cost_scale = 1.0;
};

inline Scaled equilibrate(const LinearProgram& lp) {
  Scaled s;
  const Eigen::Index m = lp.A.rows(), n = lp.c.size();
  s.A = lp.A;
  s.row = Eigen::VectorXd::Ones(m);
  s.col = Eigen::VectorXd::Ones(n);
  for (int pass = 0; pass < 12; ++pass) {
    Eigen::VectorXd rmax = Eigen::VectorXd::Zero(m), cmax = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < m; ++i)
      for (SparseRowMatrix::InnerIterator it(s.A, i); it; ++it) {
        const double a = std::abs(it.value());
        rmax[i] = std::max(rmax[i], a);
        cmax[it.col()] = std::max(cmax[it.col()], a);
      }
    bool done = true;
    Eigen::VectorXd rs(m), cs(n);
    for (Eigen::Index i = 0; i < m; ++i) {
      rs[i] = rmax[i] > 0.0 ? 1.0 / std::sqrt(rmax[i]) : 1.0;
      if (std::abs(rmax[i] - 1.0) > 1e-2 && rmax[i] > 0.0) done = false;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      cs[j] = cmax[j] > 0.0 ? 1.0 / std::sqrt(cmax[j]) : 1.0;
      if (std::abs(cmax[j] - 1.0) > 1e-2 && cmax[j] > 0.0) done = false;
    }
    if (done) break;
    for (Eigen::Index i = 0; i < m; ++i)
      for (SparseRowMatrix::InnerIterator it(s.A, i); it; ++it) it.valueRef() *= rs[i] * cs[it.col()];
    s.row.array() *= rs.array();
    s.col.array() *= cs.array();
  }
  s.b = s.row.cwiseProduct(lp.b);
  s.c = s.col.cwiseProduct(lp.c);
  s.lower.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) s.lower[j] = lp.lower[j] > -kInf ? lp.lower[j] / s.col[j] : -kInf;
  if (lp.has_proximal()) {
    s.q = lp.q.cwiseProduct(s.col).cwiseProduct(s.col);
    s.x0 = lp.x0.cwiseQuotient(s.col);
  }
  // Normalise the cost so that interior-point tolerances are scale free.
  double cmax = s.c.size() ? s.c.cwiseAbs().maxCoeff() : 0.0;
  if (s.q.size()) cmax = std::max(cmax, s.q.maxCoeff());
  s.cost_scale = cmax > 0.0 ? 1.0 / cmax : 1.0;
  s.c *= s.cost_scale;
  if (s.q.size()) s.q *= s.cost_scale;
  return s;
}

// Solves (Q + A'WA + diag(d_bound) + reg I) dx = rhs.
class NormalSolver {
 public:
  NormalSolver(const SparseRowMatrix& A, Eigen::Index n) : A_(A), n_(n) {
    // Greedy column partition: a column joins S if none of its rows already
    // holds an S column.
    const Eigen::Index m = A.rows();
    std::vector<Eigen::Index> colnnz(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < m; ++i)
      for (SparseRowMatrix::InnerIterator it(A, i); it; ++it) ++colnnz[static_cast<std::size_t>(it.col())];
    SparseColMatrix Ac = A;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) order[static_cast<std::size_t>(j)] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return colnnz[a] < colnnz[b]; });
    std::vector<char> row_taken(static_cast<std::size_t>(m), 0);
    is_sparse_.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index j : order) {
      bool ok = true;
      for (SparseColMatrix::InnerIterator it(Ac, j); it; ++it)
        if (row_taken[static_cast<std::size_t>(it.row())]) {
          ok = false;
          break;
        }
      if (!ok) continue;
      is_sparse_[static_cast<std::size_t>(j)] = 1;
      for (SparseColMatrix::InnerIterator it(Ac, j); it; ++it) row_taken[static_cast<std::size_t>(it.row())] = 1;
    }
    for (Eigen::Index j = 0; j < n; ++j) (is_sparse_[j] ? sparse_ : dense_).push_back(j);
    structured_ = !sparse_.empty() && dense_.size() <= 1500 && m > 0 &&
                  static_cast<double>(dense_.size()) <= 0.5 * static_cast<double>(n) + 8.0;
    if (structured_) {
      dense_pos_.assign(static_cast<std::size_t>(n), -1);
      for (std::size_t k = 0; k < dense_.size(); ++k) dense_pos_[dense_[k]] = static_cast<Eigen::Index>(k);
      AD_ = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(dense_.size()));
      row_sparse_col_.assign(static_cast<std::size_t>(m), -1);
      row_sparse_val_.assign(static_cast<std::size_t>(m), 0.0);
      for (Eigen::Index i = 0; i < m; ++i)
        for (SparseRowMatrix::InnerIterator it(A, i); it; ++it) {
          if (is_sparse_[it.col()]) {
            row_sparse_col_[i] = it.col();
            row_sparse_val_[i] = it.value();
          } else {
            AD_(i, dense_pos_[it.col()]) = it.value();
          }
        }
      std::vector<Eigen::Index> slot(static_cast<std::size_t>(n), -1);
      for (std::size_t k = 0; k < sparse_.size(); ++k) slot[sparse_[k]] = static_cast<Eigen::Index>(k);
      group_rows_.assign(sparse_.size(), {});
      for (Eigen::Index i = 0; i < m; ++i) {
        if (row_sparse_col_[i] < 0) free_rows_.push_back(i);
        else group_rows_[slot[row_sparse_col_[i]]].push_back(i);
      }
      // The pairwise form costs k^2 per group; long groups use the generic path.
      std::size_t pairs = 0;
      for (const auto& g : group_rows_) pairs += g.size() * (g.size() + 1) / 2;
      if (pairs > 4 * static_cast<std::size_t>(m) + 64) structured_ = false;
    }
    if (!structured_) At_ = SparseColMatrix(A.transpose());
  }

  [[nodiscard]] bool structured() const noexcept { return structured_; }

  // diag_extra: per-variable diagonal (Q + bound terms); w: row weights.
  bool factor(const Eigen::VectorXd& w, const Eigen::VectorXd& diag_extra, double reg) {
    reg_ = reg;
    if (structured_) return factor_structured(w, diag_extra);
    return factor_generic(w, diag_extra);
  }

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (!structured_) return ldlt_.solve(rhs);
    const auto nd = static_cast<Eigen::Index>(dense_.size());
    Eigen::VectorXd rD(nd);
    for (Eigen::Index k = 0; k < nd; ++k) rD[k] = rhs[dense_[k]];
    for (std::size_t s = 0; s < sparse_.size(); ++s) rD.noalias() -= V_.row(static_cast<Eigen::Index>(s)).transpose() * (rhs[sparse_[s]] / msqrt_[s]);
    Eigen::VectorXd xD = dense_ldlt_.solve(rD);
    Eigen::VectorXd x(n_);
    for (Eigen::Index k = 0; k < nd; ++k) x[dense_[k]] = xD[k];
    for (std::size_t s = 0; s < sparse_.size(); ++s) {
      const double num = rhs[sparse_[s]] - msqrt_[s] * V_.row(static_cast<Eigen::Index>(s)).dot(xD);
      x[sparse_[s]] = num / (msqrt_[s] * msqrt_[s]);
    }
    return x;
  }

 private:
  bool factor_generic(const Eigen::VectorXd& w, const Eigen::VectorXd& diag_extra) {
    SparseColMatrix M = At_ * w.asDiagonal() * A_;
    for (Eigen::Index j = 0; j < n_; ++j) M.coeffRef(j, j) += diag_extra[j] + reg_;
    M.makeCompressed();
    if (!analyzed_) {
      ldlt_.analyzePattern(M);
      analyzed_ = true;
    }
    ldlt_.factorize(M);
    if (ldlt_.info() != Eigen::Success) {
      ldlt_.compute(M);
      return ldlt_.info() == Eigen::Success;
    }
    return true;
  }

  // K = A_D' W A_D + D_D - V V', assembled without the subtraction: for a
  // sparse column with rows i (coefficients a_i, dense parts g_i) and diagonal
  // d, its rows contribute
  //   [d sum_i w_i g_i g_i' + sum_{i<j} w_i w_j h_ij h_ij'] / (d + sum_i w_i a_i^2),
  //   h_ij = a_j g_i - a_i g_j,
  // which stays accurate when the weights span many orders of magnitude.
  bool factor_structured(const Eigen::VectorXd& w, const Eigen::VectorXd& diag_extra) {
    const auto nd = static_cast<Eigen::Index>(dense_.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nd, nd);
    for (Eigen::Index k = 0; k < nd; ++k) K(k, k) += diag_extra[dense_[k]] + reg_;

    std::vector<double> mdiag(sparse_.size());
    for (std::size_t s = 0; s < sparse_.size(); ++s) mdiag[s] = diag_extra[sparse_[s]] + reg_;
    V_.setZero(static_cast<Eigen::Index>(sparse_.size()), nd);
    // Rows with no sparse column enter directly.
    {
      Eigen::MatrixXd G(static_cast<Eigen::Index>(free_rows_.size()), nd);
      for (std::size_t r = 0; r < free_rows_.size(); ++r)
        G.row(static_cast<Eigen::Index>(r)) = std::sqrt(w[free_rows_[r]]) * AD_.row(free_rows_[r]);
      if (G.rows()) K.selfadjointView<Eigen::Lower>().rankUpdate(G.transpose());
    }
    Eigen::MatrixXd H;
    for (std::size_t s = 0; s < sparse_.size(); ++s) {
      const auto& rows = group_rows_[s];
      const double d = mdiag[s];
      double D = d;
      for (Eigen::Index i : rows) {
        const double a = row_sparse_val_[i];
        D += w[i] * a * a;
        V_.row(static_cast<Eigen::Index>(s)).noalias() += (a * w[i]) * AD_.row(i);
      }
      mdiag[s] = D;
      const std::size_t k = rows.size();
      H.resize(static_cast<Eigen::Index>(k + k * (k - 1) / 2), nd);
      Eigen::Index h = 0;
      for (std::size_t p = 0; p < k; ++p) H.row(h++) = std::sqrt(d * w[rows[p]] / D) * AD_.row(rows[p]);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = p + 1; q < k; ++q) {
          const Eigen::Index i = rows[p], j = rows[q];
          H.row(h++) = std::sqrt(w[i] * w[j] / D) * (row_sparse_val_[j] * AD_.row(i) - row_sparse_val_[i] * AD_.row(j));
        }
      if (h) K.selfadjointView<Eigen::Lower>().rankUpdate(H.topRows(h).transpose());
    }
    msqrt_.resize(sparse_.size());
    for (std::size_t s = 0; s < sparse_.size(); ++s) {
      msqrt_[s] = std::sqrt(mdiag[s]);
      V_.row(static_cast<Eigen::Index>(s)) /= msqrt_[s];
    }
    Eigen::MatrixXd Kfull = K.selfadjointView<Eigen::Lower>();
    dense_ldlt_.compute(Kfull);
    return dense_ldlt_.info() == Eigen::Success && dense_ldlt_.isPositive();
  }

  const SparseRowMatrix& A_;
  Eigen::Index n_;
  std::vector<char> is_sparse_;
  std::vector<Eigen::Index> sparse_, dense_, dense_pos_;
  bool structured_ = false;
  double reg_ = 0.0;

  Eigen::MatrixXd AD_;
  std::vector<Eigen::Index> row_sparse_col_;
  std::vector<double> row_sparse_val_;
  std::vector<std::vector<Eigen::Index>> group_rows_;
  std::vector<Eigen::Index> free_rows_;
  Eigen::MatrixXd V_;
  std::vector<double> msqrt_;
  Eigen::LDLT<Eigen::MatrixXd> dense_ldlt_;

  SparseColMatrix At_;
  Eigen::SimplicialLDLT<SparseColMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
};

inline double step_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

}  // namespace ipm_detail

/// Mehrotra predictor-corrector interior-point method on the equilibrated problem.
class InteriorPointSolver final : public LpBackend {
 public:
  bool record_trace = false;

  SolveResult solve(const LinearProgram& lp_in, const SolverTolerances& tol) const override {
    using Eigen::Index;
    using Eigen::VectorXd;
    const auto t_start = std::chrono::steady_clock::now();
    lp_in.validate();

    // Presolve: drop empty rows (an empty row with b < 0 is infeasible).
    LinearProgram lp_local;
    const LinearProgram* lpp = &lp_in;
    {
      std::vector<Index> keep;
      bool any_empty = false;
      for (Index i = 0; i < lp_in.A.rows(); ++i) {
        if (lp_in.A.row(i).nonZeros() == 0 || lp_in.A.row(i).norm() == 0.0) {
          any_empty = true;
          if (lp_in.b[i] < 0.0) {
            SolveResult r;
            r.status = SolveStatus::Infeasible;
            r.message = "row " + std::to_string(i) + " reads 0 <= " + std::to_string(lp_in.b[i]);
            r.x = VectorXd::Zero(lp_in.c.size());
            r.y = VectorXd::Zero(lp_in.A.rows());
            return r;
          }
        } else {
          keep.push_back(i);
        }
      }
      if (any_empty) {
        lp_local = lp_in;
        std::vector<Eigen::Triplet<double>> trip;
        VectorXd b(static_cast<Index>(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k) {
          for (SparseRowMatrix::InnerIterator it(lp_in.A, keep[k]); it; ++it)
            trip.emplace_back(static_cast<Index>(k), it.col(), it.value());
          b[static_cast<Index>(k)] = lp_in.b[keep[k]];
        }
        lp_local.A.resize(static_cast<Index>(keep.size()), lp_in.c.size());
        lp_local.A.setFromTriplets(trip.begin(), trip.end());
        lp_local.b = b;
        lp_local.divisible.clear();
        lpp = &lp_local;
      }
      SolveResult r = solve_presolved(*lpp, tol);
      if (any_empty) {
        VectorXd y = VectorXd::Zero(lp_in.A.rows());
        for (std::size_t k = 0; k < keep.size(); ++k) y[keep[k]] = r.y.size() ? r.y[static_cast<Index>(k)] : 0.0;
        r.y = y;
        if (r.x.size()) r.primal_residual = lp_in.max_violation(r.x);
      }
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      return r;
    }
  }

 private:
  SolveResult solve_presolved(const LinearProgram& lp, const SolverTolerances& tol) const {
    using Eigen::Index;
    using Eigen::VectorXd;
    const Index n = lp.c.size();
    const Index mA = lp.A.rows();
    const ipm_detail::Scaled S = ipm_detail::equilibrate(lp);
    const bool prox = lp.has_proximal();

    std::vector<Index> bnd;
    for (Index j = 0; j < n; ++j)
      if (S.lower[j] > -kInf) bnd.push_back(j);
    const Index mB = static_cast<Index>(bnd.size());
    const Index m = mA + mB;

    SolveResult res;
    res.x = VectorXd::Zero(n);
    res.y = VectorXd::Zero(mA);

    VectorXd lB(mB);
    for (Index k = 0; k < mB; ++k) lB[k] = S.lower[bnd[k]];
    // G x <= h with G = [A; -E_B], h = [b; -lB].
    auto G_mul = [&](const VectorXd& x) {
      VectorXd out(m);
      if (mA) out.head(mA) = S.A * x;
      for (Index k = 0; k < mB; ++k) out[mA + k] = -x[bnd[k]];
      return out;
    };
    auto Gt_mul = [&](const VectorXd& y) {
      VectorXd out = VectorXd::Zero(n);
      if (mA) out = S.A.transpose() * y.head(mA);
      for (Index k = 0; k < mB; ++k) out[bnd[k]] -= y[mA + k];
      return out;
    };
    VectorXd h(m);
    h.head(mA) = S.b;
    h.tail(mB) = -lB;
    VectorXd qd = prox ? S.q : VectorXd::Zero(n);
    VectorXd x0 = prox ? S.x0 : VectorXd::Zero(n);

    if (m == 0) {
      // Unconstrained: only a strictly convex proximal problem has a minimiser.
      if (!prox) {
        const bool zero = S.c.cwiseAbs().maxCoeff() == 0.0 || n == 0;
        res.status = zero ? SolveStatus::Optimal : SolveStatus::Unbounded;
        res.obj = 0.0;
        return res;
      }
      VectorXd xs = x0 - S.c.cwiseQuotient(qd);
      res.x = xs.cwiseProduct(S.col);
      res.obj = lp.objective(res.x);
      res.dual_obj = res.obj;
      res.status = SolveStatus::Optimal;
      return res;
    }

    ipm_detail::NormalSolver normal(S.A, n);
    const double hnorm = 1.0 + h.cwiseAbs().maxCoeff();
    const double cnorm = 1.0 + S.c.cwiseAbs().maxCoeff();
    // Regularisation restarts small at every factorisation; a large value
    // kept from an earlier iteration would bias all later Newton steps.
    double reg = 1e-10;
    auto factor = [&](const VectorXd& w) {
      VectorXd extra = qd;
      for (Index k = 0; k < mB; ++k) extra[bnd[k]] += w[mA + k];
      VectorXd wA = w.head(mA);
      reg = 1e-10;
      for (int attempt = 0; attempt < 10; ++attempt) {
        if (normal.factor(wA, extra, reg)) return true;
        reg *= 100.0;
      }
      return false;
    };
    auto solve_normal = [&](const VectorXd& rhs) { return normal.solve(rhs); };

    // Starting point: least-squares primal, minimum-norm dual, then shifted
    // into the interior.
    VectorXd x, s, y;
    {
      if (!factor(VectorXd::Ones(m))) {
        res.status = SolveStatus::IterationLimit;
        res.message = "normal equations could not be factored at the starting point";
        return res;
      }
      x = solve_normal(Gt_mul(h) + qd.cwiseProduct(x0));
      s = h - G_mul(x);
      VectorXd t = solve_normal(-(S.c));
      y = -G_mul(t);  // y = -G (G'G)^-1 c
      const double ds = std::max(-1.5 * s.minCoeff(), 0.0);
      const double dy = std::max(-1.5 * y.minCoeff(), 0.0);
      s.array() += ds;
      y.array() += dy;
      const double sy = s.dot(y);
      s.array() += 0.5 * sy / std::max(y.sum(), 1e-300);
      y.array() += 0.5 * sy / std::max(s.sum(), 1e-300);
      s = s.cwiseMax(1e-4);
      y = y.cwiseMax(1e-4);
    }

    auto primal_obj = [&](const VectorXd& xv) {
      double v = S.c.dot(xv);
      if (prox) v += 0.5 * (qd.array() * (xv - x0).array().square()).sum();
      return v;
    };

    int iter = 0;
    SolveStatus status = SolveStatus::IterationLimit;
    double rp_rel = 0, rd_rel = 0, gap_rel = 0, pobj = 0, dobj = 0;
    // Best iterate by the worst tolerance ratio. Near the end the normal
    // equations lose accuracy and the residuals can drift back up.
    struct Snapshot {
      VectorXd x, s, y;
      double score = kInf, rp = 0, rd = 0, gap = 0, pobj = 0, dobj = 0;
      int iter = -1;
    } best;
    constexpr int kStallIters = 15;
    constexpr double kStallWindow = 1e4;
    constexpr double kRelaxed = 100.0;
    constexpr double kLooseDual = 1e-4, kLooseGap = 1e-5;
    for (; iter < tol.max_iters; ++iter) {
      const VectorXd Gx = G_mul(x);
      const VectorXd rp = Gx + s - h;
      VectorXd rd = S.c + Gt_mul(y);
      if (prox) rd += qd.cwiseProduct(x - x0);
      const double mu = s.dot(y) / static_cast<double>(m);
      pobj = primal_obj(x);
      // Lagrangian dual value at the current (x, y).
      dobj = pobj + y.dot(Gx - h);
      rp_rel = rp.cwiseAbs().maxCoeff() / hnorm;
      rd_rel = rd.cwiseAbs().maxCoeff() / cnorm;
      gap_rel = s.dot(y) / (1.0 + std::abs(pobj));
      if (record_trace) res.trace.push_back({iter, pobj / S.cost_scale, dobj / S.cost_scale, rp_rel, rd_rel, mu});

      if (rp_rel <= tol.feas_tol && rd_rel <= tol.feas_tol && gap_rel <= tol.gap_tol) {
        status = SolveStatus::Optimal;
        break;
      }
      const double score = std::max({rp_rel / tol.feas_tol, rd_rel / tol.feas_tol, gap_rel / tol.gap_tol});
      if (score < best.score) {
        best = {x, s, y, score, rp_rel, rd_rel, gap_rel, pobj, dobj, iter};
      } else if (best.score <= kStallWindow && iter - best.iter >= kStallIters) {
        // Only near convergence: early on the relative gap can rise while the
        // objective drops, which is progress.
        res.message = "stalled after iteration " + std::to_string(best.iter);
        break;
      }
      // Infeasibility certificate: y >= 0, G'y ~ 0, h'y < 0.
      {
        const double hy = h.dot(y);
        if (hy < 0.0) {
          VectorXd gty = Gt_mul(y);
          if (gty.cwiseAbs().maxCoeff() <= 1e-9 * std::abs(hy) * cnorm && y.maxCoeff() > 1e6) {
            status = SolveStatus::Infeasible;
            break;
          }
        }
        const double cx = S.c.dot(x);
        if (!prox && cx < 0.0 && x.cwiseAbs().maxCoeff() > 1e8) {
          VectorXd dir = x / std::abs(cx);
          VectorXd gd = G_mul(dir);
          double viol = 0.0;
          for (Index i = 0; i < m; ++i) viol = std::max(viol, gd[i]);
          if (viol <= 1e-7) {
            status = SolveStatus::Unbounded;
            break;
          }
        }
      }

      VectorXd w = y.cwiseQuotient(s);
      if (!factor(w)) {
        res.message = "normal equations breakdown at iteration " + std::to_string(iter);
        break;
      }
      auto newton = [&](const VectorXd& rc, VectorXd& dx, VectorXd& ds, VectorXd& dy) {
        // dy = W (G dx + rp) - S^-1 rc ; (Q + G'WG) dx = -rd - G'(W rp - S^-1 rc)
        VectorXd t = w.cwiseProduct(rp) - rc.cwiseQuotient(s);
        VectorXd rhs = -rd - Gt_mul(t);
        dx = solve_normal(rhs);
        // Iterative refinement against the unregularised operator, while it helps.
        double last = kInf;
        for (int k = 0; k < 3; ++k) {
          VectorXd Mdx = Gt_mul(w.cwiseProduct(G_mul(dx)));
          if (prox) Mdx += qd.cwiseProduct(dx);
          VectorXd r2 = rhs - Mdx;
          const double rn = r2.cwiseAbs().maxCoeff();
          if (!(rn < 0.5 * last)) break;
          last = rn;
          dx += solve_normal(r2);
        }
        const VectorXd Gdx = G_mul(dx);
        dy = w.cwiseProduct(Gdx + rp) - rc.cwiseQuotient(s);
        ds = -rp - Gdx;
      };
      VectorXd dxa, dsa, dya;
      newton(s.cwiseProduct(y), dxa, dsa, dya);
      double ap = ipm_detail::step_to_boundary(s, dsa);
      double ad = ipm_detail::step_to_boundary(y, dya);
      if (prox) ap = ad = std::min(ap, ad);
      const double mu_aff = (s + ap * dsa).dot(y + ad * dya) / static_cast<double>(m);
      const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      VectorXd rc = s.cwiseProduct(y) + dsa.cwiseProduct(dya);
      rc.array() -= sigma * mu;
      VectorXd dx, ds, dy;
      newton(rc, dx, ds, dy);
      ap = std::min(1.0, 0.995 * ipm_detail::step_to_boundary(s, ds) / 1.0);
      ad = std::min(1.0, 0.995 * ipm_detail::step_to_boundary(y, dy) / 1.0);
      if (prox) ap = ad = std::min(ap, ad);
      x += ap * dx;
      s += ap * ds;
      y += ad * dy;
      s = s.cwiseMax(1e-300);
      y = y.cwiseMax(1e-300);
      if (!x.allFinite() || !y.allFinite()) {
        res.message = "non-finite iterate at iteration " + std::to_string(iter);
        break;
      }
    }

    if (status == SolveStatus::IterationLimit && best.iter >= 0) {
      x = best.x;
      y = best.y;
      rp_rel = best.rp;
      rd_rel = best.rd;
      gap_rel = best.gap;
      dobj = best.dobj;
      // A primal-feasible point whose dual residual and gap are small in
      // absolute terms is still a usable optimum.
      const bool loose = best.rp <= tol.feas_tol && best.rd <= kLooseDual && best.gap <= kLooseGap;
      if (best.score <= kRelaxed || loose) {
        status = SolveStatus::Optimal;
        res.message = "reduced accuracy (" + ipm_detail::residual_summary(rp_rel, rd_rel, gap_rel) + ")";
      }
    }
    res.status = status;
    res.iterations = iter;
    res.x = x.cwiseProduct(S.col);
    res.y = y.head(mA).cwiseProduct(S.row) / S.cost_scale;
    res.obj = lp.objective(res.x);
    res.dual_obj = dobj / S.cost_scale;
    res.dual_residual = rd_rel;
    res.gap = gap_rel;
    res.primal_residual = lp.max_violation(res.x);
    if (status == SolveStatus::IterationLimit)
      res.message = (res.message.empty() ? std::string("iteration limit reached") : res.message) + " (" +
                    ipm_detail::residual_summary(rp_rel, rd_rel, gap_rel) + ")";
    if (status == SolveStatus::Infeasible) res.message = "dual ray found: problem is primal infeasible";
    if (status == SolveStatus::Unbounded) res.message = "primal ray found: objective unbounded below";
    return res;
  }
};

inline SolveResult solve_lp(const LinearProgram& lp, const SolverTolerances& tol = {}) {
  if (lp.has_proximal()) throw Error("solve_lp: program has a proximal term, use solve_qp_diag");
  return InteriorPointSolver{}.solve(lp, tol);
}

inline SolveResult solve_qp_diag(const LinearProgram& lp, const SolverTolerances& tol = {}) {
  if (!lp.has_proximal()) throw Error("solve_qp_diag: program has no proximal term");
  // Callers consume the minimiser itself, so the gap target is tightened.
  SolverTolerances t = tol;
  t.gap_tol = std::min(t.gap_tol, 1e-11);
  t.feas_tol = std::min(t.feas_tol, 1e-10);
  return InteriorPointSolver{}.solve(lp, t);
}

// ---------------------------------------------------------------------------
// Plain-text triplet format:
//
//   lyapdoa-lp 1
//   vars <n> rows <m> nnz <k> proximal <0|1>
//   c <j> <value>          one line per nonzero cost
//   b <i> <value>          one line per row
//   a <i> <j> <value>      one line per nonzero of A
//   lb <j> <value>         one line per finite lower bound
//   q <j> <weight> <x0>    one line per variable when proximal = 1
//   d <i>                  one line per divisible row
//
// Indices are 0-based; values use shortest round-trip formatting.

inline void write_lp(std::ostream& os, const LinearProgram& lp) {
  auto num = [](double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
  };
  os << "lyapdoa-lp 1\n";
  os << "vars " << lp.num_vars() << " rows " << lp.num_rows() << " nnz " << lp.nnz() << " proximal "
     << (lp.has_proximal() ? 1 : 0) << "\n";
  for (Eigen::Index j = 0; j < lp.c.size(); ++j)
    if (lp.c[j] != 0.0) os << "c " << j << " " << num(lp.c[j]) << "\n";
  for (Eigen::Index i = 0; i < lp.b.size(); ++i) os << "b " << i << " " << num(lp.b[i]) << "\n";
  for (Eigen::Index i = 0; i < lp.A.rows(); ++i)
    for (SparseRowMatrix::InnerIterator it(lp.A, i); it; ++it)
      os << "a " << i << " " << it.col() << " " << num(it.value()) << "\n";
  for (Eigen::Index j = 0; j < lp.lower.size(); ++j)
    if (lp.lower[j] > -kInf) os << "lb " << j << " " << num(lp.lower[j]) << "\n";
  if (lp.has_proximal())
    for (Eigen::Index j = 0; j < lp.q.size(); ++j) os << "q " << j << " " << num(lp.q[j]) << " " << num(lp.x0[j]) << "\n";
  for (std::size_t i = 0; i < lp.divisible.size(); ++i)
    if (lp.divisible[i]) os << "d " << i << "\n";
}

inline LinearProgram read_lp(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "lyapdoa-lp" || version != 1) throw Error("not a lyapdoa-lp v1 file");
  std::string kw;
  Eigen::Index n = 0, m = 0, nnz = 0;
  int prox = 0;
  is >> kw >> n >> kw >> m >> kw >> nnz >> kw >> prox;
  if (!is) throw Error("malformed LP header");
  LinearProgram lp;
  lp.c = Eigen::VectorXd::Zero(n);
  lp.b = Eigen::VectorXd::Zero(m);
  lp.lower = Eigen::VectorXd::Constant(n, -kInf);
  if (prox) {
    lp.q = Eigen::VectorXd::Ones(n);
    lp.x0 = Eigen::VectorXd::Zero(n);
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(nnz));
  std::vector<std::uint8_t> div(static_cast<std::size_t>(m), 0);
  bool any_div = false;
  auto in_range = [](Eigen::Index v, Eigen::Index hi) {
    if (v < 0 || v >= hi) throw Error("LP file index out of range");
    return v;
  };
  while (is >> kw) {
    if (kw == "c") {
      Eigen::Index j;
      double v;
      is >> j >> v;
      lp.c[in_range(j, n)] = v;
    } else if (kw == "b") {
      Eigen::Index i;
      double v;
      is >> i >> v;
      lp.b[in_range(i, m)] = v;
    } else if (kw == "a") {
      Eigen::Index i, j;
      double v;
      is >> i >> j >> v;
      trip.emplace_back(in_range(i, m), in_range(j, n), v);
    } else if (kw == "lb") {
      Eigen::Index j;
      double v;
      is >> j >> v;
      lp.lower[in_range(j, n)] = v;
    } else if (kw == "q") {
      Eigen::Index j;
      double w, x0;
      is >> j >> w >> x0;
      if (!prox) throw Error("LP file has q lines but proximal = 0");
      lp.q[in_range(j, n)] = w;
      lp.x0[j] = x0;
    } else if (kw == "d") {
      Eigen::Index i;
      is >> i;
      div[static_cast<std::size_t>(in_range(i, m))] = 1;
      any_div = true;
    } else {
      throw Error("unknown LP file record '" + kw + "'");
    }
    if (!is) throw Error("malformed LP record '" + kw + "'");
  }
  lp.A.resize(m, n);
  lp.A.setFromTriplets(trip.begin(), trip.end());
  if (any_div) lp.divisible = std::move(div);
  lp.validate();
  return lp;
}

}  // namespace lyapdoa
