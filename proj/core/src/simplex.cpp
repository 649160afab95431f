#include "dmpc/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dmpc {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kFeasTol = 1e-8;

// Standard-form tableau data: min c^T x, A x = b, x >= 0.
struct StandardForm {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  // map back: x_orig[j] = shift[j] + sign[j] * x_std[pos[j]] (+ optional split)
  struct BackMap {
    double shift = 0.0;
    double sign = 1.0;
    int pos = -1;
    int neg = -1; // second column for free splits
  };
  std::vector<BackMap> back;
};

StandardForm to_standard(const LpProblem& p) {
  const int n = static_cast<int>(p.c.size());
  const int m = static_cast<int>(p.b.size());
  const double inf = LpProblem::inf;

  StandardForm sf;
  sf.back.resize(n);

  // Count standard columns and extra upper-bound rows.
  std::vector<int> ub_row_var;
  int cols = 0;
  for (int j = 0; j < n; ++j) {
    const double lo = p.lo(j), hi = p.hi(j);
    if (lo == -inf && hi == inf) {
      sf.back[j] = {0.0, 1.0, cols, cols + 1};
      cols += 2;
    } else if (lo != -inf) {
      sf.back[j] = {lo, 1.0, cols, -1};
      if (hi != inf) ub_row_var.push_back(j);
      cols += 1;
    } else {
      // lo = -inf, hi finite: x = hi - x'
      sf.back[j] = {hi, -1.0, cols, -1};
      cols += 1;
    }
  }
  const int n_ub = static_cast<int>(ub_row_var.size());
  int n_slack = 0;
  for (char s : p.sense)
    if (s != 'E') ++n_slack;
  n_slack += n_ub;

  const int rows = m + n_ub;
  sf.A.setZero(rows, cols + n_slack);
  sf.b.setZero(rows);
  sf.c.setZero(cols + n_slack);

  // objective and constraint coefficients through the substitution
  for (int j = 0; j < n; ++j) {
    const auto& bm = sf.back[j];
    sf.c(bm.pos) += p.c(j) * bm.sign;
    if (bm.neg >= 0) sf.c(bm.neg) -= p.c(j);
  }
  for (int i = 0; i < m; ++i) {
    double rhs = p.b(i);
    for (int j = 0; j < n; ++j) {
      const double a = p.A(i, j);
      if (a == 0.0) continue;
      const auto& bm = sf.back[j];
      sf.A(i, bm.pos) += a * bm.sign;
      if (bm.neg >= 0) sf.A(i, bm.neg) -= a;
      rhs -= a * bm.shift;
    }
    sf.b(i) = rhs;
  }
  // upper-bound rows x'_j <= hi - lo
  for (int k = 0; k < n_ub; ++k) {
    const int j = ub_row_var[k];
    sf.A(m + k, sf.back[j].pos) = 1.0;
    sf.b(m + k) = p.hi(j) - p.lo(j);
  }
  // slacks
  int sc = cols;
  for (int i = 0; i < m; ++i) {
    if (p.sense[i] == 'L')
      sf.A(i, sc++) = 1.0;
    else if (p.sense[i] == 'G')
      sf.A(i, sc++) = -1.0;
  }
  for (int k = 0; k < n_ub; ++k) sf.A(m + k, sc++) = 1.0;

  // normalize b >= 0
  for (int i = 0; i < rows; ++i) {
    if (sf.b(i) < 0) {
      sf.A.row(i) = -sf.A.row(i);
      sf.b(i) = -sf.b(i);
    }
  }
  return sf;
}

// Revised simplex with an explicitly maintained basis inverse and Bland's
// rule. Returns false on iteration limit.
struct SimplexCore {
  const Eigen::MatrixXd& A;
  const Eigen::VectorXd& b;
  Eigen::VectorXd c;
  std::vector<int> basis;
  Eigen::MatrixXd Binv;
  Eigen::VectorXd xb;
  long iterations_left;
  int price_limit; ///< only columns < price_limit may enter the basis
  bool hit_limit = false;

  SimplexCore(const Eigen::MatrixXd& A_, const Eigen::VectorXd& b_, long limit)
      : A(A_), b(b_), iterations_left(limit), price_limit(static_cast<int>(A_.cols())) {}

  void refactor() {
    const int m = static_cast<int>(A.rows());
    Eigen::MatrixXd B(m, m);
    for (int i = 0; i < m; ++i) B.col(i) = A.col(basis[i]);
    Binv = B.partialPivLu().inverse();
    xb = Binv * b;
  }

  // returns LpStatus::optimal or unbounded (or iteration_limit)
  LpStatus minimize() {
    constexpr double kStablePivot = 1e-7;
    const int m = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    int since_refactor = 0;
    std::vector<char> skip(n, 0); // columns with no numerically usable pivot
    while (iterations_left-- > 0) {
      Eigen::VectorXd cb(m);
      for (int i = 0; i < m; ++i) cb(i) = c(basis[i]);
      Eigen::RowVectorXd y = cb.transpose() * Binv;
      if (!y.allFinite()) {
        refactor();
        if (!Binv.allFinite()) return LpStatus::iteration_limit;
        continue;
      }

      // Bland: entering variable = lowest eligible index with negative
      // reduced cost
      std::vector<char> in_basis(n, 0);
      for (int i = 0; i < m; ++i) in_basis[basis[i]] = 1;
      int enter = -1;
      bool any_negative = false;
      for (int j = 0; j < price_limit; ++j) {
        if (in_basis[j]) continue;
        const double rj = c(j) - y * A.col(j);
        if (rj < -kPivotTol) {
          any_negative = true;
          if (!skip[j]) {
            enter = j;
            break;
          }
        }
      }
      if (!any_negative) return LpStatus::optimal;
      if (enter < 0) return LpStatus::iteration_limit; // only unusable columns left

      Eigen::VectorXd d = Binv * A.col(enter);
      auto choose_leave = [&](double pivot_floor) {
        int leave = -1;
        double best_ratio = 0.0;
        for (int i = 0; i < m; ++i) {
          if (d(i) > pivot_floor) {
            const double ratio = xb(i) / d(i);
            if (leave < 0 || ratio < best_ratio - kPivotTol ||
                (ratio < best_ratio + kPivotTol && basis[i] < basis[leave])) {
              leave = i;
              best_ratio = ratio;
            }
          }
        }
        return leave;
      };

      int leave = choose_leave(kStablePivot);
      if (leave < 0) {
        if ((d.array() > kPivotTol).any()) {
          // only marginal pivots: refactor once and retry this column, then
          // sideline it so Bland can move on
          refactor();
          d = Binv * A.col(enter);
          leave = choose_leave(kStablePivot);
          if (leave < 0) {
            skip[enter] = 1;
            continue;
          }
        } else {
          return LpStatus::unbounded;
        }
      }

      // eta update of Binv and basic solution
      const double piv = d(leave);
      Eigen::RowVectorXd pivot_row = Binv.row(leave) / piv;
      for (int i = 0; i < m; ++i) {
        if (i == leave) continue;
        Binv.row(i) -= d(i) * pivot_row;
      }
      Binv.row(leave) = pivot_row;
      basis[leave] = enter;
      xb = Binv * b;
      std::fill(skip.begin(), skip.end(), 0);
      if (!xb.allFinite()) {
        refactor();
        if (!xb.allFinite()) return LpStatus::iteration_limit;
      }
      // guard against drift
      if (++since_refactor >= 64) {
        refactor();
        since_refactor = 0;
      }
      for (int i = 0; i < m; ++i)
        if (xb(i) < -kFeasTol) {
          refactor();
          break;
        }
    }
    hit_limit = true;
    return LpStatus::iteration_limit;
  }
};

} // namespace

LpProblem LpProblem::free_variables(int n) {
  LpProblem p;
  p.A.resize(0, n);
  p.b.resize(0);
  p.c = Eigen::VectorXd::Zero(n);
  p.lo = Eigen::VectorXd::Constant(n, -inf);
  p.hi = Eigen::VectorXd::Constant(n, inf);
  return p;
}

int LpProblem::add_row(const Eigen::VectorXd& coeffs, char s, double rhs) {
  if (coeffs.size() != A.cols()) throw std::invalid_argument("LpProblem::add_row: size mismatch");
  const int r = static_cast<int>(A.rows());
  A.conservativeResize(r + 1, Eigen::NoChange);
  A.row(r) = coeffs.transpose();
  b.conservativeResize(r + 1);
  b(r) = rhs;
  sense.push_back(s);
  return r;
}

LpSolution solve_lp(const LpProblem& problem, long max_iterations) {
  StandardForm sf = to_standard(problem);
  const int m = static_cast<int>(sf.A.rows());
  const int n = static_cast<int>(sf.A.cols());

  LpSolution out;
  if (m == 0) {
    // no rows: optimum is at the (shifted) origin unless some cost pushes a
    // free/unbounded direction
    for (int j = 0; j < n; ++j)
      if (sf.c(j) < -kPivotTol) {
        out.status = LpStatus::unbounded;
        return out;
      }
    out.status = LpStatus::optimal;
    out.x.resize(problem.c.size());
    for (int j = 0; j < out.x.size(); ++j) out.x(j) = sf.back[j].shift;
    out.objective = problem.c.dot(out.x);
    return out;
  }

  // Phase 1 with artificials on every row.
  Eigen::MatrixXd A1(m, n + m);
  A1.leftCols(n) = sf.A;
  A1.rightCols(m) = Eigen::MatrixXd::Identity(m, m);
  SimplexCore core(A1, sf.b, max_iterations);
  core.c = Eigen::VectorXd::Zero(n + m);
  core.c.tail(m).setOnes();
  core.basis.resize(m);
  for (int i = 0; i < m; ++i) core.basis[i] = n + i;
  core.refactor();
  LpStatus st1 = core.minimize();
  if (st1 == LpStatus::iteration_limit) {
    out.status = LpStatus::iteration_limit;
    return out;
  }
  double phase1 = 0.0;
  for (int i = 0; i < m; ++i)
    if (core.basis[i] >= n) phase1 += core.xb(i);
  if (phase1 > 1e-7) {
    out.status = LpStatus::infeasible;
    return out;
  }
  // Drive remaining artificials out of the basis where possible.
  for (int i = 0; i < m; ++i) {
    if (core.basis[i] < n) continue;
    int replacement = -1;
    Eigen::RowVectorXd row = core.Binv.row(i);
    for (int j = 0; j < n; ++j) {
      if (std::abs(row * sf.A.col(j)) > 1e-7) {
        bool in_basis = false;
        for (int t = 0; t < m; ++t)
          if (core.basis[t] == j) {
            in_basis = true;
            break;
          }
        if (!in_basis) {
          replacement = j;
          break;
        }
      }
    }
    if (replacement >= 0) {
      core.basis[i] = replacement;
      core.refactor();
    }
    // else: redundant row, artificial stays basic at level zero
  }

  // Phase 2: artificials keep zero cost but are barred from entering.
  core.c.setZero();
  core.c.head(n) = sf.c;
  core.price_limit = n;
  LpStatus st2 = core.minimize();
  if (st2 == LpStatus::iteration_limit) {
    out.status = LpStatus::iteration_limit;
    return out;
  }
  if (st2 == LpStatus::unbounded) {
    out.status = LpStatus::unbounded;
    return out;
  }

  Eigen::VectorXd xs = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i)
    if (core.basis[i] < n) xs(core.basis[i]) = core.xb(i);
  // residual sanity check (redundant rows keep artificials basic at level 0;
  // anything bigger is a numerical failure)
  const double resid = (sf.A * xs - sf.b).cwiseAbs().maxCoeff();
  if (!xs.allFinite() || !(resid <= 1e-6 * (1.0 + sf.b.cwiseAbs().maxCoeff()))) {
    out.status = LpStatus::iteration_limit;
    return out;
  }
  out.status = LpStatus::optimal;
  out.x.resize(problem.c.size());
  for (int j = 0; j < out.x.size(); ++j) {
    const auto& bm = sf.back[j];
    double v = bm.shift + bm.sign * xs(bm.pos);
    if (bm.neg >= 0) v -= xs(bm.neg);
    out.x(j) = v;
  }
  out.objective = problem.c.dot(out.x);
  return out;
}

double support_function(const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                        const Eigen::VectorXd& a) {
  LpProblem p = LpProblem::free_variables(static_cast<int>(a.size()));
  p.A = C;
  p.b = d;
  p.sense.assign(C.rows(), 'L');
  p.c = -a;
  LpSolution sol = solve_lp(p);
  if (sol.status == LpStatus::unbounded) return LpProblem::inf;
  if (sol.status != LpStatus::optimal)
    throw std::runtime_error("support_function: LP solve failed");
  return -sol.objective;
}

} // namespace dmpc
