#include "dmpc/solver.hpp"

#include "dmpc/simplex.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <vector>

namespace dmpc {

namespace {

// Row-partitioned sparse matrix-vector product. Each output element is
// written by exactly one worker using the serial summation order, so the
// parallel result is bitwise equal to the serial one.
void spmv(const SparseRowMajor& M, const Eigen::VectorXd& x, Eigen::VectorXd& out,
          int threads) {
  const int rows = static_cast<int>(M.rows());
  out.resize(rows);
  auto work = [&](int r0, int r1) {
    for (int r = r0; r < r1; ++r) {
      double acc = 0.0;
      for (SparseRowMajor::InnerIterator it(M, r); it; ++it) acc += it.value() * x(it.col());
      out(r) = acc;
    }
  };
  if (threads <= 1 || rows < 2 * threads) {
    work(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (rows + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int r0 = t * chunk;
    const int r1 = std::min(rows, r0 + chunk);
    if (r0 >= r1) break;
    pool.emplace_back(work, r0, r1);
  }
  for (auto& th : pool) th.join();
}

void axpy_range(int i0, int i1, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                double beta, Eigen::VectorXd& out) {
  for (int i = i0; i < i1; ++i) out(i) = a(i) + beta * (a(i) - b(i));
}

// out = a + beta (a - b), partitioned
void extrapolate(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double beta,
                 Eigen::VectorXd& out, int threads) {
  const int n = static_cast<int>(a.size());
  out.resize(n);
  if (threads <= 1 || n < 2 * threads) {
    axpy_range(0, n, a, b, beta, out);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int i0 = t * chunk;
    const int i1 = std::min(n, i0 + chunk);
    if (i0 >= i1) break;
    pool.emplace_back(axpy_range, i0, i1, std::cref(a), std::cref(b), beta, std::ref(out));
  }
  for (auto& th : pool) th.join();
}

} // namespace

AgmState AgmState::make(const MpcProblem& prob, const Eigen::VectorXd& xbar, double delta,
                        double lipschitz_constant) {
  AgmState s;
  s.prob = &prob;
  s.xbar = xbar;
  s.delta = delta;
  s.L = lipschitz_constant;
  s.bxbar = prob.bx(xbar);
  s.rhs_ineq = (1.0 - delta) * prob.d;
  s.reset();
  return s;
}

void AgmState::reset() {
  k = 0;
  cur.lambda = Eigen::VectorXd::Zero(prob->neq());
  cur.mu = Eigen::VectorXd::Zero(prob->nineq());
  prev = cur;
  y_prev = Eigen::VectorXd::Zero(prob->ny());
}

void AgmState::restart_momentum() {
  prev = cur;
  y_prev = primal_recover(*prob, cur);
  k = 0;
}

void AgmState::set_delta(double new_delta) {
  delta = new_delta;
  rhs_ineq = (1.0 - new_delta) * prob->d;
}

void agm_step(AgmState& s, const AgmOptions& opts) {
  const MpcProblem& p = *s.prob;
  const int threads = opts.threads;
  const double beta = static_cast<double>(s.k - 1) / static_cast<double>(s.k + 2);
  const double inv_l = 1.0 / s.L;

  // y^k = -H^{-1}(A^T lambda^k + C^T mu^k)
  Eigen::VectorXd ga, gc;
  spmv(p.AeqT, s.cur.lambda, ga, threads);
  spmv(p.CT, s.cur.mu, gc, threads);
  Eigen::VectorXd y = -p.apply_Hinv(ga + gc);

  // ybar^k = y^k + beta (y^k - y^{k-1})
  Eigen::VectorXd ybar;
  extrapolate(y, s.y_prev, beta, ybar, threads);

  Eigen::VectorXd grad_eq, grad_in;
  spmv(p.Aeq, ybar, grad_eq, threads);
  spmv(p.C, ybar, grad_in, threads);

  Eigen::VectorXd lambda_next(p.neq()), mu_next(p.nineq());
  for (int i = 0; i < p.neq(); ++i)
    lambda_next(i) = s.cur.lambda(i) + beta * (s.cur.lambda(i) - s.prev.lambda(i)) +
                     inv_l * (grad_eq(i) - s.bxbar(i));
  for (int i = 0; i < p.nineq(); ++i)
    mu_next(i) = std::max(0.0, s.cur.mu(i) + beta * (s.cur.mu(i) - s.prev.mu(i)) +
                                   inv_l * (grad_in(i) - s.rhs_ineq(i)));

  s.prev = std::move(s.cur);
  s.cur.lambda = std::move(lambda_next);
  s.cur.mu = std::move(mu_next);
  s.y_prev = std::move(y);
  ++s.k;
}

void run(AgmState& s, long dk, const AgmOptions& opts) {
  if (dk < 1) throw std::invalid_argument("run: dk must be >= 1");
  for (long i = 0; i < dk; ++i) agm_step(s, opts);
}

namespace {

struct KktResiduals {
  double eq = 0.0;
  double ineq = 0.0;
  double comp = 0.0;
  double total() const { return std::max({eq, ineq, comp}); }
};

KktResiduals kkt_residuals(const MpcProblem& p, const Eigen::VectorXd& xbar, double delta,
                           const Eigen::VectorXd& y, const DualPoint& pt) {
  KktResiduals r;
  const Eigen::VectorXd bx = p.bx(xbar);
  const Eigen::VectorXd rhs = (1.0 - delta) * p.d;
  r.eq = (p.Aeq * y - bx).norm() / (1.0 + bx.norm());
  const Eigen::VectorXd slack = p.C * y - rhs;
  r.ineq = slack.cwiseMax(0.0).norm() / (1.0 + rhs.norm());
  r.comp = slack.cwiseProduct(pt.mu).norm() / (1.0 + rhs.norm());
  return r;
}

// Solves the equality-constrained KKT system for a fixed active set.
// Returns false when the factorization fails (dependent active rows).
bool solve_kkt_active(const MpcProblem& p, const Eigen::VectorXd& xbar, double delta,
                      const std::vector<int>& active, Eigen::VectorXd& y, Eigen::VectorXd& lambda,
                      Eigen::VectorXd& mu_active) {
  const int ny = p.ny(), ne = p.neq();
  const int na = static_cast<int>(active.size());
  const int dim = ny + ne + na;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(p.H.nonZeros() + 2 * p.Aeq.nonZeros() + 2 * p.C.nonZeros());
  for (int r = 0; r < p.H.outerSize(); ++r)
    for (SparseRowMajor::InnerIterator it(p.H, r); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  for (int r = 0; r < p.Aeq.outerSize(); ++r)
    for (SparseRowMajor::InnerIterator it(p.Aeq, r); it; ++it) {
      trips.emplace_back(ny + it.row(), it.col(), it.value());
      trips.emplace_back(it.col(), ny + it.row(), it.value());
    }
  for (int a = 0; a < na; ++a) {
    const int row = active[a];
    for (SparseRowMajor::InnerIterator it(p.C, row); it; ++it) {
      trips.emplace_back(ny + ne + a, it.col(), it.value());
      trips.emplace_back(it.col(), ny + ne + a, it.value());
    }
  }
  Eigen::SparseMatrix<double> K(dim, dim);
  K.setFromTriplets(trips.begin(), trips.end());

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  rhs.segment(ny, ne) = p.bx(xbar);
  for (int a = 0; a < na; ++a) rhs(ny + ne + a) = (1.0 - delta) * p.d(active[a]);

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(K);
  lu.factorize(K);
  if (lu.info() != Eigen::Success) return false;
  Eigen::VectorXd sol = lu.solve(rhs);
  if ((K * sol - rhs).cwiseAbs().maxCoeff() > 1e-7 * (1.0 + rhs.cwiseAbs().maxCoeff()))
    return false;

  y = sol.head(ny);
  lambda = sol.segment(ny, ne);
  mu_active = sol.tail(na);
  return true;
}

// Active-set refinement seeded by the AGM iterate. Returns true and fills
// the polished solution when a KKT-consistent point is found.
bool polish_active_set(const MpcProblem& p, const Eigen::VectorXd& xbar, double delta,
                       const Eigen::VectorXd& y_seed, const DualPoint& pt_seed,
                       double tol, Eigen::VectorXd& y_out, DualPoint& pt_out) {
  const Eigen::VectorXd rhs = (1.0 - delta) * p.d;
  const Eigen::VectorXd slack = p.C * y_seed - rhs;
  const double rhs_scale = 1.0 + rhs.cwiseAbs().maxCoeff();
  const double mu_scale = 1.0 + pt_seed.mu.cwiseAbs().maxCoeff();

  std::vector<int> active;
  for (int i = 0; i < p.nineq(); ++i)
    if (pt_seed.mu(i) > 1e-6 * mu_scale || slack(i) > -1e-6 * rhs_scale) active.push_back(i);

  Eigen::VectorXd y, lambda, mu_act;
  for (int round = 0; round < 60; ++round) {
    if (!solve_kkt_active(p, xbar, delta, active, y, lambda, mu_act)) return false;

    // drop the most negative multiplier, if any
    int drop = -1;
    double worst_mu = -tol * mu_scale - 1e-14;
    for (int a = 0; a < static_cast<int>(active.size()); ++a)
      if (mu_act(a) < worst_mu) {
        worst_mu = mu_act(a);
        drop = a;
      }
    if (drop >= 0) {
      active.erase(active.begin() + drop);
      continue;
    }
    // add the most violated inactive row, if any
    const Eigen::VectorXd s = p.C * y - rhs;
    int add = -1;
    double worst_s = tol * rhs_scale;
    for (int i = 0; i < p.nineq(); ++i) {
      if (std::find(active.begin(), active.end(), i) != active.end()) continue;
      if (s(i) > worst_s) {
        worst_s = s(i);
        add = i;
      }
    }
    if (add >= 0) {
      active.push_back(add);
      std::sort(active.begin(), active.end());
      continue;
    }

    y_out = y;
    pt_out.lambda = lambda;
    pt_out.mu = Eigen::VectorXd::Zero(p.nineq());
    for (int a = 0; a < static_cast<int>(active.size()); ++a)
      pt_out.mu(active[a]) = std::max(0.0, mu_act(a));
    return true;
  }
  return false;
}

} // namespace

ReferenceSolution solve_reference(const MpcProblem& prob, const Eigen::VectorXd& xbar,
                                  double delta, double tol, long max_iterations) {
  ReferenceSolution out;
  const double lstar = 0.5 * xbar.dot(prob.Qd * xbar);
  const double infeas_ceiling = 1e6 * (1.0 + lstar);
  const double L = lipschitz(prob);
  AgmState state = AgmState::make(prob, xbar, delta, L);

  const long check_every = 25;
  long done = 0;
  while (done < max_iterations) {
    const long chunk = std::min(check_every, max_iterations - done);
    run(state, chunk);
    done += chunk;

    const double dval = dual_value(prob, xbar, delta, state.cur);
    if (dval > infeas_ceiling) {
      out.status = SolveStatus::infeasible;
      out.iterations = done;
      return out;
    }

    Eigen::VectorXd y = primal_recover(prob, state.cur);
    KktResiduals res = kkt_residuals(prob, xbar, delta, y, state.cur);
    if (res.total() <= 1e-2 || done >= max_iterations / 2) {
      Eigen::VectorXd y_pol;
      DualPoint pt_pol;
      if (polish_active_set(prob, xbar, delta, y, state.cur, tol, y_pol, pt_pol)) {
        KktResiduals res_pol = kkt_residuals(prob, xbar, delta, y_pol, pt_pol);
        const Eigen::VectorXd g = prob.H * y_pol + prob.AeqT * pt_pol.lambda + prob.CT * pt_pol.mu;
        const double stat = g.norm() / (1.0 + y_pol.norm());
        if (res_pol.total() <= tol && stat <= std::max(tol, 1e-8)) {
          out.status = SolveStatus::ok;
          out.y = y_pol;
          out.pt = pt_pol;
          out.value = 0.5 * y_pol.dot(prob.H * y_pol);
          out.iterations = done;
          return out;
        }
      }
    }
  }
  out.status = SolveStatus::budget_exhausted;
  out.iterations = done;
  return out;
}

std::optional<OracleSolution> active_set_oracle(const MpcProblem& prob,
                                                const Eigen::VectorXd& xbar, double delta) {
  const int m = prob.nineq();
  if (m > 30) throw std::invalid_argument("active_set_oracle: more than 30 inequality rows");
  const int ny = prob.ny(), ne = prob.neq();

  const Eigen::VectorXd rhs = (1.0 - delta) * prob.d;
  const double feas_tol = 1e-9 * (1.0 + rhs.cwiseAbs().maxCoeff());
  const double mu_tol = 1e-9;

  // Farkas check first: the system is infeasible iff
  //   min (b xbar)^T lambda + rhs^T mu  s.t.  Aeq^T lambda + C^T mu = 0, mu >= 0
  // is unbounded below (it is 0 otherwise).
  {
    LpProblem farkas = LpProblem::free_variables(ne + m);
    for (int j = 0; j < m; ++j) farkas.lo(ne + j) = 0.0;
    Eigen::MatrixXd At = Eigen::MatrixXd(prob.Aeq).transpose();
    Eigen::MatrixXd Ct = Eigen::MatrixXd(prob.C).transpose();
    Eigen::MatrixXd rowsmat(ny, ne + m);
    rowsmat << At, Ct;
    farkas.A = rowsmat;
    farkas.b = Eigen::VectorXd::Zero(ny);
    farkas.sense.assign(ny, 'E');
    farkas.c.head(ne) = prob.bx(xbar);
    farkas.c.tail(m) = rhs;
    LpSolution sol = solve_lp(farkas);
    if (sol.status == LpStatus::unbounded) return std::nullopt;
    if (sol.status == LpStatus::optimal && sol.objective < -1e-7)
      return std::nullopt;
    if (sol.status != LpStatus::optimal)
      throw std::runtime_error("active_set_oracle: Farkas LP failed");
  }

  // Base KKT factor and Schur data.
  Eigen::MatrixXd K0 = Eigen::MatrixXd::Zero(ny + ne, ny + ne);
  K0.topLeftCorner(ny, ny) = Eigen::MatrixXd(prob.H);
  K0.block(ny, 0, ne, ny) = Eigen::MatrixXd(prob.Aeq);
  K0.block(0, ny, ny, ne) = Eigen::MatrixXd(prob.Aeq).transpose();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K0);

  Eigen::VectorXd rhs0 = Eigen::VectorXd::Zero(ny + ne);
  rhs0.segment(ny, ne) = prob.bx(xbar);
  const Eigen::VectorXd sol0 = lu.solve(rhs0);
  const Eigen::VectorXd y0 = sol0.head(ny);
  const Eigen::VectorXd lam0 = sol0.tail(ne);

  Eigen::MatrixXd W(ny + ne, m);
  {
    Eigen::MatrixXd Crhs = Eigen::MatrixXd::Zero(ny + ne, m);
    Crhs.topRows(ny) = Eigen::MatrixXd(prob.C).transpose();
    W = lu.solve(Crhs);
  }
  const Eigen::MatrixXd Wy = W.topRows(ny);
  const Eigen::MatrixXd Wl = W.bottomRows(ne);
  const Eigen::MatrixXd Xi = Eigen::MatrixXd(prob.C) * Wy; // m x m
  const Eigen::VectorXd slack0 = Eigen::MatrixXd(prob.C) * y0 - rhs;

  const int cap = std::min(m, ny);
  std::vector<int> subset;

  auto try_subset = [&](const std::vector<int>& S) -> std::optional<OracleSolution> {
    const int na = static_cast<int>(S.size());
    Eigen::VectorXd mu_s;
    if (na > 0) {
      Eigen::MatrixXd Xs(na, na);
      Eigen::VectorXd bs(na);
      for (int a = 0; a < na; ++a) {
        bs(a) = slack0(S[a]);
        for (int b2 = 0; b2 < na; ++b2) Xs(a, b2) = Xi(S[a], S[b2]);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> slu(Xs);
      if (!slu.isInvertible()) return std::nullopt;
      mu_s = slu.solve(bs);
      if ((mu_s.array() < -mu_tol).any()) return std::nullopt;
    } else {
      mu_s.resize(0);
    }
    Eigen::VectorXd slack = slack0;
    for (int a = 0; a < na; ++a) slack -= Xi.col(S[a]) * mu_s(a);
    if ((slack.array() > feas_tol).any()) return std::nullopt;

    OracleSolution os;
    os.y = y0;
    os.pt.lambda = lam0;
    for (int a = 0; a < na; ++a) {
      os.y -= Wy.col(S[a]) * mu_s(a);
      os.pt.lambda -= Wl.col(S[a]) * mu_s(a);
    }
    os.pt.mu = Eigen::VectorXd::Zero(m);
    for (int a = 0; a < na; ++a) os.pt.mu(S[a]) = std::max(0.0, mu_s(a));
    os.value = 0.5 * os.y.dot(prob.H * os.y);
    os.active_set = S;
    return os;
  };

  // enumerate subsets in order of increasing cardinality
  for (int c = 0; c <= cap; ++c) {
    subset.resize(c);
    std::iota(subset.begin(), subset.end(), 0);
    while (true) {
      if (c == 0 || subset[c - 1] < m) {
        auto res = try_subset(subset);
        if (res) return res;
      }
      if (c == 0) break;
      // next combination
      int i = c - 1;
      while (i >= 0 && subset[i] == m - c + i) --i;
      if (i < 0) break;
      ++subset[i];
      for (int j = i + 1; j < c; ++j) subset[j] = subset[j - 1] + 1;
    }
  }
  throw std::runtime_error(
      "active_set_oracle: no KKT-consistent active set found for a feasible instance");
}

} // namespace dmpc
