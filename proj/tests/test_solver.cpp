#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmpc/rng.hpp"
#include "dmpc/solver.hpp"

#include "support/test_models.hpp"

#include <cmath>

using namespace dmpc;

namespace {

AgmState fresh_state(const MpcProblem& p, const Eigen::VectorXd& xbar, double delta) {
  return AgmState::make(p, xbar, delta, lipschitz(p));
}

} // namespace

TEST_CASE("origin is a fixed point of the iteration") {
  const SystemModel m = test::scalar_model(0.9, 1.0);
  const MpcProblem p = condense(m, 3);
  AgmState s = fresh_state(p, Eigen::VectorXd::Zero(1), 0.1);
  run(s, 25);
  CHECK(s.cur.lambda.norm() == 0.0);
  CHECK(s.cur.mu.norm() == 0.0);
  CHECK(primal_recover(p, s.cur).norm() == 0.0);
}

TEST_CASE("iterates match a hand-rolled recurrence on an equality-only instance") {
  // scalar chain with no inequality rows, built by hand
  const double a = 0.6, b = 1.2;
  MpcProblem p;
  p.N = 2;
  p.nx = 1;
  p.nu = 1;
  p.nc = 0;
  p.state_dims = {1};
  p.input_dims = {1};
  using T = Eigen::Triplet<double>;
  std::vector<T> ht{T(0, 0, 1.0), T(1, 1, 1.0), T(2, 2, 1.0), T(3, 3, 1.0)};
  p.H.resize(4, 4);
  p.H.setFromTriplets(ht.begin(), ht.end());
  std::vector<T> at{T(0, 0, 1.0), T(1, 0, -a), T(1, 1, 1.0), T(1, 2, -b)};
  p.Aeq.resize(2, 4);
  p.Aeq.setFromTriplets(at.begin(), at.end());
  p.C.resize(0, 4);
  p.d.resize(0);
  std::vector<T> bt{T(0, 0, 1.0)};
  p.b.resize(2, 1);
  p.b.setFromTriplets(bt.begin(), bt.end());
  p.AeqT = SparseRowMajor(p.Aeq.transpose());
  p.CT = SparseRowMajor(p.C.transpose());
  p.Qfact.emplace_back(Eigen::MatrixXd::Identity(1, 1));
  p.Rfact.emplace_back(Eigen::MatrixXd::Identity(1, 1));
  p.Qd = Eigen::MatrixXd::Identity(1, 1);
  p.Rd = Eigen::MatrixXd::Identity(1, 1);

  Eigen::VectorXd xbar(1);
  xbar << 0.8;
  const double L = lipschitz(p);
  AgmState s = AgmState::make(p, xbar, 0.0, L);

  // hand simulation of the same four-line recurrence with dense algebra
  const Eigen::MatrixXd Ad(p.Aeq);
  const Eigen::VectorXd bx = p.bx(xbar);
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(2), lam_prev = lam;
  Eigen::VectorXd y_prev = Eigen::VectorXd::Zero(4);
  for (int k = 0; k < 5; ++k) {
    const double beta = double(k - 1) / double(k + 2);
    const Eigen::VectorXd y = -(Ad.transpose() * lam);
    const Eigen::VectorXd ybar = y + beta * (y - y_prev);
    const Eigen::VectorXd lam_next = lam + beta * (lam - lam_prev) + (Ad * ybar - bx) / L;
    lam_prev = lam;
    lam = lam_next;
    y_prev = y;

    agm_step(s);
    CHECK((s.cur.lambda - lam).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((s.y_prev - y_prev).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("mu stays elementwise nonnegative over long runs") {
  const SystemModel m = test::small_random_model(31, 2, 2, 1);
  const MpcProblem p = condense(m, 3);
  Rng rng(31);
  const Eigen::VectorXd xbar = test::feasible_initial_state(m, p, 0.0, rng);
  AgmState s = fresh_state(p, xbar, 0.05);
  run(s, 10000);
  CHECK(s.cur.mu.minCoeff() >= 0.0);
}

TEST_CASE("run composes: run(run(s,3),2) == run(s,5) bitwise") {
  const SystemModel m = test::small_random_model(37, 2, 2, 1);
  const MpcProblem p = condense(m, 3);
  Rng rng(5);
  const Eigen::VectorXd xbar = test::feasible_initial_state(m, p, 0.0, rng);
  AgmState s1 = fresh_state(p, xbar, 0.1);
  AgmState s2 = fresh_state(p, xbar, 0.1);
  run(s1, 3);
  run(s1, 2);
  run(s2, 5);
  CHECK(s1.cur.lambda == s2.cur.lambda);
  CHECK(s1.cur.mu == s2.cur.mu);
  CHECK(s1.k == s2.k);
}

TEST_CASE("block-parallel mode equals serial mode") {
  const SystemModel m = test::small_random_model(41, 3, 2, 1);
  const MpcProblem p = condense(m, 4);
  Rng rng(9);
  const Eigen::VectorXd xbar = test::feasible_initial_state(m, p, 0.0, rng);
  AgmState serial = fresh_state(p, xbar, 0.05);
  AgmState parallel = fresh_state(p, xbar, 0.05);
  AgmOptions par;
  par.threads = 4;
  for (int k = 0; k < 200; ++k) {
    agm_step(serial);
    agm_step(parallel, par);
  }
  CHECK(serial.cur.lambda == parallel.cur.lambda);
  CHECK(serial.cur.mu == parallel.cur.mu);
}

TEST_CASE("per-subsystem gradient assembly equals the monolithic product") {
  // the lambda-update gradient A ybar - b xbar decomposes by subsystem using
  // only neighbor blocks
  const SystemModel m = test::small_random_model(43, 3, 2, 1);
  const int N = 3;
  const MpcProblem p = condense(m, N);
  Rng rng(12);
  Eigen::VectorXd ybar(p.ny());
  for (int i = 0; i < ybar.size(); ++i) ybar(i) = rng.uniform(-1.0, 1.0);
  Eigen::VectorXd xbar(p.nx);
  for (int i = 0; i < p.nx; ++i) xbar(i) = rng.uniform(-1.0, 1.0);

  const Eigen::VectorXd mono = p.Aeq * ybar - p.bx(xbar);

  Eigen::VectorXd blockwise = Eigen::VectorXd::Zero(p.neq());
  for (int i = 0; i < m.M; ++i) {
    const int ni = m.state_dims[i];
    const int xoff = m.state_offset(i);
    // pinning rows of subsystem i
    blockwise.segment(xoff, ni) =
        ybar.segment(p.z_offset(0) + xoff, ni) - xbar.segment(xoff, ni);
    // dynamics rows, using only neighbor blocks
    for (int t = 0; t <= N - 2; ++t) {
      Eigen::VectorXd g = ybar.segment(p.z_offset(t + 1) + xoff, ni);
      for (int j : m.neighbors[i]) {
        const auto Aij = m.A.block(xoff, m.state_offset(j), ni, m.state_dims[j]);
        const auto Bij = m.B.block(xoff, m.input_offset(j), ni, m.input_dims[j]);
        g -= Aij * ybar.segment(p.z_offset(t) + m.state_offset(j), m.state_dims[j]);
        g -= Bij * ybar.segment(p.v_offset(t) + m.input_offset(j), m.input_dims[j]);
      }
      blockwise.segment(p.nx * (1 + t) + xoff, ni) = g;
    }
  }
  CHECK((mono - blockwise).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + mono.cwiseAbs().maxCoeff()));
}

TEST_CASE("oracle: interior optimum has an empty active set") {
  const SystemModel m = test::scalar_model(0.5, 1.0);
  const MpcProblem p = condense(m, 2);
  Eigen::VectorXd xbar(1);
  xbar << 0.0;
  const auto sol = active_set_oracle(p, xbar, 0.0);
  REQUIRE(sol.has_value());
  CHECK(sol->active_set.empty());
  CHECK(sol->value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sol->y.norm() <= 1e-12);
}

TEST_CASE("oracle agrees with a fine grid search on a bound-active instance") {
  // unstable dynamics with limited input authority: the input bound binds
  const SystemModel m = test::scalar_model(1.5, 1.0, 1.0, 1.0, 1.0, 0.5);
  const MpcProblem p = condense(m, 2);
  Eigen::VectorXd xbar(1);
  xbar << 0.9;
  const auto sol = active_set_oracle(p, xbar, 0.0);
  REQUIRE(sol.has_value());

  // brute force over v_0 (z determined by the dynamics, optimal v_1 = 0)
  double best = 1e100;
  const int grid = 40001;
  for (int i = 0; i < grid; ++i) {
    const double v0 = -0.5 + 1.0 * i / (grid - 1);
    const double z1 = 1.5 * xbar(0) + v0;
    if (std::abs(z1) > 1.0) continue;
    const double cost = 0.5 * (xbar(0) * xbar(0) + v0 * v0 + z1 * z1);
    best = std::min(best, cost);
  }
  CHECK(sol->value == doctest::Approx(best).epsilon(1e-6));
  CHECK(!sol->active_set.empty());
}

TEST_CASE("oracle detects infeasibility with a Farkas certificate") {
  // tightened to 50%, starting state outside (1-delta) X
  const SystemModel m = test::scalar_model(0.9, 1.0);
  const MpcProblem p = condense(m, 2);
  Eigen::VectorXd xbar(1);
  xbar << 0.9;
  CHECK(!active_set_oracle(p, xbar, 0.5).has_value());
  CHECK(active_set_oracle(p, xbar, 0.0).has_value());
}

TEST_CASE("solve_reference matches the oracle on random small instances") {
  Rng rng(2024);
  int done = 0;
  for (std::uint64_t seed = 100; done < 12; ++seed) {
    const SystemModel m = test::small_random_model(seed, 1, 2, 1);
    const MpcProblem p = condense(m, 3);
    const Eigen::VectorXd xbar = test::feasible_initial_state(m, p, 0.1, rng);
    const auto oracle = active_set_oracle(p, xbar, 0.1);
    if (!oracle) continue;
    const auto ref = solve_reference(p, xbar, 0.1, 1e-9);
    REQUIRE(ref.status == SolveStatus::ok);
    CHECK((ref.y - oracle->y).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(std::abs(ref.value - oracle->value) <= 1e-8 * (1.0 + std::abs(oracle->value)));
    ++done;
  }
}

TEST_CASE("solve_reference flags infeasible tightenings") {
  const SystemModel m = test::scalar_model(0.9, 1.0);
  const MpcProblem p = condense(m, 2);
  Eigen::VectorXd xbar(1);
  xbar << 0.9;
  const auto ref = solve_reference(p, xbar, 0.5, 1e-9, 200000);
  CHECK(ref.status == SolveStatus::infeasible);
}

TEST_CASE("value function is monotone in the horizon") {
  Rng rng(7);
  for (std::uint64_t seed = 300; seed < 305; ++seed) {
    const SystemModel m = test::small_random_model(seed, 1, 2, 1);
    const MpcProblem p6 = condense(m, 6);
    const Eigen::VectorXd xbar = test::feasible_initial_state(m, condense(m, 2), 0.0, rng);
    double prev = -1.0;
    for (int N = 2; N <= 6; ++N) {
      const auto sol = solve_reference(condense(m, N), xbar, 0.0, 1e-9);
      REQUIRE(sol.status == SolveStatus::ok);
      CHECK(sol.value >= prev - 1e-9 * (1.0 + std::abs(sol.value)));
      prev = sol.value;
    }
    (void)p6;
  }
}

TEST_CASE("accelerated rate envelope against the oracle multipliers") {
  Rng rng(88);
  int done = 0;
  for (std::uint64_t seed = 400; done < 8; ++seed) {
    const SystemModel m = test::small_random_model(seed, 1, 2, 1);
    const MpcProblem p = condense(m, 3);
    const Eigen::VectorXd xbar = test::feasible_initial_state(m, p, 0.05, rng);
    const auto oracle = active_set_oracle(p, xbar, 0.05);
    if (!oracle) continue;
    ++done;
    const double L = lipschitz(p);
    const double d_best = dual_value(p, xbar, 0.05, oracle->pt);
    Eigen::VectorXd p0(p.neq() + p.nineq());
    p0 << oracle->pt.lambda, oracle->pt.mu;
    const double radius2 = p0.squaredNorm(); // distance from the zero start

    AgmState s = AgmState::make(p, xbar, 0.05, L);
    long next_check = 10;
    for (long k = 1; k <= 1000; ++k) {
      agm_step(s);
      if (k == next_check) {
        const double gap = d_best - dual_value(p, xbar, 0.05, s.cur);
        CHECK(gap <= 2.0 * L * radius2 / double((k + 1) * (k + 1)) + 1e-9);
        next_check *= 10;
      }
    }
  }
}
