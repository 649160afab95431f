#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmpc/simplex.hpp"

using namespace dmpc;

TEST_CASE("two-variable LP with known vertex optimum") {
  // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x,y >= 0 -> (8/5, 6/5), value 14/5
  LpProblem p = LpProblem::free_variables(2);
  p.lo.setZero();
  p.add_row((Eigen::VectorXd(2) << 1, 2).finished(), 'L', 4.0);
  p.add_row((Eigen::VectorXd(2) << 3, 1).finished(), 'L', 6.0);
  p.c = -Eigen::VectorXd::Ones(2);
  const auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::optimal);
  CHECK(sol.objective == doctest::Approx(-14.0 / 5.0).epsilon(1e-9));
  CHECK(sol.x(0) == doctest::Approx(8.0 / 5.0).epsilon(1e-9));
  CHECK(sol.x(1) == doctest::Approx(6.0 / 5.0).epsilon(1e-9));
}

TEST_CASE("equality rows and free variables") {
  // min x - y s.t. x + y = 1  (free variables): unbounded (y -> inf)
  LpProblem p = LpProblem::free_variables(2);
  p.add_row((Eigen::VectorXd(2) << 1, 1).finished(), 'E', 1.0);
  p.c << 1, -1;
  CHECK(solve_lp(p).status == LpStatus::unbounded);

  // same but minimize x + y: every feasible point optimal with value 1
  p.c << 1, 1;
  const auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::optimal);
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("infeasible system detected") {
  LpProblem p = LpProblem::free_variables(1);
  p.lo(0) = 0.0;
  p.add_row(Eigen::VectorXd::Ones(1), 'L', -1.0); // x <= -1, x >= 0
  CHECK(solve_lp(p).status == LpStatus::infeasible);
}

TEST_CASE("bounded variables and >= rows") {
  // min -x s.t. x >= 2, x <= 5
  LpProblem p = LpProblem::free_variables(1);
  p.lo(0) = -10.0;
  p.hi(0) = 5.0;
  p.add_row(Eigen::VectorXd::Ones(1), 'G', 2.0);
  p.c(0) = -1.0;
  const auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::optimal);
  CHECK(sol.x(0) == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("support function of a box and an unbounded set") {
  Eigen::MatrixXd C(4, 2);
  C << 1, 0, -1, 0, 0, 1, 0, -1;
  Eigen::VectorXd d(4);
  d << 2, 1, 3, 0.5;
  Eigen::VectorXd a(2);
  a << 1, 1;
  CHECK(support_function(C, d, a) == doctest::Approx(5.0).epsilon(1e-9)); // 2 + 3
  a << -1, -1;
  CHECK(support_function(C, d, a) == doctest::Approx(1.5).epsilon(1e-9)); // 1 + 0.5

  // drop the x <= 2 row: unbounded in +x
  Eigen::MatrixXd C2 = C.bottomRows(3);
  Eigen::VectorXd d2 = d.tail(3);
  a << 1, 0;
  CHECK(support_function(C2, d2, a) == LpProblem::inf);
}

TEST_CASE("degenerate rhs does not cycle") {
  // degenerate vertex at origin with redundant rows
  LpProblem p = LpProblem::free_variables(2);
  p.lo.setZero();
  p.add_row((Eigen::VectorXd(2) << 1, 1).finished(), 'L', 0.0);
  p.add_row((Eigen::VectorXd(2) << 2, 2).finished(), 'L', 0.0);
  p.add_row((Eigen::VectorXd(2) << 1, -1).finished(), 'L', 0.0);
  p.c << -1, -1;
  const auto sol = solve_lp(p);
  REQUIRE(sol.status == LpStatus::optimal);
  CHECK(sol.objective == doctest::Approx(0.0).epsilon(1e-12));
}
