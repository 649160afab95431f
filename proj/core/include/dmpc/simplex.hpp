#pragma once

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace dmpc {

/// Dense linear program
///
///   min c^T x   s.t.  A x {<=,=,>=} b  (row-wise sense),  lo <= x <= hi
///
/// with +-infinity allowed in the bounds. Solved by a two-phase revised
/// simplex with Bland's rule; intended for desk-scale problems (polytope
/// support functions, Farkas certificates, branch-and-bound relaxations),
/// not for performance.
struct LpProblem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::vector<char> sense; ///< 'L' (<=), 'E' (=), 'G' (>=) per row
  Eigen::VectorXd lo;      ///< may be -inf
  Eigen::VectorXd hi;      ///< may be +inf

  static constexpr double inf = std::numeric_limits<double>::infinity();

  /// Problem with n free variables and no rows.
  static LpProblem free_variables(int n);
  /// Appends a row, returns its index.
  int add_row(const Eigen::VectorXd& coeffs, char sense, double rhs);
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct LpSolution {
  LpStatus status = LpStatus::iteration_limit;
  double objective = 0.0;
  Eigen::VectorXd x;
};

LpSolution solve_lp(const LpProblem& problem, long max_iterations = 200000);

/// Support function h(a) = max a^T x over {x : C x <= d}. Returns +inf when
/// the polytope is unbounded in direction a.
double support_function(const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                        const Eigen::VectorXd& a);

} // namespace dmpc
