#pragma once

#include "dmpc/qp.hpp"

#include <optional>

namespace dmpc {

struct AgmOptions {
  /// Block-parallel mode: > 1 partitions every update line across this many
  /// workers with a barrier per line. Results are identical to serial mode
  /// (each output element is produced by exactly one worker with the serial
  /// summation order).
  int threads = 1;
};

/// State of the accelerated dual gradient iteration. Single-owner: steps
/// mutate in place. Distinct states may run on different threads freely.
struct AgmState {
  const MpcProblem* prob = nullptr;
  Eigen::VectorXd xbar;
  double delta = 0.0;
  double L = 0.0;
  long k = 0;

  DualPoint cur;  ///< (lambda^k, mu^k)
  DualPoint prev; ///< (lambda^{k-1}, mu^{k-1})
  Eigen::VectorXd y_prev; ///< primal recovered at the previous multipliers

  // cached right-hand sides
  Eigen::VectorXd bxbar;    ///< b * xbar
  Eigen::VectorXd rhs_ineq; ///< (1-delta) d

  static AgmState make(const MpcProblem& prob, const Eigen::VectorXd& xbar, double delta,
                       double lipschitz_constant);

  /// Cold start: lambda^0 = lambda^{-1} = 0, mu^0 = mu^{-1} = 0, y^{-1} = 0, k = 0.
  void reset();

  /// Warm restart after a tightening change: keeps the multipliers, collapses
  /// the momentum history onto them, and sets k = 0.
  void restart_momentum();

  /// Changes the tightening without touching the iterates.
  void set_delta(double new_delta);
};

/// One application of the four-line accelerated update with momentum
/// coefficient (k-1)/(k+2). Deterministic.
void agm_step(AgmState& state, const AgmOptions& opts = {});

/// dk consecutive steps.
void run(AgmState& state, long dk, const AgmOptions& opts = {});

enum class SolveStatus { ok, infeasible, budget_exhausted };

struct ReferenceSolution {
  SolveStatus status = SolveStatus::budget_exhausted;
  Eigen::VectorXd y;
  DualPoint pt;
  double value = 0.0;
  long iterations = 0;
};

/// High-accuracy solve used by tests and the offline machinery: AGM to a
/// KKT-residual stop, polished by active-set refinement on the detected
/// active set. On success all KKT residuals (scaled by 1 + ||rhs||) are
/// <= tol. Detects infeasibility through dual blow-up.
ReferenceSolution solve_reference(const MpcProblem& prob, const Eigen::VectorXd& xbar,
                                  double delta, double tol = 1e-9,
                                  long max_iterations = 400000);

struct OracleSolution {
  Eigen::VectorXd y;
  DualPoint pt;
  double value = 0.0;
  std::vector<int> active_set;
};

/// Brute-force ground truth: enumerates candidate active sets (by increasing
/// cardinality) and returns the first KKT-consistent candidate, which is the
/// optimum of the strictly convex QP. Returns nullopt when a Farkas
/// certificate proves infeasibility. Guard: at most 30 inequality rows.
std::optional<OracleSolution> active_set_oracle(const MpcProblem& prob,
                                                const Eigen::VectorXd& xbar, double delta);

} // namespace dmpc
