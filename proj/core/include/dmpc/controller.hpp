#pragma once

#include "dmpc/model.hpp"
#include "dmpc/qp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dmpc {

/// Parameters of the certified control step.
struct ControllerConfig {
  double alpha = 0.01;      ///< performance parameter in (0, 1]
  double eps = 0.005;       ///< optimality tolerance, 0 < eps < alpha
  double delta_init = 0.2;  ///< initial constraint tightening in (0, 1]
  int dk = 10;              ///< iterations between stopping-condition tests

  long max_iterations = 100000; ///< safety cap per call
  int max_halvings = 40;        ///< safety cap on tightening reductions
  bool reset_duals = false;     ///< rezero multipliers on each halving
  int threads = 1;              ///< block-parallel workers inside the solver

  /// Variant of the optimality branch of the halving test. `listing` compares
  /// the dual value against P_N(x, v^k) - eps/(l+1) l*(x); `proof` uses the
  /// + eps/(l+1) l(x, v_0^k) form that appears in the decrease analysis.
  enum class InnerTest { listing, proof };
  InnerTest inner_test = InnerTest::listing;
};

void validate(const ControllerConfig& cfg);

struct HalvingEvent {
  int level = 0;              ///< l after the halving
  long at_iteration = 0;      ///< total iterations spent when it fired
  bool optimality_branch = false;
  bool infeasibility_branch = false;
};

struct StepDiagnostics {
  long iterations = 0;        ///< total solver iterations in this call
  long final_k = 0;           ///< iteration counter at termination (resets on halving)
  int halvings = 0;           ///< l
  double delta_final = 0.0;
  double dual_value = 0.0;        ///< certified D at the returned iterate
  double next_primal_cost = 0.0;  ///< certified P_N(A x + B u, v_s)
  double stage_cost = 0.0;        ///< l(x, u)
  std::vector<HalvingEvent> events;
  double wall_seconds = 0.0;
};

enum class StepStatus { ok, infeasible_state, budget_iterations, budget_halvings };

struct StepResult {
  StepStatus status = StepStatus::budget_iterations;
  Eigen::VectorXd u;
  StepDiagnostics diag;
};

/// Exact linear rollout xi_0 = xbar, xi_{t+1} = A xi_t + B v_t. Returns the
/// stacked xi_0..xi_{N-1} for a stacked input sequence of N stages.
Eigen::VectorXd rollout_states(const SystemModel& model, const Eigen::VectorXd& xbar,
                               const Eigen::VectorXd& v_seq);

/// P_N(xbar, v): sum of stage costs along the rollout if every state lies in
/// the original X and every input in U (violations up to
/// 1e-12 (1 + ||d||_inf) are absorbed as roundoff), +infinity otherwise.
double primal_cost(const SystemModel& model, const Eigen::VectorXd& xbar,
                   const Eigen::VectorXd& v_seq);

/// Drops the first input and appends a zero stage.
Eigen::VectorXd shift_inputs(const Eigen::VectorXd& v_seq, int input_dim);

/// One certified control step (the static feedback law): runs the dual
/// accelerated gradient method under the adaptive tightening stopping
/// condition and returns u = v_0^k once the certificate holds. Deterministic
/// in xbar. Pass a precomputed Lipschitz constant to avoid recomputing it on
/// every call; a negative value means "compute here".
StepResult control_step(const SystemModel& model, const MpcProblem& prob,
                        const ControllerConfig& cfg, const Eigen::VectorXd& xbar,
                        double lipschitz_constant = -1.0);

/// 64-bit FNV-1a over the raw bytes of a vector, used to key diagnostics.
std::uint64_t vector_hash(const Eigen::VectorXd& v);

std::string diagnostics_csv_header();
std::string diagnostics_csv_row(const Eigen::VectorXd& xbar, const StepResult& result,
                                const SystemModel& model);

} // namespace dmpc
