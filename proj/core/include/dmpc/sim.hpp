#pragma once

#include "dmpc/controller.hpp"
#include "dmpc/model.hpp"
#include "dmpc/qp.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dmpc {

enum class TerminationReason { converged, horizon_reached, controller_error };

struct Trajectory {
  std::vector<Eigen::VectorXd> states;  ///< x_0..x_T
  std::vector<Eigen::VectorXd> inputs;  ///< u_0..u_{T-1}
  std::vector<StepDiagnostics> step_diags;
  double accumulated_cost = 0.0;        ///< sum of l(x_t, u_t)
  TerminationReason reason = TerminationReason::horizon_reached;
  StepStatus error_status = StepStatus::ok; ///< set when reason == controller_error
};

/// Runs the certified controller in closed loop from x0, stopping early once
/// l*(x_t) <= stop_norm.
Trajectory closed_loop(const SystemModel& model, const MpcProblem& prob,
                       const ControllerConfig& cfg, const Eigen::VectorXd& x0, int T,
                       double stop_norm);

struct PerformanceAudit {
  double v_trunc = 0.0; ///< truncated closed-loop cost
  double v_ref = 0.0;   ///< upper bracket for the optimal infinite-horizon cost
  double ratio = 1.0;   ///< (alpha - eps) v_trunc / v_ref (1 when both are 0)
  bool conclusive = false;
  bool pass = false;
};

/// Audits (alpha - eps) V_trunc <= V_ref_upper where V_ref_upper is the
/// N_ref-horizon optimal cost plus a feasible tail bound. Inconclusive when no
/// feasible tail can be bounded.
PerformanceAudit performance_ratio(const SystemModel& model, const MpcProblem& prob,
                                   const ControllerConfig& cfg, const Eigen::VectorXd& x0,
                                   int T, int N_ref);

enum class ExperimentCondition { stopping, optimality };

struct SampleRecord {
  int index = 0;
  bool success = false;
  long iterations = 0;
  double delta_final = 0.0;
};

struct ExperimentRow {
  ExperimentCondition condition = ExperimentCondition::stopping;
  double eps = 0.0;
  double delta_init = 0.0;
  double avg_iterations = 0.0;
  long max_iterations = 0;
  double avg_delta = 0.0;
  int samples_ok = 0;
  int samples_rejected = 0;
  int audit_failures = 0;
};

struct ExperimentTable {
  std::vector<ExperimentRow> rows;
  std::vector<std::vector<SampleRecord>> records; ///< per row, per sample
  double alpha = 0.0;
  int N = 0;
  int samples = 0;
  std::uint64_t seed = 0;
  int dk = 0;
};

struct ExperimentOptions {
  int threads = 1;
  ExperimentCondition condition = ExperimentCondition::stopping;
  long max_iterations = 100000;
  /// Trajectory mode: run a full closed loop per sample instead of a single
  /// step; statistics are then over all steps of all trajectories.
  bool closed_loop = false;
  int T = 60;
  double stop_norm_rel = 1e-6; ///< stop a trajectory at l*(x) <= rel * l*(x0)
  bool audit_decrease = false; ///< verify the per-step value decrease with the
                               ///< reference solver (closed-loop mode only)
};

/// One certified control step per sampled initial state and per delta_init;
/// the same initial states (drawn once from the seed, uniform on the bounding
/// box of X with rejection) are reused across the delta grid. Throws when
/// fewer than half the requested samples are controller-feasible.
ExperimentTable run_experiment(const SystemModel& model, double alpha, double eps, int N,
                               const std::vector<double>& delta_inits, int samples,
                               std::uint64_t seed, int dk,
                               const ExperimentOptions& opts = {});

std::string experiment_csv(const ExperimentTable& table);
std::string experiment_text_table(const ExperimentTable& table);
std::string sample_records_csv(const ExperimentTable& table);

} // namespace dmpc
