#include "dmpc/sim.hpp"

#include "dmpc/rng.hpp"
#include "dmpc/solver.hpp"

#include <atomic>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dmpc {

Trajectory closed_loop(const SystemModel& model, const MpcProblem& prob,
                       const ControllerConfig& cfg, const Eigen::VectorXd& x0, int T,
                       double stop_norm) {
  Trajectory traj;
  const double L = lipschitz(prob);
  Eigen::VectorXd x = x0;
  traj.states.push_back(x);
  for (int t = 0; t < T; ++t) {
    if (stage_cost_min(model, x) <= stop_norm) {
      traj.reason = TerminationReason::converged;
      return traj;
    }
    StepResult step = control_step(model, prob, cfg, x, L);
    if (step.status != StepStatus::ok) {
      traj.reason = TerminationReason::controller_error;
      traj.error_status = step.status;
      return traj;
    }
    traj.accumulated_cost += stage_cost(model, x, step.u);
    traj.inputs.push_back(step.u);
    traj.step_diags.push_back(std::move(step.diag));
    x = model.A * x + model.B * step.u;
    traj.states.push_back(x);
  }
  traj.reason = stage_cost_min(model, x) <= stop_norm ? TerminationReason::converged
                                                      : TerminationReason::horizon_reached;
  return traj;
}

PerformanceAudit performance_ratio(const SystemModel& model, const MpcProblem& prob,
                                   const ControllerConfig& cfg, const Eigen::VectorXd& x0,
                                   int T, int N_ref) {
  PerformanceAudit audit;
  const double l0 = stage_cost_min(model, x0);
  if (l0 <= 0.0) {
    audit.v_trunc = 0.0;
    audit.v_ref = 0.0;
    audit.ratio = 1.0;
    audit.conclusive = true;
    audit.pass = true;
    return audit;
  }

  Trajectory traj = closed_loop(model, prob, cfg, x0, T, 1e-10 * l0);
  if (traj.reason == TerminationReason::controller_error)
    throw std::runtime_error("performance_ratio: controller failed along the trajectory");
  audit.v_trunc = traj.accumulated_cost;

  const MpcProblem ref_prob = condense(model, N_ref);
  const auto ref = solve_reference(ref_prob, x0, 0.0, 1e-9);
  if (ref.status != SolveStatus::ok)
    throw std::runtime_error("performance_ratio: reference solve failed");
  double v_ref = ref.value;

  // feasible tail bound beyond the reference horizon
  const int n = model.state_dim();
  const Eigen::VectorXd z_last = ref.y.segment(ref_prob.z_offset(N_ref - 1), n);
  const Eigen::VectorXd v_last = ref.y.segment(ref_prob.v_offset(N_ref - 1), model.input_dim());
  Eigen::VectorXd x_term = model.A * z_last + model.B * v_last;
  const double l_term = stage_cost_min(model, x_term);
  if (l_term > 1e-10 * std::max(l0, 1.0)) {
    if (spectral_radius(model.A) < 1.0) {
      // zero-input tail: geometric decay, must stay feasible
      double tail = 0.0;
      Eigen::VectorXd xt = x_term;
      bool ok = true;
      for (int k = 0; k < 100000; ++k) {
        if (!in_state_set(model, xt)) {
          ok = false;
          break;
        }
        const double lt = stage_cost_min(model, xt);
        tail += lt;
        if (lt <= 1e-16 * std::max(l0, 1.0)) break;
        xt = model.A * xt;
      }
      if (!ok) {
        audit.v_ref = v_ref;
        audit.conclusive = false;
        return audit;
      }
      v_ref += tail;
    } else {
      audit.v_ref = v_ref;
      audit.conclusive = false;
      return audit;
    }
  }

  audit.v_ref = v_ref;
  audit.conclusive = true;
  const double lhs = (cfg.alpha - cfg.eps) * audit.v_trunc;
  audit.ratio = v_ref > 0.0 ? lhs / v_ref : 1.0;
  audit.pass = lhs <= v_ref * (1.0 + 1e-6) + 1e-9;
  return audit;
}

namespace {

struct OptimalityOutcome {
  bool success = false;
  long iterations = 0;
};

// Fixed-tightening baseline: iterate until the duality gap (using the raw
// rollout cost) is within eps * l*(x) and the relative constraint violation
// of the rolled-out trajectory is within `accuracy`.
OptimalityOutcome optimality_condition_run(const SystemModel& model, const MpcProblem& prob,
                                           const Eigen::VectorXd& xbar, double eps,
                                           double delta, double accuracy, int dk,
                                           long max_iterations, double L) {
  OptimalityOutcome out;
  const double lstar = stage_cost_min(model, xbar);
  if (lstar <= 0.5 * 1e-24) {
    out.success = true;
    return out;
  }
  const int n = model.state_dim();
  const int m = model.input_dim();
  AgmState state = AgmState::make(prob, xbar, delta, L);
  while (out.iterations + dk <= max_iterations) {
    run(state, dk);
    out.iterations += dk;

    const Eigen::VectorXd y = primal_recover(prob, state.cur);
    const Eigen::VectorXd v = y.tail(static_cast<Eigen::Index>(m) * prob.N);
    const Eigen::VectorXd xi = rollout_states(model, xbar, v);
    double raw_cost = 0.0;
    for (int t = 0; t < prob.N; ++t)
      raw_cost += stage_cost(model, xi.segment(t * n, n), v.segment(t * m, m));
    const double D = dual_value(prob, xbar, delta, state.cur);
    if (raw_cost - D > eps * lstar) continue;

    double viol = 0.0;
    for (int t = 0; t < prob.N; ++t) {
      for (int i = 0; i < model.M; ++i) {
        const auto& s = model.subsystems[i];
        const auto xt = xi.segment(t * n + model.state_offset(i), model.state_dims[i]);
        const auto vt = v.segment(t * m + model.input_offset(i), model.input_dims[i]);
        const Eigen::VectorXd rx = (s.Cx * xt - s.dx).cwiseQuotient(s.dx);
        const Eigen::VectorXd ru = (s.Cu * vt - s.du).cwiseQuotient(s.du);
        viol = std::max({viol, rx.maxCoeff(), ru.maxCoeff()});
      }
    }
    if (viol <= accuracy) {
      out.success = true;
      return out;
    }
  }
  return out;
}

} // namespace

ExperimentTable run_experiment(const SystemModel& model, double alpha, double eps, int N,
                               const std::vector<double>& delta_inits, int samples,
                               std::uint64_t seed, int dk, const ExperimentOptions& opts) {
  if (delta_inits.empty()) throw std::invalid_argument("run_experiment: empty delta grid");
  if (samples < 1) throw std::invalid_argument("run_experiment: samples must be positive");

  const MpcProblem prob = condense(model, N);
  const double L = lipschitz(prob);

  // one shared draw of initial states, reused across the delta grid
  Eigen::VectorXd lo, hi;
  state_bounding_box(model, lo, hi);
  const int n = model.state_dim();
  std::vector<Eigen::VectorXd> x0s(samples);
  for (int i = 0; i < samples; ++i) {
    Rng rng(Rng::derive(seed, i));
    Eigen::VectorXd x(n);
    for (int attempt = 0; attempt < 64; ++attempt) {
      for (int j = 0; j < n; ++j) x(j) = rng.uniform(lo(j), hi(j));
      if (in_state_set(model, x)) break;
    }
    x0s[i] = x;
  }

  ExperimentTable table;
  table.alpha = alpha;
  table.N = N;
  table.samples = samples;
  table.seed = seed;
  table.dk = dk;

  for (double delta_init : delta_inits) {
    std::vector<SampleRecord> recs(samples);
    std::atomic_int audit_failures{0};

    auto run_sample = [&](int i) {
      SampleRecord rec;
      rec.index = i;
      ControllerConfig cfg;
      cfg.alpha = alpha;
      cfg.eps = eps;
      cfg.delta_init = delta_init;
      cfg.dk = dk;
      cfg.max_iterations = opts.max_iterations;

      if (opts.condition == ExperimentCondition::optimality) {
        const auto oc = optimality_condition_run(model, prob, x0s[i], eps, delta_init,
                                                 delta_init, dk, opts.max_iterations, L);
        rec.success = oc.success;
        rec.iterations = oc.iterations;
        rec.delta_final = delta_init;
      } else if (!opts.closed_loop) {
        const StepResult res = control_step(model, prob, cfg, x0s[i], L);
        rec.success = res.status == StepStatus::ok;
        rec.iterations = res.diag.iterations;
        rec.delta_final = res.diag.delta_final;
      } else {
        const double l0 = stage_cost_min(model, x0s[i]);
        Trajectory traj =
            closed_loop(model, prob, cfg, x0s[i], opts.T, opts.stop_norm_rel * l0);
        rec.success = traj.reason != TerminationReason::controller_error;
        long total = 0;
        double dsum = 0.0;
        for (const auto& d : traj.step_diags) {
          total += d.iterations;
          dsum += d.delta_final;
        }
        rec.iterations = total;
        rec.delta_final =
            traj.step_diags.empty() ? delta_init : dsum / double(traj.step_diags.size());
        if (rec.success && opts.audit_decrease) {
          for (size_t t = 0; t + 1 < traj.states.size(); ++t) {
            const auto va = solve_reference(prob, traj.states[t], 0.0);
            const auto vb = solve_reference(prob, traj.states[t + 1], 0.0);
            if (va.status != SolveStatus::ok || vb.status != SolveStatus::ok) {
              ++audit_failures;
              continue;
            }
            const double lxu = stage_cost(model, traj.states[t], traj.inputs[t]);
            const double slackv = 1e-6 * (1.0 + std::abs(va.value));
            if (va.value + slackv < vb.value + (alpha - eps) * lxu) ++audit_failures;
          }
        }
      }
      recs[i] = rec;
    };

    const int threads = std::max(1, opts.threads);
    if (threads == 1) {
      for (int i = 0; i < samples; ++i) run_sample(i);
    } else {
      std::atomic_int next{0};
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
          for (int i = next.fetch_add(1); i < samples; i = next.fetch_add(1)) run_sample(i);
        });
      for (auto& th : pool) th.join();
    }

    ExperimentRow row;
    row.condition = opts.condition;
    row.eps = eps;
    row.delta_init = delta_init;
    row.audit_failures = audit_failures.load();
    long iters_sum = 0;
    double delta_sum = 0.0;
    for (const auto& rec : recs) {
      if (!rec.success) {
        ++row.samples_rejected;
        continue;
      }
      ++row.samples_ok;
      iters_sum += rec.iterations;
      row.max_iterations = std::max(row.max_iterations, rec.iterations);
      delta_sum += rec.delta_final;
    }
    if (row.samples_ok * 2 < samples)
      throw std::runtime_error("run_experiment: fewer than half the samples were feasible");
    row.avg_iterations = double(iters_sum) / row.samples_ok;
    row.avg_delta = delta_sum / row.samples_ok;
    table.rows.push_back(row);
    table.records.push_back(std::move(recs));
  }
  return table;
}

namespace {
const char* condition_name(ExperimentCondition c) {
  return c == ExperimentCondition::stopping ? "stop. cond." : "opt. cond.";
}
} // namespace

std::string experiment_csv(const ExperimentTable& table) {
  std::ostringstream os;
  os.precision(17);
  os << "condition,eps,delta_init,avg_iterations,max_iterations,avg_delta,samples_ok,"
        "samples_rejected\n";
  for (const auto& r : table.rows)
    os << condition_name(r.condition) << "," << r.eps << "," << r.delta_init << ","
       << r.avg_iterations << "," << r.max_iterations << "," << r.avg_delta << ","
       << r.samples_ok << "," << r.samples_rejected << "\n";
  return os.str();
}

std::string experiment_text_table(const ExperimentTable& table) {
  std::ostringstream os;
  os << "condition    eps      delta_init  avg #iters  max #iters  avg delta\n";
  for (const auto& r : table.rows) {
    os << std::left << std::setw(12) << condition_name(r.condition) << " ";
    os << std::setw(8) << std::setprecision(6) << r.eps << " ";
    os << std::setw(11) << std::setprecision(6) << r.delta_init << " ";
    os << std::setw(11) << std::setprecision(6) << r.avg_iterations << " ";
    os << std::setw(11) << r.max_iterations << " ";
    os << std::setprecision(6) << r.avg_delta << "\n";
  }
  return os.str();
}

std::string sample_records_csv(const ExperimentTable& table) {
  std::ostringstream os;
  os.precision(17);
  os << "delta_init,sample,success,iterations,delta_final\n";
  for (size_t r = 0; r < table.records.size(); ++r)
    for (const auto& rec : table.records[r])
      os << table.rows[r].delta_init << "," << rec.index << "," << (rec.success ? 1 : 0) << ","
         << rec.iterations << "," << rec.delta_final << "\n";
  return os.str();
}

} // namespace dmpc
