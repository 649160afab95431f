#include "dmpc/controller.hpp"

#include "dmpc/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dmpc {

void validate(const ControllerConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("ControllerConfig: alpha must be in (0, 1]");
  if (!(cfg.eps > 0.0 && cfg.eps < cfg.alpha))
    throw std::invalid_argument("ControllerConfig: need 0 < eps < alpha");
  if (!(cfg.delta_init > 0.0 && cfg.delta_init <= 1.0))
    throw std::invalid_argument("ControllerConfig: delta_init must be in (0, 1]");
  if (cfg.dk < 1) throw std::invalid_argument("ControllerConfig: dk must be >= 1");
  if (cfg.max_iterations < 1 || cfg.max_halvings < 0)
    throw std::invalid_argument("ControllerConfig: bad budgets");
}

Eigen::VectorXd rollout_states(const SystemModel& model, const Eigen::VectorXd& xbar,
                               const Eigen::VectorXd& v_seq) {
  const int n = model.state_dim();
  const int m = model.input_dim();
  if (xbar.size() != n || m == 0 || v_seq.size() % m != 0)
    throw std::invalid_argument("rollout_states: dimension mismatch");
  const int N = static_cast<int>(v_seq.size()) / m;
  Eigen::VectorXd xi(static_cast<Eigen::Index>(n) * N);
  xi.head(n) = xbar;
  for (int t = 0; t + 1 < N; ++t)
    xi.segment((t + 1) * n, n) =
        model.A * xi.segment(t * n, n) + model.B * v_seq.segment(t * m, m);
  return xi;
}

namespace {

double membership_slack(const SystemModel& model) {
  double dmax = 0.0;
  for (const auto& s : model.subsystems) {
    if (s.dx.size() > 0) dmax = std::max(dmax, s.dx.cwiseAbs().maxCoeff());
    if (s.du.size() > 0) dmax = std::max(dmax, s.du.cwiseAbs().maxCoeff());
  }
  return 1e-12 * (1.0 + dmax);
}

} // namespace

double primal_cost(const SystemModel& model, const Eigen::VectorXd& xbar,
                   const Eigen::VectorXd& v_seq) {
  const int n = model.state_dim();
  const int m = model.input_dim();
  const int N = static_cast<int>(v_seq.size()) / m;
  const double slack = membership_slack(model);
  const Eigen::VectorXd xi = rollout_states(model, xbar, v_seq);
  double cost = 0.0;
  for (int t = 0; t < N; ++t) {
    const Eigen::VectorXd x_t = xi.segment(t * n, n);
    const Eigen::VectorXd v_t = v_seq.segment(t * m, m);
    if (!in_state_set(model, x_t, slack) || !in_input_set(model, v_t, slack))
      return std::numeric_limits<double>::infinity();
    cost += stage_cost(model, x_t, v_t);
  }
  return cost;
}

Eigen::VectorXd shift_inputs(const Eigen::VectorXd& v_seq, int input_dim) {
  if (input_dim <= 0 || v_seq.size() % input_dim != 0)
    throw std::invalid_argument("shift_inputs: dimension mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v_seq.size());
  out.head(v_seq.size() - input_dim) = v_seq.tail(v_seq.size() - input_dim);
  return out;
}

StepResult control_step(const SystemModel& model, const MpcProblem& prob,
                        const ControllerConfig& cfg, const Eigen::VectorXd& xbar,
                        double lipschitz_constant) {
  validate(cfg);
  if (prob.nx != model.state_dim() || prob.nu != model.input_dim())
    throw std::invalid_argument("control_step: problem does not match model");

  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  StepResult res;
  const double slack = membership_slack(model);
  if (!in_state_set(model, xbar, slack)) {
    res.status = StepStatus::infeasible_state;
    return res;
  }

  const int m = model.input_dim();
  const double lstar = stage_cost_min(model, xbar);

  // l*(x) = 0 degrades the eps-thresholds; at the origin u = 0 certifies
  // itself at k = 0.
  if (lstar <= 0.5 * 1e-24) {
    res.status = StepStatus::ok;
    res.u = Eigen::VectorXd::Zero(m);
    res.diag.delta_final = cfg.delta_init;
    res.diag.wall_seconds = elapsed();
    return res;
  }

  const double L = lipschitz_constant > 0.0 ? lipschitz_constant : lipschitz(prob);
  double delta = cfg.delta_init;
  int l = 0;
  AgmState state = AgmState::make(prob, xbar, delta, L);
  const AgmOptions agm_opts{cfg.threads};

  long total_iters = 0;
  std::vector<HalvingEvent> events;

  struct OuterEval {
    double D = 0.0;
    double P_next = 0.0;
    double lxu = 0.0;
    double mu_d = 0.0;
    Eigen::VectorXd u;
    bool holds = false;
  };
  auto eval_outer = [&]() {
    OuterEval ev;
    const Eigen::VectorXd y = primal_recover(prob, state.cur);
    const Eigen::VectorXd v = y.tail(static_cast<Eigen::Index>(m) * prob.N);
    ev.u = v.head(m);
    ev.D = dual_value(prob, xbar, delta, state.cur);
    ev.mu_d = state.cur.mu.dot(prob.d);
    ev.lxu = stage_cost(model, xbar, ev.u);
    const Eigen::VectorXd x_next = model.A * xbar + model.B * ev.u;
    ev.P_next = primal_cost(model, x_next, shift_inputs(v, m));
    ev.holds = ev.D >= ev.P_next + cfg.alpha * ev.lxu && delta * ev.mu_d <= cfg.eps * lstar &&
               in_input_set(model, ev.u, slack);
    return ev;
  };

  auto make_diag = [&](const OuterEval& ev) {
    StepDiagnostics d;
    d.iterations = total_iters;
    d.final_k = state.k;
    d.halvings = l;
    d.delta_final = delta;
    d.dual_value = ev.D;
    d.next_primal_cost = ev.P_next;
    d.stage_cost = ev.lxu;
    d.events = events;
    d.wall_seconds = elapsed();
    return d;
  };

  while (true) {
    // halving test at the current iterate
    {
      const Eigen::VectorXd y = primal_recover(prob, state.cur);
      const Eigen::VectorXd v = y.tail(static_cast<Eigen::Index>(m) * prob.N);
      const double D = dual_value(prob, xbar, delta, state.cur);
      const double P_self = primal_cost(model, xbar, v);
      const double mu_d = state.cur.mu.dot(prob.d);

      bool opt_branch;
      if (cfg.inner_test == ControllerConfig::InnerTest::listing) {
        opt_branch = D >= P_self - cfg.eps / (l + 1) * lstar;
      } else {
        const double lxv0 = stage_cost(model, xbar, v.head(m));
        opt_branch = D >= P_self + cfg.eps / (l + 1) * lxv0;
      }
      const bool infeas_branch = delta * mu_d > cfg.eps * lstar;

      if (opt_branch || infeas_branch) {
        if (l >= cfg.max_halvings) {
          res.status = StepStatus::budget_halvings;
          res.diag = make_diag(eval_outer());
          return res;
        }
        delta *= 0.5;
        ++l;
        state.set_delta(delta);
        if (cfg.reset_duals)
          state.reset();
        else
          state.restart_momentum();
        events.push_back({l, total_iters, opt_branch, infeas_branch});
      }
    }

    if (total_iters + cfg.dk > cfg.max_iterations) {
      res.status = StepStatus::budget_iterations;
      res.diag = make_diag(eval_outer());
      return res;
    }
    run(state, cfg.dk, agm_opts);
    total_iters += cfg.dk;

    OuterEval ev = eval_outer();
    if (ev.holds) {
      // re-evaluate from scratch and insist the certificate really holds
      OuterEval check = eval_outer();
      if (!check.holds)
        throw std::logic_error("control_step: certificate did not re-verify");
      res.status = StepStatus::ok;
      res.u = ev.u;
      res.diag = make_diag(ev);
      return res;
    }
  }
}

std::uint64_t vector_hash(const Eigen::VectorXd& v) {
  std::uint64_t h = 1469598103934665603ULL;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits;
    const double x = v(i);
    std::memcpy(&bits, &x, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffULL;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string diagnostics_csv_header() {
  return "xbar_hash,iterations,final_k,halvings,delta_final,dual_value,next_primal_cost,"
         "stage_cost,wall_seconds";
}

std::string diagnostics_csv_row(const Eigen::VectorXd& xbar, const StepResult& result,
                                const SystemModel& model) {
  (void)model;
  std::ostringstream os;
  os.precision(17);
  const auto& d = result.diag;
  os << std::hex << vector_hash(xbar) << std::dec << "," << d.iterations << "," << d.final_k
     << "," << d.halvings << "," << d.delta_final << "," << d.dual_value << ","
     << d.next_primal_cost << "," << d.stage_cost << "," << d.wall_seconds;
  return os.str();
}

} // namespace dmpc
