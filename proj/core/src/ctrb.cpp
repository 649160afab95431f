#include "dmpc/ctrb.hpp"

#include "dmpc/rng.hpp"
#include "dmpc/simplex.hpp"
#include "dmpc/solver.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace dmpc {

double phi_alpha(double alpha, double eps, double kappa) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::domain_error("phi_alpha: alpha must be in (0,1]");
  if (eps < 0.0) throw std::domain_error("phi_alpha: eps must be nonnegative");
  if (kappa < 0.0) throw std::domain_error("phi_alpha: kappa must be nonnegative");
  const double num = 1.0 - eps - alpha;
  if (kappa == 0.0) {
    if (num < 0.0) throw std::domain_error("Phi_alpha <= 0: decrease eps or alpha");
    return std::numeric_limits<double>::infinity();
  }
  const double s2e = std::sqrt(2.0 * eps);
  const double r = num / (kappa * (s2e + 1.0) * (s2e + 1.0));
  if (num < 0.0 || r < 2.0 * eps - 1e-15)
    throw std::domain_error("Phi_alpha <= 0: decrease eps or alpha");
  const double root = std::sqrt(std::max(r, 0.0)) - s2e;
  return root * root;
}

double alpha_from_phi(double phi, double eps, double kappa) {
  const double s2e = std::sqrt(2.0 * eps);
  const double t = s2e + std::sqrt(phi);
  return 1.0 - eps - kappa * t * t * (s2e + 1.0) * (s2e + 1.0);
}

namespace {

struct SampleOutcome {
  bool kept = false;
  double ratio = 0.0;
  Eigen::VectorXd xbar;
};

SampleOutcome evaluate_sample(const SystemModel& model, const MpcProblem& prob,
                              const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                              std::uint64_t stream, double tol) {
  Rng rng(stream);
  const int n = model.state_dim();
  SampleOutcome out;
  Eigen::VectorXd x(n);
  bool inside = false;
  for (int attempt = 0; attempt < 64 && !inside; ++attempt) {
    for (int j = 0; j < n; ++j) x(j) = rng.uniform(lo(j), hi(j));
    inside = in_state_set(model, x);
  }
  if (!inside) return out;

  const auto sol = solve_reference(prob, x, 0.0, tol);
  if (sol.status != SolveStatus::ok) return out;

  const Eigen::VectorXd zlast = sol.y.segment(prob.z_offset(prob.N - 1), n);
  const Eigen::VectorXd az = model.A * zlast;
  // strict interiority margin for A z*_{N-1}
  const Eigen::VectorXd dx = model.stacked_dx();
  const double margin = 1e-9 * dx.cwiseAbs().maxCoeff();
  if (((model.stacked_Cx() * az - dx).array() > -margin).any()) return out;

  const Eigen::VectorXd v0 = sol.y.segment(prob.v_offset(0), model.input_dim());
  const double den = stage_cost(model, x, v0);
  if (den <= 1e-300) return out;
  out.kept = true;
  out.ratio = stage_cost_min(model, zlast) / den;
  out.xbar = x;
  return out;
}

} // namespace

PhiEstimate estimate_phi(const SystemModel& model, int N, int samples, std::uint64_t seed,
                         const EstimateOptions& opts) {
  if (samples < 1) throw std::invalid_argument("estimate_phi: samples must be positive");
  const MpcProblem prob = condense(model, N);
  Eigen::VectorXd lo, hi;
  state_bounding_box(model, lo, hi);

  std::vector<SampleOutcome> outcomes(samples);
  const int threads = std::max(1, opts.threads);
  if (threads == 1) {
    for (int i = 0; i < samples; ++i)
      outcomes[i] = evaluate_sample(model, prob, lo, hi, Rng::derive(seed, i), opts.solve_tol);
  } else {
    std::vector<std::thread> pool;
    std::atomic_int next{0};
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < samples; i = next.fetch_add(1))
          outcomes[i] =
              evaluate_sample(model, prob, lo, hi, Rng::derive(seed, i), opts.solve_tol);
      });
    }
    for (auto& th : pool) th.join();
  }

  PhiEstimate est;
  est.total = samples;
  est.seed = seed;
  int best = -1;
  for (int i = 0; i < samples; ++i) {
    if (!outcomes[i].kept) continue;
    ++est.kept;
    if (best < 0 || outcomes[i].ratio > est.phi_hat) {
      best = i;
      est.phi_hat = outcomes[i].ratio;
    }
  }
  if (best < 0) throw std::runtime_error("estimate_phi: no sample lay inside X_N^0");
  est.witness = outcomes[best].xbar;
  est.witness_ratio = outcomes[best].ratio;
  return est;
}

namespace {

const char* method_name(CertMethod m) {
  switch (m) {
    case CertMethod::sampled: return "sampled";
    case CertMethod::exact_enumeration: return "exact-enumeration";
    case CertMethod::exported_unsolved: return "exported-unsolved";
  }
  return "?";
}

const char* verdict_name(VerifyVerdict v) {
  switch (v) {
    case VerifyVerdict::verified: return "verified";
    case VerifyVerdict::refuted: return "refuted";
    case VerifyVerdict::budget_exceeded: return "budget-exceeded";
  }
  return "?";
}

} // namespace

std::string certificate_to_json(const CtrbCertificate& cert) {
  nlohmann::json j;
  j["N"] = cert.N;
  j["alpha"] = cert.alpha;
  j["eps"] = cert.eps;
  j["kappa"] = cert.kappa;
  j["phi_alpha"] = cert.phi_alpha;
  j["method"] = method_name(cert.method);
  if (cert.method == CertMethod::exact_enumeration && cert.verdict)
    j["verdict"] = verdict_name(*cert.verdict);
  else
    j["value"] = cert.phi_hat;
  if (cert.witness.size() > 0) {
    std::vector<double> w(cert.witness.data(), cert.witness.data() + cert.witness.size());
    j["witness"] = w;
    j["witness_ratio"] = cert.witness_ratio;
  }
  j["samples"] = cert.samples;
  j["seed"] = cert.seed;
  return j.dump(2);
}

namespace {

// Fit l(z*_tau, v*_tau) <= C sigma^tau l(xbar, v*_0) by least squares on the
// log ratios; stages with negligible cost are excluded.
bool fit_decay(const SystemModel& model, const MpcProblem& prob, const Eigen::VectorXd& y,
               const Eigen::VectorXd& xbar, double& C, double& sigma) {
  const int n = model.state_dim();
  const int m = model.input_dim();
  const Eigen::VectorXd v0 = y.segment(prob.v_offset(0), m);
  const double c0 = stage_cost(model, xbar, v0);
  if (c0 <= 0.0) return false;
  std::vector<double> taus, logr;
  for (int t = 0; t < prob.N; ++t) {
    const double ct = stage_cost(model, y.segment(prob.z_offset(t), n),
                                 y.segment(prob.v_offset(t), m));
    if (ct > 1e-12 * c0) {
      taus.push_back(t);
      logr.push_back(std::log(ct / c0));
    }
  }
  if (taus.size() < 2) return false;
  const int k = static_cast<int>(taus.size());
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (int i = 0; i < k; ++i) {
    st += taus[i];
    sl += logr[i];
    stt += taus[i] * taus[i];
    stl += taus[i] * logr[i];
  }
  const double det = k * stt - st * st;
  if (std::abs(det) < 1e-12) return false;
  const double b = (k * stl - st * sl) / det;
  const double a = (sl - b * st) / k;
  C = std::max(1.0, std::exp(a));
  sigma = std::exp(b);
  return sigma > 0.0 && sigma < 1.0;
}

} // namespace

HorizonSearchResult horizon_search(const SystemModel& model, double alpha, double eps,
                                   int max_N, const HorizonSearchOptions& opts) {
  const double kap = kappa(model);
  const double phi_a = phi_alpha(alpha, eps, kap);
  if (!(phi_a > 0.0))
    throw std::domain_error("horizon_search: Phi_alpha <= 0: decrease eps or alpha");

  auto base_cert = [&](int N) {
    CtrbCertificate c;
    c.N = N;
    c.alpha = alpha;
    c.eps = eps;
    c.kappa = kap;
    c.phi_alpha = phi_a;
    c.samples = opts.samples;
    c.seed = opts.seed;
    return c;
  };

  int N = std::max(2, opts.start_N);
  while (N <= max_N) {
    EstimateOptions eopts;
    eopts.threads = opts.threads;
    const PhiEstimate est = estimate_phi(model, N, opts.samples, opts.seed, eopts);

    if (est.phi_hat > phi_a) {
      // horizon too short; jump using the fitted exponential decay
      const MpcProblem prob = condense(model, N);
      const auto sol = solve_reference(prob, est.witness, 0.0);
      int next_N = N + 1;
      double C, sigma;
      if (sol.status == SolveStatus::ok && fit_decay(model, prob, sol.y, est.witness, C, sigma)) {
        const double steps = (std::log(phi_a) - std::log(C)) / std::log(sigma);
        if (std::isfinite(steps))
          next_N = std::max(N + 1, 1 + static_cast<int>(std::ceil(steps)));
      }
      N = std::min(next_N, max_N + 1);
      continue;
    }

    CtrbCertificate cert = base_cert(N);
    cert.phi_hat = est.phi_hat;
    cert.witness = est.witness;
    cert.witness_ratio = est.witness_ratio;

    // kappa = 0 makes Phi_alpha infinite; verifying any finite bound above
    // the sampled estimate is then enough
    const double phi_test =
        std::isfinite(phi_a) ? phi_a : std::max(1.0, 2.0 * est.phi_hat);
    const MilpInstance inst = build_milp(model, N, phi_test);
    if (inst.num_binaries() <= opts.max_binaries) {
      const VerifyResult vr = verify_exact(inst, model, opts.node_budget);
      if (vr.verdict == VerifyVerdict::verified) {
        cert.method = CertMethod::exact_enumeration;
        cert.verdict = vr.verdict;
        return {N, cert};
      }
      if (vr.verdict == VerifyVerdict::refuted) {
        // certified counterexample: grow the horizon from its trajectory
        const MpcProblem prob = condense(model, N);
        const auto sol = solve_reference(prob, vr.witness, 0.0);
        int next_N = N + 1;
        double C, sigma;
        if (sol.status == SolveStatus::ok &&
            fit_decay(model, prob, sol.y, vr.witness, C, sigma)) {
          const double steps = (std::log(phi_a) - std::log(C)) / std::log(sigma);
          if (std::isfinite(steps))
            next_N = std::max(N + 1, 1 + static_cast<int>(std::ceil(steps)));
        }
        N = std::min(next_N, max_N + 1);
        continue;
      }
      // budget exceeded: fall through to the sampled/export outcome
    }

    if (opts.accept_sampled) {
      cert.method = CertMethod::sampled;
      return {N, cert};
    }
    cert.method = CertMethod::exported_unsolved;
    return {N, cert};
  }
  throw std::runtime_error("horizon_search: max_N exceeded without a certificate");
}

} // namespace dmpc
