#pragma once

#include "dmpc/milp.hpp"
#include "dmpc/model.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace dmpc {

/// Largest controllability parameter compatible with performance alpha at
/// tolerance eps:
///   Phi_alpha = ( sqrt((1 - eps - alpha) / (kappa (sqrt(2 eps) + 1)^2)) - sqrt(2 eps) )^2.
/// Substituting back reproduces alpha exactly. Throws std::domain_error when
/// no nonnegative solution exists ("Phi_alpha <= 0: decrease eps or alpha").
/// kappa = 0 yields +infinity whenever alpha <= 1 - eps.
double phi_alpha(double alpha, double eps, double kappa);

/// Inverse direction: the alpha produced by a given Phi via the same bound.
double alpha_from_phi(double phi, double eps, double kappa);

struct PhiEstimate {
  double phi_hat = 0.0;       ///< max ratio over kept samples (lower bound on Phi_N)
  Eigen::VectorXd witness;    ///< argmax initial state
  double witness_ratio = 0.0;
  int kept = 0;               ///< samples inside X_N^0
  int total = 0;
  std::uint64_t seed = 0;
};

struct EstimateOptions {
  int threads = 1;
  double solve_tol = 1e-9;
};

/// Samples initial states uniformly on X, keeps those whose untightened
/// solution exists with A z*_{N-1} strictly inside X, and maximizes
/// l*(z*_{N-1}) / l(xbar, v*_0). Throws when nothing is kept.
PhiEstimate estimate_phi(const SystemModel& model, int N, int samples, std::uint64_t seed,
                         const EstimateOptions& opts = {});

enum class CertMethod { sampled, exact_enumeration, exported_unsolved };

struct CtrbCertificate {
  int N = 0;
  double alpha = 0.0;
  double eps = 0.0;
  double kappa = 0.0;
  double phi_alpha = 0.0;
  CertMethod method = CertMethod::sampled;
  double phi_hat = 0.0;                     ///< sampled estimate (when available)
  std::optional<VerifyVerdict> verdict;     ///< for the exact method
  Eigen::VectorXd witness;
  double witness_ratio = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;
};

std::string certificate_to_json(const CtrbCertificate& cert);

struct HorizonSearchOptions {
  int samples = 200;
  std::uint64_t seed = 1;
  int max_binaries = 24; ///< guard for the exact verifier
  long node_budget = 50000;
  bool accept_sampled = false;
  int threads = 1;
  int start_N = 2;
};

struct HorizonSearchResult {
  int N = 0;
  CtrbCertificate certificate;
};

/// Grows the horizon until the controllability requirement Phi_N <= Phi_alpha
/// is certified. When the sampled estimate exceeds Phi_alpha, an exponential
/// decay C sigma^tau is fitted to the worst witness trajectory's stage costs
/// and the horizon jumps to the smallest N with C sigma^{N-1} <= Phi_alpha.
/// Throws when max_N is exceeded.
HorizonSearchResult horizon_search(const SystemModel& model, double alpha, double eps,
                                   int max_N, const HorizonSearchOptions& opts = {});

} // namespace dmpc
