#pragma once

#include "dmpc/model.hpp"
#include "dmpc/qp.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dmpc {

/// Mixed-integer encoding of the controllability test: minimize
/// -1/2 (d_x^T mu_U1 + d_x^T mu_U2 + d^T mu_UL1) over the KKT system of the
/// bilevel problem, with complementarity lowered to big-M rows driven by the
/// beta binaries. At every feasible point the objective equals
/// 1/2 (Phi_alpha xbar^T Q xbar + y^T T y), so optimum 0 certifies
/// Phi_N <= Phi_alpha and a strictly negative optimum exhibits a witness.
struct MilpInstance {
  struct Var {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
    bool is_binary = false;
  };
  struct Row {
    std::string name;
    char sense = 'E'; ///< 'E' equality, 'L' <=
    double rhs = 0.0;
    std::vector<std::pair<int, double>> coef;
  };

  std::vector<Var> vars;
  std::vector<Row> rows;
  Eigen::VectorXd objective; ///< linear, one entry per variable

  /// semantic block name -> (first variable index, length)
  std::map<std::string, std::pair<int, int>> blocks;

  /// big-M metadata: one entry per complementarity pair, for file comments
  struct Complementarity {
    int beta;       ///< binary variable index
    int zero_if_one;  ///< variable forced to 0 when beta = 1
    int zero_if_zero; ///< variable forced to 0 when beta = 0
  };
  std::vector<Complementarity> pairs;

  double phi_alpha = 0.0;
  int horizon = 0;

  int num_binaries() const;
  int block_offset(const std::string& name) const;
  int block_size(const std::string& name) const;

  /// Residual check of a full assignment (used by tests and the verifier).
  bool feasible(const Eigen::VectorXd& x, double tol = 1e-7) const;
  double objective_value(const Eigen::VectorXd& x) const;
};

MilpInstance build_milp(const SystemModel& model, int N, double phi_alpha);

enum class MilpFormat { mps, lp_text };

void export_milp(const MilpInstance& inst, const std::string& path, MilpFormat format);

/// Structural data recovered from an exported file, for round-trip checks.
struct ParsedMilp {
  std::vector<std::string> var_names;
  std::vector<bool> is_binary;
  std::vector<double> lo, hi;
  std::vector<double> objective;
  std::vector<std::tuple<std::string, char, double>> rows; ///< name, sense, rhs
  std::vector<std::tuple<std::string, std::string, double>> coefs; ///< row, col, value
};
ParsedMilp parse_milp_mps(const std::string& path);

/// True when the two describe the same rows/columns/coefficients.
bool structurally_equal(const MilpInstance& inst, const ParsedMilp& parsed, double tol = 0.0);

enum class VerifyVerdict { verified, refuted, budget_exceeded };

struct VerifyResult {
  VerifyVerdict verdict = VerifyVerdict::budget_exceeded;
  double best_objective = 0.0;
  Eigen::VectorXd witness;       ///< refuting initial state (empty otherwise)
  double witness_ratio = 0.0;    ///< l*(z*_{N-1}) / l(xbar, v*_0) at the witness
  long nodes_explored = 0;
};

/// Branch-and-bound over the binaries with LP relaxations solved by the
/// internal dense simplex. Refutation witnesses are re-solved with the
/// active-set oracle before they are reported. Guard: at most 24 binaries.
VerifyResult verify_exact(const MilpInstance& inst, const SystemModel& model,
                          long node_budget = 50000);

} // namespace dmpc
