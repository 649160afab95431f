#pragma once

#include "dmpc/model.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <vector>

namespace dmpc {

using SparseRowMajor = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Multipliers of the condensed problem: lambda for the equality block
/// (initial-state pinning rows first, then the N-1 dynamics row blocks),
/// mu >= 0 for the stage inequality rows.
struct DualPoint {
  Eigen::VectorXd lambda; ///< size n*N
  Eigen::VectorXd mu;     ///< size n_c*N, elementwise nonnegative
};

/// Condensed finite-horizon problem
///
///   min 1/2 y^T H y   s.t.  Aeq y = b xbar,  C y <= (1-delta) d
///
/// over y = [z_0..z_{N-1}, v_0..v_{N-1}]. H = blkdiag(Q,..,Q,R,..,R). The
/// equality block stacks the pinning rows z_0 = xbar on top of the dynamics
/// rows z_{t+1} = A z_t + B v_t (t = 0..N-2), so Aeq has n*N rows and
/// b = [I; 0]. Keeping the pinning rows in the dualized constraint set makes
/// the dual maximum equal V_N^delta exactly, which the stopping tests need.
/// The tightening delta only ever scales the right-hand side (1-delta) d;
/// the matrices are built once per (model, N).
struct MpcProblem {
  int N = 0;
  int nx = 0;           ///< n
  int nu = 0;           ///< m
  int nc = 0;           ///< constraint rows per stage
  int ncx = 0;          ///< state constraint rows per stage

  SparseRowMajor H;     ///< (n+m)N square
  SparseRowMajor Aeq;   ///< nN x (n+m)N
  SparseRowMajor C;     ///< n_c N x (n+m)N
  Eigen::VectorXd d;    ///< n_c N, strictly positive
  SparseRowMajor b;     ///< nN x n

  // cached transposes for the dual gradient products
  SparseRowMajor AeqT;
  SparseRowMajor CT;

  // per-subsystem Cholesky factors of Q_i, R_i for H^{-1} products
  std::vector<Eigen::LLT<Eigen::MatrixXd>> Qfact;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> Rfact;
  std::vector<int> state_dims, input_dims;

  // dense stage weights, kept for the offline machinery (T matrix, l*(x))
  Eigen::MatrixXd Qd, Rd;

  int ny() const { return (nx + nu) * N; }
  int neq() const { return nx * N; }
  int nineq() const { return nc * N; }

  int z_offset(int stage) const { return stage * nx; }
  int v_offset(int stage) const { return N * nx + stage * nu; }

  /// H^{-1} g via the cached per-block factors; never forms a dense inverse.
  Eigen::VectorXd apply_Hinv(const Eigen::VectorXd& g) const;
  /// b * xbar = [xbar; 0; ...; 0].
  Eigen::VectorXd bx(const Eigen::VectorXd& xbar) const;
};

/// Builds the condensed problem. Requires N >= 2 (with N = 1 the dynamics
/// block would be empty) and a model that passes validate().
MpcProblem condense(const SystemModel& model, int N);

/// Dual function
///   D_N^delta(xbar, lambda, mu) =
///     -1/2 g^T H^{-1} g - lambda^T b xbar - (1-delta) mu^T d,
///   g = Aeq^T lambda + C^T mu.
double dual_value(const MpcProblem& prob, const Eigen::VectorXd& xbar, double delta,
                  const DualPoint& pt);

/// y = -H^{-1} (Aeq^T lambda + C^T mu).
Eigen::VectorXd primal_recover(const MpcProblem& prob, const DualPoint& pt);

struct PrimalGradients {
  Eigen::VectorXd y;
  Eigen::VectorXd g_lambda; ///< Aeq y - b xbar
  Eigen::VectorXd g_mu;     ///< C y - (1-delta) d
};
PrimalGradients primal_recover_with_gradients(const MpcProblem& prob,
                                              const Eigen::VectorXd& xbar, double delta,
                                              const DualPoint& pt);

/// Largest eigenvalue of G H^{-1} G^T with G = [Aeq; C], by matrix-free power
/// iteration (relative tolerance 1e-8). Throws after 1e5 iterations.
double lipschitz(const MpcProblem& prob);

/// Dumps H, Aeq, b, C, d in MatrixMarket coordinate format (d as a dense
/// vector file) into `directory` for external cross-checks.
void write_matrix_market(const MpcProblem& prob, const std::string& directory);

} // namespace dmpc
