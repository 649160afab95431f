#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dmpc {

/// Per-subsystem cost weights and polytopic constraint sets.
///
/// State set  { x : Cx x <= dx }  and input set { u : Cu u <= du }.
/// Both polytopes must be bounded and contain the origin in their interior,
/// which is equivalent to dx, du having strictly positive entries together
/// with finite support in every coordinate direction.
struct Subsystem {
  Eigen::MatrixXd Q; ///< state weight, symmetric positive definite
  Eigen::MatrixXd R; ///< input weight, symmetric positive definite
  Eigen::MatrixXd Cx;
  Eigen::VectorXd dx;
  Eigen::MatrixXd Cu;
  Eigen::VectorXd du;
};

/// Coupled linear system x+ = A x + B u partitioned into M subsystems.
///
/// A and B are stored dense; the block sparsity pattern is what defines the
/// neighbor sets N_i = { j : A_ij != 0 or B_ij != 0 }. All data is immutable
/// after construction and safe to share across threads.
struct SystemModel {
  int M = 0;
  std::vector<int> state_dims; ///< n_i
  std::vector<int> input_dims; ///< m_i
  Eigen::MatrixXd A;           ///< n x n
  Eigen::MatrixXd B;           ///< n x m
  std::vector<std::vector<int>> neighbors;
  std::vector<Subsystem> subsystems;

  int state_dim() const;
  int input_dim() const;
  int state_offset(int i) const;
  int input_offset(int i) const;

  /// Number of constraint rows per stage, n_c = sum_i (rows(Cx_i) + rows(Cu_i)).
  int constraint_rows() const;

  Eigen::MatrixXd full_Q() const; ///< blkdiag(Q_1..Q_M)
  Eigen::MatrixXd full_R() const;
  Eigen::MatrixXd stacked_Cx() const; ///< blkdiag of state constraint rows
  Eigen::VectorXd stacked_dx() const;
  Eigen::MatrixXd stacked_Cu() const;
  Eigen::VectorXd stacked_du() const;
};

/// Recipe for random test systems. The seed fully determines the output.
struct RandomSystemSpec {
  int M = 3;
  int n_i = 5;
  int m_i = 1;
  double spectral_radius = 1.1;
  double density = 0.5; ///< probability of a nonzero off-diagonal A block
  std::array<double, 2> state_upper{0.5, 1.5};
  std::array<double, 2> state_lower{-0.15, -0.05};
  std::array<double, 2> input_upper{0.5, 1.5};
  std::array<double, 2> input_lower{-1.5, -0.5};
  std::uint64_t seed = 0;
  /// Test hook: emit B = 0 so every draw is uncontrollable.
  bool force_zero_b = false;
};

/// Checks the standing assumptions on a model. Returns one message per
/// violated invariant (empty on success); never throws for bad data.
std::vector<std::string> validate(const SystemModel& model);

/// Draws a random model per the spec and scales A to the requested spectral
/// radius. Throws std::runtime_error if the raw draw has zero spectral radius
/// or no controllable pair is found within 100 redraws.
SystemModel generate_random(const RandomSystemSpec& spec);

/// Smallest kappa with kappa*Q - A^T Q A positive semidefinite, computed as
/// the largest eigenvalue of the Cholesky-whitened pencil.
double kappa(const SystemModel& model);

/// Stage cost l(x,u) = 1/2 (x^T Q x + u^T R u).
double stage_cost(const SystemModel& model, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& u);

/// l*(x) = min_u l(x,u) = 1/2 x^T Q x.
double stage_cost_min(const SystemModel& model, const Eigen::VectorXd& x);

/// Membership in the (untightened) state/input sets, allowing `slack` beyond
/// each right-hand side entry.
bool in_state_set(const SystemModel& model, const Eigen::VectorXd& x, double slack = 0.0);
bool in_input_set(const SystemModel& model, const Eigen::VectorXd& u, double slack = 0.0);

/// Spectral radius of a square matrix.
double spectral_radius(const Eigen::MatrixXd& A);

/// Per-coordinate bounding box of X, from support-function LPs.
void state_bounding_box(const SystemModel& model, Eigen::VectorXd& lo, Eigen::VectorXd& hi);

/// Rank of the Kalman controllability matrix [B, AB, ..., A^{n-1}B] via SVD
/// with relative tolerance 1e-10.
int controllability_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

} // namespace dmpc
