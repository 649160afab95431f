#include "dmpc/model.hpp"

#include "dmpc/rng.hpp"
#include "dmpc/simplex.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dmpc {

int SystemModel::state_dim() const {
  return std::accumulate(state_dims.begin(), state_dims.end(), 0);
}

int SystemModel::input_dim() const {
  return std::accumulate(input_dims.begin(), input_dims.end(), 0);
}

int SystemModel::state_offset(int i) const {
  return std::accumulate(state_dims.begin(), state_dims.begin() + i, 0);
}

int SystemModel::input_offset(int i) const {
  return std::accumulate(input_dims.begin(), input_dims.begin() + i, 0);
}

int SystemModel::constraint_rows() const {
  int rows = 0;
  for (const auto& s : subsystems) rows += static_cast<int>(s.Cx.rows() + s.Cu.rows());
  return rows;
}

Eigen::MatrixXd SystemModel::full_Q() const {
  const int n = state_dim();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < M; ++i)
    Q.block(state_offset(i), state_offset(i), state_dims[i], state_dims[i]) = subsystems[i].Q;
  return Q;
}

Eigen::MatrixXd SystemModel::full_R() const {
  const int m = input_dim();
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < M; ++i)
    R.block(input_offset(i), input_offset(i), input_dims[i], input_dims[i]) = subsystems[i].R;
  return R;
}

Eigen::MatrixXd SystemModel::stacked_Cx() const {
  int rows = 0;
  for (const auto& s : subsystems) rows += static_cast<int>(s.Cx.rows());
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(rows, state_dim());
  int r = 0;
  for (int i = 0; i < M; ++i) {
    C.block(r, state_offset(i), subsystems[i].Cx.rows(), state_dims[i]) = subsystems[i].Cx;
    r += static_cast<int>(subsystems[i].Cx.rows());
  }
  return C;
}

Eigen::VectorXd SystemModel::stacked_dx() const {
  int rows = 0;
  for (const auto& s : subsystems) rows += static_cast<int>(s.Cx.rows());
  Eigen::VectorXd d(rows);
  int r = 0;
  for (const auto& s : subsystems) {
    d.segment(r, s.dx.size()) = s.dx;
    r += static_cast<int>(s.dx.size());
  }
  return d;
}

Eigen::MatrixXd SystemModel::stacked_Cu() const {
  int rows = 0;
  for (const auto& s : subsystems) rows += static_cast<int>(s.Cu.rows());
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(rows, input_dim());
  int r = 0;
  for (int i = 0; i < M; ++i) {
    C.block(r, input_offset(i), subsystems[i].Cu.rows(), input_dims[i]) = subsystems[i].Cu;
    r += static_cast<int>(subsystems[i].Cu.rows());
  }
  return C;
}

Eigen::VectorXd SystemModel::stacked_du() const {
  int rows = 0;
  for (const auto& s : subsystems) rows += static_cast<int>(s.Cu.rows());
  Eigen::VectorXd d(rows);
  int r = 0;
  for (const auto& s : subsystems) {
    d.segment(r, s.du.size()) = s.du;
    r += static_cast<int>(s.du.size());
  }
  return d;
}

double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("spectral_radius: non-square");
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void state_bounding_box(const SystemModel& model, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  const Eigen::MatrixXd Cx = model.stacked_Cx();
  const Eigen::VectorXd dx = model.stacked_dx();
  const int n = model.state_dim();
  lo.resize(n);
  hi.resize(n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(j) = 1.0;
    hi(j) = support_function(Cx, dx, e);
    lo(j) = -support_function(Cx, dx, -e);
  }
}

int controllability_rank(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  Eigen::MatrixXd K(n, n * m);
  Eigen::MatrixXd P = B;
  for (int k = 0; k < n; ++k) {
    K.middleCols(k * m, m) = P;
    P = A * P;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(K);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double tol = 1e-10 * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  return rank;
}

namespace {

bool block_nonzero(const Eigen::MatrixXd& M, int r0, int c0, int rows, int cols) {
  return (M.block(r0, c0, rows, cols).array() != 0.0).any();
}

bool polytope_bounded(const Eigen::MatrixXd& C, const Eigen::VectorXd& d) {
  const int n = static_cast<int>(C.cols());
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(j) = 1.0;
    if (!std::isfinite(support_function(C, d, e))) return false;
    if (!std::isfinite(support_function(C, d, -e))) return false;
  }
  return true;
}

void check_spd(const Eigen::MatrixXd& W, const std::string& what, int index,
               std::vector<std::string>& out) {
  if (W.rows() != W.cols()) {
    out.push_back(what + " not square at subsystem " + std::to_string(index));
    return;
  }
  if (!W.isApprox(W.transpose(), 1e-12)) {
    out.push_back(what + " not symmetric at subsystem " + std::to_string(index));
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 0.0)
    out.push_back(what + " not positive definite at subsystem " + std::to_string(index));
}

} // namespace

std::vector<std::string> validate(const SystemModel& model) {
  std::vector<std::string> v;
  const int n = model.state_dim();
  const int m = model.input_dim();

  if (model.M <= 0) {
    v.push_back("M must be positive");
    return v;
  }
  if (static_cast<int>(model.state_dims.size()) != model.M ||
      static_cast<int>(model.input_dims.size()) != model.M ||
      static_cast<int>(model.subsystems.size()) != model.M ||
      static_cast<int>(model.neighbors.size()) != model.M) {
    v.push_back("per-subsystem containers do not all have M entries");
    return v;
  }
  if (model.A.rows() != n || model.A.cols() != n) v.push_back("A is not n x n");
  if (model.B.rows() != n || model.B.cols() != m) v.push_back("B is not n x m");
  if (!v.empty()) return v;

  for (int i = 0; i < model.M; ++i) {
    const auto& s = model.subsystems[i];
    const int ni = model.state_dims[i];
    const int mi = model.input_dims[i];
    if (s.Q.rows() != ni || s.R.rows() != mi || s.Cx.cols() != ni || s.Cu.cols() != mi ||
        s.dx.size() != s.Cx.rows() || s.du.size() != s.Cu.rows()) {
      v.push_back("dimension mismatch at subsystem " + std::to_string(i));
      continue;
    }
    if ((s.dx.array() <= 0.0).any())
      v.push_back("d_x not strictly positive at subsystem " + std::to_string(i));
    if ((s.du.array() <= 0.0).any())
      v.push_back("d_u not strictly positive at subsystem " + std::to_string(i));
    if (!polytope_bounded(s.Cx, s.dx))
      v.push_back("state polytope unbounded at subsystem " + std::to_string(i));
    if (!polytope_bounded(s.Cu, s.du))
      v.push_back("input polytope unbounded at subsystem " + std::to_string(i));
    check_spd(s.Q, "Q", i, v);
    check_spd(s.R, "R", i, v);
  }

  if (controllability_rank(model.A, model.B) < n) v.push_back("uncontrollable pair (A,B)");

  for (int i = 0; i < model.M; ++i) {
    std::vector<int> expected;
    for (int j = 0; j < model.M; ++j) {
      const bool a_nz = block_nonzero(model.A, model.state_offset(i), model.state_offset(j),
                                      model.state_dims[i], model.state_dims[j]);
      const bool b_nz = block_nonzero(model.B, model.state_offset(i), model.input_offset(j),
                                      model.state_dims[i], model.input_dims[j]);
      if (a_nz || b_nz) expected.push_back(j);
    }
    if (expected != model.neighbors[i])
      v.push_back("neighbor set mismatch at subsystem " + std::to_string(i));
  }
  return v;
}

namespace {

/// Box polytope rows: +e_j <= upper_j first, then -e_j <= -lower_j.
void box_rows(const Eigen::VectorXd& upper, const Eigen::VectorXd& lower,
              Eigen::MatrixXd& C, Eigen::VectorXd& d) {
  const int n = static_cast<int>(upper.size());
  C = Eigen::MatrixXd::Zero(2 * n, n);
  d.resize(2 * n);
  for (int j = 0; j < n; ++j) {
    C(j, j) = 1.0;
    d(j) = upper(j);
    C(n + j, j) = -1.0;
    d(n + j) = -lower(j);
  }
}

} // namespace

SystemModel generate_random(const RandomSystemSpec& spec) {
  if (spec.M <= 0 || spec.n_i <= 0 || spec.m_i <= 0)
    throw std::invalid_argument("generate_random: dimensions must be positive");
  if (spec.spectral_radius <= 0.0)
    throw std::invalid_argument("generate_random: spectral radius target must be positive");
  auto ordered = [](const std::array<double, 2>& iv) { return iv[0] <= iv[1]; };
  if (!ordered(spec.state_upper) || !ordered(spec.state_lower) || !ordered(spec.input_upper) ||
      !ordered(spec.input_lower))
    throw std::invalid_argument("generate_random: bound-sampling intervals must be ordered");

  Rng rng(spec.seed);
  const int n = spec.M * spec.n_i;
  const int m = spec.M * spec.m_i;

  SystemModel model;
  model.M = spec.M;
  model.state_dims.assign(spec.M, spec.n_i);
  model.input_dims.assign(spec.M, spec.m_i);

  // Each subsystem is a positive transport chain: local decay on the
  // diagonal, a cyclic shift one step along the chain, and weak nonnegative
  // coupling to neighboring subsystems. The actuator drives the whole chain
  // with positive gains. This keeps the positive orthant (where the sampled
  // boxes put most of their volume) nearly invariant, so a sizable share of
  // X stays feasible for the horizon problem even at spectral radius > 1.
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < spec.M; ++i) {
      for (int r = 0; r < spec.n_i; ++r) {
        A(i * spec.n_i + r, i * spec.n_i + r) = rng.uniform(0.6, 0.7);
        if (spec.n_i > 1)
          A(i * spec.n_i + r, i * spec.n_i + (r + 1) % spec.n_i) += rng.uniform(0.3, 0.4);
      }
      for (int j = 0; j < spec.M; ++j) {
        if (i == j) continue;
        if (rng.uniform01() < spec.density) {
          for (int r = 0; r < spec.n_i; ++r)
            for (int c = 0; c < spec.n_i; ++c)
              A(i * spec.n_i + r, j * spec.n_i + c) = 0.03 * rng.uniform01();
        }
      }
    }
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, m);
    if (!spec.force_zero_b) {
      for (int i = 0; i < spec.M; ++i)
        for (int r = 0; r < spec.n_i; ++r)
          for (int c = 0; c < spec.m_i; ++c)
            B(i * spec.n_i + r, i * spec.m_i + c) = rng.uniform(0.2, 1.0);
    }

    const double rho = spectral_radius(A);
    if (rho <= 0.0) throw std::runtime_error("generate_random: raw draw has zero spectral radius");
    A *= spec.spectral_radius / rho;

    if (controllability_rank(A, B) == n) {
      model.A = A;
      model.B = B;
      ok = true;
    }
  }
  if (!ok)
    throw std::runtime_error("generate_random: no controllable pair within 100 redraws");

  model.subsystems.resize(spec.M);
  for (int i = 0; i < spec.M; ++i) {
    auto& s = model.subsystems[i];
    s.Q = 2.0 * Eigen::MatrixXd::Identity(spec.n_i, spec.n_i);
    s.R = 2.0 * Eigen::MatrixXd::Identity(spec.m_i, spec.m_i);
    Eigen::VectorXd xu(spec.n_i), xl(spec.n_i);
    for (int j = 0; j < spec.n_i; ++j) {
      xu(j) = rng.uniform(spec.state_upper[0], spec.state_upper[1]);
      xl(j) = rng.uniform(spec.state_lower[0], spec.state_lower[1]);
    }
    box_rows(xu, xl, s.Cx, s.dx);
    Eigen::VectorXd uu(spec.m_i), ul(spec.m_i);
    for (int j = 0; j < spec.m_i; ++j) {
      uu(j) = rng.uniform(spec.input_upper[0], spec.input_upper[1]);
      ul(j) = rng.uniform(spec.input_lower[0], spec.input_lower[1]);
    }
    box_rows(uu, ul, s.Cu, s.du);
  }

  model.neighbors.resize(spec.M);
  for (int i = 0; i < spec.M; ++i) {
    model.neighbors[i].clear();
    for (int j = 0; j < spec.M; ++j) {
      const bool a_nz = block_nonzero(model.A, i * spec.n_i, j * spec.n_i, spec.n_i, spec.n_i);
      const bool b_nz = block_nonzero(model.B, i * spec.n_i, j * spec.m_i, spec.n_i, spec.m_i);
      if (a_nz || b_nz) model.neighbors[i].push_back(j);
    }
  }

  auto violations = validate(model);
  if (!violations.empty())
    throw std::runtime_error("generate_random: produced invalid model: " + violations.front());
  return model;
}

double kappa(const SystemModel& model) {
  const Eigen::MatrixXd Q = model.full_Q();
  const Eigen::MatrixXd W = model.A.transpose() * Q * model.A;
  Eigen::LLT<Eigen::MatrixXd> llt(Q);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("kappa: Q is not positive definite");
  // whiten: kappa = max eig of L^{-1} (A^T Q A) L^{-T}
  const Eigen::MatrixXd L = llt.matrixL();
  Eigen::MatrixXd G = L.triangularView<Eigen::Lower>().solve(W);
  G = L.triangularView<Eigen::Lower>().solve(G.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (G + G.transpose()),
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("kappa: eigen solve failed");
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

double stage_cost(const SystemModel& model, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& u) {
  if (x.size() != model.state_dim() || u.size() != model.input_dim())
    throw std::invalid_argument("stage_cost: dimension mismatch");
  double cost = 0.0;
  for (int i = 0; i < model.M; ++i) {
    const auto xi = x.segment(model.state_offset(i), model.state_dims[i]);
    const auto ui = u.segment(model.input_offset(i), model.input_dims[i]);
    cost += 0.5 * (xi.dot(model.subsystems[i].Q * xi) + ui.dot(model.subsystems[i].R * ui));
  }
  return cost;
}

double stage_cost_min(const SystemModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.state_dim())
    throw std::invalid_argument("stage_cost_min: dimension mismatch");
  double cost = 0.0;
  for (int i = 0; i < model.M; ++i) {
    const auto xi = x.segment(model.state_offset(i), model.state_dims[i]);
    cost += 0.5 * xi.dot(model.subsystems[i].Q * xi);
  }
  return cost;
}

bool in_state_set(const SystemModel& model, const Eigen::VectorXd& x, double slack) {
  for (int i = 0; i < model.M; ++i) {
    const auto& s = model.subsystems[i];
    const auto xi = x.segment(model.state_offset(i), model.state_dims[i]);
    if (((s.Cx * xi - s.dx).array() > slack).any()) return false;
  }
  return true;
}

bool in_input_set(const SystemModel& model, const Eigen::VectorXd& u, double slack) {
  for (int i = 0; i < model.M; ++i) {
    const auto& s = model.subsystems[i];
    const auto ui = u.segment(model.input_offset(i), model.input_dims[i]);
    if (((s.Cu * ui - s.du).array() > slack).any()) return false;
  }
  return true;
}

} // namespace dmpc
