#include "dmpc/qp.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace dmpc {

Eigen::VectorXd MpcProblem::apply_Hinv(const Eigen::VectorXd& g) const {
  Eigen::VectorXd w(g.size());
  const int M = static_cast<int>(state_dims.size());
  for (int t = 0; t < N; ++t) {
    int off = z_offset(t);
    for (int i = 0; i < M; ++i) {
      const int ni = state_dims[i];
      w.segment(off, ni) = Qfact[i].solve(g.segment(off, ni));
      off += ni;
    }
  }
  for (int t = 0; t < N; ++t) {
    int off = v_offset(t);
    for (int i = 0; i < M; ++i) {
      const int mi = input_dims[i];
      w.segment(off, mi) = Rfact[i].solve(g.segment(off, mi));
      off += mi;
    }
  }
  return w;
}

Eigen::VectorXd MpcProblem::bx(const Eigen::VectorXd& xbar) const {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(neq());
  r.head(nx) = xbar;
  return r;
}

MpcProblem condense(const SystemModel& model, int N) {
  if (N < 2) throw std::invalid_argument("condense: N must be at least 2");

  MpcProblem p;
  p.N = N;
  p.nx = model.state_dim();
  p.nu = model.input_dim();
  p.nc = model.constraint_rows();
  p.state_dims = model.state_dims;
  p.input_dims = model.input_dims;

  const int n = p.nx, m = p.nu;
  const int ny = p.ny();

  using T = Eigen::Triplet<double>;
  std::vector<T> trips;

  // H = blkdiag(Q x N, R x N)
  trips.reserve(static_cast<size_t>(N) * (n * n + m * m));
  const Eigen::MatrixXd Q = model.full_Q();
  const Eigen::MatrixXd R = model.full_R();
  p.Qd = Q;
  p.Rd = R;
  for (int t = 0; t < N; ++t) {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (Q(r, c) != 0.0) trips.emplace_back(p.z_offset(t) + r, p.z_offset(t) + c, Q(r, c));
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        if (R(r, c) != 0.0) trips.emplace_back(p.v_offset(t) + r, p.v_offset(t) + c, R(r, c));
  }
  p.H.resize(ny, ny);
  p.H.setFromTriplets(trips.begin(), trips.end());

  // Aeq: pinning rows z_0 = xbar, then dynamics -A z_t + z_{t+1} - B v_t = 0
  trips.clear();
  for (int r = 0; r < n; ++r) trips.emplace_back(r, p.z_offset(0) + r, 1.0);
  for (int t = 0; t <= N - 2; ++t) {
    const int row0 = n * (1 + t);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c)
        if (model.A(r, c) != 0.0) trips.emplace_back(row0 + r, p.z_offset(t) + c, -model.A(r, c));
      trips.emplace_back(row0 + r, p.z_offset(t + 1) + r, 1.0);
      for (int c = 0; c < m; ++c)
        if (model.B(r, c) != 0.0) trips.emplace_back(row0 + r, p.v_offset(t) + c, -model.B(r, c));
    }
  }
  p.Aeq.resize(p.neq(), ny);
  p.Aeq.setFromTriplets(trips.begin(), trips.end());

  // b = [I; 0]
  trips.clear();
  for (int r = 0; r < n; ++r) trips.emplace_back(r, r, 1.0);
  p.b.resize(p.neq(), n);
  p.b.setFromTriplets(trips.begin(), trips.end());

  // C, d: per stage, state rows (subsystem-major) then input rows
  const Eigen::MatrixXd Cx = model.stacked_Cx();
  const Eigen::VectorXd dx = model.stacked_dx();
  const Eigen::MatrixXd Cu = model.stacked_Cu();
  const Eigen::VectorXd du = model.stacked_du();
  p.ncx = static_cast<int>(Cx.rows());

  trips.clear();
  p.d.resize(p.nineq());
  for (int t = 0; t < N; ++t) {
    const int row0 = t * p.nc;
    for (int r = 0; r < Cx.rows(); ++r)
      for (int c = 0; c < n; ++c)
        if (Cx(r, c) != 0.0) trips.emplace_back(row0 + r, p.z_offset(t) + c, Cx(r, c));
    for (int r = 0; r < Cu.rows(); ++r)
      for (int c = 0; c < m; ++c)
        if (Cu(r, c) != 0.0)
          trips.emplace_back(row0 + static_cast<int>(Cx.rows()) + r, p.v_offset(t) + c, Cu(r, c));
    p.d.segment(row0, Cx.rows()) = dx;
    p.d.segment(row0 + Cx.rows(), Cu.rows()) = du;
  }
  p.C.resize(p.nineq(), ny);
  p.C.setFromTriplets(trips.begin(), trips.end());

  p.AeqT = SparseRowMajor(p.Aeq.transpose());
  p.CT = SparseRowMajor(p.C.transpose());

  for (const auto& s : model.subsystems) {
    p.Qfact.emplace_back(s.Q);
    p.Rfact.emplace_back(s.R);
    if (p.Qfact.back().info() != Eigen::Success || p.Rfact.back().info() != Eigen::Success)
      throw std::runtime_error("condense: cost blocks are not positive definite");
  }
  return p;
}

double dual_value(const MpcProblem& prob, const Eigen::VectorXd& xbar, double delta,
                  const DualPoint& pt) {
  const Eigen::VectorXd g = prob.AeqT * pt.lambda + prob.CT * pt.mu;
  const Eigen::VectorXd w = prob.apply_Hinv(g);
  return -0.5 * g.dot(w) - pt.lambda.head(prob.nx).dot(xbar) - (1.0 - delta) * pt.mu.dot(prob.d);
}

Eigen::VectorXd primal_recover(const MpcProblem& prob, const DualPoint& pt) {
  const Eigen::VectorXd g = prob.AeqT * pt.lambda + prob.CT * pt.mu;
  return -prob.apply_Hinv(g);
}

PrimalGradients primal_recover_with_gradients(const MpcProblem& prob,
                                              const Eigen::VectorXd& xbar, double delta,
                                              const DualPoint& pt) {
  PrimalGradients out;
  out.y = primal_recover(prob, pt);
  out.g_lambda = prob.Aeq * out.y - prob.bx(xbar);
  out.g_mu = prob.C * out.y - (1.0 - delta) * prob.d;
  return out;
}

double lipschitz(const MpcProblem& prob) {
  const int rows = prob.neq() + prob.nineq();
  // deterministic start vector
  Eigen::VectorXd u(rows);
  for (int i = 0; i < rows; ++i) u(i) = std::sin(0.7 * (i + 1)) + 1.1;
  u.normalize();

  auto apply = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd g =
        prob.AeqT * v.head(prob.neq()) + prob.CT * v.tail(prob.nineq());
    const Eigen::VectorXd w = prob.apply_Hinv(g);
    Eigen::VectorXd out(rows);
    out.head(prob.neq()) = prob.Aeq * w;
    out.tail(prob.nineq()) = prob.C * w;
    return out;
  };

  double lambda = 0.0;
  for (long it = 0; it < 100000; ++it) {
    Eigen::VectorXd v = apply(u);
    const double norm = v.norm();
    if (norm == 0.0) throw std::runtime_error("lipschitz: operator maps start vector to zero");
    v /= norm;
    const double next = norm; // Rayleigh estimate after normalization
    if (it > 0 && std::abs(next - lambda) <= 1e-8 * next) return next;
    lambda = next;
    u.swap(v);
  }
  throw std::runtime_error("lipschitz: power iteration did not converge");
}

namespace {

void write_mm_sparse(const SparseRowMajor& M, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_matrix_market: cannot open " + path);
  f << "%%MatrixMarket matrix coordinate real general\n";
  f << M.rows() << " " << M.cols() << " " << M.nonZeros() << "\n";
  f.precision(17);
  for (int r = 0; r < M.outerSize(); ++r)
    for (SparseRowMajor::InnerIterator it(M, r); it; ++it)
      f << it.row() + 1 << " " << it.col() + 1 << " " << it.value() << "\n";
}

void write_mm_vector(const Eigen::VectorXd& v, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_matrix_market: cannot open " + path);
  f << "%%MatrixMarket matrix array real general\n";
  f << v.size() << " 1\n";
  f.precision(17);
  for (int i = 0; i < v.size(); ++i) f << v(i) << "\n";
}

} // namespace

void write_matrix_market(const MpcProblem& prob, const std::string& directory) {
  std::filesystem::create_directories(directory);
  const std::filesystem::path dir(directory);
  write_mm_sparse(prob.H, (dir / "H.mtx").string());
  write_mm_sparse(prob.Aeq, (dir / "Aeq.mtx").string());
  write_mm_sparse(prob.b, (dir / "b.mtx").string());
  write_mm_sparse(prob.C, (dir / "C.mtx").string());
  write_mm_vector(prob.d, (dir / "d.mtx").string());
}

} // namespace dmpc
