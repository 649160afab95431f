#include "dmpc/milp.hpp"

#include "dmpc/simplex.hpp"
#include "dmpc/solver.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dmpc {

int MilpInstance::num_binaries() const {
  int n = 0;
  for (const auto& v : vars)
    if (v.is_binary) ++n;
  return n;
}

int MilpInstance::block_offset(const std::string& name) const {
  auto it = blocks.find(name);
  if (it == blocks.end()) throw std::out_of_range("MilpInstance: no block " + name);
  return it->second.first;
}

int MilpInstance::block_size(const std::string& name) const {
  auto it = blocks.find(name);
  if (it == blocks.end()) throw std::out_of_range("MilpInstance: no block " + name);
  return it->second.second;
}

bool MilpInstance::feasible(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != static_cast<Eigen::Index>(vars.size())) return false;
  for (size_t j = 0; j < vars.size(); ++j) {
    if (x(j) < vars[j].lo - tol || x(j) > vars[j].hi + tol) return false;
    if (vars[j].is_binary && std::abs(x(j) - std::round(x(j))) > tol) return false;
  }
  for (const auto& row : rows) {
    double lhs = 0.0;
    for (const auto& [j, a] : row.coef) lhs += a * x(j);
    if (row.sense == 'E' && std::abs(lhs - row.rhs) > tol * (1.0 + std::abs(row.rhs)))
      return false;
    if (row.sense == 'L' && lhs > row.rhs + tol * (1.0 + std::abs(row.rhs))) return false;
  }
  return true;
}

double MilpInstance::objective_value(const Eigen::VectorXd& x) const {
  return objective.dot(x);
}

namespace {

double inf_norm(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  return M.cwiseAbs().rowwise().sum().maxCoeff();
}

struct Blocks {
  MilpInstance* inst;
  int add(const std::string& name, int count, double lo, double hi, bool binary) {
    const int off = static_cast<int>(inst->vars.size());
    inst->blocks[name] = {off, count};
    for (int i = 0; i < count; ++i)
      inst->vars.push_back({name + "_" + std::to_string(i), lo, hi, binary});
    return off;
  }
};

} // namespace

MilpInstance build_milp(const SystemModel& model, int N, double phi_alpha) {
  if (!(phi_alpha > 0.0)) throw std::invalid_argument("build_milp: Phi_alpha must be positive");
  const MpcProblem prob = condense(model, N);
  const double inf = LpProblem::inf;

  const int n = prob.nx;
  const int ny = prob.ny();
  const int neq = prob.neq();
  const int ncN = prob.nineq();
  const int ncx = prob.ncx;
  const int nc = prob.nc;

  const Eigen::MatrixXd Cx = model.stacked_Cx();
  const Eigen::VectorXd dx = model.stacked_dx();
  const Eigen::MatrixXd Cu = model.stacked_Cu();
  const Eigen::VectorXd du = model.stacked_du();
  const Eigen::MatrixXd CxA = Cx * model.A;

  // T = blkdiag(0,..,0,-Q, Phi R, 0,..,0,-R) over [z_0..z_{N-1}, v_0..v_{N-1}]
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(ny, ny);
  T.block(prob.z_offset(N - 1), prob.z_offset(N - 1), n, n) = -prob.Qd;
  T.block(prob.v_offset(0), prob.v_offset(0), prob.nu, prob.nu) = phi_alpha * prob.Rd;
  T.block(prob.v_offset(N - 1), prob.v_offset(N - 1), prob.nu, prob.nu) -= prob.Rd;

  // big-M scales
  Eigen::VectorXd Ms_stage(nc); // per stage-row slack bound, x2 safety
  for (int r = 0; r < ncx; ++r)
    Ms_stage(r) = 2.0 * (dx(r) + support_function(Cx, dx, -Cx.row(r).transpose()));
  for (int r = 0; r < nc - ncx; ++r)
    Ms_stage(ncx + r) = 2.0 * (du(r) + support_function(Cu, du, -Cu.row(r).transpose()));
  Eigen::VectorXd Msx(ncx), Msz(ncx);
  for (int r = 0; r < ncx; ++r) {
    Msx(r) = 2.0 * (dx(r) + support_function(Cx, dx, -Cx.row(r).transpose()));
    Msz(r) = 2.0 * (dx(r) + support_function(Cx, dx, -CxA.row(r).transpose()));
  }

  double xmax = 0.0, umax = 0.0;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(j) = 1.0;
    xmax = std::max({xmax, support_function(Cx, dx, e), support_function(Cx, dx, -e)});
  }
  for (int j = 0; j < prob.nu; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(prob.nu);
    e(j) = 1.0;
    umax = std::max({umax, support_function(Cu, du, e), support_function(Cu, du, -e)});
  }
  const double ymax = std::max(xmax, umax);
  const double Hn = inf_norm(prob.Qd) + inf_norm(prob.Rd);
  const double scale = (Hn + inf_norm(T)) * ymax + phi_alpha * inf_norm(prob.Qd) * xmax +
                       prob.d.cwiseAbs().maxCoeff();
  const double Mdual = 20.0 * std::max(1.0, scale);

  MilpInstance inst;
  inst.phi_alpha = phi_alpha;
  inst.horizon = N;
  Blocks bl{&inst};

  const int off_xbar = bl.add("xbar", n, -inf, inf, false);
  const int off_y = bl.add("y", ny, -inf, inf, false);
  const int off_sx = bl.add("sx", ncx, 0.0, 0.0, false);
  for (int i = 0; i < ncx; ++i) inst.vars[off_sx + i].lo = -Msx(i);
  const int off_muU1 = bl.add("muU1", ncx, 0.0, Mdual, false);
  const int off_sz = bl.add("sz", ncx, 0.0, 0.0, false);
  for (int i = 0; i < ncx; ++i) inst.vars[off_sz + i].lo = -Msz(i);
  const int off_muU2 = bl.add("muU2", ncx, 0.0, Mdual, false);
  // muUL1 and muUL2 multiply branch equalities (the active row C_i y = d_i,
  // respectively the pinned bound mu^L_i = 0), so they are sign-free; their
  // complementarity big-M rows below cap both signs.
  const int off_lamUL1 = bl.add("lamUL1", ny, -inf, inf, false);
  const int off_lamUL2 = bl.add("lamUL2", neq, -inf, inf, false);
  const int off_muUL1 = bl.add("muUL1", ncN, -Mdual, Mdual, false);
  const int off_muUL2 = bl.add("muUL2", ncN, -Mdual, Mdual, false);
  const int off_s = bl.add("s", ncN, 0.0, 0.0, false);
  for (int i = 0; i < ncN; ++i) inst.vars[off_s + i].lo = -Ms_stage(i % nc);
  const int off_muL = bl.add("muL", ncN, 0.0, Mdual, false);
  const int off_lamL = bl.add("lamL", neq, -inf, inf, false);
  const int off_betaL = bl.add("betaL", ncN, 0.0, 1.0, true);
  const int off_betaU1 = bl.add("betaU1", ncx, 0.0, 1.0, true);
  const int off_betaU2 = bl.add("betaU2", ncx, 0.0, 1.0, true);

  const int nvars = static_cast<int>(inst.vars.size());
  inst.objective = Eigen::VectorXd::Zero(nvars);
  for (int i = 0; i < ncx; ++i) {
    inst.objective(off_muU1 + i) = -0.5 * dx(i);
    inst.objective(off_muU2 + i) = -0.5 * dx(i);
  }
  for (int i = 0; i < ncN; ++i) inst.objective(off_muUL1 + i) = -0.5 * prob.d(i);

  auto add_row = [&](const std::string& name, char sense, double rhs) -> MilpInstance::Row& {
    inst.rows.push_back({name, sense, rhs, {}});
    return inst.rows.back();
  };
  auto dense_into = [&](MilpInstance::Row& row, int off, const Eigen::RowVectorXd& coeffs) {
    for (int j = 0; j < coeffs.size(); ++j)
      if (coeffs(j) != 0.0) row.coef.emplace_back(off + j, coeffs(j));
  };

  // upper level primal feasibility: Cx xbar - dx - sx = 0, CxA S y - dx - sz = 0
  for (int r = 0; r < ncx; ++r) {
    auto& row = add_row("ulpx_" + std::to_string(r), 'E', dx(r));
    dense_into(row, off_xbar, Cx.row(r));
    row.coef.emplace_back(off_sx + r, -1.0);
  }
  for (int r = 0; r < ncx; ++r) {
    auto& row = add_row("ulpz_" + std::to_string(r), 'E', dx(r));
    dense_into(row, off_y + prob.z_offset(N - 1), CxA.row(r));
    row.coef.emplace_back(off_sz + r, -1.0);
  }

  // upper stationarity in xbar: Phi Q xbar + Cx^T muU1 - b^T lamUL2 = 0
  for (int r = 0; r < n; ++r) {
    auto& row = add_row("ulsx_" + std::to_string(r), 'E', 0.0);
    dense_into(row, off_xbar, (phi_alpha * prob.Qd.row(r)).eval());
    for (int k = 0; k < ncx; ++k)
      if (Cx(k, r) != 0.0) row.coef.emplace_back(off_muU1 + k, Cx(k, r));
    // b = [I; 0], so b^T lamUL2 picks the pinning multipliers
    row.coef.emplace_back(off_lamUL2 + r, -1.0);
  }

  // upper stationarity in y:
  //   T y + H^T lamUL1 + Aeq^T lamUL2 + C^T muUL1 + (CxAS)^T muU2 = 0
  const Eigen::MatrixXd Hd(prob.H);
  const Eigen::MatrixXd Ad(prob.Aeq);
  const Eigen::MatrixXd Cd(prob.C);
  for (int r = 0; r < ny; ++r) {
    auto& row = add_row("ulsy_" + std::to_string(r), 'E', 0.0);
    dense_into(row, off_y, T.row(r));
    for (int k = 0; k < ny; ++k)
      if (Hd(k, r) != 0.0) row.coef.emplace_back(off_lamUL1 + k, Hd(k, r));
    for (int k = 0; k < neq; ++k)
      if (Ad(k, r) != 0.0) row.coef.emplace_back(off_lamUL2 + k, Ad(k, r));
    for (int k = 0; k < ncN; ++k)
      if (Cd(k, r) != 0.0) row.coef.emplace_back(off_muUL1 + k, Cd(k, r));
    const int zoff = prob.z_offset(N - 1);
    if (r >= zoff && r < zoff + n)
      for (int k = 0; k < ncx; ++k)
        if (CxA(k, r - zoff) != 0.0) row.coef.emplace_back(off_muU2 + k, CxA(k, r - zoff));
  }

  // Aeq lamUL1 = 0 and C lamUL1 - muUL2 = 0
  for (int r = 0; r < neq; ++r) {
    auto& row = add_row("ulsl_" + std::to_string(r), 'E', 0.0);
    dense_into(row, off_lamUL1, Ad.row(r));
  }
  for (int r = 0; r < ncN; ++r) {
    auto& row = add_row("ulsm_" + std::to_string(r), 'E', 0.0);
    dense_into(row, off_lamUL1, Cd.row(r));
    row.coef.emplace_back(off_muUL2 + r, -1.0);
  }

  // lower level: Aeq y - b xbar = 0; C y - s = d; H y + Aeq^T lamL + C^T muL = 0
  for (int r = 0; r < neq; ++r) {
    auto& row = add_row("lleq_" + std::to_string(r), 'E', 0.0);
    dense_into(row, off_y, Ad.row(r));
    if (r < n) row.coef.emplace_back(off_xbar + r, -1.0);
  }
  for (int r = 0; r < ncN; ++r) {
    auto& row = add_row("llin_" + std::to_string(r), 'E', prob.d(r));
    dense_into(row, off_y, Cd.row(r));
    row.coef.emplace_back(off_s + r, -1.0);
  }
  for (int r = 0; r < ny; ++r) {
    auto& row = add_row("llst_" + std::to_string(r), 'E', 0.0);
    dense_into(row, off_y, Hd.row(r));
    for (int k = 0; k < neq; ++k)
      if (Ad(k, r) != 0.0) row.coef.emplace_back(off_lamL + k, Ad(k, r));
    for (int k = 0; k < ncN; ++k)
      if (Cd(k, r) != 0.0) row.coef.emplace_back(off_muL + k, Cd(k, r));
  }

  // complementarity lowered to big-M rows
  auto force_zero_if_one = [&](const std::string& name, int var, int beta, double M) {
    // var in [-M, 0]: -var <= M (1 - beta)
    auto& row = add_row(name, 'L', M);
    row.coef.emplace_back(var, -1.0);
    row.coef.emplace_back(beta, M);
  };
  auto cap_by_beta = [&](const std::string& name, int var, int beta, double M) {
    // var in [0, M]: var <= M beta
    auto& row = add_row(name, 'L', 0.0);
    row.coef.emplace_back(var, 1.0);
    row.coef.emplace_back(beta, -M);
  };
  auto abs_cap_by_beta = [&](const std::string& name, int var, int beta, double M) {
    // sign-free var: |var| <= M beta
    auto& pos = add_row(name + "p", 'L', 0.0);
    pos.coef.emplace_back(var, 1.0);
    pos.coef.emplace_back(beta, -M);
    auto& neg = add_row(name + "n", 'L', 0.0);
    neg.coef.emplace_back(var, -1.0);
    neg.coef.emplace_back(beta, -M);
  };
  auto abs_cap_by_not_beta = [&](const std::string& name, int var, int beta, double M) {
    // sign-free var: |var| <= M (1 - beta)
    auto& pos = add_row(name + "p", 'L', M);
    pos.coef.emplace_back(var, 1.0);
    pos.coef.emplace_back(beta, M);
    auto& neg = add_row(name + "n", 'L', M);
    neg.coef.emplace_back(var, -1.0);
    neg.coef.emplace_back(beta, M);
  };

  for (int i = 0; i < ncN; ++i) {
    const int beta = off_betaL + i;
    force_zero_if_one("bms_" + std::to_string(i), off_s + i, beta, Ms_stage(i % nc));
    cap_by_beta("bmmuL_" + std::to_string(i), off_muL + i, beta, Mdual);
    abs_cap_by_not_beta("bmmu2_" + std::to_string(i), off_muUL2 + i, beta, Mdual);
    abs_cap_by_beta("bmmu1_" + std::to_string(i), off_muUL1 + i, beta, Mdual);
    inst.pairs.push_back({beta, off_s + i, off_muL + i});
  }
  for (int i = 0; i < ncx; ++i) {
    const int beta = off_betaU1 + i;
    force_zero_if_one("bmsx_" + std::to_string(i), off_sx + i, beta, Msx(i));
    cap_by_beta("bmmU1_" + std::to_string(i), off_muU1 + i, beta, Mdual);
    inst.pairs.push_back({beta, off_sx + i, off_muU1 + i});
  }
  for (int i = 0; i < ncx; ++i) {
    const int beta = off_betaU2 + i;
    force_zero_if_one("bmsz_" + std::to_string(i), off_sz + i, beta, Msz(i));
    cap_by_beta("bmmU2_" + std::to_string(i), off_muU2 + i, beta, Mdual);
    inst.pairs.push_back({beta, off_sz + i, off_muU2 + i});
  }

  return inst;
}

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_mps(const MilpInstance& inst, std::ostream& os) {
  os << "* Controllability verification MILP, horizon " << inst.horizon << "\n";
  os << "* Phi_alpha = " << fmt17(inst.phi_alpha) << "\n";
  os << "* Complementarity pairs are lowered to big-M rows; primal slack bounds\n";
  os << "* come from 2x polytope support functions, multiplier caps from the\n";
  os << "* stationarity row scale (see variable bounds below).\n";
  os << "NAME DMPC_PHI\n";
  os << "ROWS\n";
  os << " N COST\n";
  for (const auto& row : inst.rows) os << " " << row.sense << " " << row.name << "\n";
  os << "COLUMNS\n";

  // coefficient lists per column
  std::vector<std::vector<std::pair<int, double>>> bycol(inst.vars.size());
  for (size_t r = 0; r < inst.rows.size(); ++r)
    for (const auto& [j, a] : inst.rows[r].coef) bycol[j].emplace_back(static_cast<int>(r), a);

  bool in_int = false;
  for (size_t j = 0; j < inst.vars.size(); ++j) {
    if (inst.vars[j].is_binary && !in_int) {
      os << "    MARKER 'MARKER' 'INTORG'\n";
      in_int = true;
    } else if (!inst.vars[j].is_binary && in_int) {
      os << "    MARKER 'MARKER' 'INTEND'\n";
      in_int = false;
    }
    const auto& name = inst.vars[j].name;
    if (inst.objective(j) != 0.0)
      os << "    " << name << " COST " << fmt17(inst.objective(j)) << "\n";
    for (const auto& [r, a] : bycol[j])
      os << "    " << name << " " << inst.rows[r].name << " " << fmt17(a) << "\n";
    if (bycol[j].empty() && inst.objective(j) == 0.0)
      os << "    " << name << " COST 0\n"; // keep every column declared
  }
  if (in_int) os << "    MARKER 'MARKER' 'INTEND'\n";

  os << "RHS\n";
  for (const auto& row : inst.rows)
    if (row.rhs != 0.0) os << "    RHS " << row.name << " " << fmt17(row.rhs) << "\n";
  os << "BOUNDS\n";
  const double inf = LpProblem::inf;
  for (const auto& v : inst.vars) {
    if (v.is_binary) {
      os << " BV BND " << v.name << "\n";
    } else if (v.lo == -inf && v.hi == inf) {
      os << " FR BND " << v.name << "\n";
    } else {
      if (v.lo == -inf)
        os << " MI BND " << v.name << "\n";
      else if (v.lo != 0.0)
        os << " LO BND " << v.name << " " << fmt17(v.lo) << "\n";
      if (v.hi != inf) os << " UP BND " << v.name << " " << fmt17(v.hi) << "\n";
    }
  }
  os << "ENDATA\n";
}

void write_lp(const MilpInstance& inst, std::ostream& os) {
  os << "\\ Controllability verification MILP, horizon " << inst.horizon
     << ", Phi_alpha = " << fmt17(inst.phi_alpha) << "\n";
  os << "\\ big-M lowering of complementarity; see bounds section for caps\n";
  os << "Minimize\n obj:";
  bool first = true;
  for (size_t j = 0; j < inst.vars.size(); ++j) {
    const double a = inst.objective(j);
    if (a == 0.0) continue;
    os << (a < 0 ? " - " : (first ? " " : " + ")) << fmt17(std::abs(a)) << " "
       << inst.vars[j].name;
    first = false;
  }
  if (first) os << " 0 " << inst.vars.front().name;
  os << "\nSubject To\n";
  for (const auto& row : inst.rows) {
    os << " " << row.name << ":";
    for (const auto& [j, a] : row.coef)
      os << (a < 0 ? " - " : " + ") << fmt17(std::abs(a)) << " " << inst.vars[j].name;
    os << (row.sense == 'E' ? " = " : " <= ") << fmt17(row.rhs) << "\n";
  }
  os << "Bounds\n";
  const double inf = LpProblem::inf;
  for (const auto& v : inst.vars) {
    if (v.is_binary) continue;
    if (v.lo == -inf && v.hi == inf)
      os << " " << v.name << " free\n";
    else if (v.hi == inf)
      os << " " << v.name << " >= " << fmt17(v.lo) << "\n";
    else if (v.lo == -inf)
      os << " -inf <= " << v.name << " <= " << fmt17(v.hi) << "\n";
    else
      os << " " << fmt17(v.lo) << " <= " << v.name << " <= " << fmt17(v.hi) << "\n";
  }
  os << "Binaries\n";
  for (const auto& v : inst.vars)
    if (v.is_binary) os << " " << v.name << "\n";
  os << "End\n";
}

} // namespace

void export_milp(const MilpInstance& inst, const std::string& path, MilpFormat format) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("export_milp: cannot open " + path);
  if (format == MilpFormat::mps)
    write_mps(inst, f);
  else
    write_lp(inst, f);
  if (!f) throw std::runtime_error("export_milp: write failed for " + path);
}

ParsedMilp parse_milp_mps(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("parse_milp_mps: cannot open " + path);
  ParsedMilp out;
  std::map<std::string, size_t> colidx;
  enum class Section { none, rows, columns, rhs, bounds } section = Section::none;
  bool in_int = false;
  std::map<std::string, double> rhs_map;

  std::string line;
  std::vector<std::tuple<std::string, char>> rowdefs;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '*') continue;
    // section keywords start in column 1; data lines are indented
    const bool is_header = !std::isspace(static_cast<unsigned char>(line[0]));
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (is_header) {
      if (tok == "ROWS") section = Section::rows;
      else if (tok == "COLUMNS") section = Section::columns;
      else if (tok == "RHS") section = Section::rhs;
      else if (tok == "BOUNDS") section = Section::bounds;
      else if (tok == "RANGES") section = Section::none;
      else if (tok == "ENDATA") break;
      continue;
    }

    switch (section) {
      case Section::rows: {
        std::string name;
        ss >> name;
        if (tok != "N") rowdefs.emplace_back(name, tok[0]);
        break;
      }
      case Section::columns: {
        if (tok == "MARKER") {
          std::string a, b2;
          ss >> a >> b2;
          in_int = (b2 == "'INTORG'");
          break;
        }
        const std::string col = tok;
        if (!colidx.count(col)) {
          colidx[col] = out.var_names.size();
          out.var_names.push_back(col);
          out.is_binary.push_back(in_int);
          out.lo.push_back(in_int ? 0.0 : 0.0);
          out.hi.push_back(in_int ? 1.0 : LpProblem::inf);
          out.objective.push_back(0.0);
        }
        std::string row;
        double val;
        while (ss >> row >> val) {
          if (row == "COST")
            out.objective[colidx[col]] = val;
          else
            out.coefs.emplace_back(row, col, val);
        }
        break;
      }
      case Section::rhs: {
        // tok holds the rhs set name
        std::string row;
        double val;
        while (ss >> row >> val) rhs_map[row] = val;
        break;
      }
      case Section::bounds: {
        std::string bnd, col;
        ss >> bnd >> col;
        if (!colidx.count(col)) break;
        const size_t j = colidx[col];
        double val = 0.0;
        if (tok == "UP") { ss >> val; out.hi[j] = val; }
        else if (tok == "LO") { ss >> val; out.lo[j] = val; }
        else if (tok == "FR") { out.lo[j] = -LpProblem::inf; out.hi[j] = LpProblem::inf; }
        else if (tok == "MI") { out.lo[j] = -LpProblem::inf; }
        else if (tok == "BV") { out.is_binary[j] = true; out.lo[j] = 0.0; out.hi[j] = 1.0; }
        break;
      }
      default: break;
    }
  }
  for (const auto& [name, sense] : rowdefs) {
    const auto it = rhs_map.find(name);
    out.rows.emplace_back(name, sense, it == rhs_map.end() ? 0.0 : it->second);
  }
  return out;
}

bool structurally_equal(const MilpInstance& inst, const ParsedMilp& parsed, double tol) {
  if (parsed.var_names.size() != inst.vars.size()) return false;
  if (parsed.rows.size() != inst.rows.size()) return false;

  std::map<std::string, size_t> pv;
  for (size_t j = 0; j < parsed.var_names.size(); ++j) pv[parsed.var_names[j]] = j;
  auto close = [&](double a, double b) {
    if (a == b) return true; // covers infinite bounds
    return std::abs(a - b) <= tol * (1.0 + std::abs(b));
  };

  for (size_t j = 0; j < inst.vars.size(); ++j) {
    const auto it = pv.find(inst.vars[j].name);
    if (it == pv.end()) return false;
    const size_t k = it->second;
    if (parsed.is_binary[k] != inst.vars[j].is_binary) return false;
    if (!close(parsed.objective[k], inst.objective(j))) return false;
    if (!inst.vars[j].is_binary) {
      if (!close(parsed.lo[k], inst.vars[j].lo) || !close(parsed.hi[k], inst.vars[j].hi))
        return false;
    }
  }

  std::map<std::string, std::pair<char, double>> prow;
  for (const auto& [name, sense, rhs] : parsed.rows) prow[name] = {sense, rhs};
  std::map<std::pair<std::string, std::string>, double> pcoef;
  for (const auto& [r, c, v] : parsed.coefs) pcoef[{r, c}] += v;

  size_t expected_coefs = 0;
  for (const auto& row : inst.rows) {
    const auto it = prow.find(row.name);
    if (it == prow.end()) return false;
    if (it->second.first != row.sense || !close(it->second.second, row.rhs)) return false;
    for (const auto& [j, a] : row.coef) {
      const auto ct = pcoef.find({row.name, inst.vars[j].name});
      if (ct == pcoef.end() || !close(ct->second, a)) return false;
      ++expected_coefs;
    }
  }
  return expected_coefs == pcoef.size();
}

namespace {

LpProblem relaxation_base(const MilpInstance& inst) {
  const int nv = static_cast<int>(inst.vars.size());
  LpProblem p = LpProblem::free_variables(nv);
  p.c = inst.objective;
  for (int j = 0; j < nv; ++j) {
    p.lo(j) = inst.vars[j].lo;
    p.hi(j) = inst.vars[j].hi;
  }
  const int nr = static_cast<int>(inst.rows.size());
  p.A = Eigen::MatrixXd::Zero(nr, nv);
  p.b.resize(nr);
  p.sense.resize(nr);
  for (int r = 0; r < nr; ++r) {
    for (const auto& [j, a] : inst.rows[r].coef) p.A(r, j) += a;
    p.b(r) = inst.rows[r].rhs;
    p.sense[r] = inst.rows[r].sense;
  }
  return p;
}

} // namespace

VerifyResult verify_exact(const MilpInstance& inst, const SystemModel& model,
                          long node_budget) {
  const int nbin = inst.num_binaries();
  if (nbin > 24) throw std::invalid_argument("verify_exact: more than 24 binaries");

  std::vector<int> binary_vars;
  for (size_t j = 0; j < inst.vars.size(); ++j)
    if (inst.vars[j].is_binary) binary_vars.push_back(static_cast<int>(j));

  const MpcProblem prob = condense(model, inst.horizon);
  const LpProblem base = relaxation_base(inst);
  constexpr double kNegTol = 1e-7;

  VerifyResult out;
  out.best_objective = 0.0;

  struct Node {
    std::vector<signed char> fix; // -1 free, 0, 1
  };
  std::vector<Node> stack;
  stack.push_back({std::vector<signed char>(nbin, -1)});
  long numerical_failures = 0;

  while (!stack.empty()) {
    if (out.nodes_explored >= node_budget) {
      out.verdict = VerifyVerdict::budget_exceeded;
      return out;
    }
    Node node = std::move(stack.back());
    stack.pop_back();
    ++out.nodes_explored;

    LpProblem lp = base;
    for (int bi = 0; bi < nbin; ++bi) {
      if (node.fix[bi] >= 0) {
        lp.lo(binary_vars[bi]) = node.fix[bi];
        lp.hi(binary_vars[bi]) = node.fix[bi];
      }
    }
    const LpSolution sol = solve_lp(lp);
    if (sol.status == LpStatus::infeasible) continue;
    if (sol.status != LpStatus::optimal) {
      ++numerical_failures;
      continue;
    }
    if (sol.objective >= -kNegTol) continue; // cannot contain a refutation

    // fractional binaries?
    int branch = -1;
    double most_frac = 1e-6;
    for (int bi = 0; bi < nbin; ++bi) {
      const double v = sol.x(binary_vars[bi]);
      const double frac = std::min(v, 1.0 - v);
      if (frac > most_frac) {
        most_frac = frac;
        branch = bi;
      }
    }
    if (branch >= 0) {
      Node c0 = node, c1 = node;
      c0.fix[branch] = 0;
      c1.fix[branch] = 1;
      stack.push_back(std::move(c0));
      stack.push_back(std::move(c1));
      continue;
    }

    // integral point with strictly negative objective: candidate witness
    const int off_x = inst.block_offset("xbar");
    const int n = inst.block_size("xbar");
    const Eigen::VectorXd xw = sol.x.segment(off_x, n);
    auto oracle = active_set_oracle(prob, xw, 0.0);
    if (oracle) {
      const Eigen::VectorXd zlast = oracle->y.segment(prob.z_offset(inst.horizon - 1), n);
      const Eigen::VectorXd v0 = oracle->y.segment(prob.v_offset(0), prob.nu);
      const double num = stage_cost_min(model, zlast);
      const double den = stage_cost(model, xw, v0);
      if (den > 0.0 && num > inst.phi_alpha * den * (1.0 + 1e-9)) {
        out.verdict = VerifyVerdict::refuted;
        out.best_objective = sol.objective;
        out.witness = xw;
        out.witness_ratio = num / den;
        return out;
      }
    }
    // MILP claims a violation the oracle cannot confirm; treat as numerical
    ++numerical_failures;
  }

  out.verdict =
      numerical_failures == 0 ? VerifyVerdict::verified : VerifyVerdict::budget_exceeded;
  return out;
}

} // namespace dmpc
