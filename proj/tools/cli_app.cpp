#include "cli_app.hpp"

#include "dmpc/controller.hpp"
#include "dmpc/ctrb.hpp"
#include "dmpc/milp.hpp"
#include "dmpc/model.hpp"
#include "dmpc/model_io.hpp"
#include "dmpc/qp.hpp"
#include "dmpc/sim.hpp"
#include "dmpc/solver.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dmpc::cli {

namespace {

struct CommonOpts {
  std::string config_path;
  std::string model_path;
  double alpha = 0.01;
  double eps = 0.005;
  std::vector<double> delta_inits;
  int dk = 10;
  int horizon = 0; ///< 0 = unset
  bool auto_horizon = false;
  int samples = 0;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  bool closed_loop = false;
  std::string export_milp_path;
  std::string condition = "stop";
  int T = 60;
  int max_n = 30;
};

void apply_config_file(CommonOpts& o) {
  if (o.config_path.empty()) return;
  std::ifstream f(o.config_path);
  if (!f) throw std::runtime_error("cannot open config " + o.config_path);
  nlohmann::json j = nlohmann::json::parse(f);
  if (j.value("schema_version", 0) != 1)
    throw std::runtime_error("config: unsupported schema_version");
  if (j.contains("model")) o.model_path = j["model"].get<std::string>();
  if (j.contains("alpha")) o.alpha = j["alpha"].get<double>();
  if (j.contains("eps")) o.eps = j["eps"].get<double>();
  if (j.contains("delta_inits")) o.delta_inits = j["delta_inits"].get<std::vector<double>>();
  if (j.contains("dk")) o.dk = j["dk"].get<int>();
  if (j.contains("horizon")) {
    if (j["horizon"].is_string() && j["horizon"] == "auto")
      o.auto_horizon = true;
    else
      o.horizon = j["horizon"].get<int>();
  }
  if (j.contains("samples")) o.samples = j["samples"].get<int>();
  if (j.contains("seed")) o.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("threads")) o.threads = j["threads"].get<int>();
  if (j.contains("T")) o.T = j["T"].get<int>();
  if (j.contains("out")) o.out = j["out"].get<std::string>();
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration (versioned schema)");
  cmd->add_option("--model", o.model_path, "model JSON file");
  cmd->add_option("--alpha", o.alpha, "performance parameter in (0,1]");
  cmd->add_option("--eps", o.eps, "optimality tolerance, 0 < eps < alpha");
  cmd->add_option("--delta-init", o.delta_inits, "initial tightening (repeatable)");
  cmd->add_option("--dk", o.dk, "iterations between stopping tests");
  cmd->add_option("--horizon", o.horizon, "control horizon N");
  cmd->add_flag("--auto-horizon", o.auto_horizon, "search the horizon via certification");
  cmd->add_option("--samples", o.samples, "sample count");
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--threads", o.threads, "worker cap for parallel sections");
  cmd->add_option("--out", o.out, "output file or directory");
  cmd->add_flag("--closed-loop", o.closed_loop, "trajectory mode for experiments");
  cmd->add_option("--export-milp", o.export_milp_path, "write the verification MILP here");
  cmd->add_option("--condition", o.condition, "stopping test: stop | opt");
  cmd->add_option("--T", o.T, "trajectory length for closed-loop runs");
  cmd->add_option("--max-n", o.max_n, "horizon search cap");
}

SystemModel load_or_fail(const CommonOpts& o) {
  if (o.model_path.empty()) throw std::runtime_error("--model is required");
  SystemModel model = load_model(o.model_path);
  const auto violations = validate(model);
  if (!violations.empty())
    throw std::runtime_error("model invalid: " + violations.front());
  return model;
}

int resolve_horizon(const SystemModel& model, CommonOpts& o, CtrbCertificate* cert_out) {
  if (o.auto_horizon) {
    HorizonSearchOptions hso;
    hso.samples = o.samples > 0 ? o.samples : 200;
    hso.seed = o.seed;
    hso.threads = o.threads;
    hso.accept_sampled = true;
    const auto result = horizon_search(model, o.alpha, o.eps, o.max_n, hso);
    if (cert_out) *cert_out = result.certificate;
    return result.N;
  }
  if (o.horizon < 2) throw std::runtime_error("--horizon N (>= 2) or --auto-horizon required");
  return o.horizon;
}

int cmd_gen(CommonOpts& o, const RandomSystemSpec& spec) {
  SystemModel model = generate_random(spec);
  if (o.out.empty()) throw std::runtime_error("gen: --out is required");
  save_model(model, o.out);
  std::ostringstream os;
  os.precision(6);
  os << "model written to " << o.out << "\n";
  os << "subsystems: " << model.M << ", n = " << model.state_dim()
     << ", m = " << model.input_dim() << "\n";
  os << "spectral radius: " << spectral_radius(model.A) << "\n";
  os << "kappa: " << kappa(model) << "\n";
  std::cout << os.str();
  return 0;
}

int cmd_certify(CommonOpts& o) {
  SystemModel model = load_or_fail(o);
  const double kap = kappa(model);
  const double phi_a = phi_alpha(o.alpha, o.eps, kap);
  std::cout.precision(6);
  std::cout << "kappa = " << kap << "\n";
  std::cout << "Phi_alpha = " << phi_a << "\n";

  CtrbCertificate cert;
  int N = 0;
  if (o.auto_horizon) {
    HorizonSearchOptions hso;
    hso.samples = o.samples > 0 ? o.samples : 200;
    hso.seed = o.seed;
    hso.threads = o.threads;
    hso.accept_sampled = true;
    const auto result = horizon_search(model, o.alpha, o.eps, o.max_n, hso);
    N = result.N;
    cert = result.certificate;
  } else {
    N = resolve_horizon(model, o, nullptr);
    cert.N = N;
    cert.alpha = o.alpha;
    cert.eps = o.eps;
    cert.kappa = kap;
    cert.phi_alpha = phi_a;
    cert.samples = o.samples > 0 ? o.samples : 200;
    cert.seed = o.seed;
    EstimateOptions eopts;
    eopts.threads = o.threads;
    const PhiEstimate est = estimate_phi(model, N, cert.samples, o.seed, eopts);
    cert.phi_hat = est.phi_hat;
    cert.witness = est.witness;
    cert.witness_ratio = est.witness_ratio;
    cert.method = CertMethod::sampled;

    const MilpInstance inst = build_milp(model, N, phi_a);
    if (inst.num_binaries() <= 24) {
      const VerifyResult vr = verify_exact(inst, model);
      if (vr.verdict != VerifyVerdict::budget_exceeded) {
        cert.method = CertMethod::exact_enumeration;
        cert.verdict = vr.verdict;
        if (vr.verdict == VerifyVerdict::refuted) {
          cert.witness = vr.witness;
          cert.witness_ratio = vr.witness_ratio;
        }
      }
    } else if (!o.export_milp_path.empty()) {
      cert.method = CertMethod::exported_unsolved;
    }
  }

  if (!o.export_milp_path.empty()) {
    const MilpInstance inst = build_milp(model, N, phi_a);
    const bool lp = o.export_milp_path.size() > 3 &&
                    o.export_milp_path.substr(o.export_milp_path.size() - 3) == ".lp";
    export_milp(inst, o.export_milp_path, lp ? MilpFormat::lp_text : MilpFormat::mps);
    std::cout << "MILP written to " << o.export_milp_path << "\n";
  }

  const std::string json = certificate_to_json(cert);
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    if (!f) throw std::runtime_error("cannot open " + o.out);
    f << json << "\n";
  }
  std::cout << json << "\n";

  bool pass = false;
  if (cert.method == CertMethod::exact_enumeration)
    pass = cert.verdict == VerifyVerdict::verified;
  else
    pass = cert.phi_hat <= phi_a;
  if (cert.witness.size() > 0 && cert.method != CertMethod::exact_enumeration)
    std::cout << "worst sampled ratio " << cert.witness_ratio << (pass ? " <= " : " > ")
              << phi_a << "\n";
  std::cout << (pass ? "certification PASS" : "certification FAIL") << "\n";
  return pass ? 0 : 1;
}

int cmd_run(CommonOpts& o) {
  SystemModel model = load_or_fail(o);
  const int N = resolve_horizon(model, o, nullptr);
  if (o.delta_inits.empty()) o.delta_inits = {0.001, 0.01, 0.05, 0.1, 0.2, 0.5};
  const int samples = o.samples > 0 ? o.samples : 100;

  ExperimentOptions eopts;
  eopts.threads = o.threads;
  eopts.closed_loop = o.closed_loop;
  eopts.T = o.T;
  eopts.audit_decrease = o.closed_loop;
  eopts.condition = o.condition == "opt" ? ExperimentCondition::optimality
                                         : ExperimentCondition::stopping;

  const ExperimentTable table =
      run_experiment(model, o.alpha, o.eps, N, o.delta_inits, samples, o.seed, o.dk, eopts);

  std::cout << experiment_text_table(table);
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    const std::filesystem::path dir(o.out);
    std::ofstream(dir / "table.csv") << experiment_csv(table);
    std::ofstream(dir / "table.txt") << experiment_text_table(table);
    std::ofstream(dir / "records.csv") << sample_records_csv(table);
    std::cout << "results written to " << o.out << "\n";
  }

  int failures = 0;
  for (const auto& row : table.rows) failures += row.audit_failures;
  if (failures > 0) std::cout << "audit failures: " << failures << "\n";
  return failures == 0 ? 0 : 1;
}

int cmd_step(CommonOpts& o, const std::string& x_text) {
  SystemModel model = load_or_fail(o);
  const int N = resolve_horizon(model, o, nullptr);
  const MpcProblem prob = condense(model, N);

  Eigen::VectorXd x(model.state_dim());
  {
    std::stringstream ss(x_text);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',')) {
      if (i >= x.size()) throw std::runtime_error("step: too many components in --x");
      x(i++) = std::stod(tok);
    }
    if (i != x.size()) throw std::runtime_error("step: --x needs n components");
  }

  ControllerConfig cfg;
  cfg.alpha = o.alpha;
  cfg.eps = o.eps;
  cfg.delta_init = o.delta_inits.empty() ? 0.2 : o.delta_inits.front();
  cfg.dk = o.dk;
  cfg.threads = o.threads;

  const StepResult res = control_step(model, prob, cfg, x);
  std::cout << diagnostics_csv_header() << "\n"
            << diagnostics_csv_row(x, res, model) << "\n";
  if (res.status != StepStatus::ok) {
    std::cout << "step FAILED: "
              << (res.status == StepStatus::infeasible_state ? "state outside X"
                                                             : "budget exhausted")
              << "\n";
    return 1;
  }
  std::cout.precision(17);
  std::cout << "u =";
  for (int i = 0; i < res.u.size(); ++i) std::cout << " " << res.u(i);
  std::cout << "\n";
  return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"certified distributed MPC: dual accelerated gradient solver with an "
               "adaptive tightening stopping condition"};
  app.require_subcommand(1);

  CommonOpts gen_o, cert_o, run_o, step_o;
  RandomSystemSpec spec;
  std::string step_x;

  auto* gen = app.add_subcommand("gen", "generate and store a random model");
  add_common(gen, gen_o);
  gen->add_option("--subsystems", spec.M, "number of subsystems");
  gen->add_option("--state-dim", spec.n_i, "states per subsystem");
  gen->add_option("--input-dim", spec.m_i, "inputs per subsystem");
  gen->add_option("--rho", spec.spectral_radius, "target spectral radius");
  gen->add_option("--density", spec.density, "off-diagonal block density");
  gen->add_flag("--zero-b", spec.force_zero_b, "force B = 0 (test hook)");

  auto* cert = app.add_subcommand("certify", "controllability certification");
  add_common(cert, cert_o);

  auto* runc = app.add_subcommand("run", "stopping-condition experiment table");
  add_common(runc, run_o);

  auto* step = app.add_subcommand("step", "one certified control step");
  add_common(step, step_o);
  step->add_option("--x", step_x, "initial state, comma separated")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      apply_config_file(gen_o);
      spec.seed = gen_o.seed;
      return cmd_gen(gen_o, spec);
    }
    if (cert->parsed()) {
      apply_config_file(cert_o);
      return cmd_certify(cert_o);
    }
    if (runc->parsed()) {
      apply_config_file(run_o);
      return cmd_run(run_o);
    }
    if (step->parsed()) {
      apply_config_file(step_o);
      return cmd_step(step_o, step_x);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

} // namespace dmpc::cli
