#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cli_app.hpp"

#include "dmpc/model.hpp"
#include "dmpc/model_io.hpp"

#include "support/test_models.hpp"

#include <filesystem>
#include <fstream>

using dmpc::cli::run_cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dmpc_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream f(p);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("gen writes a valid model deterministically") {
  TempDir tmp;
  const auto m1 = tmp.file("m1.json");
  const auto m2 = tmp.file("m2.json");
  const std::vector<std::string> base{"gen",         "--subsystems", "2", "--state-dim",
                                      "2",           "--input-dim",  "1", "--seed",
                                      "42",          "--out"};
  auto args1 = base;
  args1.push_back(m1);
  auto args2 = base;
  args2.push_back(m2);
  CHECK(run_cli(args1) == 0);
  CHECK(run_cli(args2) == 0);
  CHECK(slurp(m1) == slurp(m2));

  const dmpc::SystemModel model = dmpc::load_model(m1);
  CHECK(dmpc::validate(model).empty());
}

TEST_CASE("gen reports generator exhaustion as an error") {
  TempDir tmp;
  const int rc = run_cli({"gen", "--subsystems", "1", "--state-dim", "2", "--input-dim", "1",
                          "--zero-b", "--seed", "1", "--out", tmp.file("m.json")});
  CHECK(rc == 2);
}

TEST_CASE("step at the origin returns the zero input") {
  TempDir tmp;
  const auto mpath = tmp.file("m.json");
  dmpc::save_model(dmpc::test::scalar_model(0.9, 1.0), mpath);
  const int rc = run_cli({"step", "--model", mpath, "--x", "0", "--horizon", "3", "--alpha",
                          "0.1", "--eps", "0.05"});
  CHECK(rc == 0);
}

TEST_CASE("step rejects states outside X") {
  TempDir tmp;
  const auto mpath = tmp.file("m.json");
  dmpc::save_model(dmpc::test::scalar_model(0.9, 1.0), mpath);
  const int rc = run_cli({"step", "--model", mpath, "--x", "1.7", "--horizon", "3", "--alpha",
                          "0.1", "--eps", "0.05"});
  CHECK(rc == 1);
}

TEST_CASE("certify emits a certificate and the MILP export") {
  TempDir tmp;
  const auto mpath = tmp.file("m.json");
  dmpc::save_model(dmpc::test::scalar_model(1.1, 1.0), mpath);
  const auto cert = tmp.file("cert.json");
  const auto milp = tmp.file("phi.mps");
  const int rc = run_cli({"certify", "--model", mpath, "--alpha", "0.05", "--eps", "0.002",
                          "--horizon", "4", "--samples", "60", "--seed", "3", "--out", cert,
                          "--export-milp", milp});
  CHECK(rc == 0);
  CHECK(fs::exists(cert));
  CHECK(fs::exists(milp));
  const std::string text = slurp(cert);
  CHECK(text.find("\"phi_alpha\"") != std::string::npos);
}

TEST_CASE("run writes the experiment outputs") {
  TempDir tmp;
  const auto mpath = tmp.file("m.json");
  dmpc::save_model(dmpc::test::scalar_model(0.9, 1.0), mpath);
  const auto outdir = tmp.file("exp");
  const int rc = run_cli({"run", "--model", mpath, "--alpha", "0.1", "--eps", "0.05",
                          "--horizon", "3", "--delta-init", "0.05", "--delta-init", "0.2",
                          "--samples", "20", "--seed", "5", "--out", outdir});
  CHECK(rc == 0);
  CHECK(fs::exists(fs::path(outdir) / "table.csv"));
  CHECK(fs::exists(fs::path(outdir) / "table.txt"));
  CHECK(fs::exists(fs::path(outdir) / "records.csv"));
}

TEST_CASE("config file supplies defaults") {
  TempDir tmp;
  const auto mpath = tmp.file("m.json");
  dmpc::save_model(dmpc::test::scalar_model(0.9, 1.0), mpath);
  const auto cfg = tmp.file("cfg.json");
  {
    std::ofstream f(cfg);
    f << "{\"schema_version\":1,\"model\":\"" << mpath
      << "\",\"alpha\":0.1,\"eps\":0.05,\"horizon\":3,\"delta_inits\":[0.2],"
         "\"samples\":10,\"seed\":2}";
  }
  const int rc = run_cli({"run", "--config", cfg});
  CHECK(rc == 0);
}
