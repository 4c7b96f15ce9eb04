#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include "ewnet/config.hpp"
#include "ewnet/errors.hpp"
#include "support.hpp"

using namespace ewnet;

namespace {

std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ewnet_cli_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream s(text);
  for (std::string l; std::getline(s, l);) out.push_back(l);
  return out;
}

RunConfig theory_config(const std::string& out) {
  return RunConfig::from_text(
      "model.activation = relu\n"
      "model.alpha_grid = 0.1:3:20   # twenty points\n"
      "model.delta = 0.1\n"
      "readout.kind = homogeneous\n"
      "out = " + out + "\n"
      "spectral_cache = " + std::string(ewnet::testing::cache_dir()) + "\n");
}

int shell(const std::string& args) {
  const std::string cmd = std::string(EWNET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("alpha grids") {
  CHECK(parse_grid("0.5,1,2") == std::vector<double>{0.5, 1.0, 2.0});
  const auto g = parse_grid("1:2:5");
  REQUIRE(g.size() == 5);
  CHECK(g.front() == 1.0);
  CHECK(g.back() == 2.0);
  CHECK(g[2] == doctest::Approx(1.5));
  CHECK_THROWS_AS(parse_grid("1:2"), ConfigError);
  CHECK_THROWS_AS(parse_grid("a,b"), ConfigError);
}

TEST_CASE("configuration validation") {
  CHECK_THROWS_AS(RunConfig::from_text("model.nonsense = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("model.delta = abc\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("model.activation = swish\n").validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("model.alpha_grid = 2,1\n").validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("model.prior = laplace\n").validate(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("readout.atoms = 2:0.5,-2:0.5\n").validate(), ConfigError);
  CHECK_NOTHROW(RunConfig::from_text("readout.atoms = 2:0.5,-2:0.5\nreadout.rescale = true\n").validate());
  CHECK_THROWS_AS(RunConfig::from_text("mode = fit\n"), ConfigError);
  const auto c = RunConfig::from_text("# comment\n\nmodel.d = 40\nseed = 9\n");
  CHECK(c.d == 40);
  CHECK(c.seed == 9);
  CHECK(c.entries.size() == 2);
}

TEST_CASE("theory run writes a schema-tagged CSV and a manifest") {
  const auto out = scratch("theory.csv");
  std::ostringstream log;
  REQUIRE(run(theory_config(out), log) == kExitOk);
  const auto rows = lines(slurp(out));
  REQUIRE(rows.size() == 22);
  CHECK(rows[0] == "# schema: ewnet.theory.v1");
  CHECK(rows[1] == "alpha,gamma,branch,f_rs,q2,q2_hat,eps_opt,mi,QW_0,QW_hat_0,selected,converged");
  for (std::size_t i = 2; i < rows.size(); ++i) CHECK(rows[i].substr(rows[i].size() - 4) == ",1,1");
  const auto m = nlohmann::json::parse(slurp(out + ".manifest.json"));
  CHECK(m["mode"] == "theory");
  CHECK(m["code_version"] == code_version());
  CHECK(m["exit_status"] == 0);
  CHECK(m["config"]["model.alpha_grid"] == "0.1:3:20");
}

TEST_CASE("theory runs are byte-identical and reproducible from the manifest") {
  const auto a = scratch("rep_a.csv"), b = scratch("rep_b.csv"), c = scratch("rep_c.csv");
  std::ostringstream log;
  auto cfg = theory_config(a);
  cfg.set("jobs", "2");
  REQUIRE(run(cfg, log) == kExitOk);
  REQUIRE(run(theory_config(b), log) == kExitOk);
  CHECK(slurp(a) == slurp(b));
  const auto m = nlohmann::json::parse(slurp(a + ".manifest.json"));
  RunConfig echo;
  for (const auto& [k, v] : m["config"].items()) echo.set(k, v.get<std::string>());
  echo.set("out", c);
  REQUIRE(run(echo, log) == kExitOk);
  CHECK(slurp(a) == slurp(c));
}

TEST_CASE("all-branch output marks exactly one selected row per alpha") {
  const auto out = scratch("branches.csv");
  auto cfg = theory_config(out);
  cfg.set("model.alpha_grid", "0.5,2");
  cfg.set("theory.branches", "all");
  std::ostringstream log;
  REQUIRE(run(cfg, log) == kExitOk);
  int selected = 0;
  for (const auto& r : lines(slurp(out)))
    if (r[0] != '#' && r.rfind("alpha", 0) != 0 && r.substr(r.size() - 4, 2) == ",1") ++selected;
  CHECK(selected == 2);
}

TEST_CASE("spectrum run") {
  const auto out = scratch("spectrum.csv");
  auto cfg = RunConfig::from_text("mode = spectrum\nspectrum.eta = 0,1\nreadout.kind = homogeneous\nout = " + out + "\n");
  std::ostringstream log;
  REQUIRE(run(cfg, log) == kExitOk);
  const auto rows = lines(slurp(out));
  CHECK(rows[0] == "# schema: ewnet.spectrum.v1");
  CHECK(rows[1] == "eta,x,density,weight");
  double mass0 = 0.0;
  for (std::size_t i = 2; i < rows.size(); ++i) {
    std::istringstream s(rows[i]);
    std::string eta, x, dens, w;
    std::getline(s, eta, ',');
    std::getline(s, x, ',');
    std::getline(s, dens, ',');
    std::getline(s, w, ',');
    CHECK(std::stod(dens) >= 0.0);
    if (std::stod(eta) == 0.0) mass0 += std::stod(dens) * std::stod(w);
  }
  CHECK(mass0 == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("command-line exit codes") {
  const std::string cache = std::string(" --spectral-cache ") + ewnet::testing::cache_dir();
  CHECK(shell("--version") == 0);
  CHECK(shell("") == kExitConfig);
  CHECK(shell("theory --set model.bogus=1 --out " + scratch("bad.csv")) == kExitConfig);
  CHECK(shell("theory --set model.alpha=2 --set solver.max_iter=1 --out " + scratch("noconv.csv") + cache) ==
        kExitConvergence);
  CHECK(slurp(scratch("noconv.csv")).find("nan") != std::string::npos);
  CHECK(shell("theory --set model.alpha_grid=0.5,1 --out " + scratch("ok.csv") + cache) == kExitOk);
}
