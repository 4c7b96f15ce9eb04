#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ewnet/config.hpp"
#include "ewnet/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bayes-optimal learning of wide two-layer networks: theory, GAMP-RIE and MCMC runs"};
  app.require_subcommand(1, 1);
  std::string config_path, out, cache;
  std::vector<std::string> overrides;
  int jobs = 0;
  long long seed = -1;
  app.set_version_flag("--version", ewnet::code_version());

  const std::vector<std::pair<std::string, std::string>> modes{
      {"theory", "saddle-point sweep over an alpha grid"},
      {"phase", "specialisation transition alpha_sp"},
      {"gamp", "GAMP-RIE test error on synthetic instances"},
      {"mcmc", "posterior sampling and overlap traces"},
      {"spectrum", "observation spectral densities"}};
  for (const auto& [name, help] : modes) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value configuration file");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "base random seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--spectral-cache", cache, "directory for cached spectral tables");
    sub->add_option("--out", out, "output CSV path");
    sub->add_option("--set", overrides, "extra key=value settings");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : ewnet::kExitConfig;
  }
  try {
    ewnet::RunConfig cfg = config_path.empty() ? ewnet::RunConfig{} : ewnet::RunConfig::from_file(config_path);
    cfg.set("mode", app.get_subcommands().front()->get_name());
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ewnet::ConfigError("--set expects key=value: " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (jobs > 0) cfg.set("jobs", std::to_string(jobs));
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (!cache.empty()) cfg.set("spectral_cache", cache);
    if (!out.empty()) cfg.set("out", out);
    return ewnet::run(cfg, std::cerr);
  } catch (const ewnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ewnet::kExitConfig;
  } catch (const ewnet::ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return ewnet::kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ewnet::kExitConfig;
  }
}
