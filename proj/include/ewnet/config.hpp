#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ewnet/readouts.hpp"

namespace ewnet {

enum class RunMode { theory, phase, gamp, mcmc, spectrum };
RunMode parse_mode(const std::string& s);
std::string mode_name(RunMode m);

/// Parsed run configuration. Files hold `key = value` lines; `#` starts a comment.
struct RunConfig {
  RunMode mode = RunMode::theory;

  int d = 150;
  double gamma = 0.5;
  std::vector<double> alpha_grid{1.0};
  double delta = 0.1;
  std::string activation = "relu";
  std::string prior = "gaussian";
  std::string readout_kind = "homogeneous";
  int readout_bins = 50;
  std::vector<std::pair<double, double>> readout_atoms;  // custom (value, prob)
  bool readout_rescale = false;

  double damping = 0.5;
  double tol = 1e-8;
  int max_iter = 5000;
  int partial_starts = 12;
  bool all_branches = false;

  double phase_lo = 0.005, phase_hi = 1.0, phase_tol = 1e-2, phase_threshold = 1e-3;
  bool phase_simplified = false;

  int gamp_instances = 10;
  int gamp_n_test = 100000;
  int gamp_max_iter = 200;
  double gamp_damping = 0.5;
  double gamp_tol = 1e-4;

  std::string sampler = "auto";  // metropolis for binary weights, hmc for Gaussian
  std::string init = "informative";
  int iterations = 1000;
  int thin = 10;
  int burn_in = 0;
  int leapfrog = 10;
  double step0 = 0.01;
  int n_test = 100000;
  int ell_max = 5;

  std::vector<double> spectrum_eta{1.0};
  int spectrum_resolution = 64;

  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out = "out.csv";
  std::string spectral_cache;

  /// Every key = value pair that was set, in order, for the manifest.
  std::vector<std::pair<std::string, std::string>> entries;

  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
  /// Applies one key; throws ConfigError on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Throws ConfigError on unresolved names or an alpha grid that is not increasing.
  void validate() const;
  ReadoutLaw readout() const;
};

/// "a,b,c" or "lo:hi:n" (n evenly spaced points).
std::vector<double> parse_grid(const std::string& s);

/// Exit codes of run().
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitConvergence = 2;

/// Executes a run, writes the CSV at cfg.out and a manifest at cfg.out + ".manifest.json".
/// Convergence failures are flagged in the CSV and give kExitConvergence.
int run(const RunConfig& cfg, std::ostream& log);

std::string code_version();

}  // namespace ewnet
