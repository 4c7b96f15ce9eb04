#include "ewnet/config.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "ewnet/errors.hpp"
#include "ewnet/experiments.hpp"
#include "ewnet/gamp.hpp"
#include "ewnet/quadrature.hpp"
#include "ewnet/saddle.hpp"
#include "ewnet/spectral.hpp"

#ifndef EWNET_VERSION
#define EWNET_VERSION "0.0.0"
#endif

namespace ewnet {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key " + key + ": not a number: " + v);
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != std::floor(x) || std::abs(x) > 2e9) throw ConfigError("key " + key + ": not an integer: " + v);
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key " + key + ": not a boolean: " + v);
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

// CSV writer with a schema line.
class Csv {
 public:
  Csv(const std::string& path, const std::string& schema, const std::vector<std::string>& cols)
      : f_(path) {
    if (!f_) throw ConfigError("cannot write " + path);
    f_ << "# schema: " << schema << "\n";
    for (std::size_t i = 0; i < cols.size(); ++i) f_ << (i ? "," : "") << cols[i];
    f_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) f_ << (i ? "," : "") << cells[i];
    f_ << "\n";
  }

 private:
  std::ofstream f_;
};

std::shared_ptr<const SpectralTable> table_for(const RunConfig& cfg, const ReadoutLaw& r) {
  if (cfg.spectral_cache.empty())
    return std::make_shared<SpectralTable>(build_mmse_table(r, cfg.gamma, default_eta_grid(), cfg.jobs));
  return cached_mmse_table(r, cfg.gamma, cfg.spectral_cache, cfg.jobs);
}

TheoryContext context_for(const RunConfig& cfg, const ReadoutLaw& r) {
  TheoryContext c;
  c.gamma = cfg.gamma;
  c.activation = shipped_activation(cfg.activation);
  c.readout = r;
  c.prior = parse_prior(cfg.prior);
  c.channel = ChannelSpec::gaussian(cfg.delta);
  c.table = table_for(cfg, r);
  return c;
}

SolverConfig solver_for(const RunConfig& cfg) {
  SolverConfig s;
  s.damping = cfg.damping;
  s.tol = cfg.tol;
  s.max_iter = cfg.max_iter;
  s.partial_starts = cfg.partial_starts;
  return s;
}

std::vector<std::string> solution_cells(double alpha, const TheoryContext& c, const SaddleSolution& s,
                                        bool selected) {
  const double shift = c.gamma * c.readout.mean * c.readout.mean;
  std::vector<std::string> row{fmt(alpha), fmt(c.gamma), branch_name(s.branch), fmt(s.f_rs),
                               fmt(s.state.q2 - shift), fmt(s.state.q2_hat), fmt(s.eps_opt),
                               fmt(s.mutual_info)};
  for (double q : s.state.QW) row.push_back(fmt(q));
  for (double q : s.state.QW_hat) row.push_back(fmt(q));
  row.push_back(selected ? "1" : "0");
  row.push_back(s.converged ? "1" : "0");
  return row;
}

int run_theory(const RunConfig& cfg, std::ostream& log) {
  const ReadoutLaw r = cfg.readout();
  const TheoryContext base = context_for(cfg, r);
  const SolverConfig sc = solver_for(cfg);
  const int n = static_cast<int>(cfg.alpha_grid.size());
  std::vector<std::vector<std::vector<std::string>>> rows(n);
  std::vector<int> failed(n, 0);
  parallel_for(n, cfg.jobs, [&](int i) {
    TheoryContext c = base;
    c.alpha = cfg.alpha_grid[i];
    try {
      const BranchSet b = solve_branches(c, sc);
      if (cfg.all_branches) {
        for (const auto& s : b.candidates)
          rows[i].push_back(solution_cells(c.alpha, c, s, std::abs(s.f_rs - b.selected.f_rs) == 0.0 &&
                                                              s.branch == b.selected.branch));
      } else {
        rows[i].push_back(solution_cells(c.alpha, c, b.selected, true));
      }
    } catch (const ConvergenceError& e) {
      failed[i] = 1;
      SaddleSolution s;
      s.f_rs = s.eps_opt = s.mutual_info = s.state.q2 = s.state.q2_hat =
          std::numeric_limits<double>::quiet_NaN();
      s.state.QW.assign(r.size(), std::numeric_limits<double>::quiet_NaN());
      s.state.QW_hat = s.state.QW;
      rows[i].push_back(solution_cells(c.alpha, c, s, true));
    }
  });
  std::vector<std::string> cols{"alpha", "gamma", "branch", "f_rs", "q2", "q2_hat", "eps_opt", "mi"};
  for (std::size_t a = 0; a < r.size(); ++a) cols.push_back("QW_" + std::to_string(a));
  for (std::size_t a = 0; a < r.size(); ++a) cols.push_back("QW_hat_" + std::to_string(a));
  cols.push_back("selected");
  cols.push_back("converged");
  Csv csv(cfg.out, "ewnet.theory.v1", cols);
  int bad = 0;
  for (int i = 0; i < n; ++i) {
    for (const auto& row : rows[i]) csv.row(row);
    bad += failed[i];
  }
  if (bad) log << bad << " alpha point(s) did not converge\n";
  return bad ? kExitConvergence : kExitOk;
}

int run_phase(const RunConfig& cfg, std::ostream& log) {
  const ReadoutLaw r = cfg.readout();
  const TheoryContext c = context_for(cfg, r);
  Csv csv(cfg.out, "ewnet.phase.v1", {"gamma", "atom", "v", "alpha_sp", "converged"});
  try {
    const TransitionResult t = find_alpha_sp(c, cfg.phase_lo, cfg.phase_hi, true, cfg.phase_tol,
                                             cfg.phase_threshold, solver_for(cfg));
    csv.row({fmt(cfg.gamma), "all", "nan", fmt(t.alpha_sp), "1"});
    for (std::size_t a = 0; a < r.size(); ++a)
      csv.row({fmt(cfg.gamma), std::to_string(a), fmt(r.values[a]), fmt(t.alpha_sp_atom[a]), "1"});
  } catch (const BracketError& e) {
    log << "phase: " << e.what() << "\n";
    csv.row({fmt(cfg.gamma), "all", "nan", "nan", "0"});
    return kExitConvergence;
  }
  if (cfg.phase_simplified) {
    TheoryContext cs = c;
    cs.alpha = cfg.phase_lo;
    const SimplifiedResult s = simplified_ansatz_solve(
        cs, std::make_pair(cfg.phase_lo, cfg.phase_hi), solver_for(cfg), cfg.phase_tol);
    csv.row({fmt(cfg.gamma), "simplified", "nan",
             s.alpha_bar_sp ? fmt(*s.alpha_bar_sp) : std::string("nan"), s.alpha_bar_sp ? "1" : "0"});
  }
  return kExitOk;
}

InstanceSpec instance_for(const RunConfig& cfg, double alpha, std::uint64_t seed) {
  InstanceSpec s;
  s.d = cfg.d;
  s.gamma = cfg.gamma;
  s.alpha = alpha;
  s.prior = parse_prior(cfg.prior);
  s.readout = cfg.readout();
  s.activation = cfg.activation;
  s.delta = cfg.delta;
  s.seed = seed;
  return s;
}

int run_gamp(const RunConfig& cfg, std::ostream& log) {
  const int na = static_cast<int>(cfg.alpha_grid.size()), ni = cfg.gamp_instances;
  struct Row {
    double alpha = 0, mse = 0, q2 = 0;
    int iterations = 0;
    std::uint64_t seed = 0;
    bool ok = false;
  };
  std::vector<Row> rows(static_cast<std::size_t>(na) * ni);
  GampConfig gc;
  gc.max_iter = cfg.gamp_max_iter;
  gc.damping = cfg.gamp_damping;
  gc.tol = cfg.gamp_tol;
  parallel_for(na * ni, cfg.jobs, [&](int task) {
    const int ia = task / ni, ii = task % ni;
    Row& row = rows[task];
    row.alpha = cfg.alpha_grid[ia];
    row.seed = cfg.seed + 1000ULL * ia + ii;
    auto [t, data] = generate_instance(instance_for(cfg, row.alpha, row.seed));
    const std::vector<double> v(t.v.data(), t.v.data() + t.v.size());
    try {
      const GampFit fit = gamp_rie_fit(data, t.activation, v, cfg.delta, gc);
      data = Dataset{};
      double se = 0.0;
      constexpr int kChunk = 10000;
      for (int s = 0; s < cfg.gamp_n_test; s += kChunk) {
        const int m = std::min(kChunk, cfg.gamp_n_test - s);
        const Eigen::MatrixXd X = gaussian_inputs(cfg.d, m, row.seed * 7919ULL + s);
        se += (predict(fit, X) - network_output(t.W0, t, X)).squaredNorm();
      }
      row.mse = se / cfg.gamp_n_test + cfg.delta;
      row.q2 = fit.se_trace.empty() ? 0.0 : fit.se_trace.back().q2;
      row.iterations = fit.iterations;
      row.ok = fit.converged;
    } catch (const DivergenceError& e) {
      row.mse = row.q2 = std::numeric_limits<double>::quiet_NaN();
    }
  });
  Csv csv(cfg.out, "ewnet.gamp.v1", {"alpha", "test_mse", "se_q2", "iterations", "seed", "converged"});
  int bad = 0;
  for (const Row& r : rows) {
    csv.row({fmt(r.alpha), fmt(r.mse), fmt(r.q2), std::to_string(r.iterations), std::to_string(r.seed),
             r.ok ? "1" : "0"});
    bad += !r.ok;
  }
  if (bad) log << bad << " GAMP-RIE fit(s) did not converge\n";
  return bad ? kExitConvergence : kExitOk;
}

int run_mcmc(const RunConfig& cfg, std::ostream& log) {
  const PriorKind prior = parse_prior(cfg.prior);
  std::string sampler = cfg.sampler;
  if (sampler == "auto") sampler = prior == PriorKind::rademacher ? "metropolis" : "hmc";
  std::vector<std::string> cols{"alpha", "seed", "iter", "energy", "acceptance", "q2"};
  for (int l = 1; l <= cfg.ell_max; ++l) cols.push_back("Q_" + std::to_string(l));
  cols.push_back("eps");
  Csv csv(cfg.out, "ewnet.mcmc.v1", cols);
  const int na = static_cast<int>(cfg.alpha_grid.size());
  std::vector<std::vector<std::vector<std::string>>> rows(na);
  std::vector<double> bayes(na), bayes_se(na);
  parallel_for(na, cfg.jobs, [&](int ia) {
    const double alpha = cfg.alpha_grid[ia];
    const std::uint64_t seed = cfg.seed + 1000ULL * ia;
    const auto [t, data] = generate_instance(instance_for(cfg, alpha, seed));
    std::vector<Eigen::MatrixXd> kept;
    auto observe = [&](int it, const Eigen::MatrixXd& W) {
      if ((it + 1) % cfg.thin != 0) return;
      const Overlaps o = measure_overlaps(W, t, cfg.ell_max, 1);
      const ErrorEstimate e = empirical_gen_error({W}, t, 0, ErrorMode::overlap_formula);
      std::vector<std::string> row{fmt(alpha), std::to_string(seed), std::to_string(it + 1), "", "",
                                   fmt(o.q2_centred)};
      for (double q : o.Q) row.push_back(fmt(q));
      row.push_back(fmt(e.value));
      rows[ia].push_back(std::move(row));
      if (it + 1 > cfg.burn_in) kept.push_back(W);
    };
    Chain ch;
    if (sampler == "metropolis") {
      MetropolisConfig mc;
      mc.init = parse_init(cfg.init);
      mc.sweeps = cfg.iterations;
      mc.seed = seed + 17;
      mc.thin = cfg.thin;
      mc.observer = observe;
      ch = metropolis_binary(data, t, mc);
    } else if (sampler == "hmc") {
      HmcConfig hc;
      hc.init = parse_init(cfg.init);
      hc.n_iter = cfg.iterations;
      hc.leapfrog = cfg.leapfrog;
      hc.step0 = cfg.step0;
      hc.seed = seed + 17;
      hc.thin = cfg.thin;
      hc.observer = observe;
      ch = hmc_gaussian(data, t, hc);
    } else {
      throw ConfigError("unknown sampler: " + sampler);
    }
    for (auto& row : rows[ia]) {
      const std::size_t it = std::stoul(row[2]) - 1;
      row[3] = fmt(ch.energy[it]);
      row[4] = fmt(ch.acceptance[it]);
    }
    if (!kept.empty()) {
      const ErrorEstimate e = empirical_gen_error(kept, t, cfg.n_test, ErrorMode::gibbs_halved, seed + 99);
      bayes[ia] = e.value;
      bayes_se[ia] = e.std_error;
    } else {
      bayes[ia] = bayes_se[ia] = std::numeric_limits<double>::quiet_NaN();
    }
  });
  for (int ia = 0; ia < na; ++ia) {
    for (const auto& row : rows[ia]) csv.row(row);
    log << "alpha=" << fmt(cfg.alpha_grid[ia]) << " bayes_error=" << fmt(bayes[ia]) << " +- "
        << fmt(bayes_se[ia]) << "\n";
  }
  return kExitOk;
}

int run_spectrum(const RunConfig& cfg, std::ostream&) {
  const ReadoutLaw r = cfg.readout();
  const SpectralDensity sig = signal_esd(r, cfg.gamma, cfg.spectrum_resolution);
  Csv csv(cfg.out, "ewnet.spectrum.v1", {"eta", "x", "density", "weight"});
  for (double eta : cfg.spectrum_eta) {
    const SpectralDensity mu = observation_esd(sig, eta, cfg.spectrum_resolution);
    for (std::size_t i = 0; i < mu.grid.size(); ++i)
      csv.row({fmt(eta), fmt(mu.grid[i]), fmt(mu.density[i]), fmt(mu.weights[i])});
  }
  return kExitOk;
}

}  // namespace

RunMode parse_mode(const std::string& s) {
  if (s == "theory") return RunMode::theory;
  if (s == "phase") return RunMode::phase;
  if (s == "gamp") return RunMode::gamp;
  if (s == "mcmc") return RunMode::mcmc;
  if (s == "spectrum") return RunMode::spectrum;
  throw ConfigError("unknown mode: " + s);
}

std::string mode_name(RunMode m) {
  switch (m) {
    case RunMode::theory: return "theory";
    case RunMode::phase: return "phase";
    case RunMode::gamp: return "gamp";
    case RunMode::mcmc: return "mcmc";
    case RunMode::spectrum: return "spectrum";
  }
  return "theory";
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> g;
  const auto parts = split(s, ':');
  if (parts.size() == 3) {
    const double lo = to_double("grid", parts[0]), hi = to_double("grid", parts[1]);
    const int n = to_int("grid", parts[2]);
    if (n < 1) throw ConfigError("grid needs at least one point");
    for (int i = 0; i < n; ++i) g.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    return g;
  }
  if (parts.size() != 1) throw ConfigError("bad grid: " + s);
  for (const auto& p : split(s, ','))
    if (!p.empty()) g.push_back(to_double("grid", p));
  if (g.empty()) throw ConfigError("empty grid: " + s);
  return g;
}

void RunConfig::set(const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in), v = trim(value_in);
  static const std::map<std::string, std::function<void(RunConfig&, const std::string&, const std::string&)>>
      setters{
          {"mode", [](RunConfig& c, auto&, auto& x) { c.mode = parse_mode(x); }},
          {"model.d", [](RunConfig& c, auto& k, auto& x) { c.d = to_int(k, x); }},
          {"model.gamma", [](RunConfig& c, auto& k, auto& x) { c.gamma = to_double(k, x); }},
          {"model.alpha", [](RunConfig& c, auto& k, auto& x) { c.alpha_grid = {to_double(k, x)}; }},
          {"model.alpha_grid", [](RunConfig& c, auto&, auto& x) { c.alpha_grid = parse_grid(x); }},
          {"model.delta", [](RunConfig& c, auto& k, auto& x) { c.delta = to_double(k, x); }},
          {"model.activation", [](RunConfig& c, auto&, auto& x) { c.activation = x; }},
          {"model.prior", [](RunConfig& c, auto&, auto& x) { c.prior = x; }},
          {"readout.kind", [](RunConfig& c, auto&, auto& x) { c.readout_kind = x; }},
          {"readout.bins", [](RunConfig& c, auto& k, auto& x) { c.readout_bins = to_int(k, x); }},
          {"readout.rescale", [](RunConfig& c, auto& k, auto& x) { c.readout_rescale = to_bool(k, x); }},
          {"readout.atoms",
           [](RunConfig& c, auto& k, auto& x) {
             c.readout_atoms.clear();
             for (const auto& pair : split(x, ',')) {
               const auto vp = split(pair, ':');
               if (vp.size() != 2) throw ConfigError("key " + k + ": expected value:prob pairs");
               c.readout_atoms.emplace_back(to_double(k, vp[0]), to_double(k, vp[1]));
             }
             c.readout_kind = "custom";
           }},
          {"solver.damping", [](RunConfig& c, auto& k, auto& x) { c.damping = to_double(k, x); }},
          {"solver.tol", [](RunConfig& c, auto& k, auto& x) { c.tol = to_double(k, x); }},
          {"solver.max_iter", [](RunConfig& c, auto& k, auto& x) { c.max_iter = to_int(k, x); }},
          {"solver.partial_starts", [](RunConfig& c, auto& k, auto& x) { c.partial_starts = to_int(k, x); }},
          {"theory.branches",
           [](RunConfig& c, auto& k, auto& x) {
             if (x != "selected" && x != "all") throw ConfigError("key " + k + ": selected or all");
             c.all_branches = x == "all";
           }},
          {"phase.alpha_lo", [](RunConfig& c, auto& k, auto& x) { c.phase_lo = to_double(k, x); }},
          {"phase.alpha_hi", [](RunConfig& c, auto& k, auto& x) { c.phase_hi = to_double(k, x); }},
          {"phase.alpha_tol", [](RunConfig& c, auto& k, auto& x) { c.phase_tol = to_double(k, x); }},
          {"phase.threshold", [](RunConfig& c, auto& k, auto& x) { c.phase_threshold = to_double(k, x); }},
          {"phase.simplified", [](RunConfig& c, auto& k, auto& x) { c.phase_simplified = to_bool(k, x); }},
          {"gamp.instances", [](RunConfig& c, auto& k, auto& x) { c.gamp_instances = to_int(k, x); }},
          {"gamp.n_test", [](RunConfig& c, auto& k, auto& x) { c.gamp_n_test = to_int(k, x); }},
          {"gamp.max_iter", [](RunConfig& c, auto& k, auto& x) { c.gamp_max_iter = to_int(k, x); }},
          {"gamp.damping", [](RunConfig& c, auto& k, auto& x) { c.gamp_damping = to_double(k, x); }},
          {"gamp.tol", [](RunConfig& c, auto& k, auto& x) { c.gamp_tol = to_double(k, x); }},
          {"mcmc.sampler", [](RunConfig& c, auto&, auto& x) { c.sampler = x; }},
          {"mcmc.init", [](RunConfig& c, auto&, auto& x) { c.init = x; }},
          {"mcmc.iterations", [](RunConfig& c, auto& k, auto& x) { c.iterations = to_int(k, x); }},
          {"mcmc.thin", [](RunConfig& c, auto& k, auto& x) { c.thin = to_int(k, x); }},
          {"mcmc.burn_in", [](RunConfig& c, auto& k, auto& x) { c.burn_in = to_int(k, x); }},
          {"mcmc.leapfrog", [](RunConfig& c, auto& k, auto& x) { c.leapfrog = to_int(k, x); }},
          {"mcmc.step0", [](RunConfig& c, auto& k, auto& x) { c.step0 = to_double(k, x); }},
          {"mcmc.n_test", [](RunConfig& c, auto& k, auto& x) { c.n_test = to_int(k, x); }},
          {"mcmc.ell_max", [](RunConfig& c, auto& k, auto& x) { c.ell_max = to_int(k, x); }},
          {"spectrum.eta", [](RunConfig& c, auto&, auto& x) { c.spectrum_eta = parse_grid(x); }},
          {"spectrum.resolution", [](RunConfig& c, auto& k, auto& x) { c.spectrum_resolution = to_int(k, x); }},
          {"seed",
           [](RunConfig& c, auto& k, auto& x) {
             const double s = to_double(k, x);
             if (s < 0 || s != std::floor(s)) throw ConfigError("seed must be a non-negative integer");
             c.seed = static_cast<std::uint64_t>(s);
           }},
          {"jobs", [](RunConfig& c, auto& k, auto& x) { c.jobs = to_int(k, x); }},
          {"out", [](RunConfig& c, auto&, auto& x) { c.out = x; }},
          {"spectral_cache", [](RunConfig& c, auto&, auto& x) { c.spectral_cache = x; }},
      };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key: " + key);
  it->second(*this, key, v);
  entries.emplace_back(key, v);
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c;
  std::stringstream ss(text);
  int line_no = 0;
  for (std::string line; std::getline(ss, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    c.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

ReadoutLaw RunConfig::readout() const {
  if (readout_kind == "custom") {
    std::vector<double> v, p;
    for (const auto& [a, b] : readout_atoms) {
      v.push_back(a);
      p.push_back(b);
    }
    return custom_readout(v, p, readout_rescale);
  }
  return make_readout(readout_kind, readout_bins);
}

void RunConfig::validate() const {
  if (d < 1) throw ConfigError("model.d must be positive");
  if (!(gamma > 0.0)) throw ConfigError("model.gamma must be positive");
  if (!(delta > 0.0)) throw ConfigError("model.delta must be positive");
  if (alpha_grid.empty()) throw ConfigError("alpha grid is empty");
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (!(alpha_grid[i] > 0.0)) throw ConfigError("alpha values must be positive");
    if (i && !(alpha_grid[i] > alpha_grid[i - 1])) throw ConfigError("alpha grid must be strictly increasing");
  }
  try {
    shipped_activation(activation);
    parse_prior(prior);
    readout();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (thin < 1 || iterations < 0 || burn_in < 0) throw ConfigError("invalid mcmc schedule");
  if (gamp_instances < 1 || gamp_n_test < 1) throw ConfigError("invalid gamp settings");
  if (!(phase_hi > phase_lo) || !(phase_lo > 0.0)) throw ConfigError("invalid phase bracket");
  if (ell_max < 1) throw ConfigError("mcmc.ell_max must be positive");
  for (double e : spectrum_eta)
    if (!(e >= 0.0)) throw ConfigError("spectrum.eta must be non-negative");
  if (out.empty()) throw ConfigError("output path is empty");
}

std::string code_version() { return EWNET_VERSION; }

int run(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  int status = kExitOk;
  switch (cfg.mode) {
    case RunMode::theory: status = run_theory(cfg, log); break;
    case RunMode::phase: status = run_phase(cfg, log); break;
    case RunMode::gamp: status = run_gamp(cfg, log); break;
    case RunMode::mcmc: status = run_mcmc(cfg, log); break;
    case RunMode::spectrum: status = run_spectrum(cfg, log); break;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::ordered_json m;
  m["mode"] = mode_name(cfg.mode);
  m["code_version"] = code_version();
  m["wall_time_s"] = wall;
  m["exit_status"] = status;
  m["output"] = cfg.out;
  nlohmann::ordered_json conf;
  for (const auto& [k, v] : cfg.entries) conf[k] = v;
  m["config"] = conf;
  std::ofstream f(cfg.out + ".manifest.json");
  if (!f) throw ConfigError("cannot write manifest");
  f << m.dump(2) << "\n";
  return status;
}

}  // namespace ewnet
