#include "ewnet/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "ewnet/errors.hpp"
#include "ewnet/quadrature.hpp"

namespace ewnet {
namespace {

constexpr double kTwoPiE = 2.0 * 3.14159265358979323846 * 2.718281828459045;
constexpr double kSpecialisedQ = 1e-6;

double v2(const ReadoutLaw& r, std::size_t a) { return r.values[a] * r.values[a]; }

// Working copy of the order parameters with accurate complements.
struct Work {
  double gap2 = 0.0;  // r2 - q2
  double q2_hat = 0.0;
  std::vector<double> Q, Qc, Qh;  // QW, 1 - QW, QW_hat
};

double moment_gap(const Work& w, const ReadoutLaw& r) {
  // 1 - E v^2 QW^2 written to avoid cancellation as QW -> 1
  double s = 1.0 - r.second_moment;
  for (std::size_t a = 0; a < r.size(); ++a) s += r.probs[a] * v2(r, a) * w.Qc[a] * (1.0 + w.Q[a]);
  return std::max(0.0, s);
}

// r_K - q_K
double kernel_gap(const Work& w, const TheoryContext& ctx) {
  const auto& act = ctx.activation;
  double s = 0.5 * act.mu(2) * act.mu(2) * w.gap2;
  for (std::size_t a = 0; a < ctx.readout.size(); ++a)
    s += ctx.readout.probs[a] * v2(ctx.readout, a) * (act.g_one - act.g(w.Q[a]));
  return std::max(0.0, s);
}

double r_kernel(const TheoryContext& ctx) {
  const auto& act = ctx.activation;
  return act.mu(1) * act.mu(1) + 0.5 * act.mu(2) * act.mu(2) * ctx.r2() + act.g_one;
}

double psi_out_of(const Work& w, const TheoryContext& ctx) {
  const double gk = kernel_gap(w, ctx);
  if (ctx.channel.kind == ChannelSpec::Kind::gaussian_linear)
    return -0.5 * std::log(kTwoPiE * (ctx.channel.delta + gk));
  const double rk = r_kernel(ctx);
  return psi_out(ctx.channel, rk - gk, rk);
}

double psi_out_prime_of(const Work& w, const TheoryContext& ctx) {
  const double gk = kernel_gap(w, ctx);
  if (ctx.channel.kind == ChannelSpec::Kind::gaussian_linear)
    return 0.5 / (ctx.channel.delta + gk);
  const double rk = r_kernel(ctx);
  return psi_out_prime(ctx.channel, rk - gk, rk);
}

Work from_state(const SaddleState& s, const TheoryContext& ctx, double gap2) {
  Work w;
  w.gap2 = gap2 >= 0 ? gap2 : ctx.r2() - s.q2;
  w.q2_hat = s.q2_hat;
  w.Q = s.QW;
  w.Qh = s.QW_hat;
  w.Qc.resize(w.Q.size());
  for (std::size_t a = 0; a < w.Q.size(); ++a) w.Qc[a] = 1.0 - w.Q[a];
  return w;
}

SaddleState to_state(const Work& w, const TheoryContext& ctx) {
  SaddleState s;
  s.q2 = ctx.r2() - w.gap2;
  s.q2_hat = w.q2_hat;
  s.QW = w.Q;
  s.QW_hat = w.Qh;
  return s;
}

double entropic_w(const Work& w, const TheoryContext& ctx) {
  double s = 0.0;
  for (std::size_t a = 0; a < ctx.readout.size(); ++a)
    s += ctx.readout.probs[a] * (psi_w(ctx.prior, w.Qh[a]) - 0.5 * w.Q[a] * w.Qh[a]);
  return s;
}

double potential(const Work& w, const TheoryContext& ctx, double tau) {
  const double a = ctx.alpha;
  return psi_out_of(w, ctx) + w.gap2 * w.q2_hat / (4.0 * a) + ctx.gamma / a * entropic_w(w, ctx) +
         (ctx.table->iota(tau) - ctx.table->iota(w.q2_hat + tau)) / a;
}

double simplified_value(const Work& w, const TheoryContext& ctx) {
  const double a = ctx.alpha;
  return psi_out_of(w, ctx) + w.gap2 * w.q2_hat / (4.0 * a) + ctx.gamma / a * entropic_w(w, ctx) -
         std::log1p(w.q2_hat * moment_gap(w, ctx.readout)) / (4.0 * a);
}

bool finite_work(const Work& w) {
  if (!std::isfinite(w.gap2) || !std::isfinite(w.q2_hat)) return false;
  for (std::size_t a = 0; a < w.Q.size(); ++a)
    if (!std::isfinite(w.Q[a]) || !std::isfinite(w.Qh[a])) return false;
  return true;
}

std::string dump(const Work& w, int it) {
  std::ostringstream o;
  o << "iteration " << it << ": gap2=" << w.gap2 << " q2_hat=" << w.q2_hat << " QW=[";
  for (double q : w.Q) o << q << ' ';
  o << "] QW_hat=[";
  for (double q : w.Qh) o << q << ' ';
  o << ']';
  return o.str();
}

double rel_change(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

enum class Theory { main, simplified };

SaddleSolution run(const TheoryContext& ctx, const SaddleState& init, const SolverConfig& cfg,
                   Theory theory) {
  ctx.validate();
  const auto& R = ctx.readout;
  const std::size_t A = R.size();
  if (init.QW.size() != A || init.QW_hat.size() != A)
    throw DomainError("initial state does not match the readout atoms");
  const double gamma = ctx.gamma, alpha = ctx.alpha;
  const double mu2sq = ctx.activation.mu(2) * ctx.activation.mu(2);
  const double th = cfg.damping;

  Work w = from_state(init, ctx, -1.0);
  TauResult tr;
  auto update_tau = [&] {
    const auto inv = ctx.table->inverse(moment_gap(w, R));
    tr.tau = inv.eta;
    tr.saturated = inv.saturated;
  };

  SaddleSolution sol;
  double res = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < cfg.max_iter; ++it) {
    update_tau();
    // conjugate parameters from (QW, q2)
    const double pp = psi_out_prime_of(w, ctx);
    const double m = moment_gap(w, R);
    // (m - gap2) / mmse'(tau) at the fixed point; tends to -q2_hat as tau grows
    double ratio = 0.0;
    if (theory == Theory::main)
      ratio = tr.saturated ? -w.q2_hat
                           : ctx.table->mmse_drop(tr.tau, w.q2_hat) /
                                 ctx.table->mmse_prime(tr.tau);
    Work nw = w;
    nw.q2_hat = 2.0 * alpha * mu2sq * pp;
    for (std::size_t a = 0; a < A; ++a) {
      double h = 2.0 * alpha / gamma * pp * v2(R, a) * ctx.activation.g_prime(w.Q[a]);
      if (theory == Theory::main) {
        h -= ratio * v2(R, a) * w.Q[a] / gamma;
      } else {
        h += w.q2_hat * v2(R, a) * w.Q[a] / (gamma * (1.0 + w.q2_hat * m));
      }
      nw.Qh[a] = std::max(0.0, h);
    }
    double r = rel_change(nw.q2_hat, w.q2_hat);
    for (std::size_t a = 0; a < A; ++a) r = std::max(r, rel_change(nw.Qh[a], w.Qh[a]));
    for (std::size_t a = 0; a < A; ++a) nw.Qh[a] = th * nw.Qh[a] + (1.0 - th) * w.Qh[a];
    nw.q2_hat = th * nw.q2_hat + (1.0 - th) * w.q2_hat;

    // order parameters from the conjugates
    for (std::size_t a = 0; a < A; ++a) {
      const double c = posterior_mean_complement(ctx.prior, nw.Qh[a]);
      const double qn = 1.0 - c;
      r = std::max(r, rel_change(qn, w.Q[a]));
      nw.Qc[a] = th * c + (1.0 - th) * w.Qc[a];
      nw.Q[a] = th * qn + (1.0 - th) * w.Q[a];
    }
    double gap;
    if (theory == Theory::main) {
      w.Q.swap(nw.Q);
      w.Qc.swap(nw.Qc);
      update_tau();
      w.Q.swap(nw.Q);
      w.Qc.swap(nw.Qc);
      gap = ctx.table->mmse(nw.q2_hat + tr.tau);
    } else {
      const double mn = moment_gap(nw, R);
      gap = mn / (1.0 + nw.q2_hat * mn);
    }
    r = std::max(r, rel_change(gap, w.gap2));
    nw.gap2 = th * gap + (1.0 - th) * w.gap2;
    w = std::move(nw);
    if (!finite_work(w)) throw NumericalError("non-finite saddle update at " + dump(w, it));
    res = r;
    if (res < cfg.tol) {
      ++it;
      break;
    }
  }
  update_tau();
  sol.state = to_state(w, ctx);
  sol.gap2 = w.gap2;
  sol.converged = res < cfg.tol;
  sol.residual = res;
  sol.iterations = it;
  sol.tau = tr.tau;
  sol.tau_saturated = tr.saturated;
  double qmax = 0.0;
  for (double q : w.Q) qmax = std::max(qmax, std::abs(q));
  sol.branch = qmax > kSpecialisedQ ? Branch::specialisation : Branch::universal;
  sol.f_rs = theory == Theory::main ? potential(w, ctx, tr.tau) : simplified_value(w, ctx);
  sol.eps_opt = gen_error_theory(sol, ctx);
  sol.mutual_info = mutual_information(sol, ctx);
  return sol;
}

double state_distance(const SaddleSolution& a, const SaddleSolution& b) {
  double d = std::max(rel_change(a.state.q2, b.state.q2), rel_change(a.state.q2_hat, b.state.q2_hat));
  for (std::size_t i = 0; i < a.state.QW.size(); ++i) {
    d = std::max(d, std::abs(a.state.QW[i] - b.state.QW[i]));
    d = std::max(d, rel_change(a.state.QW_hat[i], b.state.QW_hat[i]));
  }
  return d;
}

}  // namespace

void TheoryContext::validate() const {
  if (!(alpha > 0)) throw ConfigError("alpha must be positive");
  if (!(gamma > 0)) throw ConfigError("gamma must be positive");
  if (!table) throw ConfigError("theory context has no spectral table");
  if (std::abs(table->gamma - gamma) > 1e-12) throw ConfigError("spectral table gamma mismatch");
  if (table->readout.hash() != readout.hash()) throw ConfigError("spectral table readout mismatch");
  if (readout.size() == 0) throw ConfigError("readout has no atoms");
}

SaddleState SaddleState::uninformative(std::size_t atoms) {
  SaddleState s;
  s.QW.assign(atoms, 0.0);
  s.QW_hat.assign(atoms, 0.0);
  return s;
}

SaddleState SaddleState::informative(std::size_t atoms, double r2, double offset) {
  SaddleState s;
  s.q2 = r2 - offset;
  s.QW.assign(atoms, 1.0 - offset);
  s.QW_hat.assign(atoms, 0.0);
  return s;
}

std::string branch_name(Branch b) { return b == Branch::universal ? "universal" : "specialisation"; }

double rs_potential(const SaddleState& s, const TheoryContext& ctx, double gap2) {
  ctx.validate();
  const Work w = from_state(s, ctx, gap2);
  if (w.gap2 < -1e-12) throw DomainError("q2 exceeds r2");
  const double tau = ctx.table->inverse(moment_gap(w, ctx.readout)).eta;
  if (w.q2_hat + tau > SpectralTable::kTauMax * 10)
    throw TableRangeError("spectral table does not cover q2_hat + tau");
  return potential(w, ctx, tau);
}

double simplified_potential(const SaddleState& s, const TheoryContext& ctx, double gap2) {
  return simplified_value(from_state(s, ctx, gap2), ctx);
}

SaddleSolution iterate_saddle(const TheoryContext& ctx, const SaddleState& init,
                              const SolverConfig& cfg) {
  return run(ctx, init, cfg, Theory::main);
}

SaddleSolution simplified_extremum(const TheoryContext& ctx, const SolverConfig& cfg) {
  return run(ctx, SaddleState::informative(ctx.readout.size(), ctx.r2()), cfg, Theory::simplified);
}

BranchSet solve_branches(const TheoryContext& ctx, const SolverConfig& cfg) {
  const std::size_t A = ctx.readout.size();
  std::vector<SaddleState> starts{SaddleState::informative(A, ctx.r2())};
  if (cfg.partial_starts > 0) {
    std::vector<double> levels;
    for (double v : ctx.readout.values) levels.push_back(std::abs(v));
    std::sort(levels.begin(), levels.end(), std::greater<>());
    levels.erase(std::unique(levels.begin(), levels.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 levels.end());
    levels.pop_back();  // the lowest level is the full informative start
    const std::size_t n = levels.size(), k = std::min<std::size_t>(n, cfg.partial_starts);
    for (std::size_t j = 0; j < k; ++j) {
      const double level = levels[k == n ? j : j * (n - 1) / std::max<std::size_t>(1, k - 1)];
      SaddleState s = SaddleState::informative(A, ctx.r2());
      for (std::size_t a = 0; a < A; ++a)
        if (std::abs(ctx.readout.values[a]) < level - 1e-12) s.QW[a] = 0.0;
      starts.push_back(std::move(s));
    }
  }
  BranchSet out;
  out.universal = iterate_saddle(ctx, SaddleState::uninformative(A), cfg);
  out.selected = out.universal;
  if (out.universal.converged) out.candidates.push_back(out.universal);
  double worst = out.universal.converged ? 0.0 : out.universal.residual;
  bool any = out.universal.converged;
  for (const auto& s0 : starts) {
    SaddleSolution s = iterate_saddle(ctx, s0, cfg);
    if (!s.converged) {
      worst = std::max(worst, s.residual);
      continue;
    }
    any = true;
    bool dup = false;
    for (const auto& c : out.candidates) dup = dup || state_distance(s, c) < 1e-4;
    if (dup) continue;
    out.candidates.push_back(s);
    if (s.branch != Branch::specialisation) continue;
    if (!out.specialisation || s.f_rs > out.specialisation->f_rs) out.specialisation = s;
  }
  if (!any) {
    std::ostringstream o;
    o << "saddle iteration did not converge from any start (alpha=" << ctx.alpha
      << ", worst residual " << worst << ")";
    throw ConvergenceError(o.str(), worst);
  }
  if (out.specialisation &&
      (!out.universal.converged || out.specialisation->f_rs > out.universal.f_rs))
    out.selected = *out.specialisation;
  return out;
}

double gen_error_theory(const SaddleSolution& s, const TheoryContext& ctx) {
  Work w = from_state(s.state, ctx, s.gap2 > 0 ? s.gap2 : -1.0);
  w.gap2 = std::max(0.0, w.gap2);
  const double gk = kernel_gap(w, ctx);
  if (ctx.channel.kind == ChannelSpec::Kind::gaussian_linear) return ctx.channel.delta + gk;
  const double rk = r_kernel(ctx), qk = std::max(0.0, rk - gk);
  const auto& gh = gauss_hermite(48);
  double ey2 = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
    const double base = std::sqrt(qk) * gh.nodes[i];
    double inner = 0.0;
    for (std::size_t j = 0; j < gh.nodes.size(); ++j) {
      const double lam = base + std::sqrt(gk) * gh.nodes[j];
      inner += gh.weights[j] * ctx.channel.mean(lam);
      ey2 += gh.weights[i] * gh.weights[j] * ctx.channel.second_moment(lam);
    }
    cross += gh.weights[i] * inner * inner;
  }
  return ey2 - cross;
}

double mutual_information(const SaddleSolution& s, const TheoryContext& ctx) {
  const double k = ctx.alpha / ctx.gamma;
  if (ctx.channel.kind == ChannelSpec::Kind::gaussian_linear)
    return -k * s.f_rs - 0.5 * k * std::log(kTwoPiE * ctx.channel.delta);
  const double rk = r_kernel(ctx);
  const auto& gh = gauss_hermite(64);
  double e = 0.0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i)
    e += gh.weights[i] * ctx.channel.neg_entropy(std::sqrt(rk) * gh.nodes[i]);
  return -k * s.f_rs + k * e;
}

TransitionResult find_alpha_sp(TheoryContext ctx, double alpha_lo, double alpha_hi, bool per_atom,
                               double alpha_tol, double threshold, const SolverConfig& cfg) {
  if (!(alpha_lo > 0 && alpha_hi > alpha_lo)) throw BracketError("invalid alpha bracket");
  const std::size_t A = ctx.readout.size();
  // group atoms by v^2
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t a = 0; a < A; ++a) {
    const double key = std::round(v2(ctx.readout, a) * 1e12) / 1e12;
    groups[key].push_back(a);
  }
  auto selected_at = [&](double alpha) {
    ctx.alpha = alpha;
    return solve_branches(ctx, cfg).selected;
  };
  auto any_on = [&](const SaddleSolution& s, const std::vector<std::size_t>& idx) {
    for (std::size_t a : idx)
      if (s.state.QW[a] > threshold) return true;
    return false;
  };
  std::vector<std::size_t> all(A);
  for (std::size_t a = 0; a < A; ++a) all[a] = a;

  const SaddleSolution s_lo = selected_at(alpha_lo), s_hi = selected_at(alpha_hi);
  if (any_on(s_lo, all) || !any_on(s_hi, all)) {
    std::ostringstream o;
    o << "bracket [" << alpha_lo << ", " << alpha_hi << "] does not straddle the transition";
    throw BracketError(o.str());
  }
  auto bisect = [&](const std::vector<std::size_t>& idx, double lo, double hi) {
    while (hi - lo > alpha_tol) {
      const double mid = 0.5 * (lo + hi);
      (any_on(selected_at(mid), idx) ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  };
  TransitionResult out;
  out.alpha_sp = bisect(all, alpha_lo, alpha_hi);
  out.alpha_sp_atom.assign(A, std::numeric_limits<double>::quiet_NaN());
  if (per_atom) {
    for (const auto& [key, idx] : groups) {
      if (!any_on(s_hi, idx)) continue;
      const double t = bisect(idx, alpha_lo, alpha_hi);
      for (std::size_t a : idx) out.alpha_sp_atom[a] = t;
    }
  }
  return out;
}

SimplifiedResult simplified_ansatz_solve(const TheoryContext& ctx,
                                         std::optional<std::pair<double, double>> bracket,
                                         const SolverConfig& cfg, double alpha_tol) {
  auto at = [&](double alpha) {
    TheoryContext c = ctx;
    c.alpha = alpha;
    SimplifiedResult r;
    r.uni = iterate_saddle(c, SaddleState::uninformative(c.readout.size()), cfg);
    r.sp = simplified_extremum(c, cfg);
    r.f_uni = r.uni.f_rs;
    r.f_sp = r.sp.f_rs;
    r.f_bar = std::max(r.f_uni, r.f_sp);
    return r;
  };
  SimplifiedResult out = at(ctx.alpha);
  if (bracket) {
    double lo = bracket->first, hi = bracket->second;
    const auto rlo = at(lo), rhi = at(hi);
    const bool sp_lo = rlo.f_sp > rlo.f_uni, sp_hi = rhi.f_sp > rhi.f_uni;
    if (!sp_lo && sp_hi) {
      while (hi - lo > alpha_tol) {
        const double mid = 0.5 * (lo + hi);
        const auto r = at(mid);
        (r.f_sp > r.f_uni ? hi : lo) = mid;
      }
      out.alpha_bar_sp = 0.5 * (lo + hi);
    }
  }
  return out;
}

}  // namespace ewnet
