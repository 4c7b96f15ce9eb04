#include "ewnet/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "ewnet/errors.hpp"
#include "ewnet/quadrature.hpp"

namespace ewnet {

using cd = std::complex<double>;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSupportThreshold = 1e-8;

}  // namespace

// ---------------------------------------------------------------------------------------------
// SpectralDensity

double SpectralDensity::continuous_mass() const {
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) s += weights[i] * density[i];
  return s;
}

double SpectralDensity::trapezoid_mass() const {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    s += 0.5 * (density[i] + density[i + 1]) * (grid[i + 1] - grid[i]);
  for (const auto& pm : point_masses) s += pm.second;
  return s;
}

double SpectralDensity::integrate(const std::function<double(double)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (weights[i] != 0.0) s += weights[i] * density[i] * f(grid[i]);
  return s;
}

double SpectralDensity::moment(int k) const {
  double s = integrate([k](double x) { return std::pow(x, k); });
  for (const auto& pm : point_masses) s += pm.second * std::pow(pm.first, k);
  return s;
}

// ---------------------------------------------------------------------------------------------
// FreeSpectrum

FreeSpectrum FreeSpectrum::signal(const ReadoutLaw& r, double gamma) {
  if (!(gamma > 0)) throw DomainError("gamma must be positive");
  FreeSpectrum f;
  f.pv_ = r.probs;
  f.v_ = r.values;
  f.c_ = std::sqrt(gamma);
  f.b_ = 1.0 / std::sqrt(gamma);
  f.n_ = 0.0;
  double nonzero = 0.0, vmax = 0.0, vmin = 0.0;
  for (std::size_t a = 0; a < r.size(); ++a) {
    if (r.values[a] != 0.0) nonzero += r.probs[a];
    vmax = std::max(vmax, r.values[a]);
    vmin = std::min(vmin, r.values[a]);
  }
  f.zero_mass_ = std::max(0.0, 1.0 - gamma * nonzero);
  const double edge = (1 + std::sqrt(gamma)) * (1 + std::sqrt(gamma)) / std::sqrt(gamma);
  f.lo_ = vmin * edge * 1.02 - 1e-3;
  f.hi_ = vmax * edge * 1.02 + 1e-3;
  f.eps_ = 1e-13 * (f.hi_ - f.lo_);
  return f;
}

FreeSpectrum FreeSpectrum::observation(const ReadoutLaw& r, double gamma, double eta) {
  if (eta < 0) throw DomainError("eta must be non-negative");
  FreeSpectrum s = signal(r, gamma);
  FreeSpectrum f;
  f.pv_ = r.probs;
  f.v_ = r.values;
  f.c_ = std::sqrt(eta * gamma);
  f.b_ = std::sqrt(eta / gamma);
  f.n_ = 1.0;
  f.zero_mass_ = 0.0;
  f.lo_ = std::sqrt(eta) * s.lo_ - 2.05;
  f.hi_ = std::sqrt(eta) * s.hi_ + 2.05;
  f.eps_ = 1e-13 * (f.hi_ - f.lo_);
  return f;
}

cd FreeSpectrum::newton(cd z, cd m, bool& ok) const {
  ok = false;
  for (int it = 0; it < 100; ++it) {
    cd h = -z - n_ * m, dh = -n_;
    for (std::size_t a = 0; a < v_.size(); ++a) {
      const cd den = 1.0 + b_ * v_[a] * m;
      const double cv = pv_[a] * c_ * v_[a];
      h += cv / den;
      dh -= cv * b_ * v_[a] / (den * den);
    }
    const cd F = m * h - 1.0, dF = h + m * dh;
    if (!std::isfinite(std::abs(dF)) || std::abs(dF) == 0.0) return m;
    if (std::abs(F) <= 1e-15) {
      ok = std::imag(m) >= 0;
      return m;
    }
    const cd step = F / dF;
    double lam = 1.0;
    while (std::imag(m - lam * step) < 0 && lam > 1e-8) lam *= 0.5;
    m -= lam * step;
    if (std::abs(lam * step) <= 1e-14 * (1.0 + std::abs(m))) {
      ok = std::isfinite(std::abs(m));
      return m;
    }
  }
  return m;
}

cd FreeSpectrum::fixed_point(cd z) const {
  cd m = -1.0 / z;
  double res = 0.0;
  for (int it = 0; it < 10000; ++it) {
    cd h = -z - n_ * m;
    for (std::size_t a = 0; a < v_.size(); ++a) h += pv_[a] * c_ * v_[a] / (1.0 + b_ * v_[a] * m);
    const cd next = 0.5 * m + 0.5 / h;
    res = std::abs(next - m);
    m = next;
    if (res < 1e-15 * (1.0 + std::abs(m))) return m;
  }
  if (res < 1e-10 * (1.0 + std::abs(m))) return m;  // slow contraction at a spectral edge
  throw ConvergenceError("Stieltjes fixed point did not converge", res);
}

cd FreeSpectrum::stieltjes(cd z) const {
  const double target = std::imag(z);
  if (!(target > 0)) throw DomainError("Stieltjes transform requires Im z > 0");
  double y = std::max(target, 2.0 * (hi_ - lo_) + 4.0);
  cd m = fixed_point(cd(std::real(z), y));
  double factor = 4.0;
  while (y > target) {
    const double ynext = std::max(target, y / factor);
    bool ok = false;
    const cd mn = newton(cd(std::real(z), ynext), m, ok);
    if (ok && std::imag(mn) >= -1e-12 * std::abs(mn)) {
      m = mn;
      y = ynext;
      factor = std::min(4.0, factor * 2.0);
    } else {
      factor = std::sqrt(factor);
      if (factor < 1.0001) {
        if (y <= 1e-7 * (hi_ - lo_)) return m;
        m = fixed_point(cd(std::real(z), ynext));
        y = ynext;
        factor = 4.0;
      }
    }
  }
  return m;
}

double FreeSpectrum::density(double x, cd* guess) const {
  cd m;
  bool ok = false;
  if (guess && std::imag(*guess) > 1e-6) {
    m = newton(cd(x, eps_), *guess, ok);
    ok = ok && std::imag(m) > 1e-7;
  }
  if (!ok) m = stieltjes(cd(x, eps_));
  if (guess) *guess = m;
  double rho = std::imag(m) / kPi;
  if (zero_mass_ > 0) rho -= zero_mass_ * eps_ / (kPi * (x * x + eps_ * eps_));
  return std::max(0.0, rho);
}

std::vector<FreeSpectrum::Panel> FreeSpectrum::adaptive_panels(double a, double b,
                                                               int min_nodes) const {
  // Chebyshev substitution x = mid - half cos(theta) absorbs square-root edges; panels in theta
  // are bisected until the mass and cubic-moment estimates stabilise.
  constexpr int kNodes = 16;
  const auto& gl = gauss_legendre(kNodes);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  auto make = [&](double t0, double t1) {
    Panel p;
    p.t0 = t0;
    p.t1 = t1;
    cd guess(0.0, 0.0);
    for (int k = 0; k < kNodes; ++k) {
      const double th = t0 + 0.5 * (t1 - t0) * (1.0 + gl.nodes[k]);
      const double x = mid - half * std::cos(th);
      const double r = density(x, &guess);
      p.x.push_back(x);
      p.rho.push_back(r);
      p.w.push_back(gl.weights[k] * 0.5 * (t1 - t0) * half * std::sin(th));
      p.i1 += p.w.back() * r;
      p.i3 += p.w.back() * r * r * r;
    }
    return p;
  };
  const int initial = std::max(1, min_nodes / kNodes);
  std::vector<Panel> todo, done;
  for (int i = initial - 1; i >= 0; --i) todo.push_back(make(kPi * i / initial, kPi * (i + 1) / initial));
  while (!todo.empty()) {
    Panel p = std::move(todo.back());
    todo.pop_back();
    const double tm = 0.5 * (p.t0 + p.t1);
    Panel l = make(p.t0, tm), r = make(tm, p.t1);
    const bool fine = std::abs(l.i1 + r.i1 - p.i1) < 1e-13 && std::abs(l.i3 + r.i3 - p.i3) < 1e-14;
    if (fine || p.t1 - p.t0 < 1e-9) {
      done.push_back(std::move(l));
      done.push_back(std::move(r));
    } else {
      todo.push_back(std::move(r));
      todo.push_back(std::move(l));
    }
  }
  return done;
}

SpectralDensity FreeSpectrum::sample(int nodes_per_interval, int scan_points) const {
  for (int attempt = 0; attempt < 4; ++attempt, scan_points *= 4) {
    const double dx = (hi_ - lo_) / scan_points;
    std::vector<double> xs(scan_points);
    std::vector<char> in(scan_points);
    cd guess(0.0, 0.0);
    for (int i = 0; i < scan_points; ++i) {
      xs[i] = lo_ + (i + 0.5) * dx;
      in[i] = density(xs[i], &guess) > kSupportThreshold;
    }
    auto edge = [&](double out, double inside) {
      for (int it = 0; it < 200 && std::abs(inside - out) > 1e-14 * (hi_ - lo_); ++it) {
        const double mid = 0.5 * (out + inside);
        (density(mid) > kSupportThreshold ? inside : out) = mid;
      }
      return 0.5 * (out + inside);
    };
    std::vector<std::pair<double, double>> iv;
    for (int i = 0; i < scan_points;) {
      if (!in[i]) {
        ++i;
        continue;
      }
      int j = i;
      while (j + 1 < scan_points && in[j + 1]) ++j;
      const double a = edge(i == 0 ? lo_ : xs[i - 1], xs[i]);
      const double b = edge(j + 1 == scan_points ? hi_ : xs[j + 1], xs[j]);
      iv.emplace_back(a, b);
      i = j + 1;
    }
    SpectralDensity sd;
    sd.intervals = iv;
    for (const auto& [a, b] : iv) {
      sd.grid.push_back(a);
      sd.density.push_back(0.0);
      sd.weights.push_back(0.0);
      for (const auto& pn : adaptive_panels(a, b, nodes_per_interval)) {
        sd.grid.insert(sd.grid.end(), pn.x.begin(), pn.x.end());
        sd.density.insert(sd.density.end(), pn.rho.begin(), pn.rho.end());
        sd.weights.insert(sd.weights.end(), pn.w.begin(), pn.w.end());
      }
      sd.grid.push_back(b);
      sd.density.push_back(0.0);
      sd.weights.push_back(0.0);
    }
    if (zero_mass_ > 0) sd.point_masses.emplace_back(0.0, zero_mass_);
    sd.lo = iv.empty() ? 0.0 : iv.front().first;
    sd.hi = iv.empty() ? 0.0 : iv.back().second;
    if (zero_mass_ > 0) {
      sd.lo = std::min(sd.lo, 0.0);
      sd.hi = std::max(sd.hi, 0.0);
    }
    const double mass = sd.continuous_mass() + zero_mass_;
    if (std::abs(mass - 1.0) < 1e-6 || attempt == 3) {
      if (std::abs(mass - 1.0) > 1e-3)
        throw ConvergenceError("spectral density does not integrate to one", std::abs(mass - 1.0));
      const FreeSpectrum self = *this;
      sd.density_at = [self](double x) { return self.density(x); };
      return sd;
    }
  }
  throw ConvergenceError("support detection failed", 1.0);
}

// ---------------------------------------------------------------------------------------------
// Free functions on densities

SpectralDensity signal_esd(const ReadoutLaw& readout, double gamma, int resolution) {
  SpectralDensity sd = FreeSpectrum::signal(readout, gamma).sample(resolution);
  sd.readout = std::make_shared<ReadoutLaw>(readout);
  sd.gamma = gamma;
  sd.is_signal = true;
  return sd;
}

SpectralDensity semicircle_density(int resolution) {
  const auto& gl = gauss_legendre(resolution);
  SpectralDensity sd;
  sd.intervals = {{-2.0, 2.0}};
  sd.lo = -2.0;
  sd.hi = 2.0;
  sd.grid.push_back(-2.0);
  sd.density.push_back(0.0);
  sd.weights.push_back(0.0);
  for (int k = 0; k < resolution; ++k) {
    const double th = 0.5 * kPi * (1.0 + gl.nodes[k]);
    const double x = -2.0 * std::cos(th);
    sd.grid.push_back(x);
    sd.density.push_back(std::sqrt(std::max(0.0, 4.0 - x * x)) / (2 * kPi));
    sd.weights.push_back(gl.weights[k] * 0.5 * kPi * 2.0 * std::sin(th));
  }
  sd.grid.push_back(2.0);
  sd.density.push_back(0.0);
  sd.weights.push_back(0.0);
  sd.density_at = [](double x) { return std::sqrt(std::max(0.0, 4.0 - x * x)) / (2 * kPi); };
  return sd;
}

SpectralDensity observation_esd(const SpectralDensity& signal, double eta, int resolution) {
  if (eta < 0) throw DomainError("eta must be non-negative");
  SpectralDensity sd;
  if (eta == 0.0) {
    sd = semicircle_density(resolution);
  } else {
    if (!signal.readout) throw DomainError("signal density lacks its generating readout law");
    sd = FreeSpectrum::observation(*signal.readout, signal.gamma, eta).sample(resolution);
  }
  sd.readout = signal.readout;
  sd.gamma = signal.gamma;
  sd.eta = eta;
  return sd;
}

SpectralDensity density_from_samples(std::vector<double> grid, std::vector<double> density) {
  if (grid.size() != density.size() || grid.size() < 2) throw DomainError("bad density samples");
  SpectralDensity sd;
  sd.grid = std::move(grid);
  sd.density = std::move(density);
  const std::size_t n = sd.grid.size();
  sd.weights.assign(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double h = sd.grid[i + 1] - sd.grid[i];
    sd.weights[i] += 0.5 * h;
    sd.weights[i + 1] += 0.5 * h;
  }
  sd.lo = sd.grid.front();
  sd.hi = sd.grid.back();
  sd.intervals = {{sd.lo, sd.hi}};
  return sd;
}

namespace {

double linear_density(const SpectralDensity& mu, double x) {
  if (mu.density_at) return mu.density_at(x);
  auto it = std::upper_bound(mu.grid.begin(), mu.grid.end(), x);
  if (it == mu.grid.begin() || it == mu.grid.end()) return 0.0;
  const std::size_t j = it - mu.grid.begin();
  const double t = (x - mu.grid[j - 1]) / (mu.grid[j] - mu.grid[j - 1]);
  return (1 - t) * mu.density[j - 1] + t * mu.density[j];
}

// Cell masses of the continuous part on a uniform grid of [lo, hi].
std::vector<double> cell_masses(const SpectralDensity& mu, double lo, double hi, int cells) {
  const double h = (hi - lo) / cells;
  std::vector<double> p(cells, 0.0);
  for (int i = 0; i < cells; ++i) {
    const double a = lo + i * h, b = a + h;
    bool inside = false;
    for (const auto& [l, r] : mu.intervals) inside = inside || (b > l && a < r);
    if (inside) p[i] = linear_density(mu, a + 0.5 * h) * h;
  }
  return p;
}

}  // namespace

double log_energy(const SpectralDensity& mu, int cells) {
  double lo = mu.lo, hi = mu.hi;
  if (!mu.intervals.empty()) {
    lo = mu.intervals.front().first;
    hi = mu.intervals.back().second;
  }
  const double h = (hi - lo) / cells;
  auto p = cell_masses(mu, lo, hi, cells);
  double tot = 0.0;
  for (double x : p) tot += x;
  const double target = mu.continuous_mass();
  if (tot <= 0) throw DomainError("log_energy of an empty density");
  for (double& x : p) x *= target / tot;
  auto phi = [](double t) { return t == 0.0 ? 0.0 : 0.5 * t * t * std::log(std::abs(t)) - 0.75 * t * t; };
  double s = 0.0;
  for (int k = 0; k < cells; ++k) {
    const double ik = k == 0 ? 2.0 * phi(h) : phi((k + 1) * h) - 2.0 * phi(k * h) + phi((k - 1) * h);
    double a = 0.0;
    for (int i = 0; i + k < cells; ++i) a += p[i] * p[i + k];
    s += (k == 0 ? 1.0 : 2.0) * a * ik / (h * h);
  }
  return s;
}

double mmse_from_density(const SpectralDensity& mu_y, double eta) {
  if (eta < 0) throw DomainError("eta must be non-negative");
  if (eta == 0.0) return 1.0;
  double i3 = 0.0;
  for (std::size_t i = 0; i < mu_y.grid.size(); ++i)
    i3 += mu_y.weights[i] * mu_y.density[i] * mu_y.density[i] * mu_y.density[i];
  return (1.0 - 4.0 * kPi * kPi / 3.0 * i3) / eta;
}

double wasserstein1(const SpectralDensity& mu, std::vector<double> samples, int cells) {
  if (samples.empty()) throw DomainError("empty sample");
  std::sort(samples.begin(), samples.end());
  double lo = std::min(mu.lo, samples.front()) - 1e-9, hi = std::max(mu.hi, samples.back()) + 1e-9;
  for (const auto& pm : mu.point_masses) {
    lo = std::min(lo, pm.first - 1e-9);
    hi = std::max(hi, pm.first + 1e-9);
  }
  const double h = (hi - lo) / cells;
  auto p = cell_masses(mu, lo, hi, cells);
  double tot = 0.0;
  for (double x : p) tot += x;
  const double cont = mu.continuous_mass();
  if (tot > 0)
    for (double& x : p) x *= cont / tot;
  const int sub = 8;
  double F0 = 0.0, w = 0.0;
  std::size_t si = 0;
  const double n = static_cast<double>(samples.size());
  for (int i = 0; i < cells; ++i) {
    const double a = lo + i * h;
    for (int s = 0; s < sub; ++s) {
      const double x = a + (s + 0.5) * h / sub;
      double F = F0 + p[i] * (s + 0.5) / sub;
      for (const auto& pm : mu.point_masses)
        if (pm.first <= x) F += pm.second;
      while (si < samples.size() && samples[si] <= x) ++si;
      w += std::abs(F - si / n) * h / sub;
    }
    F0 += p[i];
  }
  return w;
}

// ---------------------------------------------------------------------------------------------
// SpectralTable

std::vector<double> default_eta_grid(double eta_max, int n, double eta0) {
  std::vector<double> g(n + 1);
  const double h = std::log1p(eta_max / eta0) / n;
  for (int j = 0; j <= n; ++j) g[j] = eta0 * std::expm1(j * h);
  g[0] = 0.0;
  g[n] = eta_max;
  return g;
}

void SpectralTable::finalize() {
  const int n = static_cast<int>(eta_grid.size());
  if (n < 3 || eta_grid[0] != 0.0) throw DomainError("eta grid must start at 0 with >= 3 points");
  eta0_ = 0.01;
  u_.resize(n);
  lm_.resize(n);
  for (int j = 0; j < n; ++j) {
    if (!(mmse_values[j] > 0)) throw ConsistencyError("non-positive mmse in table");
    u_[j] = std::log(eta_grid[j] + eta0_);
    lm_[j] = std::log(mmse_values[j]);
  }
  // Centred finite-difference slopes, limited for monotonicity (Fritsch-Carlson).
  slope_.assign(n, 0.0);
  std::vector<double> del(n - 1);
  for (int j = 0; j + 1 < n; ++j) del[j] = (lm_[j + 1] - lm_[j]) / (u_[j + 1] - u_[j]);
  slope_[0] = del[0];
  slope_[n - 1] = del[n - 2];
  for (int j = 1; j + 1 < n; ++j) {
    const double h0 = u_[j] - u_[j - 1], h1 = u_[j + 1] - u_[j];
    slope_[j] = (del[j - 1] * h1 + del[j] * h0) / (h0 + h1);
  }
  for (int j = 0; j + 1 < n; ++j) {
    if (del[j] == 0.0) {
      slope_[j] = slope_[j + 1] = 0.0;
      continue;
    }
    const double a = slope_[j] / del[j], b = slope_[j + 1] / del[j];
    if (a < 0) slope_[j] = 0.0;
    if (b < 0) slope_[j + 1] = 0.0;
    const double r = a * a + b * b;
    if (r > 9.0) {
      const double t = 3.0 / std::sqrt(r);
      slope_[j] = t * a * del[j];
      slope_[j + 1] = t * b * del[j];
    }
  }
  // Tail C/eta + D/eta^2 matching value and slope at eta_max.
  const double em = eta_grid.back(), m = mmse_values.back();
  const double mp = m * slope_.back() / (em + eta0_);
  tail_d = -em * em * (m + mp * em);
  tail_c = em * (2 * m + mp * em);
  if (!(tail_c > 0)) {
    tail_c = em * m;
    tail_d = 0.0;
  }
  // Cumulative integral of mmse over the grid.
  const auto& gl = gauss_legendre(8);
  cum_.assign(n, 0.0);
  for (int j = 0; j + 1 < n; ++j) {
    double s = 0.0;
    const double h = 0.5 * (u_[j + 1] - u_[j]), c = 0.5 * (u_[j + 1] + u_[j]);
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      const double u = c + h * gl.nodes[k];
      s += gl.weights[k] * std::exp(interp_log(u)) * std::exp(u);
    }
    cum_[j + 1] = cum_[j] + s * h;
  }
  iota_values.resize(n);
  for (int j = 0; j < n; ++j) iota_values[j] = 0.25 * cum_[j];
}

int SpectralTable::locate(double u) const {
  auto it = std::upper_bound(u_.begin(), u_.end(), u);
  int j = static_cast<int>(it - u_.begin()) - 1;
  return std::clamp(j, 0, static_cast<int>(u_.size()) - 2);
}

double SpectralTable::interp_log(double u, double* du) const {
  const int j = locate(u);
  const double h = u_[j + 1] - u_[j];
  const double t = (u - u_[j]) / h;
  const double t2 = t * t, t3 = t2 * t;
  if (du)
    *du = ((6 * t2 - 6 * t) * lm_[j] + (3 * t2 - 4 * t + 1) * h * slope_[j] +
           (-6 * t2 + 6 * t) * lm_[j + 1] + (3 * t2 - 2 * t) * h * slope_[j + 1]) /
          h;
  return (2 * t3 - 3 * t2 + 1) * lm_[j] + (t3 - 2 * t2 + t) * h * slope_[j] +
         (-2 * t3 + 3 * t2) * lm_[j + 1] + (t3 - t2) * h * slope_[j + 1];
}

double SpectralTable::mmse(double eta) const {
  if (eta < 0) throw DomainError("mmse requires eta >= 0");
  if (eta <= eta_max()) return std::exp(interp_log(std::log(eta + eta0_)));
  return tail_c / eta + tail_d / (eta * eta);
}

double SpectralTable::mmse_prime(double eta) const {
  if (eta < 0) throw DomainError("mmse requires eta >= 0");
  if (eta <= eta_max()) {
    double du = 0.0;
    const double l = interp_log(std::log(eta + eta0_), &du);
    return std::exp(l) * du / (eta + eta0_);
  }
  return -tail_c / (eta * eta) - 2 * tail_d / (eta * eta * eta);
}

double SpectralTable::mmse_drop(double eta, double q) const {
  if (eta <= eta_max()) return mmse(eta) - mmse(eta + q);
  const double e2 = eta + q;
  return q * (tail_c / (eta * e2) + tail_d * (eta + e2) / (eta * eta * e2 * e2));
}

double SpectralTable::iota(double eta) const {
  if (eta < 0) throw DomainError("iota requires eta >= 0");
  if (eta > eta_max()) {
    const double em = eta_max();
    return 0.25 * (cum_.back() + tail_c * std::log(eta / em) + tail_d * (1 / em - 1 / eta));
  }
  const double u = std::log(eta + eta0_);
  const int j = locate(u);
  const auto& gl = gauss_legendre(8);
  const double h = 0.5 * (u - u_[j]), c = 0.5 * (u + u_[j]);
  double s = 0.0;
  for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
    const double x = c + h * gl.nodes[k];
    s += gl.weights[k] * std::exp(interp_log(x)) * std::exp(x);
  }
  return 0.25 * (cum_[j] + s * h);
}

MmseInverse SpectralTable::inverse(double m) const {
  if (m <= 0) return {kTauMax, true};
  if (m >= mmse_values.front()) return {0.0, false};
  if (m >= mmse_values.back()) {
    const double lm = std::log(m);
    double a = u_.front(), b = u_.back();
    for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(b)); ++it) {
      const double mid = 0.5 * (a + b);
      (interp_log(mid) > lm ? a : b) = mid;
    }
    return {std::max(0.0, std::exp(0.5 * (a + b)) - eta0_), false};
  }
  const double eta = (tail_c + std::sqrt(tail_c * tail_c + 4 * m * tail_d)) / (2 * m);
  if (!(eta <= kTauMax)) return {kTauMax, true};
  return {eta, false};
}

double SpectralTable::route_disagreement() const {
  double w = 0.0;
  for (std::size_t j = 0; j < eta_grid.size(); ++j)
    if (j < iota_log_energy.size() && std::isfinite(iota_log_energy[j]))
      w = std::max(w, std::abs(iota_values[j] - iota_log_energy[j]));
  return w;
}

std::string SpectralTable::cache_key() const {
  std::uint64_t h = 1469598103934665603ull;
  for (double e : eta_grid) {
    unsigned char b[sizeof(double)];
    std::memcpy(b, &e, sizeof(double));
    for (unsigned char c : b) {
      h ^= c;
      h *= 1099511628211ull;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "g%.6f_%s_%016llx", gamma, readout.hash().c_str(),
                static_cast<unsigned long long>(h));
  return buf;
}

void SpectralTable::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write spectral cache " + path);
  os << "# ewnet spectral table v1\n";
  os << "# key " << cache_key() << "\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "# gamma %.17g\n", gamma);
  os << buf;
  for (std::size_t a = 0; a < readout.size(); ++a) {
    std::snprintf(buf, sizeof buf, "# atom %.17g %.17g\n", readout.values[a], readout.probs[a]);
    os << buf;
  }
  os << "# kind " << readout.kind << "\n";
  os << "eta,mmse,iota,iota_log_energy\n";
  for (std::size_t j = 0; j < eta_grid.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", eta_grid[j], mmse_values[j],
                  iota_values[j], iota_log_energy[j]);
    os << buf;
  }
}

SpectralTable SpectralTable::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read spectral cache " + path);
  SpectralTable t;
  std::string line;
  std::vector<double> vals, probs;
  std::string kind = "custom";
  if (!std::getline(is, line) || line != "# ewnet spectral table v1")
    throw std::runtime_error("unsupported spectral cache version in " + path);
  while (std::getline(is, line)) {
    if (line.rfind("# gamma ", 0) == 0) t.gamma = std::stod(line.substr(8));
    if (line.rfind("# atom ", 0) == 0) {
      std::istringstream ss(line.substr(7));
      double v, p;
      ss >> v >> p;
      vals.push_back(v);
      probs.push_back(p);
    }
    if (line.rfind("# kind ", 0) == 0) kind = line.substr(7);
    if (line.rfind("eta,", 0) == 0) break;
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f;
    double row[4];
    for (int c = 0; c < 4; ++c) {
      std::getline(ss, f, ',');
      row[c] = f == "nan" || f == "-nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f);
    }
    t.eta_grid.push_back(row[0]);
    t.mmse_values.push_back(row[1]);
    t.iota_log_energy.push_back(row[3]);
  }
  t.readout.kind = kind;
  t.readout.values = vals;
  t.readout.probs = probs;
  for (std::size_t a = 0; a < vals.size(); ++a) {
    t.readout.mean += probs[a] * vals[a];
    t.readout.second_moment += probs[a] * vals[a] * vals[a];
  }
  t.finalize();
  return t;
}

SpectralTable build_mmse_table(const ReadoutLaw& readout, double gamma,
                               const std::vector<double>& eta_grid, int jobs, double route_b_max) {
  if (eta_grid.empty() || eta_grid.front() != 0.0) throw DomainError("eta grid must start at 0");
  if (eta_grid.back() < 50.0) throw DomainError("eta grid must reach at least 50");
  for (std::size_t j = 1; j < eta_grid.size(); ++j)
    if (!(eta_grid[j] > eta_grid[j - 1])) throw DomainError("eta grid must be increasing");
  SpectralTable t;
  t.gamma = gamma;
  t.readout = readout;
  t.eta_grid = eta_grid;
  t.signal = signal_esd(readout, gamma);
  const int n = static_cast<int>(eta_grid.size());
  t.mmse_values.assign(n, 1.0);
  t.iota_log_energy.assign(n, std::numeric_limits<double>::quiet_NaN());
  t.iota_log_energy[0] = 0.125 + 0.5 * log_energy(semicircle_density());
  parallel_for(n - 1, jobs, [&](int i) {
    const int j = i + 1;
    const auto spec = FreeSpectrum::observation(readout, gamma, eta_grid[j]);
    const auto mu = spec.sample();
    t.mmse_values[j] = mmse_from_density(mu, eta_grid[j]);
    if (eta_grid[j] <= route_b_max) t.iota_log_energy[j] = 0.125 + 0.5 * log_energy(mu);
  });
  for (int j = 1; j < n; ++j)
    if (!(t.mmse_values[j] < t.mmse_values[j - 1]))
      throw ConsistencyError("mmse table is not strictly decreasing");
  t.finalize();
  if (t.route_disagreement() > 1e-2)
    throw ConsistencyError("iota routes disagree by more than 1e-2");
  return t;
}

std::shared_ptr<const SpectralTable> cached_mmse_table(const ReadoutLaw& readout, double gamma,
                                                       const std::string& cache_dir, int jobs) {
  SpectralTable probe;
  probe.gamma = gamma;
  probe.readout = readout;
  probe.eta_grid = default_eta_grid();
  const std::string key = probe.cache_key();
  std::filesystem::path path;
  if (!cache_dir.empty()) {
    path = std::filesystem::path(cache_dir) / ("mmse_" + key + ".csv");
    if (std::filesystem::exists(path)) {
      auto t = std::make_shared<SpectralTable>(SpectralTable::load(path.string()));
      if (t->cache_key() == key) {
        t->readout = readout;
        t->signal = signal_esd(readout, gamma);
        return t;
      }
    }
  }
  auto t = std::make_shared<SpectralTable>(build_mmse_table(readout, gamma, probe.eta_grid, jobs));
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    t->save(path.string());
  }
  return t;
}

MmseInverse mmse_inverse(const SpectralTable& table, double m) {
  if (m > 1.0 + 1e-12) throw DomainError("mmse_inverse requires m <= 1");
  return table.inverse(m);
}

TauResult tau_of_qw(const std::vector<double>& QW, const ReadoutLaw& readout,
                    const SpectralTable& table) {
  if (QW.size() != readout.size()) throw DomainError("QW size does not match readout atoms");
  double s = 0.0;
  for (std::size_t a = 0; a < QW.size(); ++a)
    s += readout.probs[a] * readout.values[a] * readout.values[a] * QW[a] * QW[a];
  const auto inv = table.inverse(1.0 - s);
  TauResult r;
  r.tau = inv.eta;
  r.saturated = inv.saturated;
  const double mp = table.mmse_prime(r.tau);
  r.dtau.resize(QW.size());
  for (std::size_t a = 0; a < QW.size(); ++a)
    r.dtau[a] = -2.0 * readout.probs[a] * readout.values[a] * readout.values[a] * QW[a] / mp;
  return r;
}

}  // namespace ewnet
