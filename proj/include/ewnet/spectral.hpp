#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ewnet/readouts.hpp"

namespace ewnet {

/// Spectral law: a continuous part sampled on quadrature nodes plus optional point masses.
struct SpectralDensity {
  std::vector<double> grid;     // sorted abscissae
  std::vector<double> density;  // density at grid points
  std::vector<double> weights;  // quadrature weights: int f(x) rho(x) dx ~ sum w_i rho_i f(x_i)
  double lo = 0.0, hi = 0.0;
  std::vector<std::pair<double, double>> intervals;     // support components of the continuous part
  std::vector<std::pair<double, double>> point_masses;  // (location, mass)
  std::function<double(double)> density_at;            // pointwise evaluation, may be empty

  // Generating model when the law comes from a readout (used by observation_esd).
  std::shared_ptr<const ReadoutLaw> readout;
  double gamma = 0.0;
  double eta = 0.0;
  bool is_signal = false;

  double continuous_mass() const;
  double trapezoid_mass() const;
  /// E[x^k] including point masses.
  double moment(int k) const;
  /// int f(x) rho(x) dx over the continuous part.
  double integrate(const std::function<double(double)>& f) const;
};

/// Solver for the self-consistent Stieltjes equation m (-z - n m + E_v[c v / (1 + b v m)]) = 1,
/// which covers the weighted Marchenko-Pastur law (n = 0) and its free convolution with a
/// semicircle (n = 1). Convention m(z) = int rho(x) / (x - z) dx.
class FreeSpectrum {
 public:
  /// Signal W^T diag(v) W / sqrt(kd).
  static FreeSpectrum signal(const ReadoutLaw& r, double gamma);
  /// sqrt(eta) * signal + unit semicircle.
  static FreeSpectrum observation(const ReadoutLaw& r, double gamma, double eta);

  std::complex<double> stieltjes(std::complex<double> z) const;
  /// Continuous density at x (point masses removed). A guess from a nearby point inside the
  /// bulk enables Newton continuation; it is updated with the new solution.
  double density(double x, std::complex<double>* guess = nullptr) const;
  /// Mass of the point mass at zero (signal with gamma < 1).
  double zero_mass() const { return zero_mass_; }
  /// Bounds containing the support.
  std::pair<double, double> bounds() const { return {lo_, hi_}; }

  SpectralDensity sample(int nodes_per_interval = 64, int scan_points = 2000) const;

 private:
  FreeSpectrum() = default;
  struct Panel {
    double t0 = 0.0, t1 = 0.0, i1 = 0.0, i3 = 0.0;
    std::vector<double> x, w, rho;
  };
  std::vector<Panel> adaptive_panels(double a, double b, int min_nodes) const;
  std::complex<double> newton(std::complex<double> z, std::complex<double> m, bool& ok) const;
  std::complex<double> fixed_point(std::complex<double> z) const;

  std::vector<double> pv_, v_;  // atom probabilities and values
  double c_ = 0.0, b_ = 0.0, n_ = 0.0;
  double zero_mass_ = 0.0;
  double lo_ = 0.0, hi_ = 0.0, eps_ = 0.0;
};

SpectralDensity signal_esd(const ReadoutLaw& readout, double gamma, int resolution = 64);
SpectralDensity observation_esd(const SpectralDensity& signal, double eta, int resolution = 64);

/// Semicircle of unit variance on [-2, 2].
SpectralDensity semicircle_density(int resolution = 160);

/// Builds a law from a density sampled on a sorted grid (trapezoid weights).
SpectralDensity density_from_samples(std::vector<double> grid, std::vector<double> density);

/// Sigma(mu) = int int ln|x - y| dmu dmu on a uniform cell grid with exact cell-pair integrals.
double log_energy(const SpectralDensity& mu, int cells = 4000);

/// (1/eta) (1 - (4 pi^2 / 3) int rho^3) for the observation law at SNR eta > 0.
double mmse_from_density(const SpectralDensity& mu_y, double eta);

/// Wasserstein-1 distance between a law and an empirical sample.
double wasserstein1(const SpectralDensity& mu, std::vector<double> samples, int cells = 8000);

struct MmseInverse {
  double eta = 0.0;
  bool saturated = false;
};

struct TauResult {
  double tau = 0.0;
  std::vector<double> dtau;  // partial derivatives w.r.t. QW at each atom
  bool saturated = false;
};

/// Tabulated mmse_S(eta) and iota(eta) for one (readout, gamma).
class SpectralTable {
 public:
  static constexpr double kTauMax = 1e100;

  std::vector<double> eta_grid;
  std::vector<double> mmse_values;
  std::vector<double> iota_values;          // I-MMSE route
  std::vector<double> iota_log_energy;      // log-energy route (NaN where not computed)
  SpectralDensity signal;
  double gamma = 0.0;
  ReadoutLaw readout;
  double tail_c = 0.0, tail_d = 0.0;  // mmse ~ C/eta + D/eta^2 beyond the grid

  double eta_max() const { return eta_grid.back(); }
  double mmse(double eta) const;
  double mmse_prime(double eta) const;
  /// mmse(eta) - mmse(eta + q) without cancellation in the tail.
  double mmse_drop(double eta, double q) const;
  double iota(double eta) const;
  MmseInverse inverse(double m) const;
  /// Largest |route A - route B| over the grid points where both exist.
  double route_disagreement() const;

  /// Finalizes interpolants and the tail from eta_grid / mmse_values.
  void finalize();
  void save(const std::string& path) const;
  static SpectralTable load(const std::string& path);
  std::string cache_key() const;

 private:
  std::vector<double> u_, lm_, slope_;  // u = ln(eta + eta0), lm = ln mmse
  std::vector<double> cum_;             // cumulative int mmse
  double eta0_ = 0.0;
  int locate(double u) const;
  double interp_log(double u, double* du = nullptr) const;
};

/// Grid eta_j = eta0 (e^{j h} - 1), j = 0..n, from 0 to eta_max.
std::vector<double> default_eta_grid(double eta_max = 1e4, int n = 200, double eta0 = 0.01);

/// Builds the table; log-energy cross-check on eta <= route_b_max.
SpectralTable build_mmse_table(const ReadoutLaw& readout, double gamma,
                               const std::vector<double>& eta_grid = default_eta_grid(),
                               int jobs = 1, double route_b_max = 10.0);

/// Loads from cache_dir if present (matching key), otherwise builds and stores.
std::shared_ptr<const SpectralTable> cached_mmse_table(const ReadoutLaw& readout, double gamma,
                                                       const std::string& cache_dir, int jobs = 1);

MmseInverse mmse_inverse(const SpectralTable& table, double m);

TauResult tau_of_qw(const std::vector<double>& QW, const ReadoutLaw& readout,
                    const SpectralTable& table);

}  // namespace ewnet
