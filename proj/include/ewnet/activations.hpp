#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace ewnet {

struct ReadoutLaw;

/// Tabulated covariance kernel K(x) = E[s(y)s(z)] and K'(x) = E[s'(y)s'(z)] for unit
/// Gaussians with correlation x, on Chebyshev points of [-1, 1].
struct KernelTable {
  std::vector<double> x, k, dk;
  double value(double x) const;
  double slope(double x) const;
};

/// Hermite representation of an activation, s(z) = sum_l mu_l He_l(z) / l!.
struct ActivationSpec {
  std::string name;
  std::vector<double> coeffs;  // mu_0 .. mu_L
  double second_moment = 0.0;
  double g_one = 0.0;
  std::function<double(double)> closed_form;
  std::function<double(double)> derivative;
  std::vector<double> breakpoints;
  bool exact_series = false;  // coeffs are the complete expansion (polynomial activation)
  bool truncation_warning = false;
  std::shared_ptr<const KernelTable> kernel;

  double mu(int l) const { return l < static_cast<int>(coeffs.size()) ? coeffs[l] : 0.0; }
  int order() const { return static_cast<int>(coeffs.size()) - 1; }
  double parseval_residual() const;

  double operator()(double z) const;
  double prime(double z) const;

  /// g(x) = sum_{l>=3} mu_l^2 x^l / l!, and its derivative.
  double g(double x) const;
  double g_prime(double x) const;
  /// Full covariance E[s(y)s(z)] at correlation x.
  double covariance(double x) const;
  /// Truncated Mehler series sum_{l<=L} mu_l^2 x^l / l!.
  double mehler_series(double x) const;
};

/// He_l(z) for l = 0..L.
std::vector<double> hermite_polynomials(double z, int L);

/// mu_l = E[He_l(Z) s(Z)], l = 0..L.
std::vector<double> hermite_coefficients(const std::function<double(double)>& f, int L,
                                         const std::vector<double>& breakpoints = {});

/// E[f1(y) f2(z)] for standard Gaussians with correlation rho, by nested panel quadrature.
double bivariate_expectation(const std::function<double(double)>& f1,
                             const std::function<double(double)>& f2, double rho,
                             const std::vector<double>& breakpoints = {}, int n_per_panel = 40);

/// Builds a spec from a scalar function; L starts at 12 and grows to 20 until the
/// Parseval residual is below 1e-6.
ActivationSpec activation_from_function(const std::string& name, std::function<double(double)> f,
                                        std::function<double(double)> df,
                                        std::vector<double> breakpoints);

/// s(z) = sum_l a_l He_l(z).
ActivationSpec polynomial_activation(const std::string& name, const std::vector<double>& a);

/// relu, elu, tanh2, he2, he3, sigma3, x2. Shared immutable instances.
const ActivationSpec& shipped_activation(const std::string& name);
std::vector<std::string> shipped_activation_names();

double g_eval(const ActivationSpec& spec, double x);

/// (q_K, r_K) for overlaps q2 and QW (one entry per readout atom).
std::pair<double, double> kernel_entries(double q2, const std::vector<double>& QW,
                                         const ReadoutLaw& readout, double gamma,
                                         const ActivationSpec& spec);

}  // namespace ewnet
