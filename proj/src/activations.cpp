#include "ewnet/activations.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>

#include "ewnet/errors.hpp"
#include "ewnet/quadrature.hpp"
#include "ewnet/readouts.hpp"

namespace ewnet {

namespace {

constexpr int kMaxOrder = 20;
constexpr int kKernelPoints = 800;
constexpr double kSeriesRadius = 0.05;

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

std::vector<double> with_default_splits(std::vector<double> b) {
  for (double s : {-6.0, -3.0, 0.0, 3.0, 6.0}) b.push_back(s);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

std::shared_ptr<const KernelTable> build_kernel(const ActivationSpec& s) {
  auto t = std::make_shared<KernelTable>();
  t->x.resize(kKernelPoints + 1);
  t->k.resize(kKernelPoints + 1);
  t->dk.resize(kKernelPoints + 1);
  const auto f = s.closed_form;
  const auto df = s.derivative;
  for (int j = 0; j <= kKernelPoints; ++j) {
    const double x = -std::cos(std::numbers::pi * j / kKernelPoints);
    t->x[j] = x;
    t->k[j] = bivariate_expectation(f, f, x, s.breakpoints);
    t->dk[j] = bivariate_expectation(df, df, x, s.breakpoints);
  }
  t->x.front() = -1.0;
  t->x.back() = 1.0;
  t->k.back() = s.second_moment;
  return t;
}

}  // namespace

double KernelTable::value(double xv) const {
  const int n = static_cast<int>(x.size()) - 1;
  int j = static_cast<int>(std::acos(std::clamp(-xv, -1.0, 1.0)) * n / std::numbers::pi);
  j = std::clamp(j, 0, n - 1);
  while (j > 0 && xv < x[j]) --j;
  while (j < n - 1 && xv > x[j + 1]) ++j;
  const double h = x[j + 1] - x[j];
  const double t = (xv - x[j]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * k[j] + (t3 - 2 * t2 + t) * h * dk[j] + (-2 * t3 + 3 * t2) * k[j + 1] +
         (t3 - t2) * h * dk[j + 1];
}

double KernelTable::slope(double xv) const {
  const int n = static_cast<int>(x.size()) - 1;
  int j = static_cast<int>(std::acos(std::clamp(-xv, -1.0, 1.0)) * n / std::numbers::pi);
  j = std::clamp(j, 0, n - 1);
  while (j > 0 && xv < x[j]) --j;
  while (j < n - 1 && xv > x[j + 1]) ++j;
  const double h = x[j + 1] - x[j];
  const double t = (xv - x[j]) / h;
  const double t2 = t * t;
  return ((6 * t2 - 6 * t) * k[j] + (3 * t2 - 4 * t + 1) * h * dk[j] + (-6 * t2 + 6 * t) * k[j + 1] +
          (3 * t2 - 2 * t) * h * dk[j + 1]) /
         h;
}

std::vector<double> hermite_polynomials(double z, int L) {
  std::vector<double> he(L + 1);
  he[0] = 1.0;
  if (L >= 1) he[1] = z;
  for (int l = 1; l < L; ++l) he[l + 1] = z * he[l] - l * he[l - 1];
  return he;
}

std::vector<double> hermite_coefficients(const std::function<double(double)>& f, int L,
                                         const std::vector<double>& breakpoints) {
  if (L < 0 || L > kMaxOrder) throw DomainError("hermite order must lie in [0, 20]");
  const auto splits = with_default_splits(breakpoints);
  std::vector<double> mu(L + 1);
  for (int l = 0; l <= L; ++l) {
    mu[l] = gaussian_expectation([&](double z) { return f(z) * hermite_polynomials(z, l)[l]; },
                                 splits, 64, 14.0);
    if (!std::isfinite(mu[l])) throw InvalidActivation("non-finite Hermite coefficient");
  }
  return mu;
}

double bivariate_expectation(const std::function<double(double)>& f1,
                             const std::function<double(double)>& f2, double rho,
                             const std::vector<double>& breakpoints, int n_per_panel) {
  const double s = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const auto outer = with_default_splits(breakpoints);
  if (s < 1e-14) {
    return gaussian_expectation([&](double y) { return f1(y) * f2(rho * y); }, outer, n_per_panel);
  }
  return gaussian_expectation(
      [&](double y) {
        std::vector<double> inner{-4.0, 0.0, 4.0};
        for (double b : breakpoints) inner.push_back((b - rho * y) / s);
        return f1(y) *
               gaussian_expectation([&](double z) { return f2(rho * y + s * z); }, inner, n_per_panel);
      },
      outer, n_per_panel);
}

double ActivationSpec::parseval_residual() const {
  double s = 0.0;
  for (int l = 0; l <= order(); ++l) s += coeffs[l] * coeffs[l] / factorial(l);
  return std::abs(second_moment - s);
}

double ActivationSpec::operator()(double z) const {
  if (closed_form) return closed_form(z);
  const auto he = hermite_polynomials(z, order());
  double s = 0.0;
  for (int l = 0; l <= order(); ++l) s += coeffs[l] * he[l] / factorial(l);
  return s;
}

double ActivationSpec::prime(double z) const {
  if (derivative) return derivative(z);
  if (closed_form) {
    const double h = 1e-6 * std::max(1.0, std::abs(z));
    return (closed_form(z + h) - closed_form(z - h)) / (2 * h);
  }
  const auto he = hermite_polynomials(z, std::max(order(), 1));
  double s = 0.0;
  for (int l = 1; l <= order(); ++l) s += coeffs[l] * l * he[l - 1] / factorial(l);
  return s;
}

double ActivationSpec::mehler_series(double x) const {
  double s = 0.0, p = 1.0;
  for (int l = 0; l <= order(); ++l) {
    s += coeffs[l] * coeffs[l] * p / factorial(l);
    p *= x;
  }
  return s;
}

double ActivationSpec::g(double x) const {
  if (std::abs(x) > 1.0 + 1e-12) throw DomainError("g(x) requires |x| <= 1");
  x = std::clamp(x, -1.0, 1.0);
  if (x == 1.0) return g_one;
  if (exact_series || !kernel || std::abs(x) <= kSeriesRadius) {
    double s = 0.0, p = x * x * x;
    for (int l = 3; l <= order(); ++l) {
      s += coeffs[l] * coeffs[l] * p / factorial(l);
      p *= x;
    }
    return s;
  }
  return kernel->value(x) - mu(0) * mu(0) - mu(1) * mu(1) * x - 0.5 * mu(2) * mu(2) * x * x;
}

double ActivationSpec::g_prime(double x) const {
  if (std::abs(x) > 1.0 + 1e-12) throw DomainError("g'(x) requires |x| <= 1");
  x = std::clamp(x, -1.0, 1.0);
  if (exact_series || !kernel || std::abs(x) <= kSeriesRadius) {
    double s = 0.0, p = x * x;
    for (int l = 3; l <= order(); ++l) {
      s += coeffs[l] * coeffs[l] * p / factorial(l - 1);
      p *= x;
    }
    return s;
  }
  return kernel->slope(x) - mu(1) * mu(1) - mu(2) * mu(2) * x;
}

double ActivationSpec::covariance(double x) const {
  return mu(0) * mu(0) + mu(1) * mu(1) * x + 0.5 * mu(2) * mu(2) * x * x + g(x);
}

ActivationSpec activation_from_function(const std::string& name, std::function<double(double)> f,
                                        std::function<double(double)> df,
                                        std::vector<double> breakpoints) {
  ActivationSpec s;
  s.name = name;
  s.closed_form = std::move(f);
  s.derivative = std::move(df);
  s.breakpoints = std::move(breakpoints);
  s.second_moment = gaussian_expectation(
      [&](double z) {
        const double v = s.closed_form(z);
        return v * v;
      },
      with_default_splits(s.breakpoints), 64, 14.0);
  if (!std::isfinite(s.second_moment)) throw InvalidActivation("activation is not square integrable");
  int L = 12;
  for (;; ++L) {
    s.coeffs = hermite_coefficients(s.closed_form, L, s.breakpoints);
    if (s.parseval_residual() < 1e-6) break;
    if (L == kMaxOrder) {
      s.truncation_warning = true;
      break;
    }
  }
  s.g_one = s.second_moment - s.mu(0) * s.mu(0) - s.mu(1) * s.mu(1) - 0.5 * s.mu(2) * s.mu(2);
  if (!s.derivative) {
    auto cf = s.closed_form;
    s.derivative = [cf](double z) {
      const double h = 1e-6 * std::max(1.0, std::abs(z));
      return (cf(z + h) - cf(z - h)) / (2 * h);
    };
  }
  s.kernel = build_kernel(s);
  return s;
}

ActivationSpec polynomial_activation(const std::string& name, const std::vector<double>& a) {
  if (a.empty()) throw InvalidActivation("empty polynomial coefficient list");
  if (static_cast<int>(a.size()) - 1 > kMaxOrder) throw InvalidActivation("polynomial degree above 20");
  ActivationSpec s;
  s.name = name;
  s.exact_series = true;
  const int L = std::max<int>(6, static_cast<int>(a.size()) - 1);
  s.coeffs.assign(L + 1, 0.0);
  for (std::size_t l = 0; l < a.size(); ++l) s.coeffs[l] = a[l] * factorial(static_cast<int>(l));
  for (int l = 0; l <= L; ++l) s.second_moment += s.coeffs[l] * s.coeffs[l] / factorial(l);
  s.g_one = s.second_moment - s.mu(0) * s.mu(0) - s.mu(1) * s.mu(1) - 0.5 * s.mu(2) * s.mu(2);
  return s;
}

std::vector<std::string> shipped_activation_names() {
  return {"relu", "elu", "tanh2", "he2", "he3", "sigma3", "x2"};
}

const ActivationSpec& shipped_activation(const std::string& name) {
  static std::map<std::string, std::unique_ptr<ActivationSpec>> cache;
  static std::mutex m;
  std::lock_guard<std::mutex> lock(m);
  if (auto it = cache.find(name); it != cache.end()) return *it->second;
  ActivationSpec s;
  const double r2 = std::numbers::sqrt2;
  if (name == "relu") {
    s = activation_from_function(
        name, [](double z) { return z > 0 ? z : 0.0; }, [](double z) { return z > 0 ? 1.0 : 0.0; },
        {0.0});
  } else if (name == "elu") {
    s = activation_from_function(
        name, [](double z) { return z > 0 ? z : std::expm1(z); },
        [](double z) { return z > 0 ? 1.0 : std::exp(z); }, {0.0});
  } else if (name == "tanh2") {
    s = activation_from_function(
        name, [](double z) { return std::tanh(2 * z); },
        [](double z) {
          const double t = std::tanh(2 * z);
          return 2 * (1 - t * t);
        },
        {});
  } else if (name == "he2") {
    s = polynomial_activation(name, {0, 0, 1 / r2});
  } else if (name == "he3") {
    s = polynomial_activation(name, {0, 0, 0, 1 / std::sqrt(6.0)});
  } else if (name == "sigma3") {
    s = polynomial_activation(name, {0, 0, 1 / r2, 1.0 / 6.0});
  } else if (name == "x2") {
    s = polynomial_activation(name, {1, 0, 1});
  } else {
    throw InvalidActivation("unknown activation: " + name);
  }
  if (s.truncation_warning)
    std::cerr << "warning: activation " << name << " Parseval residual " << s.parseval_residual()
              << " at truncation L=" << s.order() << "\n";
  return *cache.emplace(name, std::make_unique<ActivationSpec>(std::move(s))).first->second;
}

double g_eval(const ActivationSpec& spec, double x) { return spec.g(x); }

std::pair<double, double> kernel_entries(double q2, const std::vector<double>& QW,
                                         const ReadoutLaw& readout, double gamma,
                                         const ActivationSpec& spec) {
  if (QW.size() != readout.size()) throw DomainError("QW size does not match readout atoms");
  const double r2 = 1.0 + gamma * readout.mean * readout.mean;
  if (q2 > r2 + 1e-12) throw DomainError("q2 exceeds 1 + gamma vbar^2");
  const double m1 = spec.mu(1) * spec.mu(1), m2 = spec.mu(2) * spec.mu(2);
  double eg = 0.0;
  for (std::size_t a = 0; a < QW.size(); ++a) {
    if (std::abs(QW[a]) > 1.0 + 1e-12) throw DomainError("QW outside [-1, 1]");
    eg += readout.probs[a] * readout.values[a] * readout.values[a] * spec.g(QW[a]);
  }
  const double qK = m1 + 0.5 * m2 * q2 + eg;
  const double rK = m1 + 0.5 * m2 * r2 + spec.g_one;
  return {qK, rK};
}

}  // namespace ewnet
