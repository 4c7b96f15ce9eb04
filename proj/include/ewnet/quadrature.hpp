#pragma once

#include <cmath>
#include <functional>
#include <vector>

namespace ewnet {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Probabilists' Gauss-Hermite rule: sum_i w_i f(x_i) approximates E f(Z), Z ~ N(0,1).
const QuadratureRule& gauss_hermite(int n);

// Gauss-Legendre rule on [-1, 1].
const QuadratureRule& gauss_legendre(int n);

template <class F>
double integrate_gl(F&& f, double a, double b, int n = 64) {
  const auto& r = gauss_legendre(n);
  const double h = 0.5 * (b - a), c = 0.5 * (a + b);
  double s = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * f(c + h * r.nodes[i]);
  return s * h;
}

// E f(Z) for Z ~ N(0,1) by panel Gauss-Legendre on [-cut, cut], split at the given breakpoints
// so that kinks of f do not spoil convergence.
double gaussian_expectation(const std::function<double(double)>& f,
                            const std::vector<double>& breaks = {}, int n_per_panel = 64,
                            double cut = 12.0);

inline double normal_pdf(double x) { return 0.3989422804014327 * std::exp(-0.5 * x * x); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Runs fn(i) for i in [0, n) on up to `jobs` threads (jobs <= 1 runs inline).
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace ewnet
