#include "ewnet/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "ewnet/errors.hpp"
#include "ewnet/quadrature.hpp"

namespace ewnet {
namespace {

constexpr double kTwoPiE = 2.0 * 3.14159265358979323846 * 2.718281828459045;
constexpr int kOuterNodes = 64;  // Gauss-Hermite nodes for xi and u
constexpr int kYPanels = 12;     // Gauss-Legendre panels of 24 nodes in y
constexpr int kYNodes = 24;
constexpr double kYHalfWidth = 10.0;

void check_x(double x) {
  if (!(x >= 0.0)) throw DomainError("scalar potential requires x >= 0");
}

double log_cosh(double t) {
  const double a = std::abs(t);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

// E_xi f(x + sqrt(x) xi), split where the argument changes sign.
template <class F>
double sign_expectation(double x, F&& f) {
  const double s = std::sqrt(x);
  return gaussian_expectation([&](double xi) { return f(x + s * xi); }, {-s}, 64, 12.0);
}

// int over y of h(y) on a window centred at c with half-width w.
template <class F>
double y_integral(F&& h, double c, double w) {
  double s = 0.0;
  const double step = 2.0 * w / kYPanels;
  for (int p = 0; p < kYPanels; ++p) {
    const double a = c - w + p * step;
    s += integrate_gl(h, a, a + step, kYNodes);
  }
  return s;
}

}  // namespace

PriorKind parse_prior(const std::string& name) {
  if (name == "gaussian") return PriorKind::gaussian;
  if (name == "rademacher" || name == "binary") return PriorKind::rademacher;
  throw ConfigError("unknown prior: " + name);
}

std::string prior_name(PriorKind p) { return p == PriorKind::gaussian ? "gaussian" : "rademacher"; }

ChannelSpec ChannelSpec::gaussian(double delta) {
  if (!(delta > 0.0)) throw DomainError("channel noise variance must be positive");
  ChannelSpec c;
  c.kind = Kind::gaussian_linear;
  c.delta = delta;
  c.y_scale = std::sqrt(delta);
  c.density = [delta](double y, double lambda) {
    const double r = y - lambda;
    return std::exp(-0.5 * r * r / delta) / std::sqrt(2.0 * 3.14159265358979323846 * delta);
  };
  return c;
}

ChannelSpec ChannelSpec::custom(std::string name, std::function<double(double, double)> density,
                                double y_scale, double mean_shift) {
  if (!density) throw ConfigError("custom channel requires a density");
  if (!(y_scale > 0.0)) throw DomainError("custom channel y_scale must be positive");
  ChannelSpec c;
  c.kind = Kind::custom;
  c.name = std::move(name);
  c.density = std::move(density);
  c.y_scale = y_scale;
  c.mean_shift = mean_shift;
  c.delta = y_scale * y_scale;
  return c;
}

double ChannelSpec::normalization_error() const {
  double worst = 0.0;
  for (double lambda : {-3.0, -1.0, 0.0, 0.5, 2.0}) {
    const double l = lambda + mean_shift;
    const double m = y_integral([&](double y) { return density(y, l); }, l, kYHalfWidth * y_scale);
    worst = std::max(worst, std::abs(m - 1.0));
  }
  return worst;
}

double ChannelSpec::mean(double lambda) const {
  const double l = lambda + mean_shift;
  if (kind == Kind::gaussian_linear) return l;
  return y_integral([&](double y) { return y * density(y, l); }, l, kYHalfWidth * y_scale);
}

double ChannelSpec::second_moment(double lambda) const {
  const double l = lambda + mean_shift;
  if (kind == Kind::gaussian_linear) return l * l + delta;
  return y_integral([&](double y) { return y * y * density(y, l); }, l, kYHalfWidth * y_scale);
}

double ChannelSpec::neg_entropy(double lambda) const {
  if (kind == Kind::gaussian_linear) return -0.5 * std::log(kTwoPiE * delta);
  const double l = lambda + mean_shift;
  return y_integral(
      [&](double y) {
        const double p = density(y, l);
        return p > 0.0 ? p * std::log(p) : 0.0;
      },
      l, kYHalfWidth * y_scale);
}

double psi_w(PriorKind prior, double x) {
  check_x(x);
  if (x == 0.0) return 0.0;
  if (prior == PriorKind::gaussian) return 0.5 * x - 0.5 * std::log1p(x);
  return -0.5 * x + sign_expectation(x, log_cosh);
}

double posterior_mean_bracket(PriorKind prior, double x) {
  check_x(x);
  if (x == 0.0) return 0.0;
  if (prior == PriorKind::gaussian) return x / (1.0 + x);
  return 1.0 - posterior_mean_complement(prior, x);
}

double posterior_mean_complement(PriorKind prior, double x) {
  check_x(x);
  if (x == 0.0) return 1.0;
  if (prior == PriorKind::gaussian) return 1.0 / (1.0 + x);
  // 1 - tanh(t) = 2 / (1 + e^{2t})
  return sign_expectation(x, [](double t) {
    return t > 0 ? 2.0 * std::exp(-2.0 * t) / (1.0 + std::exp(-2.0 * t)) : 2.0 / (1.0 + std::exp(2.0 * t));
  });
}

double psi_out(const ChannelSpec& channel, double qK, double rK) {
  if (qK > rK * (1.0 + 1e-12) + 1e-14) throw DomainError("psi_out requires q_K <= r_K");
  if (qK < 0.0) throw DomainError("psi_out requires q_K >= 0");
  const double V = std::max(0.0, rK - qK);
  if (channel.kind == ChannelSpec::Kind::gaussian_linear)
    return -0.5 * std::log(kTwoPiE * (channel.delta + V));

  const auto& gh = gauss_hermite(kOuterNodes);
  const double sq = std::sqrt(std::max(0.0, qK)), sv = std::sqrt(V);
  const double w = kYHalfWidth * std::sqrt(V + channel.y_scale * channel.y_scale);
  double total = 0.0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
    const double omega = sq * gh.nodes[i] + channel.mean_shift;
    auto Z = [&](double y) {
      double z = 0.0;
      for (std::size_t j = 0; j < gh.nodes.size(); ++j)
        z += gh.weights[j] * channel.density(y, omega + sv * gh.nodes[j]);
      return z;
    };
    total += gh.weights[i] * y_integral(
                                 [&](double y) {
                                   const double z = Z(y);
                                   return z > 0.0 ? z * std::log(z) : 0.0;
                                 },
                                 omega, w);
  }
  return total;
}

double psi_out_prime(const ChannelSpec& channel, double qK, double rK) {
  if (channel.kind == ChannelSpec::Kind::gaussian_linear)
    return 0.5 / (channel.delta + std::max(0.0, rK - qK));
  const double h = 1e-4 * std::max(1.0, rK);
  const double lo = std::max(0.0, qK - h), hi = std::min(rK, qK + h);
  if (hi <= lo) throw DomainError("psi_out_prime: degenerate interval");
  return (psi_out(channel, hi, rK) - psi_out(channel, lo, rK)) / (hi - lo);
}

}  // namespace ewnet
