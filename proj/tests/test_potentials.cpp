#include <doctest.h>

#include <cmath>

#include "ewnet/errors.hpp"
#include "ewnet/potentials.hpp"

using namespace ewnet;

namespace {

// Trapezoid E f(Z) on a fine uniform grid; independent of the Gauss-Hermite rules under test.
template <class F>
double trapezoid_gauss(F&& f, int n = 40001, double cut = 12.0) {
  const double h = 2 * cut / (n - 1);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = -cut + i * h;
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    s += w * std::exp(-0.5 * z * z) * f(z);
  }
  return s * h / std::sqrt(2 * M_PI);
}

double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2 * a)) - std::log(2.0);
}

}  // namespace

TEST_CASE("psi_w examples") {
  CHECK(psi_w(PriorKind::gaussian, 0.0) == 0.0);
  CHECK(std::abs(psi_w(PriorKind::rademacher, 0.0)) < 1e-14);
  CHECK(psi_w(PriorKind::gaussian, 1.0) == doctest::Approx(0.5 - 0.5 * std::log(2.0)).epsilon(1e-12));
  const double ref = -2.0 + trapezoid_gauss([](double xi) { return log_cosh(4 + 2 * xi); });
  CHECK(psi_w(PriorKind::rademacher, 4.0) == doctest::Approx(ref).epsilon(1e-9));
  CHECK_THROWS_AS(psi_w(PriorKind::gaussian, -1e-3), DomainError);
}

TEST_CASE("psi_w for the Gaussian prior from the defining triple integral") {
  // E_{w0,xi} ln int N(w) exp(-x w^2/2 + x w0 w + sqrt(x) xi w) dw on trapezoid grids
  const double x = 1.0;
  const int n = 241;
  const double cut = 8.0, h = 2 * cut / (n - 1);
  auto node = [&](int i) { return -cut + i * h; };
  auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI); };
  double outer = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double w0 = node(i), xi = node(j);
      double inner = 0.0;
      for (int l = 0; l < n; ++l) {
        const double w = node(l);
        inner += phi(w) * std::exp(-0.5 * x * w * w + x * w0 * w + std::sqrt(x) * xi * w);
      }
      outer += phi(w0) * phi(xi) * std::log(inner * h);
    }
  outer *= h * h;
  CHECK(psi_w(PriorKind::gaussian, x) == doctest::Approx(outer).epsilon(1e-6));
}

TEST_CASE("posterior mean bracket") {
  CHECK(posterior_mean_bracket(PriorKind::gaussian, 0.0) == 0.0);
  CHECK(std::abs(posterior_mean_bracket(PriorKind::rademacher, 0.0)) < 1e-14);
  CHECK(posterior_mean_bracket(PriorKind::gaussian, 3.0) == doctest::Approx(0.75));
  CHECK(posterior_mean_bracket(PriorKind::rademacher, 60.0) == doctest::Approx(1.0).epsilon(1e-12));
  const double ref = trapezoid_gauss([](double xi) { return std::tanh(2.0 + std::sqrt(2.0) * xi); });
  CHECK(posterior_mean_bracket(PriorKind::rademacher, 2.0) == doctest::Approx(ref).epsilon(1e-9));
  CHECK_THROWS_AS(posterior_mean_bracket(PriorKind::rademacher, -1.0), DomainError);
}

TEST_CASE("bracket complement stays accurate at high SNR") {
  for (double x : {5.0, 20.0, 40.0}) {
    const double c = posterior_mean_complement(PriorKind::rademacher, x);
    CHECK(c > 0.0);
    CHECK(c == doctest::Approx(1.0 - posterior_mean_bracket(PriorKind::rademacher, x)).epsilon(1e-6));
  }
  const double c = posterior_mean_complement(PriorKind::gaussian, 1e9);
  CHECK(c == doctest::Approx(1.0 / (1.0 + 1e9)).epsilon(1e-12));
}

TEST_CASE("bracket equals twice the derivative of psi_w") {
  for (auto p : {PriorKind::gaussian, PriorKind::rademacher})
    for (double x : {0.2, 1.0, 3.0, 8.0}) {
      const double h = 1e-4;
      const double d = (psi_w(p, x + h) - psi_w(p, x - h)) / (2 * h);
      CHECK(posterior_mean_bracket(p, x) == doctest::Approx(2 * d).epsilon(1e-4));
    }
}

TEST_CASE("psi_w is convex, non-decreasing and below x/2") {
  for (auto p : {PriorKind::gaussian, PriorKind::rademacher}) {
    double prev = psi_w(p, 0.0), prev_slope = 0.0;
    for (int i = 1; i <= 200; ++i) {
      const double x = 0.05 * i;
      const double v = psi_w(p, x);
      CHECK(v >= prev - 1e-13);
      CHECK(v <= x / 2 + 1e-13);
      const double slope = (v - prev) / 0.05;
      CHECK(slope >= prev_slope - 1e-9);
      prev = v;
      prev_slope = slope;
    }
  }
}

TEST_CASE("psi_out for the Gaussian channel") {
  const auto ch = ChannelSpec::gaussian(0.1);
  const double e = std::exp(1.0);
  CHECK(psi_out(ch, 0.7, 0.7) == doctest::Approx(-0.5 * std::log(2 * M_PI * e * 0.1)));
  CHECK(psi_out(ch, 0.6, 0.7) == doctest::Approx(-0.5 * std::log(2 * M_PI * e * 0.2)));
  CHECK_THROWS_AS(psi_out(ch, 0.8, 0.7), DomainError);
  double prev = -1e300;
  for (double q = 0.0; q <= 0.7; q += 0.05) {
    const double v = psi_out(ch, q, 0.7);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("custom Gaussian kernel matches the closed form") {
  const auto closed = ChannelSpec::gaussian(1.0);
  const auto custom = ChannelSpec::custom(
      "gauss", [](double y, double l) { return std::exp(-0.5 * (y - l) * (y - l)) / std::sqrt(2 * M_PI); },
      1.0);
  CHECK(custom.normalization_error() < 1e-4);
  for (double q : {0.0, 0.3, 0.6}) {
    CHECK(psi_out(custom, q, 0.8) == doctest::Approx(psi_out(closed, q, 0.8)).epsilon(1e-4));
    CHECK(psi_out_prime(custom, q, 0.8) == doctest::Approx(psi_out_prime(closed, q, 0.8)).epsilon(1e-3));
  }
  CHECK(custom.mean(0.4) == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(custom.second_moment(0.4) == doctest::Approx(1.16).epsilon(1e-6));
}

TEST_CASE("psi_out_prime is the derivative of psi_out") {
  const auto ch = ChannelSpec::gaussian(0.3);
  const double h = 1e-6;
  const double d = (psi_out(ch, 0.4 + h, 1.0) - psi_out(ch, 0.4 - h, 1.0)) / (2 * h);
  CHECK(psi_out_prime(ch, 0.4, 1.0) == doctest::Approx(d).epsilon(1e-6));
}

TEST_CASE("prior names round trip") {
  CHECK(parse_prior("gaussian") == PriorKind::gaussian);
  CHECK(parse_prior("rademacher") == PriorKind::rademacher);
  CHECK(prior_name(PriorKind::rademacher) == "rademacher");
  CHECK_THROWS(parse_prior("laplace"));
}
