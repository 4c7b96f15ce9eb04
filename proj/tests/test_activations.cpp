#include <doctest.h>

#include <cmath>
#include <random>

#include "ewnet/activations.hpp"
#include "ewnet/errors.hpp"
#include "ewnet/readouts.hpp"

using namespace ewnet;

namespace {

double relu(double z) { return z > 0 ? z : 0.0; }

// Arc-cosine kernel: E[relu(y) relu(z)] for unit Gaussians with correlation r.
double relu_kernel(double r) {
  return (std::sqrt(1 - r * r) + r * (M_PI - std::acos(r))) / (2 * M_PI);
}

}  // namespace

TEST_CASE("ReLU Hermite coefficients") {
  const auto mu = hermite_coefficients(relu, 6, {0.0});
  const double c = 1.0 / std::sqrt(2 * M_PI);
  CHECK(mu[0] == doctest::Approx(c).epsilon(1e-9));
  CHECK(mu[1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(mu[2] == doctest::Approx(c).epsilon(1e-9));
  CHECK(std::abs(mu[3]) < 1e-10);
  CHECK(mu[4] == doctest::Approx(-c).epsilon(1e-9));
}

TEST_CASE("Tanh(2z) Hermite coefficients") {
  const auto mu = hermite_coefficients([](double z) { return std::tanh(2 * z); }, 4);
  CHECK(std::abs(mu[0]) < 1e-12);
  CHECK(mu[1] == doctest::Approx(0.72948).epsilon(1e-4));
  CHECK(std::abs(mu[2]) < 1e-12);
  CHECK(mu[3] == doctest::Approx(-0.61398).epsilon(1e-4));
}

TEST_CASE("He2/sqrt2 has a single coefficient") {
  const auto& a = shipped_activation("he2");
  for (int l = 0; l <= a.order(); ++l) CHECK(a.mu(l) == doctest::Approx(l == 2 ? std::sqrt(2.0) : 0.0));
  const auto p = polynomial_activation("p", {0, 0, 1 / std::sqrt(2.0)});
  CHECK(p.mu(2) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("non-finite activation is rejected") {
  CHECK_THROWS_AS(hermite_coefficients([](double) { return NAN; }, 4), InvalidActivation);
}

TEST_CASE("g_eval examples") {
  for (const auto& n : shipped_activation_names()) CHECK(g_eval(shipped_activation(n), 0.0) == 0.0);
  CHECK(g_eval(shipped_activation("he3"), 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g_eval(shipped_activation("relu"), 1.0) == doctest::Approx(0.25 - 3 / (4 * M_PI)).epsilon(1e-7));
  CHECK_THROWS_AS(g_eval(shipped_activation("relu"), 1.01), DomainError);
  CHECK_THROWS_AS(g_eval(shipped_activation("relu"), -1.01), DomainError);
}

TEST_CASE("g agrees with the bivariate-Gaussian form") {
  const auto& a = shipped_activation("relu");
  for (double x : {-0.9, -0.4, 0.1, 0.5, 0.95}) {
    const double full = relu_kernel(x);
    const double low = a.mu(0) * a.mu(0) + a.mu(1) * a.mu(1) * x + 0.5 * a.mu(2) * a.mu(2) * x * x;
    CHECK(g_eval(a, x) == doctest::Approx(full - low).epsilon(1e-5));
  }
}

TEST_CASE("g_one equals second moment minus the first three Hermite terms") {
  for (const auto& n : shipped_activation_names()) {
    const auto& a = shipped_activation(n);
    const double ref = a.second_moment - a.mu(0) * a.mu(0) - a.mu(1) * a.mu(1) - 0.5 * a.mu(2) * a.mu(2);
    CHECK(a.g_one == doctest::Approx(ref).epsilon(1e-9));
    CHECK(a.g_one >= 0.0);
  }
}

TEST_CASE("Parseval identity") {
  for (const auto& n : shipped_activation_names()) {
    const auto& a = shipped_activation(n);
    INFO(n);
    if (a.exact_series) {
      CHECK(a.parseval_residual() < 1e-12);
    } else {
      // slowly decaying series: truncation is flagged and the kernel carries the tail
      CHECK(a.truncation_warning == (a.parseval_residual() > 1e-6));
      CHECK(a.order() == 20);
    }
  }
}

TEST_CASE("Mehler identity at random correlations") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.999, 0.999);
  for (const auto& n : shipped_activation_names()) {
    const auto& a = shipped_activation(n);
    INFO(n);
    for (int t = 0; t < 20; ++t) {
      const double r = u(rng);
      const double quad = bivariate_expectation([&](double z) { return a(z); },
                                                [&](double z) { return a(z); }, r, a.breakpoints);
      CHECK(a.covariance(r) == doctest::Approx(quad).epsilon(1e-5));
      if (a.exact_series) CHECK(a.mehler_series(r) == doctest::Approx(quad).epsilon(1e-10));
    }
  }
}

TEST_CASE("ReLU covariance matches the arc-cosine kernel") {
  const auto& a = shipped_activation("relu");
  for (double r = -1.0; r <= 1.0; r += 0.125) CHECK(a.covariance(r) == doctest::Approx(relu_kernel(r)).epsilon(1e-9));
}

TEST_CASE("g is non-decreasing and convex on [0, 1]") {
  for (const auto& n : shipped_activation_names()) {
    const auto& a = shipped_activation(n);
    INFO(n);
    const int m = 200;
    std::vector<double> g(m + 1);
    for (int i = 0; i <= m; ++i) g[i] = a.g(static_cast<double>(i) / m);
    for (int i = 1; i <= m; ++i) CHECK(g[i] >= g[i - 1] - 1e-14);
    for (int i = 1; i < m; ++i) CHECK(g[i + 1] - 2 * g[i] + g[i - 1] >= -1e-12);
  }
}

TEST_CASE("g_prime is the derivative of g") {
  const auto& a = shipped_activation("relu");
  for (double x : {0.1, 0.5, 0.9}) {
    const double h = 1e-5;
    CHECK(a.g_prime(x) == doctest::Approx((a.g(x + h) - a.g(x - h)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("kernel_entries examples") {
  const auto& relu_a = shipped_activation("relu");
  const ReadoutLaw hom = make_readout("homogeneous");
  SUBCASE("Nishimori values give q_K = r_K") {
    for (const auto& r : {hom, make_readout("four_point"), make_readout("rademacher")}) {
      const double r2 = 1 + 0.5 * r.mean * r.mean;
      const auto [qk, rk] = kernel_entries(r2, std::vector<double>(r.size(), 1.0), r, 0.5, relu_a);
      CHECK(qk == doctest::Approx(rk).epsilon(1e-14));
    }
  }
  SUBCASE("zero overlaps leave the linear term") {
    const auto [qk, rk] = kernel_entries(0.0, {0.0}, hom, 0.5, relu_a);
    CHECK(qk == doctest::Approx(0.25).epsilon(1e-12));
    (void)rk;
  }
  SUBCASE("ReLU at q2 = QW = 0.5 against the arc-cosine kernel") {
    const double mu0 = 1 / std::sqrt(2 * M_PI), mu1 = 0.5, mu2 = mu0;
    const double g_half = relu_kernel(0.5) - mu0 * mu0 - mu1 * mu1 * 0.5 - 0.5 * mu2 * mu2 * 0.25;
    const double g_one = 0.5 - mu0 * mu0 - mu1 * mu1 - 0.5 * mu2 * mu2;
    const auto [qk, rk] = kernel_entries(0.5, {0.5}, hom, 0.5, relu_a);
    CHECK(qk == doctest::Approx(mu1 * mu1 + 0.5 * mu2 * mu2 * 0.5 + g_half).epsilon(1e-9));
    CHECK(rk == doctest::Approx(mu1 * mu1 + 0.5 * mu2 * mu2 * 1.5 + g_one).epsilon(1e-9));
  }
}
