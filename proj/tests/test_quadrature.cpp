#include <doctest.h>

#include <atomic>
#include <cmath>
#include <vector>

#include "ewnet/quadrature.hpp"

using namespace ewnet;

TEST_CASE("Gauss-Hermite rule reproduces Gaussian moments") {
  const auto& r = gauss_hermite(200);
  double m0 = 0, m2 = 0, m4 = 0, m6 = 0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const double x = r.nodes[i], w = r.weights[i];
    m0 += w;
    m2 += w * x * x;
    m4 += w * std::pow(x, 4);
    m6 += w * std::pow(x, 6);
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(m6 == doctest::Approx(15.0).epsilon(1e-12));
}

TEST_CASE("Gauss-Legendre rule is exact for polynomials of degree 2n-1") {
  const double v = integrate_gl([](double x) { return 7 * std::pow(x, 9) - 3 * x * x + 1; }, -1.0, 2.0, 5);
  const double exact = 0.7 * (std::pow(2.0, 10) - 1) - (8.0 + 1.0) + 3.0;
  CHECK(v == doctest::Approx(exact).epsilon(1e-13));
}

TEST_CASE("gaussian_expectation handles kinks at breakpoints") {
  const double v = gaussian_expectation([](double z) { return std::abs(z); }, {0.0});
  CHECK(v == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-13));
  const double relu2 = gaussian_expectation([](double z) { return z > 0 ? z * z : 0.0; }, {0.0});
  CHECK(relu2 == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("normal cdf and pdf") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2 * M_PI)));
}

TEST_CASE("parallel_for visits every index exactly once") {
  for (int jobs : {1, 3}) {
    std::vector<std::atomic<int>> hits(101);
    parallel_for(101, jobs, [&](int i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
}
