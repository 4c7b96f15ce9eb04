#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ewnet/errors.hpp"
#include "ewnet/quadrature.hpp"
#include "ewnet/readouts.hpp"

using namespace ewnet;

TEST_CASE("rademacher readouts") {
  const auto r = make_readout("rademacher");
  REQUIRE(r.size() == 2);
  CHECK(r.mean == 0.0);
  CHECK(r.second_moment == doctest::Approx(1.0));
  CHECK(r.probs[0] == 0.5);
  CHECK(std::abs(r.values[0]) == 1.0);
  CHECK(r.values[0] == -r.values[1]);
}

TEST_CASE("homogeneous readouts") {
  const auto r = make_readout("homogeneous");
  REQUIRE(r.size() == 1);
  CHECK(r.values[0] == 1.0);
  CHECK(r.mean == 1.0);
}

TEST_CASE("four-point readouts") {
  const auto r = make_readout("four_point");
  REQUIRE(r.size() == 4);
  std::vector<double> mags;
  for (std::size_t a = 0; a < r.size(); ++a) {
    CHECK(r.probs[a] == 0.25);
    mags.push_back(std::abs(r.values[a]));
  }
  std::sort(mags.begin(), mags.end());
  CHECK(mags[0] == doctest::Approx(1 / std::sqrt(5.0)));
  CHECK(mags[3] == doctest::Approx(3 / std::sqrt(5.0)));
  CHECK(r.second_moment == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(r.mean) < 1e-15);
}

TEST_CASE("binned Gaussian readouts") {
  const auto r = make_readout("gaussian_binned", 50);
  REQUIRE(r.size() == 50);
  CHECK(std::accumulate(r.probs.begin(), r.probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(r.second_moment - 1.0) < 1e-3);
  for (std::size_t a = 0; a < r.size(); ++a) CHECK(r.probs[a] == doctest::Approx(0.02));
  CHECK(std::is_sorted(r.values.begin(), r.values.end()));
  // conditional mean of the top quantile bin of N(0,1), before the unit-moment rescaling
  const double z = 2.053748910631823;  // 98% quantile
  const double top = normal_pdf(z) / 0.02;
  CHECK(r.values.back() == doctest::Approx(top).epsilon(2e-2));
}

TEST_CASE("bin refinement from 50 to 200 barely moves the moments") {
  const auto a = make_readout("gaussian_binned", 50), b = make_readout("gaussian_binned", 200);
  CHECK(std::abs(a.mean - b.mean) < 1e-3);
  CHECK(std::abs(a.second_moment - b.second_moment) < 1e-3);
}

TEST_CASE("custom readouts validate normalisation") {
  CHECK_THROWS_AS(custom_readout({2.0, -2.0}, {0.5, 0.5}), NormalizationError);
  CHECK_THROWS_AS(custom_readout({1.0, -1.0}, {0.5, 0.6}), NormalizationError);
  const auto r = custom_readout({2.0, -2.0}, {0.5, 0.5}, true);
  CHECK(r.second_moment == doctest::Approx(1.0));
  CHECK(r.values[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_NOTHROW(custom_readout({1.0004}, {1.0}));
}

TEST_CASE("invalid readout requests") {
  CHECK_THROWS(make_readout("nonsense"));
  CHECK_THROWS(make_readout("gaussian_binned", 0));
}

TEST_CASE("readout hash is content based") {
  CHECK(make_readout("rademacher").hash() == make_readout("rademacher").hash());
  CHECK(make_readout("rademacher").hash() != make_readout("four_point").hash());
  CHECK(make_readout("gaussian_binned", 50).hash() != make_readout("gaussian_binned", 51).hash());
}
