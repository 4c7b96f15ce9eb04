#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ewnet/errors.hpp"
#include "ewnet/gamp.hpp"
#include "ewnet/saddle.hpp"
#include "support.hpp"

using namespace ewnet;
using ewnet::testing::context;

namespace {

// Largest |df| over all free order parameters by central differences (one-sided at a bound).
double stationarity_gradient(const SaddleSolution& s, const TheoryContext& c) {
  const double h = 1e-6, g0 = s.gap2;
  auto f = [&](const SaddleState& st, double gap) { return rs_potential(st, c, gap); };
  const double base = f(s.state, g0);
  double worst = std::abs((f(s.state, g0 - h) - f(s.state, g0 + h)) / (2 * h));
  auto probe = [&](double SaddleState::*scalar, std::vector<double> SaddleState::*vec, std::size_t i, double lo,
                   double hi) {
    SaddleState a = s.state, b = s.state;
    double& x = scalar ? a.*scalar : (a.*vec)[i];
    double& y = scalar ? b.*scalar : (b.*vec)[i];
    const double v = x;
    if (v - h < lo) return (x += h, std::abs(f(a, g0) - base) / h);
    if (v + h > hi) return (y -= h, std::abs(base - f(b, g0)) / h);
    x += h;
    y -= h;
    return std::abs(f(a, g0) - f(b, g0)) / (2 * h);
  };
  worst = std::max(worst, probe(&SaddleState::q2_hat, nullptr, 0, 0.0, 1e300));
  for (std::size_t i = 0; i < s.state.QW.size(); ++i) {
    worst = std::max(worst, probe(nullptr, &SaddleState::QW_hat, i, 0.0, 1e300));
    if (s.state.QW[i] > 0.0 && s.state.QW[i] < 1.0 - 1e-5)
      worst = std::max(worst, probe(nullptr, &SaddleState::QW, i, 0.0, 1.0));
  }
  return worst;
}

}  // namespace

TEST_CASE("universal branch is invariant") {
  const auto c = context("relu", "four_point", 0.1, 2.0);
  const auto s = iterate_saddle(c, SaddleState::uninformative(c.readout.size()));
  CHECK(s.converged);
  CHECK(s.branch == Branch::universal);
  for (std::size_t a = 0; a < c.readout.size(); ++a) {
    CHECK(s.state.QW[a] == 0.0);
    CHECK(s.state.QW_hat[a] == 0.0);
  }
}

TEST_CASE("activation without a quadratic term has zero q2_hat") {
  const auto c = context("he3", "homogeneous", 0.1, 1.0);
  const auto b = solve_branches(c);
  CHECK(b.universal.state.q2_hat == 0.0);
  if (b.specialisation) CHECK(b.specialisation->state.q2_hat == 0.0);
  CHECK(b.universal.eps_opt == doctest::Approx(0.1 + 1.0).epsilon(1e-12));
}

TEST_CASE("potential with zero conjugates reduces to the energetic term") {
  const auto c = context("relu", "homogeneous", 0.1, 1.5);
  SaddleState s = SaddleState::uninformative(1);
  s.q2 = 0.8;
  const auto [qk, rk] = kernel_entries(s.q2, s.QW, c.readout, c.gamma, c.activation);
  CHECK(rs_potential(s, c) == doctest::Approx(psi_out(c.channel, qk, rk)).epsilon(1e-12));
}

TEST_CASE("converged solutions are stationary points of the potential") {
  struct Case {
    const char *act, *ro;
    double delta, alpha;
    PriorKind prior;
  };
  for (const Case& k : {Case{"relu", "homogeneous", 0.1, 2.0, PriorKind::gaussian},
                        Case{"relu", "four_point", 0.1, 2.0, PriorKind::gaussian},
                        Case{"sigma3", "rademacher", 0.1, 1.0, PriorKind::gaussian},
                        Case{"relu", "homogeneous", 0.1, 2.0, PriorKind::rademacher},
                        Case{"he2", "homogeneous", 1.25, 1.0, PriorKind::rademacher},
                        Case{"tanh2", "gaussian_binned", 0.1, 1.0, PriorKind::gaussian}}) {
    const auto c = context(k.act, k.ro, k.delta, k.alpha, k.prior);
    const auto b = solve_branches(c);
    for (const auto& s : b.candidates) {
      INFO(k.act << " " << k.ro << " " << branch_name(s.branch));
      CHECK(s.converged);
      CHECK(stationarity_gradient(s, c) < 1e-4);
    }
  }
}

TEST_CASE("Nishimori bounds along an alpha sweep") {
  auto c = context("relu", "homogeneous", 0.1, 0.1);
  double prev_eps = 1e300, prev_mi = -1.0;
  for (double a : {0.1, 0.3, 0.6, 1.0, 2.0, 3.0, 5.0}) {
    c.alpha = a;
    const auto b = solve_branches(c);
    const auto& s = b.selected;
    CHECK(s.state.q2 >= 0.0);
    CHECK(s.state.q2 <= c.r2() + 1e-12);
    CHECK(s.eps_opt >= 0.1);
    CHECK(s.eps_opt <= prev_eps + 1e-12);
    CHECK(s.mutual_info >= prev_mi - 1e-9);
    for (double q : s.state.QW) CHECK((q >= 0.0 && q <= 1.0));
    prev_eps = s.eps_opt;
    prev_mi = s.mutual_info;
  }
}

TEST_CASE("branch selection below and above the transition") {
  auto c = context("relu", "homogeneous", 0.1, 0.05);
  auto low = solve_branches(c);
  CHECK(low.selected.branch == Branch::universal);
  c.alpha = 2.0;
  auto high = solve_branches(c);
  CHECK(high.selected.branch == Branch::specialisation);
  CHECK(high.selected.eps_opt < high.universal.eps_opt);
  CHECK(high.selected.f_rs > high.universal.f_rs);
}

TEST_CASE("generalisation error formula") {
  const auto c = context("relu", "four_point", 0.1, 1.0);
  SaddleSolution s;
  s.state.q2 = c.r2();
  s.gap2 = 0.0;
  s.state.QW.assign(4, 1.0);
  s.state.QW_hat.assign(4, 0.0);
  CHECK(gen_error_theory(s, c) == doctest::Approx(0.1).epsilon(1e-12));
  auto he3 = context("he3", "homogeneous", 0.1, 0.5);
  const double e1 = solve_branches(he3).universal.eps_opt;
  he3.alpha = 3.0;
  CHECK(solve_branches(he3).universal.eps_opt == doctest::Approx(e1).epsilon(1e-12));
}

TEST_CASE("ReLU error values at small noise") {
  const auto c = context("relu", "homogeneous", 1e-4, 5.0);
  const auto b = solve_branches(c);
  CHECK(b.universal.eps_opt - 1e-4 == doctest::Approx(1.217e-2).epsilon(2e-2));
  CHECK(b.selected.eps_opt - 1e-4 == doctest::Approx(1.115e-5).epsilon(1e-1));
}

TEST_CASE("mutual information limits") {
  auto c = context("relu", "homogeneous", 0.1, 1e-3, PriorKind::rademacher);
  CHECK(std::abs(solve_branches(c).selected.mutual_info) < 1e-3);
  c.alpha = 50.0;
  CHECK(solve_branches(c).selected.mutual_info == doctest::Approx(std::log(2.0)).epsilon(1e-2));
}

TEST_CASE("four-point readouts: large amplitudes specialise first") {
  const auto c = context("relu", "four_point", 0.1, 1.0);
  const auto t = find_alpha_sp(c, 0.01, 10.0, true, 1e-2);
  REQUIRE(t.alpha_sp_atom.size() == 4);
  // NaN: no transition inside the bracket
  auto at = [&](std::size_t a) { return std::isnan(t.alpha_sp_atom[a]) ? 1e300 : t.alpha_sp_atom[a]; };
  double first = 1e300;
  for (std::size_t a = 0; a < 4; ++a) {
    first = std::min(first, at(a));
    for (std::size_t b = 0; b < 4; ++b)
      if (std::abs(c.readout.values[a]) > std::abs(c.readout.values[b]) + 0.1) CHECK(at(a) < at(b));
  }
  CHECK(t.alpha_sp == doctest::Approx(first));
}

TEST_CASE("transition search rejects a bracket that does not straddle") {
  const auto c = context("relu", "homogeneous", 0.1, 1.0);
  CHECK_THROWS_AS(find_alpha_sp(c, 0.005, 0.01, false), BracketError);
}

TEST_CASE("state evolution matches the universal saddle") {
  for (double a : {0.5, 2.0, 5.0}) {
    const auto c = context("relu", "homogeneous", 0.1, a);
    const auto u = iterate_saddle(c, SaddleState::uninformative(1));
    const double mu2 = c.activation.mu(2);
    const double dt = (0.1 + c.activation.g_one) / (mu2 * mu2 / 4);
    const auto se = state_evolution(*c.table, a, dt);
    CHECK(se.back().q2_hat == doctest::Approx(u.state.q2_hat).epsilon(1e-6));
    CHECK(se.back().q2 == doctest::Approx(u.state.q2 - c.gamma).epsilon(1e-6));
  }
}

TEST_CASE("quadratic activation with Gaussian weights") {
  auto c = context("x2", "homogeneous", 0.1, 1.0, PriorKind::gaussian, 1.0);
  for (double a : {0.5, 1.0, 2.0, 4.0}) {
    c.alpha = a;
    const auto b = solve_branches(c);
    CHECK(b.selected.branch == Branch::universal);
    double f_max = b.universal.f_rs;
    for (const auto& s : b.candidates) f_max = std::max(f_max, s.f_rs);
    CHECK(std::abs(b.universal.f_rs - f_max) / std::abs(f_max) < 1.5e-2);
    const auto simp = simplified_ansatz_solve(c);
    CHECK(simp.f_uni >= simp.f_sp);
  }
}

TEST_CASE("factorised ansatz agrees with the main theory without a quadratic term") {
  auto c = context("he3", "homogeneous", 0.1, 1.0);
  for (double a : {1.0, 2.0, 4.0}) {
    c.alpha = a;
    const auto b = solve_branches(c);
    REQUIRE(b.specialisation);
    CHECK(simplified_ansatz_solve(c).f_sp == doctest::Approx(b.specialisation->f_rs).epsilon(1e-6));
  }
}

TEST_CASE("factorised-ansatz transition lies above the main one on four-point readouts") {
  auto c = context("relu", "four_point", 0.1, 0.01);
  const auto t = find_alpha_sp(c, 0.01, 3.0, false, 1e-3);
  const auto s = simplified_ansatz_solve(c, std::make_pair(0.01, 10.0), {}, 1e-3);
  REQUIRE(s.alpha_bar_sp);
  CHECK(*s.alpha_bar_sp >= t.alpha_sp);
}

TEST_CASE("solver errors") {
  const auto c = context("relu", "homogeneous", 0.1, 1.0);
  CHECK_THROWS_AS(iterate_saddle(c, SaddleState::uninformative(2)), DomainError);
  SolverConfig tight;
  tight.max_iter = 1;
  CHECK_THROWS_AS(solve_branches(c, tight), ConvergenceError);
  auto wrong = c;
  wrong.gamma = 0.25;
  CHECK_THROWS_AS(wrong.validate(), ConfigError);
}

TEST_CASE("branch candidates are distinct") {
  const auto c = context("relu", "four_point", 0.1, 2.0);
  const auto b = solve_branches(c);
  for (std::size_t i = 0; i < b.candidates.size(); ++i)
    for (std::size_t j = i + 1; j < b.candidates.size(); ++j) {
      double d = std::abs(b.candidates[i].state.q2 - b.candidates[j].state.q2);
      for (std::size_t a = 0; a < 4; ++a)
        d = std::max(d, std::abs(b.candidates[i].state.QW[a] - b.candidates[j].state.QW[a]));
      CHECK(d > 0.0);
    }
}
