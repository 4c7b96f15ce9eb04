#include "ewnet/readouts.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "ewnet/errors.hpp"
#include "ewnet/quadrature.hpp"

namespace ewnet {

namespace {

void finalize(ReadoutLaw& r) {
  r.mean = 0.0;
  r.second_moment = 0.0;
  for (std::size_t a = 0; a < r.size(); ++a) {
    r.mean += r.probs[a] * r.values[a];
    r.second_moment += r.probs[a] * r.values[a] * r.values[a];
  }
}

}  // namespace

std::string ReadoutLaw::hash() const {
  // FNV-1a over the raw bytes of the atoms.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](double x) {
    unsigned char b[sizeof(double)];
    std::memcpy(b, &x, sizeof(double));
    for (unsigned char c : b) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (std::size_t a = 0; a < size(); ++a) {
    mix(values[a]);
    mix(probs[a]);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

ReadoutLaw make_readout(const std::string& kind, int n_bins) {
  ReadoutLaw r;
  r.kind = kind;
  if (kind == "homogeneous") {
    r.values = {1.0};
    r.probs = {1.0};
  } else if (kind == "rademacher") {
    r.values = {-1.0, 1.0};
    r.probs = {0.5, 0.5};
  } else if (kind == "four_point") {
    const double s5 = std::sqrt(5.0);
    r.values = {-3 / s5, -1 / s5, 1 / s5, 3 / s5};
    r.probs = {0.25, 0.25, 0.25, 0.25};
  } else if (kind == "gaussian_binned") {
    if (n_bins < 1) throw DomainError("n_bins must be >= 1");
    boost::math::normal_distribution<double> nd;
    std::vector<double> edges(n_bins + 1);
    for (int b = 0; b <= n_bins; ++b) {
      if (b == 0)
        edges[b] = -INFINITY;
      else if (b == n_bins)
        edges[b] = INFINITY;
      else
        edges[b] = boost::math::quantile(nd, static_cast<double>(b) / n_bins);
    }
    auto pdf = [](double x) { return std::isinf(x) ? 0.0 : normal_pdf(x); };
    for (int b = 0; b < n_bins; ++b) {
      r.values.push_back((pdf(edges[b]) - pdf(edges[b + 1])) * n_bins);
      r.probs.push_back(1.0 / n_bins);
    }
    finalize(r);
    const double scale = 1.0 / std::sqrt(r.second_moment);
    for (double& v : r.values) v *= scale;
  } else {
    throw DomainError("unknown readout kind: " + kind);
  }
  finalize(r);
  return r;
}

ReadoutLaw custom_readout(std::vector<double> values, std::vector<double> probs, bool auto_rescale) {
  if (values.empty() || values.size() != probs.size())
    throw DomainError("custom readout needs matching non-empty value/prob lists");
  double tot = 0.0;
  for (double p : probs) {
    if (p < 0) throw DomainError("negative readout probability");
    tot += p;
  }
  if (std::abs(tot - 1.0) > 1e-12) throw NormalizationError("readout probabilities do not sum to 1");
  ReadoutLaw r;
  r.kind = "custom";
  r.values = std::move(values);
  r.probs = std::move(probs);
  finalize(r);
  if (std::abs(r.second_moment - 1.0) > 1e-3) {
    if (!auto_rescale) throw NormalizationError("readout second moment is not 1");
    const double scale = 1.0 / std::sqrt(r.second_moment);
    for (double& v : r.values) v *= scale;
    finalize(r);
  }
  return r;
}

}  // namespace ewnet
