#pragma once

#include <memory>
#include <string>

#include "ewnet/saddle.hpp"
#include "ewnet/spectral.hpp"

namespace ewnet::testing {

inline const char* cache_dir() { return EWNET_CACHE_DIR; }

inline std::shared_ptr<const SpectralTable> table(const ReadoutLaw& r, double gamma = 0.5) {
  return cached_mmse_table(r, gamma, cache_dir());
}

inline TheoryContext context(const std::string& activation, const std::string& readout, double delta,
                             double alpha, PriorKind prior = PriorKind::gaussian, double gamma = 0.5,
                             int bins = 50) {
  TheoryContext c;
  c.alpha = alpha;
  c.gamma = gamma;
  c.activation = shipped_activation(activation);
  c.readout = make_readout(readout, bins);
  c.prior = prior;
  c.channel = ChannelSpec::gaussian(delta);
  c.table = table(c.readout, gamma);
  return c;
}

}  // namespace ewnet::testing
