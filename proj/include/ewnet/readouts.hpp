#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ewnet {

/// Discrete readout prior: atoms (values[a], probs[a]) with unit second moment.
struct ReadoutLaw {
  std::string kind;
  std::vector<double> values;
  std::vector<double> probs;
  double mean = 0.0;
  double second_moment = 0.0;

  std::size_t size() const { return values.size(); }
  /// Stable content hash of the atom list (hex string).
  std::string hash() const;
};

/// kind: homogeneous | rademacher | four_point | gaussian_binned.
ReadoutLaw make_readout(const std::string& kind, int n_bins = 50);

/// Custom atoms; throws NormalizationError if the second moment is off by more than 1e-3
/// unless auto_rescale is set.
ReadoutLaw custom_readout(std::vector<double> values, std::vector<double> probs,
                          bool auto_rescale = false);

}  // namespace ewnet
