#pragma once

#include <functional>
#include <string>

namespace ewnet {

enum class PriorKind { gaussian, rademacher };

PriorKind parse_prior(const std::string& name);
std::string prior_name(PriorKind p);

/// Output channel P_out(y | lambda). The Gaussian linear channel has closed forms; a custom
/// channel supplies its density and a y-scale used to size the quadrature window.
struct ChannelSpec {
  enum class Kind { gaussian_linear, custom } kind = Kind::gaussian_linear;
  double delta = 0.1;
  std::function<double(double, double)> density;  // (y, lambda) -> P_out(y | lambda)
  double y_scale = 1.0;                            // noise scale of the custom kernel
  double mean_shift = 0.0;                         // Lambda: mean of the pre-activations
  std::string name = "gaussian_linear";

  static ChannelSpec gaussian(double delta);
  static ChannelSpec custom(std::string name, std::function<double(double, double)> density,
                            double y_scale, double mean_shift = 0.0);
  /// max over sampled lambda of |int P_out(y|lambda) dy - 1|.
  double normalization_error() const;
  /// E[y | lambda] and E[y^2 | lambda].
  double mean(double lambda) const;
  double second_moment(double lambda) const;
  /// int P_out(y|lambda) ln P_out(y|lambda) dy.
  double neg_entropy(double lambda) const;
};

/// E_{w0,xi} ln E_w exp(-x w^2 / 2 + x w0 w + sqrt(x) xi w).
double psi_w(PriorKind prior, double x);
/// E[w0 <w>_x]; lies in [0, 1).
double posterior_mean_bracket(PriorKind prior, double x);
/// 1 - posterior_mean_bracket, computed without cancellation.
double posterior_mean_complement(PriorKind prior, double x);

/// Energetic potential psi_out(q_K; r_K).
double psi_out(const ChannelSpec& channel, double qK, double rK);
/// d psi_out / d q_K at fixed r_K.
double psi_out_prime(const ChannelSpec& channel, double qK, double rK);

}  // namespace ewnet
