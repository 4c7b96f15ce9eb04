#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ewnet/activations.hpp"
#include "ewnet/experiments.hpp"
#include "ewnet/spectral.hpp"

namespace ewnet {

struct RieResult {
  Eigen::MatrixXd estimate;
  double mmse = 0.0;  // estimated ||S - estimate||_F^2 / d
};

/// Rotationally invariant denoiser for Y = S + xi / sqrt(eta), xi a GOE matrix with
/// off-diagonal variance 1/d. Eigenvalues are shrunk by (2/eta) h(lambda), h the Hilbert
/// transform of the eigenvalue density. Without `spectral` (the law of sqrt(eta) Y) the
/// empirical density is Cauchy-smoothed with width eps_scale * width / sqrt(d).
RieResult rie_denoise(const Eigen::MatrixXd& Y, double eta,
                      const SpectralDensity* spectral = nullptr, double eps_scale = 0.5);

/// Posterior mean of S1 for y = S1 . x / sqrt(d) + sqrt(delta1) z with S1 ~ N(0, I).
Eigen::VectorXd s1_estimate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double delta1);

/// Fixed point of q1 = q1h / (q1h + 1), q1h = alpha1 / (1 + delta1 - q1).
double linear_regime_overlap(double alpha1, double delta1);
/// Closed-form root of the same system.
double linear_regime_overlap_closed(double alpha1, double delta1);

struct SeStep {
  double q2 = 0.0;      // 1 - mmse, centred normalisation
  double q2_hat = 0.0;  // effective SNR
};

/// Scalar recursion q2_hat = 4 alpha / (delta_tilde + 2 mmse_S(q2_hat)) from zero.
std::vector<SeStep> state_evolution(const SpectralTable& table, double alpha, double delta_tilde,
                                    int max_iter = 2000, double damping = 0.5, double tol = 1e-12);

struct GampConfig {
  int max_iter = 200;
  double damping = 0.5;
  double tol = 1e-4;
  double eps_scale = 0.5;
  double divergence_growth = 1e3;
};

struct GampFit {
  double y0_hat = 0.0;
  Eigen::VectorXd s1_hat;
  Eigen::MatrixXd s2_hat;  // estimate of W^T diag(v) W / sqrt(kd)
  int iterations = 0;
  bool converged = false;
  bool linear_skipped = false;
  bool matrix_skipped = false;
  double mu1 = 0.0, mu2 = 0.0;
  double delta_tilde = 0.0;
  std::vector<SeStep> se_trace;
  std::vector<double> mse_trace;  // ||S2 - s2_hat||_F^2 / d when a reference is supplied
};

/// GAMP-RIE on a Gaussian-linear-channel dataset. `reference`, if given, is the true S2 and
/// only feeds mse_trace.
GampFit gamp_rie_fit(const Dataset& data, const ActivationSpec& activation,
                     const std::vector<double>& v, double delta, const GampConfig& cfg = {},
                     const Eigen::MatrixXd* reference = nullptr);

double predict(const GampFit& fit, const Eigen::VectorXd& x);
Eigen::VectorXd predict(const GampFit& fit, const Eigen::MatrixXd& X);

/// W^T diag(v) W / sqrt(kd).
Eigen::MatrixXd second_order_matrix(const Eigen::MatrixXd& W, const Eigen::VectorXd& v);

}  // namespace ewnet
