#include "ewnet/gamp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ewnet/errors.hpp"

namespace ewnet {
namespace {

constexpr double kPi = 3.14159265358979323846;

// PV int rho(t) / (x - t) dt for a sampled law, by subtracting the singularity per interval.
double hilbert_of_law(const SpectralDensity& mu, double x) {
  double h = 0.0;
  for (const auto& [loc, mass] : mu.point_masses)
    if (std::abs(x - loc) > 1e-12) h += mass / (x - loc);
  if (!mu.density_at) {
    for (std::size_t i = 0; i < mu.grid.size(); ++i)
      if (std::abs(x - mu.grid[i]) > 1e-12) h += mu.weights[i] * mu.density[i] / (x - mu.grid[i]);
    return h;
  }
  const double rx = mu.density_at(x);
  for (std::size_t i = 0; i < mu.grid.size(); ++i) {
    const double t = mu.grid[i];
    if (std::abs(x - t) > 1e-12) h += mu.weights[i] * (mu.density[i] - rx) / (x - t);
  }
  for (const auto& [a, b] : mu.intervals)
    if (x > a && x < b) h += rx * std::log((x - a) / (b - x));
  return h;
}

}  // namespace

RieResult rie_denoise(const Eigen::MatrixXd& Y, double eta, const SpectralDensity* spectral,
                      double eps_scale) {
  if (!(eta > 0.0)) throw DomainError("rie_denoise requires eta > 0");
  if (Y.rows() != Y.cols()) throw DomainError("rie_denoise requires a square matrix");
  const int d = static_cast<int>(Y.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Y + Y.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::VectorXd& lam = es.eigenvalues();
  Eigen::VectorXd h(d), rho(d);
  if (spectral) {
    // The law is that of sqrt(eta) Y.
    const double s = std::sqrt(eta);
    for (int i = 0; i < d; ++i) {
      h(i) = s * hilbert_of_law(*spectral, s * lam(i));
      rho(i) = spectral->density_at ? s * spectral->density_at(s * lam(i)) : 0.0;
    }
  } else {
    const double eps = eps_scale * (lam(d - 1) - lam(0)) / std::sqrt(static_cast<double>(d));
    const double e2 = eps * eps;
    for (int i = 0; i < d; ++i) {
      double hi = 0.0, ri = 0.0;
      for (int j = 0; j < d; ++j) {
        const double u = lam(i) - lam(j), den = u * u + e2;
        hi += u / den;
        ri += eps / den;
      }
      h(i) = hi / d;
      rho(i) = ri / (kPi * d);
    }
  }
  const Eigen::VectorXd shrunk = lam - (2.0 / eta) * h;
  RieResult r;
  r.estimate = es.eigenvectors() * shrunk.asDiagonal() * es.eigenvectors().transpose();
  if (spectral) {
    const double i3 = rho.squaredNorm() / d / eta;  // int rho^3 of the law of sqrt(eta) Y
    r.mmse = std::max(0.0, (1.0 - 4.0 * kPi * kPi / 3.0 * i3) / eta);
  } else {
    // Tweedie: mmse = 2 div F / (eta d^2), with the divergence of a spectral map.
    const double eps = eps_scale * (lam(d - 1) - lam(0)) / std::sqrt(static_cast<double>(d));
    const double e2 = eps * eps;
    double div = 0.0;
    for (int i = 0; i < d; ++i) {
      double dh = 0.0;
      for (int j = 0; j < d; ++j) {
        const double u = lam(i) - lam(j), den = u * u + e2;
        dh += (e2 - u * u) / (den * den);
        if (j > i) {
          const double gap = lam(i) - lam(j);
          div += std::abs(gap) > 1e-12 ? (shrunk(i) - shrunk(j)) / gap : 1.0;
        }
      }
      div += 1.0 - (2.0 / eta) * dh / d;
    }
    r.mmse = std::max(0.0, 2.0 * div / (eta * d * static_cast<double>(d)));
  }
  return r;
}

Eigen::VectorXd s1_estimate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double delta1) {
  if (X.cols() != y.size()) throw DomainError("s1_estimate: X and y disagree on n");
  if (!(delta1 > 0.0)) throw DomainError("s1_estimate requires delta1 > 0");
  const double d = static_cast<double>(X.rows());
  if (!std::isfinite(delta1)) return Eigen::VectorXd::Zero(X.rows());
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(X.rows(), X.rows());
  A.selfadjointView<Eigen::Lower>().rankUpdate(X, 1.0 / (d * delta1));
  const Eigen::VectorXd b = X * y / (std::sqrt(d) * delta1);
  Eigen::LLT<Eigen::MatrixXd> llt(A.selfadjointView<Eigen::Lower>());
  if (llt.info() != Eigen::Success) throw NumericalError("s1_estimate: system not positive definite");
  return llt.solve(b);
}

double linear_regime_overlap(double alpha1, double delta1) {
  if (alpha1 < 0.0) throw DomainError("alpha1 must be non-negative");
  if (!(delta1 >= 0.0)) throw DomainError("delta1 must be non-negative");
  if (delta1 == 0.0) return std::min(alpha1, 1.0);  // noiseless: algebraic convergence at alpha1 = 1
  double q = 0.0;
  for (int it = 0; it < 100000; ++it) {
    const double qh = alpha1 / (1.0 + delta1 - q);
    const double next = 0.5 * q + 0.5 * qh / (qh + 1.0);
    if (std::abs(next - q) < 1e-12) return next;
    q = next;
  }
  throw ConvergenceError("linear-regime overlap did not converge", 1.0);
}

double linear_regime_overlap_closed(double alpha1, double delta1) {
  const double b = alpha1 + 1.0 + delta1;
  return 2.0 * alpha1 / (b + std::sqrt(b * b - 4.0 * alpha1));
}

std::vector<SeStep> state_evolution(const SpectralTable& table, double alpha, double delta_tilde,
                                    int max_iter, double damping, double tol) {
  if (!(delta_tilde > 0.0)) throw DomainError("state evolution requires delta_tilde > 0");
  std::vector<SeStep> trace;
  double qh = 0.0;
  for (int t = 0; t < max_iter; ++t) {
    const double m = table.mmse(qh);
    trace.push_back({1.0 - m, qh});
    const double next = 4.0 * alpha / (delta_tilde + 2.0 * m);
    const double upd = damping * next + (1.0 - damping) * qh;
    if (std::abs(upd - qh) < tol * (1.0 + qh)) {
      trace.push_back({1.0 - table.mmse(upd), upd});
      return trace;
    }
    qh = upd;
  }
  throw ConvergenceError("state evolution did not converge", std::abs(qh));
}

Eigen::MatrixXd second_order_matrix(const Eigen::MatrixXd& W, const Eigen::VectorXd& v) {
  const double k = static_cast<double>(W.rows()), d = static_cast<double>(W.cols());
  return W.transpose() * v.asDiagonal() * W / std::sqrt(k * d);
}

GampFit gamp_rie_fit(const Dataset& data, const ActivationSpec& activation,
                     const std::vector<double>& v, double delta, const GampConfig& cfg,
                     const Eigen::MatrixXd* reference) {
  if (!(delta > 0.0)) throw DomainError("gamp_rie_fit requires delta > 0");
  if (v.empty()) throw DomainError("gamp_rie_fit requires readout values");
  const Eigen::MatrixXd& X = data.X;
  const int d = data.d(), n = data.n();
  if (data.y.size() != n) throw DomainError("dataset labels and inputs disagree on n");
  const double k = static_cast<double>(v.size()), sd = std::sqrt(static_cast<double>(d));

  GampFit fit;
  fit.mu1 = activation.mu(1);
  fit.mu2 = activation.mu(2);
  fit.y0_hat = data.y.mean();
  Eigen::VectorXd yc = data.y.array() - fit.y0_hat;

  fit.s1_hat = Eigen::VectorXd::Zero(d);
  if (std::abs(fit.mu1) < 1e-12) {
    fit.linear_skipped = true;
  } else {
    const double m0 = activation.mu(0);
    const double delta1 =
        (delta + activation.second_moment - m0 * m0 - fit.mu1 * fit.mu1) / (fit.mu1 * fit.mu1);
    fit.s1_hat = s1_estimate(X, yc / fit.mu1, delta1);
    yc -= fit.mu1 * (X.transpose() * fit.s1_hat) / sd;
  }

  double vsum = 0.0;
  for (double a : v) vsum += a;
  fit.s2_hat = Eigen::MatrixXd::Identity(d, d) * (vsum / std::sqrt(k * d));
  if (std::abs(fit.mu2) < 1e-12) {
    fit.matrix_skipped = true;
    fit.converged = true;
    return fit;
  }

  const double scale = 0.5 * fit.mu2;
  const Eigen::VectorXd yt = yc / scale;
  fit.delta_tilde = (delta + activation.g_one) / (scale * scale);
  const double alpha = static_cast<double>(n) / (static_cast<double>(d) * d);

  Eigen::MatrixXd S = fit.s2_hat;
  double c = 1.0;  // current mmse estimate
  Eigen::VectorXd g_prev = Eigen::VectorXd::Zero(n);
  const double norm0 = std::max(S.norm(), 1.0);
  Eigen::MatrixXd P(d, n);
  for (int t = 0; t < cfg.max_iter; ++t) {
    const double V = 2.0 * c;
    P.noalias() = S * X;
    const Eigen::VectorXd AS =
        ((X.cwiseProduct(P)).colwise().sum().transpose().array() - S.trace()) / sd;
    const Eigen::VectorXd g = (yt - AS + V * g_prev) / (fit.delta_tilde + V);
    const double eta = 4.0 * alpha / (fit.delta_tilde + V);
    P.noalias() = X * g.asDiagonal();
    Eigen::MatrixXd B = P * X.transpose();
    B.diagonal().array() -= g.sum();
    const Eigen::MatrixXd R = S + (2.0 / (eta * d * sd)) * B;
    const RieResult den = rie_denoise(R, eta, nullptr, cfg.eps_scale);

    const Eigen::MatrixXd next = cfg.damping * den.estimate + (1.0 - cfg.damping) * S;
    const double change = (next - S).norm() / std::max(S.norm(), 1e-300);
    S = next;
    c = cfg.damping * den.mmse + (1.0 - cfg.damping) * c;
    g_prev = g;
    fit.iterations = t + 1;
    fit.se_trace.push_back({1.0 - c, eta});
    if (reference) fit.mse_trace.push_back((S - *reference).squaredNorm() / d);
    if (!std::isfinite(S.norm()) || S.norm() > cfg.divergence_growth * norm0) {
      std::ostringstream o;
      o << "GAMP-RIE diverged at iteration " << t + 1 << "; trace:";
      for (const auto& s : fit.se_trace) o << " (" << s.q2 << ", " << s.q2_hat << ")";
      throw DivergenceError(o.str());
    }
    if (change < cfg.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.s2_hat = S;
  return fit;
}

double predict(const GampFit& fit, const Eigen::VectorXd& x) {
  const int d = static_cast<int>(fit.s2_hat.rows());
  if (x.size() != d) throw DomainError("predict: input dimension mismatch");
  const double sd = std::sqrt(static_cast<double>(d));
  double y = fit.y0_hat;
  if (fit.s1_hat.size() == d) y += fit.mu1 * fit.s1_hat.dot(x) / sd;
  if (!fit.matrix_skipped) y += 0.5 * fit.mu2 * (x.dot(fit.s2_hat * x) - fit.s2_hat.trace()) / sd;
  return y;
}

Eigen::VectorXd predict(const GampFit& fit, const Eigen::MatrixXd& X) {
  const int d = static_cast<int>(fit.s2_hat.rows());
  if (X.rows() != d) throw DomainError("predict: input dimension mismatch");
  const double sd = std::sqrt(static_cast<double>(d));
  Eigen::VectorXd y = Eigen::VectorXd::Constant(X.cols(), fit.y0_hat);
  if (fit.s1_hat.size() == d) y += fit.mu1 * (X.transpose() * fit.s1_hat) / sd;
  if (!fit.matrix_skipped) {
    const Eigen::MatrixXd P = fit.s2_hat * X;
    const Eigen::VectorXd quad = X.cwiseProduct(P).colwise().sum().transpose();
    y += (0.5 * fit.mu2 / sd) * (quad.array() - fit.s2_hat.trace()).matrix();
  }
  return y;
}

}  // namespace ewnet
