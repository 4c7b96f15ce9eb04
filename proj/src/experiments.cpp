#include "ewnet/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ewnet/errors.hpp"

namespace ewnet {
namespace {

static_assert(std::endian::native == std::endian::little, "binary layout assumes little-endian");

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat apply(const ActivationSpec& s, const Mat& H) { return H.unaryExpr([&](double h) { return s(h); }); }

Mat random_weights(int k, int d, PriorKind prior, std::mt19937_64& rng) {
  Mat W(k, d);
  if (prior == PriorKind::gaussian) {
    std::normal_distribution<double> nd;
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < k; ++i) W(i, j) = nd(rng);
  } else {
    std::bernoulli_distribution b(0.5);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < k; ++i) W(i, j) = b(rng) ? 1.0 : -1.0;
  }
  return W;
}

void write_raw(std::ofstream& f, const double* p, std::size_t n) {
  f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_raw(std::ifstream& f, double* p, std::size_t n) {
  f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw ConfigError("truncated binary file");
}

void write_header(std::ofstream& f, const char* magic, std::uint64_t a, std::uint64_t b) {
  f.write(magic, 8);
  f.write(reinterpret_cast<const char*>(&a), 8);
  f.write(reinterpret_cast<const char*>(&b), 8);
}

std::pair<std::uint64_t, std::uint64_t> read_header(std::ifstream& f, const char* magic) {
  char m[8];
  std::uint64_t a = 0, b = 0;
  f.read(m, 8);
  if (!f || std::memcmp(m, magic, 8) != 0) throw ConfigError("bad file magic");
  f.read(reinterpret_cast<char*>(&a), 8);
  f.read(reinterpret_cast<char*>(&b), 8);
  if (!f) throw ConfigError("truncated binary header");
  return {a, b};
}

void write_sidecar(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path + ".json");
  if (!f) throw ConfigError("cannot write " + path + ".json");
  f << j.dump(2) << "\n";
}

nlohmann::json read_sidecar(const std::string& path) {
  std::ifstream f(path + ".json");
  if (!f) throw ConfigError("missing sidecar " + path + ".json");
  return nlohmann::json::parse(f);
}

// E[lambda_a lambda_b] = (1/k) sum_ij v_i v_j K(Omega_ij) under unit-norm rows.
double kernel_overlap(const Mat& Wa, const Mat& Wb, const TeacherInstance& t) {
  const Mat Om = Wa * Wb.transpose() / t.d();
  double s = 0.0;
  for (int j = 0; j < Om.cols(); ++j)
    for (int i = 0; i < Om.rows(); ++i)
      s += t.v(i) * t.v(j) * t.activation.covariance(std::clamp(Om(i, j), -1.0, 1.0));
  return s / t.k();
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double a : x) s += a;
  return s / static_cast<double>(x.size());
}

double std_error(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double a : x) s += (a - m) * (a - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
}

}  // namespace

std::pair<TeacherInstance, Dataset> generate_instance(const InstanceSpec& spec) {
  if (spec.d < 1) throw DomainError("d must be positive");
  if (!(spec.gamma > 0.0) || !(spec.alpha > 0.0)) throw DomainError("gamma and alpha must be positive");
  if (!(spec.delta > 0.0)) throw DomainError("delta must be positive");
  if (spec.readout.size() == 0) throw ConfigError("readout law has no atoms");
  const int d = spec.d;
  const int k = std::max(1, static_cast<int>(std::lround(spec.gamma * d)));
  const long n = std::max(1L, std::lround(spec.alpha * d * static_cast<double>(d)));
  if (8.0 * d * static_cast<double>(n) > spec.memory_cap_bytes)
    throw ResourceError("input matrix exceeds the configured memory cap");

  std::mt19937_64 rng(spec.seed);
  TeacherInstance t;
  t.activation = shipped_activation(spec.activation);
  t.prior = spec.prior;
  t.delta = spec.delta;
  t.seed = spec.seed;
  t.W0 = random_weights(k, d, spec.prior, rng);
  t.v.resize(k);
  std::discrete_distribution<int> pick(spec.readout.probs.begin(), spec.readout.probs.end());
  for (int i = 0; i < k; ++i) t.v(i) = spec.readout.values[pick(rng)];

  Dataset data;
  data.X = gaussian_inputs(d, static_cast<int>(n), rng());
  data.y = network_output(t.W0, t, data.X);
  std::normal_distribution<double> nd;
  const double s = std::sqrt(spec.delta);
  for (long mu = 0; mu < n; ++mu) data.y(mu) += s * nd(rng);
  return {std::move(t), std::move(data)};
}

Vec network_output(const Mat& W, const TeacherInstance& t, const Mat& X) {
  if (W.cols() != X.rows()) throw DomainError("network_output: dimension mismatch");
  const Mat H = W * X / std::sqrt(static_cast<double>(X.rows()));
  return apply(t.activation, H).transpose() * t.v / std::sqrt(static_cast<double>(W.rows()));
}

Mat gaussian_inputs(int d, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Mat X(d, n);
  for (int mu = 0; mu < n; ++mu)
    for (int j = 0; j < d; ++j) X(j, mu) = nd(rng);
  return X;
}

void save_dataset(const std::string& path, const Dataset& data, const std::string& meta_json) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  write_header(f, "EWNETDS1", static_cast<std::uint64_t>(data.d()), static_cast<std::uint64_t>(data.n()));
  write_raw(f, data.X.data(), static_cast<std::size_t>(data.X.size()));
  write_raw(f, data.y.data(), static_cast<std::size_t>(data.y.size()));
  nlohmann::json j = nlohmann::json::parse(meta_json);
  j["d"] = data.d();
  j["n"] = data.n();
  j["layout"] = "magic EWNETDS1, uint64 d, uint64 n, float64 X column-major (d x n), float64 y (n)";
  write_sidecar(path, j);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  const auto [d, n] = read_header(f, "EWNETDS1");
  Dataset data;
  data.X.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  data.y.resize(static_cast<Eigen::Index>(n));
  read_raw(f, data.X.data(), d * n);
  read_raw(f, data.y.data(), n);
  return data;
}

void save_teacher(const std::string& path, const TeacherInstance& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  write_header(f, "EWNETTW1", static_cast<std::uint64_t>(t.k()), static_cast<std::uint64_t>(t.d()));
  write_raw(f, t.W0.data(), static_cast<std::size_t>(t.W0.size()));
  write_raw(f, t.v.data(), static_cast<std::size_t>(t.v.size()));
  nlohmann::json j;
  j["k"] = t.k();
  j["d"] = t.d();
  j["activation"] = t.activation.name;
  j["prior"] = prior_name(t.prior);
  j["delta"] = t.delta;
  j["seed"] = t.seed;
  j["layout"] = "magic EWNETTW1, uint64 k, uint64 d, float64 W0 column-major (k x d), float64 v (k)";
  write_sidecar(path, j);
}

TeacherInstance load_teacher(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  const auto [k, d] = read_header(f, "EWNETTW1");
  TeacherInstance t;
  t.W0.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  t.v.resize(static_cast<Eigen::Index>(k));
  read_raw(f, t.W0.data(), k * d);
  read_raw(f, t.v.data(), k);
  const auto j = read_sidecar(path);
  t.activation = shipped_activation(j.at("activation").get<std::string>());
  t.prior = parse_prior(j.at("prior").get<std::string>());
  t.delta = j.at("delta").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

InitKind parse_init(const std::string& s) {
  if (s == "informative") return InitKind::informative;
  if (s == "random") return InitKind::random;
  throw ConfigError("unknown init: " + s);
}

Chain metropolis_binary(const Dataset& data, const TeacherInstance& t, const MetropolisConfig& cfg) {
  if (t.prior != PriorKind::rademacher) throw ConfigError("Metropolis sampler requires binary weights");
  if (data.d() != t.d()) throw DomainError("dataset and teacher disagree on d");
  if (cfg.sweeps < 0 || cfg.thin < 1) throw ConfigError("invalid Metropolis schedule");
  const int k = t.k(), d = t.d(), n = data.n();
  const double sd = std::sqrt(static_cast<double>(d)), sk = std::sqrt(static_cast<double>(k));
  std::mt19937_64 rng(cfg.seed);
  Mat W = cfg.init == InitKind::informative ? t.W0 : random_weights(k, d, PriorKind::rademacher, rng);

  const Mat Xt = data.X.transpose();           // n x d, column j = input coordinate j
  Mat Ht = Xt * W.transpose() / sd;             // n x k pre-activations
  Mat St = Ht.unaryExpr([&](double h) { return t.activation(h); });
  Vec r = data.y - St * t.v / sk;
  auto energy = [&] { return 0.5 * r.squaredNorm() / t.delta; };

  Chain ch;
  std::uniform_int_distribution<int> pi(0, k - 1), pj(0, d - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec hn(n), sn(n), dl(n);
  const long per_sweep = static_cast<long>(k) * d;
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    long accepted = 0;
    for (long p = 0; p < per_sweep; ++p) {
      const int i = pi(rng), j = pj(rng);
      const double shift = -2.0 * W(i, j) / sd;
      const double vi = t.v(i) / sk;
      double dE = 0.0;
      for (int mu = 0; mu < n; ++mu) {
        hn(mu) = Ht(mu, i) + shift * Xt(mu, j);
        sn(mu) = t.activation(hn(mu));
        dl(mu) = vi * (sn(mu) - St(mu, i));
        dE += dl(mu) * (dl(mu) - 2.0 * r(mu));
      }
      dE *= 0.5 / t.delta;
      const double a = -cfg.beta * dE;
      if (a >= 0.0 || std::log(unif(rng)) < a) {
        ++accepted;
        W(i, j) = -W(i, j);
        Ht.col(i) = hn;
        St.col(i) = sn;
        r -= dl;
      }
    }
    if ((sweep + 1) % 100 == 0) r = data.y - St * t.v / sk;  // clear accumulated rounding
    ch.energy.push_back(energy());
    ch.acceptance.push_back(static_cast<double>(accepted) / static_cast<double>(per_sweep));
    if ((sweep + 1) % cfg.thin == 0) ch.samples.push_back(W);
    if (cfg.observer) cfg.observer(sweep, W);
  }
  ch.last = W;
  return ch;
}

GaussianPosterior::GaussianPosterior(const Dataset& data, const TeacherInstance& teacher)
    : data_(data), teacher_(teacher) {
  if (data.d() != teacher.d()) throw DomainError("dataset and teacher disagree on d");
}

double GaussianPosterior::energy(const Mat& W) const {
  const Vec r = data_.y - network_output(W, teacher_, data_.X);
  return 0.5 * W.squaredNorm() + 0.5 * r.squaredNorm() / teacher_.delta;
}

double GaussianPosterior::energy_and_gradient(const Mat& W, Mat& grad) const {
  const double sd = std::sqrt(static_cast<double>(teacher_.d()));
  const double sk = std::sqrt(static_cast<double>(teacher_.k()));
  const Mat H = W * data_.X / sd;  // k x n
  const auto& act = teacher_.activation;
  const Mat S = H.unaryExpr([&](double h) { return act(h); });
  const Vec r = data_.y - S.transpose() * teacher_.v / sk;
  // dU/dW = W - (1 / (Delta sqrt(kd))) [v_i s'(h_i mu) r_mu] X^T
  Mat G = H.unaryExpr([&](double h) { return act.prime(h); });
  G.array().rowwise() *= r.transpose().array();
  G.array().colwise() *= teacher_.v.array();
  grad = W - (G * data_.X.transpose()) / (teacher_.delta * sk * sd);
  return 0.5 * W.squaredNorm() + 0.5 * r.squaredNorm() / teacher_.delta;
}

double leapfrog_energy_error(const GaussianPosterior& post, const Mat& W0, const Mat& p0, double step,
                             int steps) {
  Mat W = W0, p = p0, g;
  const double h0 = post.energy_and_gradient(W, g) + 0.5 * p.squaredNorm();
  double u = 0.0;
  for (int s = 0; s < steps; ++s) {
    p -= 0.5 * step * g;
    W += step * p;
    u = post.energy_and_gradient(W, g);
    p -= 0.5 * step * g;
  }
  return u + 0.5 * p.squaredNorm() - h0;
}

Chain hmc_gaussian(const Dataset& data, const TeacherInstance& t, const HmcConfig& cfg) {
  if (t.prior != PriorKind::gaussian) throw ConfigError("HMC sampler requires Gaussian weights");
  if (cfg.n_iter < 0 || cfg.leapfrog < 1 || !(cfg.step0 > 0.0)) throw ConfigError("invalid HMC settings");
  const GaussianPosterior post(data, t);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat W = cfg.init == InitKind::informative ? t.W0 : random_weights(t.k(), t.d(), PriorKind::gaussian, rng);
  Mat g;
  double U = post.energy_and_gradient(W, g);

  // Dual averaging of log step size.
  const int adapt = cfg.adapt_iters >= 0 ? cfg.adapt_iters : cfg.n_iter / 2;
  const double mu = std::log(10.0 * cfg.step0), gam = 0.05, t0 = 10.0, kappa = 0.75;
  double hbar = 0.0, log_eps = std::log(cfg.step0), log_eps_bar = 0.0;

  Chain ch;
  for (int it = 0; it < cfg.n_iter; ++it) {
    const double eps = std::exp(log_eps);
    Mat p = Mat::NullaryExpr(W.rows(), W.cols(), [&]() { return nd(rng); });
    const double h0 = U + 0.5 * p.squaredNorm();
    Mat Wn = W, gn = g;
    double Un = U;
    for (int s = 0; s < cfg.leapfrog; ++s) {
      p -= 0.5 * eps * gn;
      Wn += eps * p;
      Un = post.energy_and_gradient(Wn, gn);
      p -= 0.5 * eps * gn;
    }
    const double dh = Un + 0.5 * p.squaredNorm() - h0;
    double acc = 0.0;
    if (!std::isfinite(dh) || dh > cfg.divergence_threshold) {
      ++ch.divergences;
    } else {
      acc = std::min(1.0, std::exp(-dh));
      if (unif(rng) < acc) {
        W = std::move(Wn);
        g = std::move(gn);
        U = Un;
      }
    }
    if (it < adapt) {
      const double m = it + 1.0;
      hbar = (1.0 - 1.0 / (m + t0)) * hbar + (cfg.target_accept - acc) / (m + t0);
      log_eps = mu - std::sqrt(m) / gam * hbar;
      const double w = std::pow(m, -kappa);
      log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
      if (it + 1 == adapt) log_eps = log_eps_bar;
    }
    ch.energy.push_back(U);
    ch.acceptance.push_back(acc);
    ch.step_size.push_back(eps);
    if ((it + 1) % std::max(1, cfg.thin) == 0) ch.samples.push_back(W);
    if (cfg.observer) cfg.observer(it, W);
  }
  ch.last = W;
  return ch;
}

Overlaps measure_overlaps(const Mat& W_in, const TeacherInstance& t, int ell_max, int bins, bool match) {
  if (W_in.rows() != t.W0.rows() || W_in.cols() != t.W0.cols())
    throw DomainError("measure_overlaps: shape mismatch");
  if (ell_max < 1 || bins < 1) throw DomainError("measure_overlaps: invalid ell_max or bins");
  const int k = t.k(), d = t.d();
  Mat W = W_in;
  if (match) {
    const Mat Om = W_in * t.W0.transpose() / d;
    std::vector<int> owner(k, -1);
    std::vector<bool> used(k, false);
    for (int step = 0; step < k; ++step) {
      double best = -1.0;
      int bi = -1, bj = -1;
      for (int i = 0; i < k; ++i) {
        if (used[i]) continue;
        for (int j = 0; j < k; ++j)
          if (owner[j] < 0 && t.v(i) == t.v(j) && std::abs(Om(i, j)) > best) {
            best = std::abs(Om(i, j));
            bi = i;
            bj = j;
          }
      }
      if (bi < 0) break;
      used[bi] = true;
      owner[bj] = bi;
    }
    for (int j = 0; j < k; ++j)
      if (owner[j] >= 0) W.row(j) = W_in.row(owner[j]);
  }
  const Mat Om = W * t.W0.transpose() / d;
  Overlaps o;
  Mat P = Mat::Ones(k, k);
  for (int l = 1; l <= ell_max; ++l) {
    P = P.cwiseProduct(Om);
    o.Q.push_back(t.v.dot(P * t.v) / k);
  }
  o.q2 = t.v.dot(Om.cwiseAbs2() * t.v) / k;
  const double vbar = t.v.mean();
  o.q2_centred = o.q2 - static_cast<double>(k) / d * vbar * vbar;
  o.QW_binned.assign(bins, 0.0);
  o.bin_counts.assign(bins, 0);
  const double width = 4.0 / bins;
  for (int b = 0; b < bins; ++b) o.bin_centres.push_back(-2.0 + (b + 0.5) * width);
  for (int i = 0; i < k; ++i) {
    const int b = std::clamp(static_cast<int>(std::floor((t.v(i) + 2.0) / width)), 0, bins - 1);
    o.QW_binned[b] += Om(i, i);
    ++o.bin_counts[b];
  }
  for (int b = 0; b < bins; ++b)
    if (o.bin_counts[b] > 0) o.QW_binned[b] /= o.bin_counts[b];
  return o;
}

ErrorMode parse_error_mode(const std::string& s) {
  if (s == "gibbs_halved") return ErrorMode::gibbs_halved;
  if (s == "overlap_formula") return ErrorMode::overlap_formula;
  if (s == "no_nishimori") return ErrorMode::no_nishimori;
  throw ConfigError("unknown error mode: " + s);
}

ErrorEstimate empirical_gen_error(const std::vector<Mat>& samples, const TeacherInstance& t, int n_test,
                                  ErrorMode mode, std::uint64_t seed) {
  if (samples.empty()) throw ConfigError("no samples");
  std::vector<double> e;
  if (mode == ErrorMode::gibbs_halved) {
    if (n_test < 1) throw DomainError("n_test must be positive");
    e.assign(samples.size(), 0.0);
    constexpr int kChunk = 10000;
    std::uint64_t s = seed;
    for (int start = 0; start < n_test; start += kChunk) {
      const int m = std::min(kChunk, n_test - start);
      const Mat X = gaussian_inputs(t.d(), m, s++);
      const Vec l0 = network_output(t.W0, t, X);
      for (std::size_t a = 0; a < samples.size(); ++a)
        e[a] += (network_output(samples[a], t, X) - l0).squaredNorm();
    }
    for (double& x : e) x *= 0.5 / n_test;
  } else if (mode == ErrorMode::overlap_formula) {
    const double k00 = kernel_overlap(t.W0, t.W0, t);
    for (const auto& W : samples) e.push_back(k00 - kernel_overlap(W, t.W0, t));
  } else {
    const std::size_t half = samples.size() / 2;
    if (half == 0) throw ConfigError("chain too short for two decorrelated samples");
    const double k00 = kernel_overlap(t.W0, t.W0, t);
    for (std::size_t a = 0; a < half; ++a) {
      const Mat& Wa = samples[a];
      const Mat& Wb = samples[a + half];
      e.push_back(k00 - kernel_overlap(Wa, t.W0, t) - kernel_overlap(Wb, t.W0, t) +
                  kernel_overlap(Wa, Wb, t));
    }
  }
  return {t.delta + mean_of(e), std_error(e)};
}

std::pair<double, double> nishimori_check(const std::vector<Mat>& samples, const TeacherInstance& t) {
  if (samples.size() < 2) throw ConfigError("nishimori_check needs at least two samples");
  const std::size_t half = samples.size() / 2;
  std::vector<double> q01, q12;
  for (const auto& W : samples) q01.push_back(measure_overlaps(W, t, 2, 1).Q[1]);
  for (std::size_t a = 0; a < half; ++a) {
    TeacherInstance other = t;
    other.W0 = samples[a + half];
    q12.push_back(measure_overlaps(samples[a], other, 2, 1).Q[1]);
  }
  return {mean_of(q01), mean_of(q12)};
}

}  // namespace ewnet
