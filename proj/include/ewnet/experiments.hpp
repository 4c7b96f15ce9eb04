#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ewnet/activations.hpp"
#include "ewnet/potentials.hpp"
#include "ewnet/readouts.hpp"

namespace ewnet {

/// Teacher network lambda(x) = sum_i v_i s(w_i . x / sqrt(d)) / sqrt(k) and Gaussian label noise.
struct TeacherInstance {
  Eigen::MatrixXd W0;  // k x d
  Eigen::VectorXd v;   // k readouts
  ActivationSpec activation;
  PriorKind prior = PriorKind::gaussian;
  double delta = 0.1;
  std::uint64_t seed = 0;

  int k() const { return static_cast<int>(W0.rows()); }
  int d() const { return static_cast<int>(W0.cols()); }
};

struct Dataset {
  Eigen::MatrixXd X;  // d x n standard Gaussian inputs
  Eigen::VectorXd y;  // n labels

  int d() const { return static_cast<int>(X.rows()); }
  int n() const { return static_cast<int>(X.cols()); }
};

struct InstanceSpec {
  int d = 100;
  double gamma = 0.5;
  double alpha = 1.0;
  PriorKind prior = PriorKind::gaussian;
  ReadoutLaw readout;
  std::string activation = "relu";
  double delta = 0.1;
  std::uint64_t seed = 1;
  double memory_cap_bytes = 4e9;  // guard on the size of X
};

/// k = round(gamma d), n = round(alpha d^2). Deterministic under the seed.
std::pair<TeacherInstance, Dataset> generate_instance(const InstanceSpec& spec);

/// Noiseless outputs lambda(W; X) of a network with the teacher's activation and readouts.
Eigen::VectorXd network_output(const Eigen::MatrixXd& W, const TeacherInstance& teacher,
                               const Eigen::MatrixXd& X);

/// Fresh standard Gaussian inputs (d x n).
Eigen::MatrixXd gaussian_inputs(int d, int n, std::uint64_t seed);

/// Little-endian layout: magic "EWNETDS1", uint64 d, uint64 n, X column-major, y.
/// A JSON sidecar at path + ".json" records the metadata passed in.
void save_dataset(const std::string& path, const Dataset& data, const std::string& meta_json = "{}");
Dataset load_dataset(const std::string& path);
/// Magic "EWNETTW1", uint64 k, uint64 d, W0 column-major, v; sidecar with activation, prior,
/// delta and seed.
void save_teacher(const std::string& path, const TeacherInstance& t);
TeacherInstance load_teacher(const std::string& path);

enum class InitKind { informative, random };
InitKind parse_init(const std::string& s);

struct Chain {
  std::vector<Eigen::MatrixXd> samples;  // thinned snapshots of W
  std::vector<double> energy;            // one entry per sweep / iteration
  std::vector<double> acceptance;        // acceptance rate per block
  std::vector<double> step_size;         // HMC step size per iteration
  int divergences = 0;
  Eigen::MatrixXd last;
};

using ChainObserver = std::function<void(int iteration, const Eigen::MatrixXd& W)>;

struct MetropolisConfig {
  InitKind init = InitKind::informative;
  int sweeps = 100;
  double beta = 1.0;
  std::uint64_t seed = 1;
  int thin = 10;  // keep every thin-th sweep
  ChainObserver observer;
};

/// Single-entry sign flips on binary weights; pre-activations are updated incrementally.
Chain metropolis_binary(const Dataset& data, const TeacherInstance& teacher,
                        const MetropolisConfig& cfg);

/// U(W) = |W|^2 / 2 + sum_mu (y_mu - lambda_mu(W))^2 / (2 Delta) and its gradient.
class GaussianPosterior {
 public:
  GaussianPosterior(const Dataset& data, const TeacherInstance& teacher);
  double energy(const Eigen::MatrixXd& W) const;
  double energy_and_gradient(const Eigen::MatrixXd& W, Eigen::MatrixXd& grad) const;

 private:
  const Dataset& data_;
  const TeacherInstance& teacher_;
};

/// Change of the Hamiltonian over `steps` leapfrog steps from (W, p).
double leapfrog_energy_error(const GaussianPosterior& post, const Eigen::MatrixXd& W,
                             const Eigen::MatrixXd& p, double step, int steps);

struct HmcConfig {
  InitKind init = InitKind::informative;
  int n_iter = 200;
  int leapfrog = 10;
  double step0 = 0.01;
  double target_accept = 0.8;
  int adapt_iters = -1;  // default: half of n_iter
  double divergence_threshold = 1e3;
  std::uint64_t seed = 1;
  int thin = 1;
  ChainObserver observer;
};

/// HMC with dual-averaging step-size adaptation on a Gaussian prior.
Chain hmc_gaussian(const Dataset& data, const TeacherInstance& teacher, const HmcConfig& cfg);

struct Overlaps {
  std::vector<double> Q;             // Q_l^{01} for l = 1..ell_max
  std::vector<double> QW_binned;     // mean diagonal overlap per readout bin on [-2, 2]
  std::vector<int> bin_counts;
  std::vector<double> bin_centres;
  double q2 = 0.0;                   // Tr[S2 S2^0] / d^2
  double q2_centred = 0.0;           // q2 minus the (k/d) vbar^2 mean contribution
};

/// Omega = W W0^T / d; with `match` neurons are first paired greedily within readout groups.
Overlaps measure_overlaps(const Eigen::MatrixXd& W, const TeacherInstance& teacher, int ell_max = 5,
                          int bins = 50, bool match = false);

enum class ErrorMode { gibbs_halved, overlap_formula, no_nishimori };
ErrorMode parse_error_mode(const std::string& s);

struct ErrorEstimate {
  double value = 0.0;      // estimate of eps_opt
  double std_error = 0.0;  // across samples
};

/// Bayes-optimal generalisation error from posterior samples.
ErrorEstimate empirical_gen_error(const std::vector<Eigen::MatrixXd>& samples,
                                  const TeacherInstance& teacher, int n_test, ErrorMode mode,
                                  std::uint64_t seed = 7);

/// Nishimori diagnostic: mean Q_2^{01} over samples and mean Q_2^{ab} over sample pairs.
std::pair<double, double> nishimori_check(const std::vector<Eigen::MatrixXd>& samples,
                                          const TeacherInstance& teacher);

}  // namespace ewnet
