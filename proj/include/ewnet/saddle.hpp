#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ewnet/activations.hpp"
#include "ewnet/potentials.hpp"
#include "ewnet/readouts.hpp"
#include "ewnet/spectral.hpp"

namespace ewnet {

/// Everything the replica-symmetric potential depends on besides the order parameters.
struct TheoryContext {
  double alpha = 1.0;
  double gamma = 0.5;
  ActivationSpec activation;
  ReadoutLaw readout;
  PriorKind prior = PriorKind::gaussian;
  ChannelSpec channel = ChannelSpec::gaussian(0.1);
  std::shared_ptr<const SpectralTable> table;

  double r2() const { return 1.0 + gamma * readout.mean * readout.mean; }
  /// Throws ConfigError on inconsistent pieces (table for another gamma or readout, ...).
  void validate() const;
};

/// Order parameters, one QW / QW_hat entry per readout atom.
struct SaddleState {
  double q2 = 0.0;
  double q2_hat = 0.0;
  std::vector<double> QW, QW_hat;

  static SaddleState uninformative(std::size_t atoms);
  static SaddleState informative(std::size_t atoms, double r2, double offset = 1e-3);
};

enum class Branch { universal, specialisation };
std::string branch_name(Branch b);

struct SaddleSolution {
  SaddleState state;
  double f_rs = 0.0;
  Branch branch = Branch::universal;
  double eps_opt = 0.0;
  double mutual_info = 0.0;
  bool converged = false;
  double residual = 0.0;
  int iterations = 0;
  double tau = 0.0;
  bool tau_saturated = false;
  double gap2 = 0.0;  // r2 - q2, kept separately for accuracy near perfect recovery
};

struct SolverConfig {
  double damping = 0.5;  // weight of the new iterate
  double tol = 1e-8;     // on max |update| / (1 + |value|)
  int max_iter = 5000;
  /// Extra starts that specialise only the atoms with |v| above a level (at most this many).
  int partial_starts = 12;
};

/// Evaluates the RS potential at a state. With gap2 >= 0 it is used as r2 - q2.
double rs_potential(const SaddleState& s, const TheoryContext& ctx, double gap2 = -1.0);

/// Damped Picard iteration of the saddle-point system from `init`.
SaddleSolution iterate_saddle(const TheoryContext& ctx, const SaddleState& init,
                              const SolverConfig& cfg = {});

struct BranchSet {
  SaddleSolution universal;
  std::optional<SaddleSolution> specialisation;  // best specialised fixed point
  SaddleSolution selected;
  std::vector<SaddleSolution> candidates;        // distinct converged fixed points
};

/// Runs the uninformative start, the informative start and the partial starts (atoms with
/// |v| below a level start at zero) and selects the largest potential.
BranchSet solve_branches(const TheoryContext& ctx, const SolverConfig& cfg = {});

/// Bayes-optimal generalisation error of a solution.
double gen_error_theory(const SaddleSolution& s, const TheoryContext& ctx);

/// Mutual information per parameter I / (kd).
double mutual_information(const SaddleSolution& s, const TheoryContext& ctx);

struct TransitionResult {
  double alpha_sp = 0.0;
  std::vector<double> alpha_sp_atom;  // per readout atom (NaN when not requested)
};

/// Bisection on the selected branch's QW(v) > threshold indicator. Atoms sharing |v| share
/// their transition. Throws BracketError when the bracket does not straddle.
TransitionResult find_alpha_sp(TheoryContext ctx, double alpha_lo, double alpha_hi,
                               bool per_atom = true, double alpha_tol = 1e-2,
                               double threshold = 1e-3, const SolverConfig& cfg = {});

struct SimplifiedResult {
  double f_sp = 0.0;
  double f_uni = 0.0;
  double f_bar = 0.0;
  SaddleSolution sp;  // extremiser of the factorised-ansatz potential
  SaddleSolution uni;
  std::optional<double> alpha_bar_sp;
};

/// Factorised-ansatz potential with its log-determinant term.
double simplified_potential(const SaddleState& s, const TheoryContext& ctx, double gap2 = -1.0);

/// Extremises the factorised-ansatz potential at ctx.alpha from an informative start.
SaddleSolution simplified_extremum(const TheoryContext& ctx, const SolverConfig& cfg = {});

/// f_sp, f_uni and their maximum at ctx.alpha; with a bracket also the crossing alpha.
SimplifiedResult simplified_ansatz_solve(const TheoryContext& ctx,
                                         std::optional<std::pair<double, double>> bracket = {},
                                         const SolverConfig& cfg = {}, double alpha_tol = 1e-2);

}  // namespace ewnet
