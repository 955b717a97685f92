#pragma once

#include <string>
#include <vector>

#include "lqmkv/equilibrium.hpp"
#include "lqmkv/simulate.hpp"

namespace lqmkv {

/// Statistics of the analytic drift E[D^{α,i}_t] along a grid.
struct DriftStats {
  std::vector<double> times;
  std::vector<double> values;
  double max_abs = 0.0;
  double min_value = 0.0;
};

/// Analytic drift curve of `player` under a played profile: the adjoint
/// field is rebuilt against the profile and E[D_t] is evaluated from the
/// closed-loop moments. Zero (to tolerance) exactly at a best response.
DriftStats drift_check(const GameSpec& game, const RiccatiSolution& rs, const LawProfile& profile,
                       int player, const std::vector<double>& grid,
                       const SolverOptions& opt = {});

/// Monte Carlo flatness/monotonicity statistics of t ↦ E[S_t].
struct MartingaleStats {
  SCurve curve;
  double flatness_sigma = 0.0;    // max |E[S_t] − E[S_0]| / SE
  double worst_increment_sigma = 0.0;  // most negative increment in SE units
  bool flat(double n_sigma = 3.0) const { return flatness_sigma <= n_sigma; }
  bool nondecreasing(double n_sigma = 3.0) const { return worst_increment_sigma >= -n_sigma; }
};
MartingaleStats martingale_check(const GameSpec& game, const RiccatiSolution& rs,
                                 const LawProfile& profile, int player, const SimConfig& cfg,
                                 const SolverOptions& opt = {});

/// Unilateral-deviation cost gaps with common random numbers.
struct DeviationResult {
  std::string description;
  double delta = 0.0;      // J^i(dev, base^{−i}) − J^i(base)
  double std_error = 0.0;
};
DeviationResult deviation_test(const GameSpec& game, const LawProfile& base, int player,
                               const AffineLaw& deviation, const SimConfig& cfg,
                               const std::string& description = "");

/// ε-family of deviations dev(ε) = base + ε·direction with a quadratic fit
/// of ΔJ(ε) (Nash first-order stationarity: vanishing linear term).
struct DeviationSweep {
  std::vector<double> epsilons;
  std::vector<DeviationResult> results;
  double linear_coef = 0.0, quadratic_coef = 0.0, r_squared = 0.0;
  double linear_se = 0.0;   // propagated from the per-point MC errors
};
DeviationSweep deviation_sweep(const GameSpec& game, const LawProfile& base, int player,
                               const AffineLaw& direction, const std::vector<double>& epsilons,
                               const SimConfig& cfg);

/// Random affine perturbation of one player's law (gain/mean-gain/intercept
/// bumped by scaled draws), used by the randomized optimality checks.
AffineLaw perturb_law(const AffineLaw& base, double magnitude, std::uint64_t seed);

/// Independent classical oracle: deterministic (σ ≡ 0) games without
/// mean-field couplings are classical open-loop LQ games; their Nash
/// trajectory solves the coupled adjoint/Riccati system
///   u_i = −N_i⁻¹(½ I_i x + L_i + b_iᵀ(Ǩ^i x + m^i)),
/// integrated backward with terminal Ǩ^i_T = P^i, m^i_T = r^i. No code is
/// shared with the mean-field pipeline.
struct OracleComparison {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> oracle_state;
  std::vector<Eigen::VectorXd> pipeline_state;
  double max_deviation = 0.0;
  bool oracle_failed = false;
  std::string message;
};
OracleComparison oracle_deterministic(const GameSpec& game, const SolverOptions& opt = {});

/// Aggregate report for the CLI / acceptance checks.
struct VerificationReport {
  double drift_eq_max = 0.0;           // max_t |E[D_t]| at the candidate itself
  double drift_perturbed_min = 0.0;    // min E[D_t] over random perturbations
  double flatness_sigma = 0.0;
  double perturbed_increment_sigma = 0.0;  // most negative perturbed increment (SE units)
  std::vector<DeviationResult> deviations;
  std::vector<DeviationSweep> sweeps;
  double drift_tol = 1e-7;
  double n_sigma = 3.0;

  bool pass() const;
  std::string summary() const;
};

/// Full Lemma-style verification of a candidate profile: analytic drift at
/// the candidate, MC flatness, randomized perturbations (drift sign and
/// S-curve monotonicity), and ε-deviation sweeps per player.
VerificationReport verify_equilibrium(const GameSpec& game, const RiccatiSolution& rs,
                                      const LawProfile& candidate, const SimConfig& cfg,
                                      int n_perturbations = 5, std::uint64_t seed = 7,
                                      const SolverOptions& opt = {});

}  // namespace lqmkv
