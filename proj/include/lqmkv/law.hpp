#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lqmkv/game.hpp"

namespace lqmkv {

/// Deterministic affine control law α(t, x, x̄) = gain(t)(x − x̄) +
/// mean_gain(t) x̄ + intercept(t). This is the admissible class used by the
/// whole artifact: equilibria, best responses and tested deviations all
/// live here (deterministic coefficients make the deviation intercept of
/// the equilibrium vanish, so nothing is lost).
struct AffineLaw {
  MatrixPath gain;        // d_i×d
  MatrixPath mean_gain;   // d_i×d
  MatrixPath intercept;   // d_i×1

  Eigen::VectorXd eval(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& xbar) const;
  static AffineLaw zero(int d_i, int d);
};

/// One law per player.
using LawProfile = std::vector<AffineLaw>;

/// All players' law blocks evaluated at one time, stacked over controls.
struct ProfileAt {
  Eigen::MatrixXd gain;       // d_A×d
  Eigen::MatrixXd mean_gain;  // d_A×d
  Eigen::VectorXd intercept;  // d_A
};
ProfileAt profile_at(const LawProfile& laws, double t);

/// Affine closed-loop pieces of dZ = b dt + Σ_ℓ σ^ℓ dW^ℓ at one time, given
/// the mean z̄:  b(z) = drift_dev (z − z̄) + drift_mean and
/// σ^ℓ(z) = vol_dev[ℓ] (z − z̄) + vol_mean[ℓ]. drift_mean is also the mean
/// ODE right-hand side.
struct ClosedLoopAt {
  Eigen::MatrixXd drift_dev;
  Eigen::VectorXd drift_mean;
  std::vector<Eigen::MatrixXd> vol_dev;
  std::vector<Eigen::VectorXd> vol_mean;
};

/// Single-system closed loop: every player feeds on the same state.
ClosedLoopAt closed_loop_at(const CoefficientSnapshot& snap, const ProfileAt& prof,
                            const Eigen::VectorXd& xbar);

/// Open-loop deviation pair (X*, X′): the base profile drives X* and keeps
/// feeding the opponents of `player` even along X′, while `player` applies
/// `deviation` to X′. State is stacked as z = (x*, x′) with mean (x̄*, x̄′).
ClosedLoopAt pair_closed_loop_at(const CoefficientSnapshot& snap, const ProfileAt& base,
                                 int player, const ProfileAt& deviation,
                                 const Eigen::VectorXd& zbar);

/// First and second central moments of an affine closed loop on a grid
/// (forward RK4 of the mean ODE and the Lyapunov ODE
/// Ċ = A C + C Aᵀ + Σ_ℓ (D^ℓ C D^ℓᵀ + m^ℓ m^ℓᵀ)).
struct MomentPaths {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> cov;

  Eigen::VectorXd mean_at(double time) const;
  Eigen::MatrixXd cov_at(double time) const;
};

MomentPaths moment_paths(const GameSpec& game, const LawProfile& laws,
                         const std::vector<double>& grid);
MomentPaths pair_moment_paths(const GameSpec& game, const LawProfile& base, int player,
                              const AffineLaw& deviation, const std::vector<double>& grid);

/// Running cost f^i(t, x, x̄, a, ā) evaluated pointwise (a and ā stacked
/// over players), and the terminal cost g^i(x, x̄).
double running_cost(const CoefficientSnapshot& snap, int player, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& xbar, const Eigen::VectorXd& a,
                    const Eigen::VectorXd& abar);
double terminal_cost(const GameSpec& game, int player, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& xbar);

/// E[f^i] under an affine profile, from the closed-loop moments.
double expected_running_cost(const CoefficientSnapshot& snap, int player, const ProfileAt& prof,
                             const Eigen::VectorXd& xbar, const Eigen::MatrixXd& cov);

}  // namespace lqmkv
