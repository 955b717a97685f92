#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lqmkv/game.hpp"

namespace lqmkv {

/// Shared numerical knobs. Defaults follow the project-wide choices: RK4 on
/// a uniform grid with 2000 steps per unit of horizon, pseudo-horizon
/// integration to stationarity followed by a Newton polish for the
/// infinite-horizon algebraic equations.
struct SolverOptions {
  double steps_per_unit = 2000.0;
  int min_steps = 200;
  double stationarity_tol = 1e-10;   // ‖derivative‖_inf for pseudo-horizon stop
  double max_pseudo_horizon = 400.0;
  double newton_tol = 1e-12;
  int newton_max_iter = 60;
  double algebraic_residual_tol = 1e-9;
  double cond_limit = 1e12;          // ill-posedness guard on every inverse
  double psd_tol = -1e-10;
  double sym_tol = 1e-10;
  double eta_truncation = 1e-12;     // kernel tail cutoff for the eta integral

  int grid_steps(double span) const;
};

/// Quadratic field coefficients per player: K_t weighs (x − x̄)^{⊗2} and
/// Λ_t weighs x̄^{⊗2}. Finite horizon stores paths on the solver grid with
/// terminal values K_T = P^i, Λ_T = P^i + P̃^i assigned exactly; infinite
/// horizon stores constants.
struct RiccatiSolution {
  std::vector<double> grid;            // empty for the stationary case
  std::vector<MatrixPath> K;           // per player, d×d
  std::vector<MatrixPath> Lambda;      // per player, d×d

  Eigen::MatrixXd K_at(int player, double t) const;
  Eigen::MatrixXd Lambda_at(int player, double t) const;
};

/// Gain blocks derived from (K^i, Λ^i) at one time. Indices run over the
/// players k whose control enters player i's cost. Noise sums run over all
/// κ Brownian motions. S_hat and J_hat deliberately use K^i (not Λ^i) in
/// their σ̂-quadratic terms, matching the finite-horizon formulas.
struct DerivedGains {
  // per k
  std::vector<Eigen::MatrixXd> S;       // d_k×d_k: N^i_k + Σ_ℓ σ^ℓᵀ_k K σ^ℓ_k
  std::vector<Eigen::MatrixXd> S_hat;   // d_k×d_k: N̂^i_k + Σ_ℓ σ̂^ℓᵀ_k K σ̂^ℓ_k
  std::vector<Eigen::MatrixXd> U;       // d_k×d:  I^i_k + b_kᵀK + Σ_ℓ σ^ℓᵀ_k K σ^ℓ_x
  std::vector<Eigen::MatrixXd> V;       // d_k×d:  Î^i_k + b̂_kᵀΛ + Σ_ℓ σ̂^ℓᵀ_k K σ̂^ℓ_x
  // per (k, l), zero on the diagonal
  std::vector<std::vector<Eigen::MatrixXd>> J;      // G^i_{k,l} + Σ_ℓ σ^ℓᵀ_k K σ^ℓ_l
  std::vector<std::vector<Eigen::MatrixXd>> J_hat;  // Ĝ^i_{k,l} + Σ_ℓ σ̂^ℓᵀ_k K σ̂^ℓ_l
};

DerivedGains derived_gains(const CoefficientSnapshot& snap, int player,
                           const Eigen::MatrixXd& K, const Eigen::MatrixXd& Lambda);
DerivedGains derived_gains(const GameSpec& game, const RiccatiSolution& rs, int player, double t);

/// Backward RK4 solve of dK/dt = −Φ^{i0}(t, K), K_T = P^i, on `grid`, with
/// symmetrisation after every step and a PSD check along the path.
MatrixPath solve_K(const GameSpec& game, int player, const std::vector<double>& grid,
                   const SolverOptions& opt = {});

/// Backward RK4 solve of the Λ^i equation given K^i; terminal Λ_T = P̂^i.
MatrixPath solve_Lambda(const GameSpec& game, int player, const MatrixPath& K,
                        const std::vector<double>& grid, const SolverOptions& opt = {});

/// Stationary K^i: pseudo-horizon integration from K = 0 until the
/// derivative is below opt.stationarity_tol, then one Newton polish. The
/// algebraic residual of the result is at most opt.algebraic_residual_tol.
Eigen::MatrixXd solve_K_infinite(const GameSpec& game, int player, const SolverOptions& opt = {});
Eigen::MatrixXd solve_Lambda_infinite(const GameSpec& game, int player, const Eigen::MatrixXd& K,
                                      const SolverOptions& opt = {});

/// Both layers for all players. Finite horizon integrates on a uniform grid
/// sized by opt.steps_per_unit; infinite horizon returns constants.
RiccatiSolution solve_riccati(const GameSpec& game, const SolverOptions& opt = {});

/// Algebraic residuals Φ^{i0}(K) and Ψ^{i0}(Λ; K) (stationary form ρ-shifted),
/// used by tests and the Newton polish.
Eigen::MatrixXd riccati_residual_K(const CoefficientSnapshot& snap, int player,
                                   double rho, const Eigen::MatrixXd& K);
Eigen::MatrixXd riccati_residual_Lambda(const CoefficientSnapshot& snap, int player, double rho,
                                        const Eigen::MatrixXd& K, const Eigen::MatrixXd& Lambda);

}  // namespace lqmkv
