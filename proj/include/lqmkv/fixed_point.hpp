#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lqmkv/riccati.hpp"

namespace lqmkv {

/// Stacked nd-dimensional coefficient blocks of the adjoint/control fixed
/// point, assembled at one time from the derived gains of every player.
/// Layout: controls stack player blocks of height d_i (total d_A); the
/// adjoint stacks player blocks of height d (total nd).
struct BlockSystem {
  double t = 0.0;
  int d = 0, n = 0, d_a = 0;

  Eigen::MatrixXd S, S_hat;          // d_A×d_A block-diagonal of (S^i_i)⁻¹ / (Ŝ^i_i)⁻¹
  Eigen::MatrixXd J, J_hat;          // d_A×d_A symmetrised off-diagonal couplings
  Eigen::MatrixXd Jcal, Jcal_hat;    // −(I + S J)⁻¹ S and the hatted analogue
  Eigen::MatrixXd S_x, S_hat_x;      // d_A×d
  Eigen::MatrixXd S_y, S_hat_y;      // d_A×nd
  std::vector<Eigen::MatrixXd> S_z, S_hat_z;  // per noise, d_A×d
  Eigen::VectorXd H, H_hat;          // d_A
  Eigen::MatrixXd P_y, P_hat_y;      // nd×nd (ρ-shifted block diagonals)
  std::vector<Eigen::MatrixXd> P_z, P_hat_z;  // per noise, nd×nd
  Eigen::MatrixXd P_alpha, P_hat_alpha;       // nd×d_A
  Eigen::VectorXd F, F_hat;          // nd; F is the deviation-part source and is
                                     // identically zero for deterministic coefficients
  double cond_IJ = 0.0, cond_IJ_hat = 0.0;  // condition numbers of (I+SJ), (I+ŜĴ)
};

BlockSystem assemble_blocks(const GameSpec& game, const RiccatiSolution& rs, double t,
                            const SolverOptions& opt = {});

/// Coefficients (π, π̂, η) of the adjoint ansatz Y = π(X−X̄) + π̂X̄ + η.
/// Finite horizon: paths with π_T = π̂_T = 0 and η_T = (r^i)_i exact.
/// Infinite horizon: constants. ψ is the drift of η; the deviation part
/// η − η̄ vanishes identically under deterministic coefficients and is kept
/// as an explicit (integrated) path so tests can assert it.
struct FixedPointSolution {
  std::vector<double> grid;        // empty for the stationary case
  MatrixPath pi, pi_hat;           // nd×d
  MatrixPath eta;                  // nd×1 (the mean part; η ≡ η̄ in scope)
  MatrixPath eta_dev;              // nd×1, integrated deviation system (≡ 0)
  MatrixPath psi;                  // nd×1 drift of η
  double max_residual = 0.0;       // max algebraic/midpoint residual recorded

  Eigen::MatrixXd pi_at(double t) const { return pi.at_clamped(t); }
  Eigen::MatrixXd pi_hat_at(double t) const { return pi_hat.at_clamped(t); }
  Eigen::VectorXd eta_at(double t) const { return eta.at_clamped(t); }
};

/// Right-hand sides of the coupled (π, π̂) backward system at one time.
/// pi_dot = −πb_x + P_yπ + Σ_ℓP_z^ℓπσ_x^ℓ + (P_α + Σ_ℓP_z^ℓπΣ^ℓ − πB)·A_x(π),
/// with A_x(π) = (I − Σ_ℓS_z^ℓπΣ^ℓ)⁻¹(S_x + S_yπ + Σ_ℓS_z^ℓπσ_x^ℓ); hatted
/// equation analogous (π̂ in S_y/P_y slots, π in every Z-slot).
void pi_rates(const BlockSystem& bs, const CoefficientSnapshot& snap, const Eigen::MatrixXd& pi,
              const Eigen::MatrixXd& pi_hat, Eigen::MatrixXd& pi_dot, Eigen::MatrixXd& pi_hat_dot,
              const SolverOptions& opt);

/// Joint backward RK4 integration of (π, π̂) on `grid` (terminal zero).
void solve_pi(const GameSpec& game, const RiccatiSolution& rs, const std::vector<double>& grid,
              MatrixPath& pi, MatrixPath& pi_hat, const SolverOptions& opt = {});

/// Stationary (π, π̂): damped Newton on the stacked algebraic system seeded
/// from pseudo-horizon integration of the finite-horizon equations.
void solve_pi_infinite(const GameSpec& game, const RiccatiSolution& rs, Eigen::MatrixXd& pi,
                       Eigen::MatrixXd& pi_hat, const SolverOptions& opt = {});

/// Symmetric scalar shortcut (d = 1, identical players, uncontrolled
/// volatility): the two stationary quadratics solved by formula. Returns
/// {π₁, π̂₁} and reports the discriminants; throws SolverError when a
/// discriminant is negative. Root selection takes the dynamically stable
/// root of the backward flow (the larger root of the positive-leading-
/// coefficient quadratic), which pseudo-horizon integration reaches.
struct SymmetricScalarRoots {
  double pi1 = 0.0, pi_hat1 = 0.0;
  double disc = 0.0, disc_hat = 0.0;
  double a = 0.0, b = 0.0, c = 0.0;          // quadratic coefficients for π₁
  double a_hat = 0.0, b_hat = 0.0, c_hat = 0.0;
};
SymmetricScalarRoots solve_pi_symmetric_scalar(const GameSpec& game, const RiccatiSolution& rs,
                                               const SolverOptions& opt = {});
bool is_symmetric_scalar(const GameSpec& game);

/// Backward solve of the η layer given (π, π̂). Finite horizon: RK4 with
/// η_T = r. Infinite horizon: quadrature of η̄_t = −∫_t^∞ e^{𝒢(t−u)} c_u du
/// with the kernel truncated where e^{−m τ} < opt.eta_truncation
/// (m = smallest real part of the eigenvalues of 𝒢, which must be positive).
void solve_eta(const GameSpec& game, const RiccatiSolution& rs, const MatrixPath& pi,
               const MatrixPath& pi_hat, const std::vector<double>& grid, MatrixPath& eta,
               MatrixPath& eta_dev, MatrixPath& psi, const SolverOptions& opt = {});

/// Full layer: (π, π̂) then η on the Riccati grid (or constants).
FixedPointSolution solve_fixed_point(const GameSpec& game, const RiccatiSolution& rs,
                                     const SolverOptions& opt = {});

/// Max residual of the stationary (π, π̂) system at the given values.
double stationary_pi_residual(const GameSpec& game, const RiccatiSolution& rs,
                              const Eigen::MatrixXd& pi, const Eigen::MatrixXd& pi_hat,
                              const SolverOptions& opt = {});

/// Max midpoint residual of the backward (π, π̂, η) ODEs over the grid.
double fixed_point_residual(const GameSpec& game, const RiccatiSolution& rs,
                            const FixedPointSolution& fp, const SolverOptions& opt = {});

}  // namespace lqmkv
