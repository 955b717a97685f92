#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "lqmkv/matrix_path.hpp"

namespace lqmkv {

/// Drift and volatility coefficients of the controlled mean-field dynamics
///   dX = [β + b_x X + b̃_x X̄ + Σ_k (b_k α_k + b̃_k ᾱ_k)] dt
///      + Σ_ℓ [γ^ℓ + σ^ℓ_x X + σ̃^ℓ_x X̄ + Σ_k (σ^ℓ_k α_k + σ̃^ℓ_k ᾱ_k)] dW^ℓ.
/// All paths are deterministic functions of time (stochastic affine
/// coefficients are out of scope for this artifact).
struct DynamicsSpec {
  int d = 0;                         // state dimension
  int n = 0;                         // number of players
  int kappa = 1;                     // number of Brownian motions
  std::vector<int> control_dims;     // d_i per player

  MatrixPath b_x, b_x_tilde;                             // d×d
  std::vector<MatrixPath> b, b_tilde;                    // per player, d×d_i
  std::vector<MatrixPath> sigma_x, sigma_x_tilde;        // per noise, d×d
  std::vector<std::vector<MatrixPath>> sigma, sigma_tilde;  // [noise][player], d×d_i
  MatrixPath beta;                                       // d×1
  std::vector<MatrixPath> gamma;                         // per noise, d×1

  int total_control_dim() const;
  int control_offset(int player) const;  // row offset of player i inside stacked controls
};

/// One player's cost blocks. The running cost pairs deviations with plain
/// blocks and means with hatted blocks:
///   f^i = (x−x̄)ᵀQ(x−x̄) + x̄ᵀQ̂x̄ + Σ_k [a_kᵀI_k(x−x̄) + ā_kᵀÎ_k x̄]
///       + Σ_k [(a_k−ā_k)ᵀN_k(a_k−ā_k) + ā_kᵀN̂_k ā_k]
///       + Σ_{k≠l} [(a_k−ā_k)ᵀG_{k,l}(a_l−ā_l) + ā_kᵀĜ_{k,l} ā_l]
///       + 2 L_xᵀ x + 2 Σ_k L_kᵀ a_k,
/// with terminal (x−x̄)ᵀP(x−x̄) + x̄ᵀP̂x̄ + 2rᵀx on finite horizons.
struct PlayerCost {
  MatrixPath Q, Q_tilde;                        // d×d, symmetric
  std::vector<MatrixPath> I, I_tilde;           // per k, d_k×d
  std::vector<MatrixPath> N, N_tilde;           // per k, d_k×d_k, symmetric
  std::vector<std::vector<MatrixPath>> G, G_tilde;  // [k][l], d_k×d_l, empty diagonal
  MatrixPath L_x;                               // d×1
  std::vector<MatrixPath> L;                    // per k, d_k×1
  Eigen::MatrixXd P, P_tilde;                   // d×d, symmetric constants
  Eigen::VectorXd r;                            // d
};

struct CostSpec {
  std::vector<PlayerCost> players;
  double rho = 0.0;  // nonnegative discount
};

struct GameSpec {
  DynamicsSpec dynamics;
  CostSpec cost;
  std::optional<double> horizon;  // nullopt = infinite
  Eigen::VectorXd x0_mean;
  Eigen::MatrixXd x0_cov;

  bool finite() const { return horizon.has_value(); }
  int d() const { return dynamics.d; }
  int n_players() const { return dynamics.n; }
  int control_dim(int i) const { return dynamics.control_dims[static_cast<std::size_t>(i)]; }
  int total_control_dim() const { return dynamics.total_control_dim(); }

  /// Structural validation: shapes against declared dimensions, symmetry of
  /// declared-symmetric blocks (tolerance 1e-12 at every grid point), PSD
  /// x0_cov, horizon coverage, and (infinite horizon) constancy of every
  /// path except L_x and L_k. Throws DimensionError on violation.
  void validate_structure() const;
};

/// All coefficients evaluated at one time, with hatted (C + C̃) variants and
/// stacked control blocks.
struct CoefficientSnapshot {
  double t = 0.0;
  int d = 0, n = 0, kappa = 0;
  std::vector<int> control_dims;
  std::vector<int> control_offsets;
  int d_a = 0;  // total control dimension

  Eigen::MatrixXd b_x, b_x_tilde, b_x_hat;
  std::vector<Eigen::MatrixXd> b, b_tilde, b_hat;
  std::vector<Eigen::MatrixXd> sigma_x, sigma_x_tilde, sigma_x_hat;          // per noise
  std::vector<std::vector<Eigen::MatrixXd>> sigma, sigma_tilde, sigma_hat;   // [noise][player]
  Eigen::VectorXd beta;
  std::vector<Eigen::VectorXd> gamma;                                        // per noise
  Eigen::MatrixXd B, B_tilde, B_hat;                    // d×d_A stacked controls
  std::vector<Eigen::MatrixXd> Sigma, Sigma_tilde, Sigma_hat;  // per noise, d×d_A

  struct PlayerCostSnap {
    Eigen::MatrixXd Q, Q_tilde, Q_hat;
    std::vector<Eigen::MatrixXd> I, I_hat;
    std::vector<Eigen::MatrixXd> N, N_hat;
    std::vector<std::vector<Eigen::MatrixXd>> G, G_hat;  // zero blocks on the diagonal
    Eigen::VectorXd L_x;
    std::vector<Eigen::VectorXd> L;
    Eigen::MatrixXd P, P_hat;
    Eigen::VectorXd r;
  };
  std::vector<PlayerCostSnap> cost;
};

/// Coefficients interpolated at t. Finite horizon requires t in [0, T]
/// (RangeError otherwise); infinite horizon requires t >= 0 and clamps any
/// time-varying L-path beyond its last sample.
CoefficientSnapshot sample(const GameSpec& game, double t);

struct AssumptionCheck {
  std::string name;
  int player = -1;       // -1 for game-wide checks
  bool pass = false;
  double margin = 0.0;   // smallest eigenvalue / slack; positive is healthy
  double worst_time = 0.0;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;
  bool all_pass() const;
  std::string summary() const;
};

/// Evaluates the standing conditions on the cost blocks: for every player,
/// min eig N^i_i > 0, P^i ⪰ 0, Q^i − I^iᵀ_i (N^i_i)⁻¹ I^i_i ⪰ 0 and the same
/// for hatted blocks; infinite horizon additionally checks coefficient
/// constancy and the discount margin
/// ρ − 2(|b_x| + |b̃_x| + 8 Σ_ℓ (|σ^ℓ_x|² + |σ̃^ℓ_x|²)) > 0 in operator norms.
/// Singular N is reported as a failed check, never thrown.
AssumptionReport validate_assumptions(const GameSpec& game);

}  // namespace lqmkv
