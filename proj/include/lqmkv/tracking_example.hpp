#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lqmkv/game.hpp"

namespace lqmkv {

/// Two-player scalar target-tracking game: each player steers a shared
/// Brownian state toward her own target while penalising the variance of
/// the state and of her control:
///   dX = (b₁α₁ + b₂α₂) dt + σ dW,
///   J^i = E ∫ e^{−ρu} [λ^i Var(X) + δ^i (X−T^i)² + θ^i Var(α_i) + ξ^i α_i²] du.
struct TrackingParams {
  std::array<double, 2> lambda{1.0, 1.0};
  std::array<double, 2> delta{1.0, 1.0};
  std::array<double, 2> theta{1.0, 1.0};
  std::array<double, 2> xi{1.0, 1.0};
  std::array<double, 2> target{0.0, 10.0};
  std::array<double, 2> b{1.0, 1.0};
  double sigma = 1.0;
  double rho = 3.0;
  double x0_mean = 0.0;
  double x0_var = 1.0;

  void validate() const;  // ξ>0, θ+ξ>0, ρ>0, λ,δ,θ ≥ 0
};

/// All closed-form quantities of the tracking game (stationary regime):
/// K, Λ from scalar quadratics, (π, π̂) from the printed two-dimensional
/// stationary system, η̄ from the constant-target exponential integral.
/// Computed by direct formula evaluation, independent of the generic
/// solver pipeline.
struct ClosedFormSolution {
  std::array<double, 2> P{}, P_tilde{};
  std::array<double, 2> K{}, Lambda{};
  std::array<double, 2> pi{}, pi_hat{};
  std::array<double, 2> eta_bar{};
  double a = 0.0, a_tilde = 0.0;
  double xbar_inf = 0.0;
  double var_inf = 0.0;
  // player-wise affine law: α_i = gain (x−x̄) + mean_gain x̄ + intercept
  std::array<double, 2> gain{}, mean_gain{}, intercept{};
  // symmetric-case quadratic diagnostics (populated when players symmetric)
  std::optional<std::array<double, 4>> pi_quadratic;      // a, b, c, disc
  std::optional<std::array<double, 4>> pi_hat_quadratic;
};

GameSpec build_game(const TrackingParams& p);
ClosedFormSolution closed_form(const TrackingParams& p);

struct SweepRow {
  double value = 0.0;
  double K1 = 0.0, Lambda1 = 0.0, a = 0.0, a_tilde = 0.0;
  double var_inf = 0.0, xbar_inf = 0.0;
  double gain_norm1 = 0.0;  // max-abs of player 1's (gain, mean_gain, intercept)
  bool ok = true;
  std::string error;
};

enum class SweepParameter { Lambda1, Delta1, Theta1, Xi1 };
std::vector<SweepRow> sweep(const TrackingParams& base, SweepParameter which,
                            const std::vector<double>& values, bool sweep_both_players = false);

/// End-to-end regression: generic pipeline (Riccati → fixed point →
/// equilibrium law) against the closed forms, with per-symbol deltas.
struct CrossCheckReport {
  double dK = 0.0, dLambda = 0.0, dPi = 0.0, dPiHat = 0.0, dEta = 0.0;
  double dGain = 0.0, dMeanGain = 0.0, dIntercept = 0.0;
  double max_delta = 0.0;
  std::string summary() const;
};
CrossCheckReport cross_check(const TrackingParams& p);

}  // namespace lqmkv
