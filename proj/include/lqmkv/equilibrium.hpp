#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lqmkv/fixed_point.hpp"
#include "lqmkv/law.hpp"

namespace lqmkv {

/// The Nash equilibrium feedback maps. The stacked control satisfies
///   α* − ᾱ* = A_x (X − X̄) + (R − R̄)   and   ᾱ* = Â_x X̄ + R̂,
/// with R − R̄ ≡ 0 for deterministic coefficients, so each player's law is
/// affine: [A_x]_i (x − x̄) + [Â_x]_i x̄ + [R̂]_i.
struct EquilibriumLaw {
  RiccatiSolution riccati;
  FixedPointSolution fixed_point;
  MatrixPath A_x, A_hat_x;  // d_A×d
  MatrixPath R, R_hat;      // d_A×1
  LawProfile players;
  int d = 0;
  std::vector<int> control_dims;

  const AffineLaw& slice(int player) const { return players[static_cast<std::size_t>(player)]; }
};

EquilibriumLaw solve_nash(const GameSpec& game, const SolverOptions& opt = {});

/// Coefficients of one player's value field
///   w^i_t(x, x̄) = (x−x̄)ᵀK_t(x−x̄) + x̄ᵀΛ_t x̄ + 2 Y_tᵀ x + R_t,
/// where the adjoint is affine in the reference state,
/// Y_t = p_t (x*−x̄*) + p̂_t x̄* + e_t. The reference state is the closed
/// loop of the profile the field was built against.
struct ValueField {
  int player = 0;
  MatrixPath K, Lambda;   // d×d
  MatrixPath p, p_hat;    // d×d
  MatrixPath e;           // d×1
  MatrixPath R;           // 1×1

  /// w evaluated with separate played/reference states (they coincide at a
  /// self-consistent profile).
  double w(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& xbar,
           const Eigen::VectorXd& x_ref, const Eigen::VectorXd& xbar_ref) const;
};

/// Adjoint field coefficients (p, p̂, e) of player i for a GIVEN played
/// profile: a linear backward system (the played gains are fixed). The
/// equilibrium slices of (π, π̂, η) solve exactly this system when the
/// profile is the equilibrium.
void profile_field_coeffs(const GameSpec& game, const RiccatiSolution& rs, int player,
                          const LawProfile& profile, const std::vector<double>& grid,
                          MatrixPath& p, MatrixPath& p_hat, MatrixPath& e,
                          const SolverOptions& opt = {});

/// Full field for player i against a played profile, including the R-path
/// integrated from the drift identity (quadrature of the scalar rate on the
/// moment grid). `grid` must cover the horizon (finite) or a long-enough
/// truncation window (infinite; the stationary tail is appended
/// analytically).
ValueField profile_field(const GameSpec& game, const RiccatiSolution& rs, int player,
                         const LawProfile& profile, const std::vector<double>& grid,
                         const MomentPaths& moments, const SolverOptions& opt = {});

/// Field taken directly from the solved fixed point (player-i slices of
/// π, π̂, η); the construction used for equilibrium values.
ValueField field_from_fixed_point(const GameSpec& game, const EquilibriumLaw& eq, int player,
                                  const std::vector<double>& grid, const MomentPaths& moments,
                                  const SolverOptions& opt = {});

/// Analytic drift E[D^{α,i}_t] of the optimality-principle process for a
/// played profile, evaluated from the field and the closed-loop moments.
/// Nonnegative by construction of the field; zero exactly at player i's
/// best response.
double analytic_drift(const GameSpec& game, const RiccatiSolution& rs, const ValueField& field,
                      int player, const LawProfile& profile, double t,
                      const Eigen::VectorXd& xbar, const Eigen::MatrixXd& cov);

/// Best response of one player to the other players' affine laws (the
/// opponents' entries of `opponents` are read; player i's own entry is
/// ignored). Self-consistent feedback form per the fixed-point argument.
struct BestResponseLaw {
  int player = 0;
  AffineLaw law;                 // a^{i,0} + a^{i,1}: gain (x−x̄) + mean_gain x̄ + intercept
  MatrixPath p, p_hat, e;        // underlying adjoint coefficients
};
BestResponseLaw best_response(const GameSpec& game, int player, const LawProfile& opponents,
                              const SolverOptions& opt = {});

/// Equilibrium value J^i = E[W^i_0] = E[(X₀−X̄₀)ᵀK₀(X₀−X̄₀) + X̄₀ᵀΛ₀X̄₀
/// + 2Y₀ᵀX₀ + R₀]; the Y₀-X₀ covariance term is kept exactly.
double value(const GameSpec& game, const EquilibriumLaw& eq, int player,
             const SolverOptions& opt = {});

/// Deterministic mean path x̄ and the central covariance path of the closed
/// loop under a law profile (wrappers over the moment integrator).
MatrixPath mean_state_path(const GameSpec& game, const LawProfile& laws,
                           const std::vector<double>& grid);
MatrixPath dispersion_path(const GameSpec& game, const LawProfile& laws,
                           const std::vector<double>& grid);

/// Grid used for equilibrium analytics: [0, T] for finite horizons, or a
/// truncation window long enough for the discounted tail to fall below
/// opt.eta_truncation for infinite horizons.
std::vector<double> analysis_grid(const GameSpec& game, const SolverOptions& opt = {},
                                  double t_min = 0.0);

}  // namespace lqmkv
