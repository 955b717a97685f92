#pragma once

#include <Eigen/Dense>

#include "lqmkv/game.hpp"
#include "lqmkv/rng.hpp"

namespace lqmkv::testing {

inline MatrixPath c1(double v) {
  return MatrixPath::constant(Eigen::MatrixXd::Constant(1, 1, v));
}

/// Scalar n-player game skeleton with every block zeroed; tests fill in
/// what they need.
inline GameSpec scalar_game(int n, double rho, std::optional<double> horizon) {
  GameSpec g;
  g.dynamics.d = 1;
  g.dynamics.n = n;
  g.dynamics.kappa = 1;
  g.dynamics.control_dims.assign(static_cast<std::size_t>(n), 1);
  g.dynamics.b_x = c1(0.0);
  g.dynamics.b_x_tilde = c1(0.0);
  g.dynamics.beta = c1(0.0);
  g.dynamics.b.assign(static_cast<std::size_t>(n), c1(0.0));
  g.dynamics.b_tilde.assign(static_cast<std::size_t>(n), c1(0.0));
  g.dynamics.sigma_x = {c1(0.0)};
  g.dynamics.sigma_x_tilde = {c1(0.0)};
  g.dynamics.sigma = {std::vector<MatrixPath>(static_cast<std::size_t>(n), c1(0.0))};
  g.dynamics.sigma_tilde = {std::vector<MatrixPath>(static_cast<std::size_t>(n), c1(0.0))};
  g.dynamics.gamma = {c1(0.0)};
  g.cost.rho = rho;
  g.cost.players.resize(static_cast<std::size_t>(n));
  for (auto& pc : g.cost.players) {
    pc.Q = c1(0.0);
    pc.Q_tilde = c1(0.0);
    pc.L_x = c1(0.0);
    pc.I.assign(static_cast<std::size_t>(n), c1(0.0));
    pc.I_tilde.assign(static_cast<std::size_t>(n), c1(0.0));
    pc.N.assign(static_cast<std::size_t>(n), c1(0.0));
    pc.N_tilde.assign(static_cast<std::size_t>(n), c1(0.0));
    pc.G.assign(static_cast<std::size_t>(n),
                std::vector<MatrixPath>(static_cast<std::size_t>(n), c1(0.0)));
    pc.G_tilde = pc.G;
    pc.L.assign(static_cast<std::size_t>(n), c1(0.0));
    pc.P = Eigen::MatrixXd::Zero(1, 1);
    pc.P_tilde = Eigen::MatrixXd::Zero(1, 1);
    pc.r = Eigen::VectorXd::Zero(1);
  }
  g.horizon = horizon;
  g.x0_mean = Eigen::VectorXd::Zero(1);
  g.x0_cov = Eigen::MatrixXd::Zero(1, 1);
  return g;
}

/// Deterministic 2-player scalar game with small random coefficients and no
/// mean-field structure (for the classical-oracle comparisons).
inline GameSpec random_deterministic_game(std::uint64_t seed) {
  RandomStream rng(seed, 99);
  const auto u = [&](double lo, double hi) { return lo + (hi - lo) * rng.next_uniform(); };
  GameSpec g = scalar_game(2, u(0.0, 0.5), 1.5);
  g.dynamics.b_x = c1(u(-0.5, 0.5));
  for (int i = 0; i < 2; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    g.dynamics.b[iu] = c1(u(0.3, 1.2) * (rng.next_uniform() < 0.5 ? -1.0 : 1.0));
    auto& pc = g.cost.players[iu];
    pc.Q = c1(u(0.1, 1.0));
    pc.N[iu] = c1(u(0.4, 1.5));
    pc.I[iu] = c1(u(-0.3, 0.3));
    pc.L_x = c1(u(-0.5, 0.5));
    pc.L[iu] = c1(u(-0.3, 0.3));
    pc.P = Eigen::MatrixXd::Constant(1, 1, u(0.0, 0.8));
    pc.r = Eigen::VectorXd::Constant(1, u(-0.4, 0.4));
  }
  g.x0_mean = Eigen::VectorXd::Constant(1, u(-1.0, 1.0));
  return g;
}

}  // namespace lqmkv::testing
