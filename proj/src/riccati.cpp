#include "lqmkv/riccati.hpp"

#include <cmath>

#include "lqmkv/numerics.hpp"

namespace lqmkv {

int SolverOptions::grid_steps(double span) const {
  const int steps = static_cast<int>(std::ceil(steps_per_unit * span));
  return std::max(steps, min_steps);
}

Eigen::MatrixXd RiccatiSolution::K_at(int player, double t) const {
  return K[static_cast<std::size_t>(player)].at_clamped(t);
}
Eigen::MatrixXd RiccatiSolution::Lambda_at(int player, double t) const {
  return Lambda[static_cast<std::size_t>(player)].at_clamped(t);
}

DerivedGains derived_gains(const CoefficientSnapshot& snap, int player,
                           const Eigen::MatrixXd& K, const Eigen::MatrixXd& Lambda) {
  const auto iu = static_cast<std::size_t>(player);
  const auto& cs = snap.cost[iu];
  const int n = snap.n;
  DerivedGains g;
  g.S.resize(static_cast<std::size_t>(n));
  g.S_hat.resize(static_cast<std::size_t>(n));
  g.U.resize(static_cast<std::size_t>(n));
  g.V.resize(static_cast<std::size_t>(n));
  g.J.assign(static_cast<std::size_t>(n), std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(n)));
  g.J_hat = g.J;
  for (int k = 0; k < n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    Eigen::MatrixXd S = cs.N[ku];
    Eigen::MatrixXd Sh = cs.N_hat[ku];
    Eigen::MatrixXd U = cs.I[ku] + snap.b[ku].transpose() * K;
    Eigen::MatrixXd V = cs.I_hat[ku] + snap.b_hat[ku].transpose() * Lambda;
    for (int l = 0; l < snap.kappa; ++l) {
      const auto lu = static_cast<std::size_t>(l);
      S += snap.sigma[lu][ku].transpose() * K * snap.sigma[lu][ku];
      Sh += snap.sigma_hat[lu][ku].transpose() * K * snap.sigma_hat[lu][ku];
      U += snap.sigma[lu][ku].transpose() * K * snap.sigma_x[lu];
      V += snap.sigma_hat[lu][ku].transpose() * K * snap.sigma_x_hat[lu];
    }
    g.S[ku] = symmetrize(S);
    g.S_hat[ku] = symmetrize(Sh);
    g.U[ku] = std::move(U);
    g.V[ku] = std::move(V);
    for (int m = 0; m < n; ++m) {
      const auto mu = static_cast<std::size_t>(m);
      if (m == k) {
        g.J[ku][mu] = Eigen::MatrixXd::Zero(snap.control_dims[ku], snap.control_dims[mu]);
        g.J_hat[ku][mu] = g.J[ku][mu];
        continue;
      }
      Eigen::MatrixXd J = cs.G[ku][mu];
      Eigen::MatrixXd Jh = cs.G_hat[ku][mu];
      for (int l = 0; l < snap.kappa; ++l) {
        const auto lu = static_cast<std::size_t>(l);
        J += snap.sigma[lu][ku].transpose() * K * snap.sigma[lu][mu];
        Jh += snap.sigma_hat[lu][ku].transpose() * K * snap.sigma_hat[lu][mu];
      }
      g.J[ku][mu] = std::move(J);
      g.J_hat[ku][mu] = std::move(Jh);
    }
  }
  return g;
}

DerivedGains derived_gains(const GameSpec& game, const RiccatiSolution& rs, int player, double t) {
  return derived_gains(sample(game, t), player, rs.K_at(player, t), rs.Lambda_at(player, t));
}

Eigen::MatrixXd riccati_residual_K(const CoefficientSnapshot& snap, int player, double rho,
                                   const Eigen::MatrixXd& K) {
  const auto iu = static_cast<std::size_t>(player);
  const auto& cs = snap.cost[iu];
  Eigen::MatrixXd phi = cs.Q + K * snap.b_x + snap.b_x.transpose() * K - rho * K;
  Eigen::MatrixXd S = cs.N[iu];
  Eigen::MatrixXd U = cs.I[iu] + snap.b[iu].transpose() * K;
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    phi += snap.sigma_x[lu].transpose() * K * snap.sigma_x[lu];
    S += snap.sigma[lu][iu].transpose() * K * snap.sigma[lu][iu];
    U += snap.sigma[lu][iu].transpose() * K * snap.sigma_x[lu];
  }
  phi -= U.transpose() * S.ldlt().solve(U);
  return symmetrize(phi);
}

Eigen::MatrixXd riccati_residual_Lambda(const CoefficientSnapshot& snap, int player, double rho,
                                        const Eigen::MatrixXd& K, const Eigen::MatrixXd& Lambda) {
  const auto iu = static_cast<std::size_t>(player);
  const auto& cs = snap.cost[iu];
  Eigen::MatrixXd psi =
      cs.Q_hat + Lambda * snap.b_x_hat + snap.b_x_hat.transpose() * Lambda - rho * Lambda;
  Eigen::MatrixXd Sh = cs.N_hat[iu];
  Eigen::MatrixXd V = cs.I_hat[iu] + snap.b_hat[iu].transpose() * Lambda;
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    psi += snap.sigma_x_hat[lu].transpose() * K * snap.sigma_x_hat[lu];
    Sh += snap.sigma_hat[lu][iu].transpose() * K * snap.sigma_hat[lu][iu];
    V += snap.sigma_hat[lu][iu].transpose() * K * snap.sigma_x_hat[lu];
  }
  psi -= V.transpose() * Sh.ldlt().solve(V);
  return symmetrize(psi);
}

namespace {

// Common backward-Riccati driver for the K and Λ layers.
MatrixPath integrate_riccati(const GameSpec& game, int player, const std::vector<double>& grid,
                             const Eigen::MatrixXd& terminal, const SolverOptions& opt,
                             bool lambda_layer, const MatrixPath* K_path) {
  const int d = game.d();
  const auto iu = static_cast<std::size_t>(player);
  const OdeRhs rhs = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    const Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(y.data(), d, d);
    const auto snap = sample(game, t);
    // Invertibility guard with a time stamp; the residual helpers assume a
    // healthy S.
    {
      Eigen::MatrixXd S;
      if (!lambda_layer) {
        S = snap.cost[iu].N[iu];
        for (int l = 0; l < snap.kappa; ++l)
          S += snap.sigma[static_cast<std::size_t>(l)][iu].transpose() * m *
               snap.sigma[static_cast<std::size_t>(l)][iu];
      } else {
        const Eigen::MatrixXd K = K_path->at_clamped(t);
        S = snap.cost[iu].N_hat[iu];
        for (int l = 0; l < snap.kappa; ++l)
          S += snap.sigma_hat[static_cast<std::size_t>(l)][iu].transpose() * K *
               snap.sigma_hat[static_cast<std::size_t>(l)][iu];
      }
      if (condition_number(S) > opt.cond_limit)
        throw SolverError(std::string(lambda_layer ? "solve_Lambda" : "solve_K") +
                              ": effective control weight singular at t=" + std::to_string(t),
                          t);
    }
    Eigen::MatrixXd dm;
    if (!lambda_layer) {
      dm = -riccati_residual_K(snap, player, game.cost.rho, m);
    } else {
      dm = -riccati_residual_Lambda(snap, player, game.cost.rho, K_path->at_clamped(t), m);
    }
    return Eigen::Map<const Eigen::VectorXd>(dm.data(), dm.size());
  };

  const auto symmetrize_state = [d](Eigen::VectorXd& y) {
    Eigen::Map<Eigen::MatrixXd> m(y.data(), d, d);
    m = 0.5 * (m + m.transpose()).eval();
  };

  const Eigen::VectorXd term = Eigen::Map<const Eigen::VectorXd>(terminal.data(), terminal.size());
  const auto states = integrate_backward(rhs, grid, term, symmetrize_state);

  std::vector<Eigen::MatrixXd> vals(states.size());
  for (std::size_t m = 0; m < states.size(); ++m) {
    vals[m] = Eigen::Map<const Eigen::MatrixXd>(states[m].data(), d, d);
    const double sym = max_abs(vals[m] - vals[m].transpose());
    if (sym > opt.sym_tol)
      throw SolverError("riccati: symmetry drift beyond tolerance at t=" + std::to_string(grid[m]),
                        grid[m]);
    if (min_eigenvalue(vals[m]) < opt.psd_tol)
      throw SolverError(std::string(lambda_layer ? "solve_Lambda" : "solve_K") +
                            ": PSD violation at t=" + std::to_string(grid[m]) +
                            " (assumption failure)",
                        grid[m]);
  }
  return MatrixPath(grid, std::move(vals));
}

// Pseudo-horizon limit for the stationary layers: repeatedly integrates the
// finite-horizon equation backward over unit chunks until the drift stalls.
Eigen::MatrixXd pseudo_horizon_limit(
    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& minus_rate,
    const Eigen::MatrixXd& start, const SolverOptions& opt, const char* what) {
  const int d = static_cast<int>(start.rows());
  Eigen::MatrixXd K = start;
  const double dt = 1.0 / opt.steps_per_unit;
  double elapsed = 0.0;
  const OdeRhs rhs = [&](double, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    const Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(y.data(), d, d);
    const Eigen::MatrixXd dm = minus_rate(m);
    return Eigen::Map<const Eigen::VectorXd>(dm.data(), dm.size());
  };
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(K.data(), K.size());
  while (elapsed < opt.max_pseudo_horizon) {
    for (int s = 0; s < static_cast<int>(opt.steps_per_unit); ++s) {
      y = rk4_step(rhs, 0.0, y, dt);  // autonomous: backward time re-labelled
      Eigen::Map<Eigen::MatrixXd> m(y.data(), d, d);
      m = 0.5 * (m + m.transpose()).eval();
    }
    elapsed += 1.0;
    K = Eigen::Map<const Eigen::MatrixXd>(y.data(), d, d);
    if (max_abs(minus_rate(K)) < opt.stationarity_tol) return K;
  }
  throw SolverError(std::string(what) + ": stationary Riccati did not converge within the pseudo"
                    " horizon");
}

// Newton polish over the upper-triangular parameterisation of a symmetric
// matrix equation F(K) = 0.
Eigen::MatrixXd polish_symmetric(
    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& F, Eigen::MatrixXd K,
    const SolverOptions& opt, const char* what) {
  const int d = static_cast<int>(K.rows());
  const int nsym = d * (d + 1) / 2;
  const auto to_vec = [&](const Eigen::MatrixXd& m) {
    Eigen::VectorXd v(nsym);
    int idx = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) v[idx++] = m(i, j);
    return v;
  };
  const auto to_mat = [&](const Eigen::VectorXd& v) {
    Eigen::MatrixXd m(d, d);
    int idx = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) m(i, j) = m(j, i) = v[idx++];
    return m;
  };
  Eigen::VectorXd x = to_vec(K);
  const double res = newton_solve([&](const Eigen::VectorXd& v) { return to_vec(F(to_mat(v))); },
                                  x, opt.newton_max_iter, opt.newton_tol);
  if (res > opt.algebraic_residual_tol)
    throw SolverError(std::string(what) + ": Newton polish left residual " + std::to_string(res));
  return to_mat(x);
}

}  // namespace

MatrixPath solve_K(const GameSpec& game, int player, const std::vector<double>& grid,
                   const SolverOptions& opt) {
  const auto& P = game.cost.players[static_cast<std::size_t>(player)].P;
  return integrate_riccati(game, player, grid, P, opt, false, nullptr);
}

MatrixPath solve_Lambda(const GameSpec& game, int player, const MatrixPath& K,
                        const std::vector<double>& grid, const SolverOptions& opt) {
  const auto& pc = game.cost.players[static_cast<std::size_t>(player)];
  const Eigen::MatrixXd Phat = pc.P + pc.P_tilde;
  return integrate_riccati(game, player, grid, Phat, opt, true, &K);
}

Eigen::MatrixXd solve_K_infinite(const GameSpec& game, int player, const SolverOptions& opt) {
  const auto snap = sample(game, 0.0);
  const double rho = game.cost.rho;
  const auto F = [&](const Eigen::MatrixXd& K) {
    return riccati_residual_K(snap, player, rho, K);
  };
  Eigen::MatrixXd K0 = Eigen::MatrixXd::Zero(game.d(), game.d());
  Eigen::MatrixXd K = pseudo_horizon_limit(F, K0, opt, "solve_K_infinite");
  K = polish_symmetric(F, K, opt, "solve_K_infinite");
  if (min_eigenvalue(K) < opt.psd_tol)
    throw SolverError("solve_K_infinite: stationary K is not PSD");
  return K;
}

Eigen::MatrixXd solve_Lambda_infinite(const GameSpec& game, int player, const Eigen::MatrixXd& K,
                                      const SolverOptions& opt) {
  const auto snap = sample(game, 0.0);
  const double rho = game.cost.rho;
  const auto F = [&](const Eigen::MatrixXd& L) {
    return riccati_residual_Lambda(snap, player, rho, K, L);
  };
  Eigen::MatrixXd L0 = Eigen::MatrixXd::Zero(game.d(), game.d());
  Eigen::MatrixXd L = pseudo_horizon_limit(F, L0, opt, "solve_Lambda_infinite");
  L = polish_symmetric(F, L, opt, "solve_Lambda_infinite");
  if (min_eigenvalue(L) < opt.psd_tol)
    throw SolverError("solve_Lambda_infinite: stationary Lambda is not PSD");
  return L;
}

RiccatiSolution solve_riccati(const GameSpec& game, const SolverOptions& opt) {
  RiccatiSolution rs;
  const int n = game.n_players();
  rs.K.resize(static_cast<std::size_t>(n));
  rs.Lambda.resize(static_cast<std::size_t>(n));
  if (game.finite()) {
    const double T = *game.horizon;
    rs.grid = uniform_grid(0.0, T, opt.grid_steps(T));
    for (int i = 0; i < n; ++i) {
      rs.K[static_cast<std::size_t>(i)] = solve_K(game, i, rs.grid, opt);
      rs.Lambda[static_cast<std::size_t>(i)] =
          solve_Lambda(game, i, rs.K[static_cast<std::size_t>(i)], rs.grid, opt);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const Eigen::MatrixXd K = solve_K_infinite(game, i, opt);
      rs.K[static_cast<std::size_t>(i)] = MatrixPath::constant(K);
      rs.Lambda[static_cast<std::size_t>(i)] =
          MatrixPath::constant(solve_Lambda_infinite(game, i, K, opt));
    }
  }
  return rs;
}

}  // namespace lqmkv
