#include "lqmkv/equilibrium.hpp"

#include <cmath>

#include "lqmkv/numerics.hpp"

namespace lqmkv {

namespace {

// Per-player quantities reused by the adjoint-field machinery at one time.
struct FieldContext {
  int i = 0, d = 0, d_a = 0, di = 0, oi = 0;
  double rho = 0.0;
  CoefficientSnapshot snap;
  DerivedGains gains;
  Eigen::MatrixXd K, Lambda;
  Eigen::MatrixXd UtSinv;   // U^{iᵀ}_i (S^i_i)⁻¹, d×d_i
  Eigen::MatrixXd VtShinv;  // V^{iᵀ}_i (Ŝ^i_i)⁻¹, d×d_i
  Eigen::MatrixXd G_y, G_y_hat;               // d×d
  std::vector<Eigen::MatrixXd> G_z, G_z_hat;  // per noise, d×d
  std::vector<Eigen::MatrixXd> T, T_hat;      // per opponent k (empty at k = i), d×d_k
  Eigen::VectorXd F_hat;                      // d
};

FieldContext field_context(const GameSpec& game, const RiccatiSolution& rs, int player, double t,
                           const SolverOptions& opt) {
  FieldContext fc;
  fc.i = player;
  fc.rho = game.cost.rho;
  fc.snap = sample(game, t);
  fc.d = fc.snap.d;
  fc.d_a = fc.snap.d_a;
  const auto iu = static_cast<std::size_t>(player);
  fc.di = fc.snap.control_dims[iu];
  fc.oi = fc.snap.control_offsets[iu];
  fc.K = rs.K_at(player, t);
  fc.Lambda = rs.Lambda_at(player, t);
  fc.gains = derived_gains(fc.snap, player, fc.K, fc.Lambda);

  const Eigen::MatrixXd& S = fc.gains.S[iu];
  const Eigen::MatrixXd& Sh = fc.gains.S_hat[iu];
  if (condition_number(S) > opt.cond_limit || condition_number(Sh) > opt.cond_limit)
    throw SolverError("field: effective control weight singular at t=" + std::to_string(t), t);
  fc.UtSinv = S.ldlt().solve(fc.gains.U[iu]).transpose();
  fc.VtShinv = Sh.ldlt().solve(fc.gains.V[iu]).transpose();

  const Eigen::MatrixXd Id = Eigen::MatrixXd::Identity(fc.d, fc.d);
  fc.G_y = fc.rho * Id - fc.snap.b_x.transpose() + fc.UtSinv * fc.snap.b[iu].transpose();
  fc.G_y_hat =
      fc.rho * Id - fc.snap.b_x_hat.transpose() + fc.VtShinv * fc.snap.b_hat[iu].transpose();
  fc.G_z.resize(static_cast<std::size_t>(fc.snap.kappa));
  fc.G_z_hat.resize(static_cast<std::size_t>(fc.snap.kappa));
  for (int l = 0; l < fc.snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    fc.G_z[lu] = -fc.snap.sigma_x[lu].transpose() + fc.UtSinv * fc.snap.sigma[lu][iu].transpose();
    fc.G_z_hat[lu] =
        -fc.snap.sigma_x_hat[lu].transpose() + fc.VtShinv * fc.snap.sigma_hat[lu][iu].transpose();
  }
  fc.T.resize(static_cast<std::size_t>(fc.snap.n));
  fc.T_hat.resize(static_cast<std::size_t>(fc.snap.n));
  for (int k = 0; k < fc.snap.n; ++k) {
    if (k == player) continue;
    const auto ku = static_cast<std::size_t>(k);
    fc.T[ku] = -fc.gains.U[ku].transpose() +
               0.5 * fc.UtSinv * (fc.gains.J[iu][ku] + fc.gains.J[ku][iu].transpose());
    fc.T_hat[ku] =
        -fc.gains.V[ku].transpose() +
        0.5 * fc.VtShinv * (fc.gains.J_hat[iu][ku] + fc.gains.J_hat[ku][iu].transpose());
  }
  Eigen::VectorXd own = fc.snap.cost[iu].L[iu];
  fc.F_hat = -fc.snap.cost[iu].L_x - fc.Lambda * fc.snap.beta;
  for (int l = 0; l < fc.snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    own += fc.snap.sigma_hat[lu][iu].transpose() * fc.K * fc.snap.gamma[lu];
    fc.F_hat -= fc.snap.sigma_x_hat[lu].transpose() * fc.K * fc.snap.gamma[lu];
  }
  fc.F_hat += fc.VtShinv * own;
  return fc;
}

// Backward rates of (p, p̂, e) given the stacked gains and intercepts of the
// whole played profile.
void field_rates(const FieldContext& fc, const Eigen::MatrixXd& p, const Eigen::MatrixXd& p_hat,
                 const Eigen::VectorXd& e, const Eigen::MatrixXd& gain_full,
                 const Eigen::MatrixXd& mean_gain_full, const Eigen::VectorXd& intercept_full,
                 Eigen::MatrixXd& p_dot, Eigen::MatrixXd& p_hat_dot, Eigen::VectorXd& e_dot) {
  const auto& snap = fc.snap;
  p_dot = -p * (snap.b_x + snap.B * gain_full) + fc.G_y * p;
  p_hat_dot = -p_hat * (snap.b_x_hat + snap.B_hat * mean_gain_full) + fc.G_y_hat * p_hat;
  e_dot = -p_hat * (snap.beta + snap.B_hat * intercept_full) + fc.G_y_hat * e + fc.F_hat;
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    p_dot += fc.G_z[lu] * p * (snap.sigma_x[lu] + snap.Sigma[lu] * gain_full);
    p_hat_dot += fc.G_z_hat[lu] * p * (snap.sigma_x_hat[lu] + snap.Sigma_hat[lu] * mean_gain_full);
    e_dot += fc.G_z_hat[lu] * p * (snap.gamma[lu] + snap.Sigma_hat[lu] * intercept_full);
  }
  for (int k = 0; k < snap.n; ++k) {
    if (k == fc.i) continue;
    const auto ku = static_cast<std::size_t>(k);
    const int ok = snap.control_offsets[ku];
    const int dk = snap.control_dims[ku];
    p_dot += fc.T[ku] * gain_full.middleRows(ok, dk);
    p_hat_dot += fc.T_hat[ku] * mean_gain_full.middleRows(ok, dk);
    e_dot += fc.T_hat[ku] * intercept_full.segment(ok, dk);
  }
}

// Player i's own affine blocks implied by (p, p̂, e) and the opponents'
// blocks: the self-consistent feedback form of the best response.
void own_law(const FieldContext& fc, const Eigen::MatrixXd& p, const Eigen::MatrixXd& p_hat,
             const Eigen::VectorXd& e, const Eigen::MatrixXd& opp_gain,
             const Eigen::MatrixXd& opp_mean_gain, const Eigen::VectorXd& opp_intercept,
             Eigen::MatrixXd& theta, Eigen::MatrixXd& theta_hat, Eigen::VectorXd& c,
             const SolverOptions& opt) {
  const auto& snap = fc.snap;
  const auto iu = static_cast<std::size_t>(fc.i);
  Eigen::MatrixXd A = fc.gains.S[iu];
  Eigen::MatrixXd A_hat = fc.gains.S_hat[iu];
  Eigen::MatrixXd rhs = fc.gains.U[iu] + snap.b[iu].transpose() * p;
  Eigen::MatrixXd rhs_hat = fc.gains.V[iu] + snap.b_hat[iu].transpose() * p_hat;
  Eigen::VectorXd rhs_c = snap.cost[iu].L[iu] + snap.b_hat[iu].transpose() * e;
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    A += snap.sigma[lu][iu].transpose() * p * snap.sigma[lu][iu];
    A_hat += snap.sigma_hat[lu][iu].transpose() * p * snap.sigma_hat[lu][iu];
    rhs += snap.sigma[lu][iu].transpose() * p * (snap.sigma_x[lu] + snap.Sigma[lu] * opp_gain);
    rhs_hat += snap.sigma_hat[lu][iu].transpose() * p *
               (snap.sigma_x_hat[lu] + snap.Sigma_hat[lu] * opp_mean_gain);
    rhs_c += snap.sigma_hat[lu][iu].transpose() *
             (p * (snap.gamma[lu] + snap.Sigma_hat[lu] * opp_intercept) + fc.K * snap.gamma[lu]);
  }
  for (int k = 0; k < snap.n; ++k) {
    if (k == fc.i) continue;
    const auto ku = static_cast<std::size_t>(k);
    const int ok = snap.control_offsets[ku];
    const int dk = snap.control_dims[ku];
    const Eigen::MatrixXd Jsym = 0.5 * (fc.gains.J[iu][ku] + fc.gains.J[ku][iu].transpose());
    const Eigen::MatrixXd Jsym_hat =
        0.5 * (fc.gains.J_hat[iu][ku] + fc.gains.J_hat[ku][iu].transpose());
    rhs += Jsym * opp_gain.middleRows(ok, dk);
    rhs_hat += Jsym_hat * opp_mean_gain.middleRows(ok, dk);
    rhs_c += Jsym_hat * opp_intercept.segment(ok, dk);
  }
  if (condition_number(A) > opt.cond_limit || condition_number(A_hat) > opt.cond_limit)
    throw SolverError(
        "best_response: own-control system singular at t=" + std::to_string(fc.snap.t),
        fc.snap.t);
  theta = -A.partialPivLu().solve(rhs);
  theta_hat = -A_hat.partialPivLu().solve(rhs_hat);
  c = -A_hat.partialPivLu().solve(rhs_c);
}

void opponents_blocks(const ProfileAt& prof, int oi, int di, Eigen::MatrixXd& gain,
                      Eigen::MatrixXd& mean_gain, Eigen::VectorXd& intercept) {
  gain = prof.gain;
  mean_gain = prof.mean_gain;
  intercept = prof.intercept;
  gain.middleRows(oi, di).setZero();
  mean_gain.middleRows(oi, di).setZero();
  intercept.segment(oi, di).setZero();
}

MatrixPath slice_rows(const MatrixPath& path, int off, int rows) {
  if (path.is_constant()) return MatrixPath::constant(path.value().middleRows(off, rows).eval());
  std::vector<Eigen::MatrixXd> vals(path.values().size());
  for (std::size_t m = 0; m < vals.size(); ++m) vals[m] = path.values()[m].middleRows(off, rows);
  return MatrixPath(path.grid(), std::move(vals));
}

}  // namespace

EquilibriumLaw solve_nash(const GameSpec& game, const SolverOptions& opt) {
  EquilibriumLaw eq;
  eq.d = game.d();
  eq.control_dims = game.dynamics.control_dims;
  eq.riccati = solve_riccati(game, opt);
  eq.fixed_point = solve_fixed_point(game, eq.riccati, opt);

  const int dA = game.total_control_dim();
  const Eigen::MatrixXd IdA = Eigen::MatrixXd::Identity(dA, dA);

  const auto law_at = [&](double t, Eigen::MatrixXd& A_x, Eigen::MatrixXd& A_hat_x,
                          Eigen::VectorXd& R, Eigen::VectorXd& R_hat) {
    const auto bs = assemble_blocks(game, eq.riccati, t, opt);
    const auto snap = sample(game, t);
    const Eigen::MatrixXd pi = eq.fixed_point.pi.at_clamped(t);
    const Eigen::MatrixXd pi_hat = eq.fixed_point.pi_hat.at_clamped(t);
    const Eigen::VectorXd eta = eq.fixed_point.eta.at_clamped(t);
    Eigen::MatrixXd M = IdA, M_hat = IdA;
    Eigen::MatrixXd rhs = bs.S_x + bs.S_y * pi;
    Eigen::MatrixXd rhs_hat = bs.S_hat_x + bs.S_hat_y * pi_hat;
    Eigen::VectorXd rv = bs.H + bs.S_y * eta;  // η ≡ η̄ under deterministic data
    Eigen::VectorXd rv_hat = bs.H_hat + bs.S_hat_y * eta;
    for (int l = 0; l < snap.kappa; ++l) {
      const auto lu = static_cast<std::size_t>(l);
      M -= bs.S_z[lu] * pi * snap.Sigma[lu];
      M_hat -= bs.S_hat_z[lu] * pi * snap.Sigma_hat[lu];
      rhs += bs.S_z[lu] * pi * snap.sigma_x[lu];
      rhs_hat += bs.S_hat_z[lu] * pi * snap.sigma_x_hat[lu];
      rv += bs.S_z[lu] * pi * snap.gamma[lu];
      rv_hat += bs.S_hat_z[lu] * pi * snap.gamma[lu];
    }
    if (condition_number(M) > opt.cond_limit || condition_number(M_hat) > opt.cond_limit)
      throw SolverError("solve_nash: feedback system ill-posed at t=" + std::to_string(t), t);
    const auto Mlu = M.partialPivLu();
    const auto Mhlu = M_hat.partialPivLu();
    A_x = Mlu.solve(rhs);
    A_hat_x = Mhlu.solve(rhs_hat);
    R = Mlu.solve(rv);
    R_hat = Mhlu.solve(rv_hat);
  };

  if (game.finite()) {
    const auto& grid = eq.riccati.grid;
    std::vector<Eigen::MatrixXd> ax(grid.size()), ahx(grid.size()), rr(grid.size()),
        rh(grid.size());
    for (std::size_t m = 0; m < grid.size(); ++m) {
      Eigen::MatrixXd A_x, A_hat_x;
      Eigen::VectorXd R, R_hat;
      law_at(grid[m], A_x, A_hat_x, R, R_hat);
      ax[m] = A_x;
      ahx[m] = A_hat_x;
      rr[m] = R;
      rh[m] = R_hat;
    }
    eq.A_x = MatrixPath(grid, std::move(ax));
    eq.A_hat_x = MatrixPath(grid, std::move(ahx));
    eq.R = MatrixPath(grid, std::move(rr));
    eq.R_hat = MatrixPath(grid, std::move(rh));
  } else {
    Eigen::MatrixXd A_x, A_hat_x;
    Eigen::VectorXd R, R_hat;
    law_at(0.0, A_x, A_hat_x, R, R_hat);
    eq.A_x = MatrixPath::constant(A_x);
    eq.A_hat_x = MatrixPath::constant(A_hat_x);
    eq.R = MatrixPath::constant(R);
    eq.R_hat = MatrixPath::constant(R_hat);
  }

  eq.players.reserve(static_cast<std::size_t>(game.n_players()));
  for (int i = 0; i < game.n_players(); ++i) {
    const int oi = game.dynamics.control_offset(i);
    const int di = game.control_dim(i);
    AffineLaw law;
    law.gain = slice_rows(eq.A_x, oi, di);
    law.mean_gain = slice_rows(eq.A_hat_x, oi, di);
    law.intercept = slice_rows(eq.R_hat, oi, di);  // deviation intercept R − R̄ vanishes
    eq.players.push_back(std::move(law));
  }
  return eq;
}

double ValueField::w(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& xbar,
                     const Eigen::VectorXd& x_ref, const Eigen::VectorXd& xbar_ref) const {
  const Eigen::VectorXd xd = x - xbar;
  const Eigen::VectorXd y =
      p.at_clamped(t) * (x_ref - xbar_ref) + p_hat.at_clamped(t) * xbar_ref + e.at_clamped(t);
  return xd.dot(K.at_clamped(t) * xd) + xbar.dot(Lambda.at_clamped(t) * xbar) + 2.0 * y.dot(x) +
         R.at_clamped(t)(0, 0);
}

void profile_field_coeffs(const GameSpec& game, const RiccatiSolution& rs, int player,
                          const LawProfile& profile, const std::vector<double>& grid,
                          MatrixPath& p, MatrixPath& p_hat, MatrixPath& e,
                          const SolverOptions& opt) {
  const int d = game.d();
  const auto rhs = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    const auto fc = field_context(game, rs, player, t, opt);
    const auto prof = profile_at(profile, t);
    std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(d, d), Eigen::MatrixXd(d, d),
                                    Eigen::MatrixXd(d, 1)};
    unpack(y, ms);
    Eigen::MatrixXd pd, phd;
    Eigen::VectorXd ed;
    field_rates(fc, ms[0], ms[1], ms[2], prof.gain, prof.mean_gain, prof.intercept, pd, phd, ed);
    return pack({pd, phd, Eigen::MatrixXd(ed)});
  };

  const auto& r = game.cost.players[static_cast<std::size_t>(player)].r;
  if (game.finite()) {
    const Eigen::VectorXd terminal =
        pack({Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd(r)});
    const auto states = integrate_backward(rhs, grid, terminal);
    std::vector<Eigen::MatrixXd> ps(grid.size()), phs(grid.size()), es(grid.size());
    for (std::size_t m = 0; m < grid.size(); ++m) {
      std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(d, d), Eigen::MatrixXd(d, d),
                                      Eigen::MatrixXd(d, 1)};
      unpack(states[m], ms);
      ps[m] = ms[0];
      phs[m] = ms[1];
      es[m] = ms[2];
    }
    p = MatrixPath(grid, std::move(ps));
    p_hat = MatrixPath(grid, std::move(phs));
    e = MatrixPath(grid, std::move(es));
    return;
  }

  Eigen::VectorXd y =
      pack({Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd(r)});
  const auto rate0 = [&](const Eigen::VectorXd& v) { return rhs(0.0, v); };
  const OdeRhs back = [&](double, const Eigen::VectorXd& v) { return (-rate0(v)).eval(); };
  const double dt = 1.0 / opt.steps_per_unit;
  double elapsed = 0.0;
  while (elapsed < opt.max_pseudo_horizon) {
    for (int s = 0; s < static_cast<int>(opt.steps_per_unit); ++s) y = rk4_step(back, 0.0, y, dt);
    elapsed += 1.0;
    if (rate0(y).lpNorm<Eigen::Infinity>() < opt.stationarity_tol) break;
  }
  const double res = newton_solve(rate0, y, opt.newton_max_iter, opt.newton_tol);
  if (res > opt.algebraic_residual_tol)
    throw SolverError("profile_field_coeffs: stationary adjoint did not converge (residual " +
                      std::to_string(res) + ")");
  std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(d, d), Eigen::MatrixXd(d, d),
                                  Eigen::MatrixXd(d, 1)};
  unpack(y, ms);
  p = MatrixPath::constant(ms[0]);
  p_hat = MatrixPath::constant(ms[1]);
  e = MatrixPath::constant(ms[2]);
}

double analytic_drift(const GameSpec& game, const RiccatiSolution& rs, const ValueField& field,
                      int player, const LawProfile& profile, double t,
                      const Eigen::VectorXd& xbar, const Eigen::MatrixXd& cov) {
  const SolverOptions opt;
  const auto fc = field_context(game, rs, player, t, opt);
  const auto& snap = fc.snap;
  const auto iu = static_cast<std::size_t>(player);
  const auto prof = profile_at(profile, t);
  const Eigen::MatrixXd p = field.p.at_clamped(t);
  const Eigen::MatrixXd p_hat = field.p_hat.at_clamped(t);
  const Eigen::VectorXd e = field.e.at_clamped(t);
  const Eigen::VectorXd abar = prof.mean_gain * xbar + prof.intercept;

  // Deviation residual α_i − ᾱ_i − a^{i,0} as a map of (x − x̄).
  Eigen::MatrixXd xi_gain = snap.b[iu].transpose() * p;
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    xi_gain +=
        snap.sigma[lu][iu].transpose() * p * (snap.sigma_x[lu] + snap.Sigma[lu] * prof.gain);
  }
  for (int k = 0; k < snap.n; ++k) {
    if (k == player) continue;
    const auto ku = static_cast<std::size_t>(k);
    xi_gain += 0.5 * (fc.gains.J[iu][ku] + fc.gains.J[ku][iu].transpose()) *
               prof.gain.middleRows(snap.control_offsets[ku], snap.control_dims[ku]);
  }
  const Eigen::MatrixXd Mdev = prof.gain.middleRows(fc.oi, fc.di) +
                               fc.gains.S[iu].ldlt().solve(fc.gains.U[iu] + xi_gain);
  const double sq_dev = (Mdev.transpose() * fc.gains.S[iu] * Mdev * cov).trace();

  // Mean residual ᾱ_i − a^{i,1}.
  Eigen::VectorXd O = snap.cost[iu].L[iu] + snap.b_hat[iu].transpose() * (p_hat * xbar + e);
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    const Eigen::VectorXd zbar =
        p * (snap.gamma[lu] + snap.sigma_x_hat[lu] * xbar + snap.Sigma_hat[lu] * abar);
    O += snap.sigma_hat[lu][iu].transpose() * (zbar + fc.K * snap.gamma[lu]);
  }
  for (int k = 0; k < snap.n; ++k) {
    if (k == player) continue;
    const auto ku = static_cast<std::size_t>(k);
    O += 0.5 * (fc.gains.J_hat[iu][ku] + fc.gains.J_hat[ku][iu].transpose()) *
         abar.segment(snap.control_offsets[ku], snap.control_dims[ku]);
  }
  const Eigen::VectorXd r1 =
      abar.segment(fc.oi, fc.di) + fc.gains.S_hat[iu].ldlt().solve(fc.gains.V[iu] * xbar + O);
  return sq_dev + r1.dot(fc.gains.S_hat[iu] * r1);
}

namespace {

// Scalar rate whose discounted integral-to-go is the field constant R:
// from the drift identity E[D] = −ρE[w] + (E[w])′ + E[f] = SQ,
//   h(t) = E[f](t) − SQ(t) − ρ W̃(t) + W̃′(t),   W̃ = E[w] − R,
// and R_t = ∫_t^T e^{−ρ(s−t)} h_s ds (T = ∞ with a stationary tail).
double field_R_rate(const GameSpec& game, const RiccatiSolution& rs, const ValueField& field,
                    int player, const LawProfile& profile, double t, const Eigen::VectorXd& xbar,
                    const Eigen::MatrixXd& cov, const SolverOptions& opt) {
  const auto fc = field_context(game, rs, player, t, opt);
  const auto& snap = fc.snap;
  const auto prof = profile_at(profile, t);

  const Eigen::MatrixXd& K = fc.K;
  const Eigen::MatrixXd& Lam = fc.Lambda;
  const Eigen::MatrixXd p = field.p.at_clamped(t);
  const Eigen::MatrixXd p_hat = field.p_hat.at_clamped(t);
  const Eigen::VectorXd e = field.e.at_clamped(t);

  const Eigen::MatrixXd K_dot = -riccati_residual_K(snap, player, fc.rho, K);
  const Eigen::MatrixXd Lam_dot = -riccati_residual_Lambda(snap, player, fc.rho, K, Lam);
  Eigen::MatrixXd p_dot, p_hat_dot;
  Eigen::VectorXd e_dot;
  field_rates(fc, p, p_hat, e, prof.gain, prof.mean_gain, prof.intercept, p_dot, p_hat_dot,
              e_dot);

  const auto cl = closed_loop_at(snap, prof, xbar);
  Eigen::MatrixXd cov_dot = cl.drift_dev * cov + cov * cl.drift_dev.transpose();
  for (std::size_t l = 0; l < cl.vol_dev.size(); ++l)
    cov_dot += cl.vol_dev[l] * cov * cl.vol_dev[l].transpose() +
               cl.vol_mean[l] * cl.vol_mean[l].transpose();
  const Eigen::VectorXd& xbar_dot = cl.drift_mean;

  const Eigen::MatrixXd KP = K + 2.0 * p.transpose();
  const Eigen::MatrixXd LP = Lam + 2.0 * p_hat.transpose();
  const double W = (KP * cov).trace() + xbar.dot(LP * xbar) + 2.0 * e.dot(xbar);
  const double W_dot = ((K_dot + 2.0 * p_dot.transpose()) * cov).trace() +
                       (KP * cov_dot).trace() +
                       xbar.dot((Lam_dot + 2.0 * p_hat_dot.transpose()) * xbar) +
                       xbar_dot.dot((LP + LP.transpose()) * xbar) + 2.0 * e_dot.dot(xbar) +
                       2.0 * e.dot(xbar_dot);

  const double f_bar = expected_running_cost(snap, player, prof, xbar, cov);
  const double sq = analytic_drift(game, rs, field, player, profile, t, xbar, cov);
  return f_bar - sq - fc.rho * W + W_dot;
}

// Backward accumulation of R_t = ∫_t^{T} e^{−ρ(s−t)} h ds over the grid,
// Simpson on interval pairs, with optional stationary tail h(T)/ρ.
MatrixPath accumulate_R(const std::vector<double>& grid, const std::vector<double>& h, double rho,
                        bool infinite_tail) {
  const std::size_t M = grid.size();
  std::vector<double> S(M, 0.0);  // S_m = ∫_{t_m}^{end} e^{−ρ s} h ds
  const auto g = [&](std::size_t m) { return std::exp(-rho * grid[m]) * h[m]; };
  S[M - 1] = infinite_tail && rho > 0.0 ? std::exp(-rho * grid[M - 1]) * h[M - 1] / rho : 0.0;
  std::size_t m = M - 1;
  while (m >= 2) {
    const double h1 = grid[m - 1] - grid[m - 2];
    const double h2 = grid[m] - grid[m - 1];
    // Simpson on (possibly uneven) interval pair.
    const double total = h1 + h2;
    const double w0 = total * (2.0 * h1 - h2) / (6.0 * h1);
    const double w1 = total * total * total / (6.0 * h1 * h2);
    const double w2 = total * (2.0 * h2 - h1) / (6.0 * h2);
    S[m - 2] = S[m] + w0 * g(m - 2) + w1 * g(m - 1) + w2 * g(m);
    S[m - 1] = S[m] + 0.5 * h2 * (g(m - 1) + g(m));  // trapezoid for the interior point
    m -= 2;
  }
  if (m == 1) S[0] = S[1] + 0.5 * (grid[1] - grid[0]) * (g(0) + g(1));
  std::vector<Eigen::MatrixXd> vals(M);
  for (std::size_t j = 0; j < M; ++j) {
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = std::exp(rho * grid[j]) * S[j];
    vals[j] = v;
  }
  return MatrixPath(grid, std::move(vals));
}

MatrixPath compute_R_path(const GameSpec& game, const RiccatiSolution& rs, const ValueField& field,
                          int player, const LawProfile& profile, const std::vector<double>& grid,
                          const MomentPaths& moments, const SolverOptions& opt) {
  std::vector<double> h(grid.size());
  for (std::size_t m = 0; m < grid.size(); ++m)
    h[m] = field_R_rate(game, rs, field, player, profile, grid[m], moments.mean[m],
                        moments.cov[m], opt);
  return accumulate_R(grid, h, game.cost.rho, !game.finite());
}

}  // namespace

ValueField profile_field(const GameSpec& game, const RiccatiSolution& rs, int player,
                         const LawProfile& profile, const std::vector<double>& grid,
                         const MomentPaths& moments, const SolverOptions& opt) {
  ValueField f;
  f.player = player;
  f.K = rs.K[static_cast<std::size_t>(player)];
  f.Lambda = rs.Lambda[static_cast<std::size_t>(player)];
  profile_field_coeffs(game, rs, player, profile, grid, f.p, f.p_hat, f.e, opt);
  f.R = compute_R_path(game, rs, f, player, profile, grid, moments, opt);
  return f;
}

ValueField field_from_fixed_point(const GameSpec& game, const EquilibriumLaw& eq, int player,
                                  const std::vector<double>& grid, const MomentPaths& moments,
                                  const SolverOptions& opt) {
  const int d = game.d();
  ValueField f;
  f.player = player;
  f.K = eq.riccati.K[static_cast<std::size_t>(player)];
  f.Lambda = eq.riccati.Lambda[static_cast<std::size_t>(player)];
  f.p = slice_rows(eq.fixed_point.pi, player * d, d);
  f.p_hat = slice_rows(eq.fixed_point.pi_hat, player * d, d);
  f.e = slice_rows(eq.fixed_point.eta, player * d, d);
  f.R = compute_R_path(game, eq.riccati, f, player, eq.players, grid, moments, opt);
  return f;
}

BestResponseLaw best_response(const GameSpec& game, int player, const LawProfile& opponents,
                              const SolverOptions& opt) {
  const int d = game.d();
  const int di = game.control_dim(player);
  const int oi = game.dynamics.control_offset(player);
  const RiccatiSolution rs = [&] {
    RiccatiSolution out;
    out.K.resize(static_cast<std::size_t>(game.n_players()));
    out.Lambda.resize(static_cast<std::size_t>(game.n_players()));
    if (game.finite()) {
      const double T = *game.horizon;
      out.grid = uniform_grid(0.0, T, opt.grid_steps(T));
      out.K[static_cast<std::size_t>(player)] = solve_K(game, player, out.grid, opt);
      out.Lambda[static_cast<std::size_t>(player)] =
          solve_Lambda(game, player, out.K[static_cast<std::size_t>(player)], out.grid, opt);
    } else {
      const Eigen::MatrixXd K = solve_K_infinite(game, player, opt);
      out.K[static_cast<std::size_t>(player)] = MatrixPath::constant(K);
      out.Lambda[static_cast<std::size_t>(player)] =
          MatrixPath::constant(solve_Lambda_infinite(game, player, K, opt));
    }
    return out;
  }();

  // The state packs (p, p̂, e); the played profile is opponents + own law
  // implied by the current state.
  const auto rhs = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    const auto fc = field_context(game, rs, player, t, opt);
    const auto prof = profile_at(opponents, t);
    Eigen::MatrixXd opp_gain, opp_mean_gain;
    Eigen::VectorXd opp_intercept;
    opponents_blocks(prof, oi, di, opp_gain, opp_mean_gain, opp_intercept);
    std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(d, d), Eigen::MatrixXd(d, d),
                                    Eigen::MatrixXd(d, 1)};
    unpack(y, ms);
    Eigen::MatrixXd theta, theta_hat;
    Eigen::VectorXd c;
    own_law(fc, ms[0], ms[1], ms[2], opp_gain, opp_mean_gain, opp_intercept, theta, theta_hat, c,
            opt);
    Eigen::MatrixXd gain_full = opp_gain;
    Eigen::MatrixXd mean_gain_full = opp_mean_gain;
    Eigen::VectorXd intercept_full = opp_intercept;
    gain_full.middleRows(oi, di) = theta;
    mean_gain_full.middleRows(oi, di) = theta_hat;
    intercept_full.segment(oi, di) = c;
    Eigen::MatrixXd pd, phd;
    Eigen::VectorXd ed;
    field_rates(fc, ms[0], ms[1], ms[2], gain_full, mean_gain_full, intercept_full, pd, phd, ed);
    return pack({pd, phd, Eigen::MatrixXd(ed)});
  };

  const auto& r = game.cost.players[static_cast<std::size_t>(player)].r;
  BestResponseLaw br;
  br.player = player;

  const auto law_from_state = [&](double t, const Eigen::VectorXd& y, Eigen::MatrixXd& theta,
                                  Eigen::MatrixXd& theta_hat, Eigen::VectorXd& c) {
    const auto fc = field_context(game, rs, player, t, opt);
    const auto prof = profile_at(opponents, t);
    Eigen::MatrixXd opp_gain, opp_mean_gain;
    Eigen::VectorXd opp_intercept;
    opponents_blocks(prof, oi, di, opp_gain, opp_mean_gain, opp_intercept);
    std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(d, d), Eigen::MatrixXd(d, d),
                                    Eigen::MatrixXd(d, 1)};
    unpack(y, ms);
    own_law(fc, ms[0], ms[1], ms[2], opp_gain, opp_mean_gain, opp_intercept, theta, theta_hat, c,
            opt);
  };

  if (game.finite()) {
    const auto& grid = rs.grid;
    const Eigen::VectorXd terminal =
        pack({Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd(r)});
    const auto states = integrate_backward(rhs, grid, terminal);
    std::vector<Eigen::MatrixXd> ps(grid.size()), phs(grid.size()), es(grid.size()),
        gs(grid.size()), mgs(grid.size()), cs(grid.size());
    for (std::size_t m = 0; m < grid.size(); ++m) {
      std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(d, d), Eigen::MatrixXd(d, d),
                                      Eigen::MatrixXd(d, 1)};
      unpack(states[m], ms);
      ps[m] = ms[0];
      phs[m] = ms[1];
      es[m] = ms[2];
      Eigen::MatrixXd theta, theta_hat;
      Eigen::VectorXd c;
      law_from_state(grid[m], states[m], theta, theta_hat, c);
      gs[m] = theta;
      mgs[m] = theta_hat;
      cs[m] = c;
    }
    br.p = MatrixPath(grid, std::move(ps));
    br.p_hat = MatrixPath(grid, std::move(phs));
    br.e = MatrixPath(grid, std::move(es));
    br.law.gain = MatrixPath(grid, std::move(gs));
    br.law.mean_gain = MatrixPath(grid, std::move(mgs));
    br.law.intercept = MatrixPath(grid, std::move(cs));
    return br;
  }

  Eigen::VectorXd y =
      pack({Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd(r)});
  const auto rate0 = [&](const Eigen::VectorXd& v) { return rhs(0.0, v); };
  const OdeRhs back = [&](double, const Eigen::VectorXd& v) { return (-rate0(v)).eval(); };
  const double dt = 1.0 / opt.steps_per_unit;
  double elapsed = 0.0;
  while (elapsed < opt.max_pseudo_horizon) {
    for (int s = 0; s < static_cast<int>(opt.steps_per_unit); ++s) y = rk4_step(back, 0.0, y, dt);
    elapsed += 1.0;
    if (rate0(y).lpNorm<Eigen::Infinity>() < opt.stationarity_tol) break;
  }
  const double res = newton_solve(rate0, y, opt.newton_max_iter, opt.newton_tol);
  if (res > opt.algebraic_residual_tol)
    throw SolverError("best_response: stationary solve did not converge (residual " +
                      std::to_string(res) + ")");
  std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(d, d), Eigen::MatrixXd(d, d),
                                  Eigen::MatrixXd(d, 1)};
  unpack(y, ms);
  br.p = MatrixPath::constant(ms[0]);
  br.p_hat = MatrixPath::constant(ms[1]);
  br.e = MatrixPath::constant(ms[2]);
  Eigen::MatrixXd theta, theta_hat;
  Eigen::VectorXd c;
  law_from_state(0.0, y, theta, theta_hat, c);
  br.law.gain = MatrixPath::constant(theta);
  br.law.mean_gain = MatrixPath::constant(theta_hat);
  br.law.intercept = MatrixPath::constant(c);
  return br;
}

std::vector<double> analysis_grid(const GameSpec& game, const SolverOptions& opt, double t_min) {
  if (game.finite()) {
    const double T = *game.horizon;
    return uniform_grid(0.0, T, opt.grid_steps(T));
  }
  const double rho = game.cost.rho;
  const double tail = rho > 0.0 ? -std::log(opt.eta_truncation) / rho : 40.0;
  const double T = std::max(t_min, tail) + 5.0;
  return uniform_grid(0.0, T, opt.grid_steps(T));
}

double value(const GameSpec& game, const EquilibriumLaw& eq, int player,
             const SolverOptions& opt) {
  const auto grid = analysis_grid(game, opt);
  const auto moments = moment_paths(game, eq.players, grid);
  const auto field = field_from_fixed_point(game, eq, player, grid, moments, opt);
  const Eigen::MatrixXd K0 = field.K.at_clamped(0.0);
  const Eigen::MatrixXd p0 = field.p.at_clamped(0.0);
  const Eigen::MatrixXd Lam0 = field.Lambda.at_clamped(0.0);
  const Eigen::MatrixXd ph0 = field.p_hat.at_clamped(0.0);
  const Eigen::VectorXd e0 = field.e.at_clamped(0.0);
  const Eigen::VectorXd& x0 = game.x0_mean;
  return ((K0 + 2.0 * p0.transpose()) * game.x0_cov).trace() +
         x0.dot((Lam0 + 2.0 * ph0.transpose()) * x0) + 2.0 * e0.dot(x0) +
         field.R.at_clamped(0.0)(0, 0);
}

MatrixPath mean_state_path(const GameSpec& game, const LawProfile& laws,
                           const std::vector<double>& grid) {
  const auto mp = moment_paths(game, laws, grid);
  std::vector<Eigen::MatrixXd> vals(mp.mean.begin(), mp.mean.end());
  return MatrixPath(grid, std::move(vals));
}

MatrixPath dispersion_path(const GameSpec& game, const LawProfile& laws,
                           const std::vector<double>& grid) {
  const auto mp = moment_paths(game, laws, grid);
  return MatrixPath(grid, mp.cov);
}

}  // namespace lqmkv
