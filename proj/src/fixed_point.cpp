#include "lqmkv/fixed_point.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "lqmkv/numerics.hpp"

namespace lqmkv {

BlockSystem assemble_blocks(const GameSpec& game, const RiccatiSolution& rs, double t,
                            const SolverOptions& opt) {
  const auto snap = sample(game, t);
  const int n = snap.n;
  const int d = snap.d;
  const int dA = snap.d_a;
  const int nd = n * d;
  const double rho = game.cost.rho;

  BlockSystem bs;
  bs.t = t;
  bs.d = d;
  bs.n = n;
  bs.d_a = dA;

  std::vector<DerivedGains> gains(static_cast<std::size_t>(n));
  std::vector<Eigen::MatrixXd> S_inv(static_cast<std::size_t>(n)),
      S_hat_inv(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    gains[iu] = derived_gains(snap, i, rs.K_at(i, t), rs.Lambda_at(i, t));
    const Eigen::MatrixXd& Si = gains[iu].S[iu];
    const Eigen::MatrixXd& Shi = gains[iu].S_hat[iu];
    if (condition_number(Si) > opt.cond_limit)
      throw SolverError("assemble_blocks: S^i_i singular at t=" + std::to_string(t), t);
    if (condition_number(Shi) > opt.cond_limit)
      throw SolverError("assemble_blocks: S_hat^i_i singular at t=" + std::to_string(t), t);
    const int di = snap.control_dims[iu];
    S_inv[iu] = Si.ldlt().solve(Eigen::MatrixXd::Identity(di, di));
    S_hat_inv[iu] = Shi.ldlt().solve(Eigen::MatrixXd::Identity(di, di));
  }

  bs.S = Eigen::MatrixXd::Zero(dA, dA);
  bs.S_hat = Eigen::MatrixXd::Zero(dA, dA);
  bs.J = Eigen::MatrixXd::Zero(dA, dA);
  bs.J_hat = Eigen::MatrixXd::Zero(dA, dA);
  for (int i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const int oi = snap.control_offsets[iu];
    const int di = snap.control_dims[iu];
    bs.S.block(oi, oi, di, di) = S_inv[iu];
    bs.S_hat.block(oi, oi, di, di) = S_hat_inv[iu];
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto ju = static_cast<std::size_t>(j);
      const int oj = snap.control_offsets[ju];
      const int dj = snap.control_dims[ju];
      bs.J.block(oi, oj, di, dj) =
          0.5 * (gains[iu].J[iu][ju] + gains[iu].J[ju][iu].transpose());
      bs.J_hat.block(oi, oj, di, dj) =
          0.5 * (gains[iu].J_hat[iu][ju] + gains[iu].J_hat[ju][iu].transpose());
    }
  }

  const Eigen::MatrixXd IdA = Eigen::MatrixXd::Identity(dA, dA);
  const Eigen::MatrixXd IJ = IdA + bs.S * bs.J;
  const Eigen::MatrixXd IJh = IdA + bs.S_hat * bs.J_hat;
  bs.cond_IJ = condition_number(IJ);
  bs.cond_IJ_hat = condition_number(IJh);
  if (bs.cond_IJ > opt.cond_limit || bs.cond_IJ_hat > opt.cond_limit)
    throw SolverError("assemble_blocks: (I + S J) singular at t=" + std::to_string(t) +
                          " (cond=" + std::to_string(std::max(bs.cond_IJ, bs.cond_IJ_hat)) + ")",
                      t);
  bs.Jcal = -IJ.partialPivLu().solve(bs.S);
  bs.Jcal_hat = -IJh.partialPivLu().solve(bs.S_hat);

  Eigen::MatrixXd Ustack(dA, d), Vstack(dA, d);
  Eigen::MatrixXd bdiag = Eigen::MatrixXd::Zero(dA, nd), bdiag_hat = Eigen::MatrixXd::Zero(dA, nd);
  std::vector<Eigen::MatrixXd> sdiag(static_cast<std::size_t>(snap.kappa),
                                     Eigen::MatrixXd::Zero(dA, nd));
  std::vector<Eigen::MatrixXd> sdiag_hat = sdiag;
  Eigen::VectorXd Hraw(dA), Hraw_hat(dA);
  for (int i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const int oi = snap.control_offsets[iu];
    const int di = snap.control_dims[iu];
    const Eigen::MatrixXd K = rs.K_at(i, t);
    Ustack.middleRows(oi, di) = gains[iu].U[iu];
    Vstack.middleRows(oi, di) = gains[iu].V[iu];
    bdiag.block(oi, i * d, di, d) = snap.b[iu].transpose();
    bdiag_hat.block(oi, i * d, di, d) = snap.b_hat[iu].transpose();
    Eigen::VectorXd h = snap.cost[iu].L[iu];
    Eigen::VectorXd hh = snap.cost[iu].L[iu];
    for (int l = 0; l < snap.kappa; ++l) {
      const auto lu = static_cast<std::size_t>(l);
      sdiag[lu].block(oi, i * d, di, d) = snap.sigma[lu][iu].transpose();
      sdiag_hat[lu].block(oi, i * d, di, d) = snap.sigma_hat[lu][iu].transpose();
      h += snap.sigma[lu][iu].transpose() * K * snap.gamma[lu];
      hh += snap.sigma_hat[lu][iu].transpose() * K * snap.gamma[lu];
    }
    Hraw.segment(oi, di) = h;
    Hraw_hat.segment(oi, di) = hh;
  }
  bs.S_x = bs.Jcal * Ustack;
  bs.S_hat_x = bs.Jcal_hat * Vstack;
  bs.S_y = bs.Jcal * bdiag;
  bs.S_hat_y = bs.Jcal_hat * bdiag_hat;
  bs.S_z.resize(static_cast<std::size_t>(snap.kappa));
  bs.S_hat_z.resize(static_cast<std::size_t>(snap.kappa));
  for (int l = 0; l < snap.kappa; ++l) {
    bs.S_z[static_cast<std::size_t>(l)] = bs.Jcal * sdiag[static_cast<std::size_t>(l)];
    bs.S_hat_z[static_cast<std::size_t>(l)] = bs.Jcal_hat * sdiag_hat[static_cast<std::size_t>(l)];
  }
  bs.H = bs.Jcal * Hraw;
  bs.H_hat = bs.Jcal_hat * Hraw_hat;

  bs.P_y = Eigen::MatrixXd::Zero(nd, nd);
  bs.P_hat_y = Eigen::MatrixXd::Zero(nd, nd);
  bs.P_z.assign(static_cast<std::size_t>(snap.kappa), Eigen::MatrixXd::Zero(nd, nd));
  bs.P_hat_z = bs.P_z;
  bs.P_alpha = Eigen::MatrixXd::Zero(nd, dA);
  bs.P_hat_alpha = Eigen::MatrixXd::Zero(nd, dA);
  bs.F = Eigen::VectorXd::Zero(nd);
  bs.F_hat = Eigen::VectorXd::Zero(nd);
  const Eigen::MatrixXd Id = Eigen::MatrixXd::Identity(d, d);
  for (int i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const Eigen::MatrixXd K = rs.K_at(i, t);
    const Eigen::MatrixXd Lam = rs.Lambda_at(i, t);
    const Eigen::MatrixXd UtS = gains[iu].U[iu].transpose() * S_inv[iu];     // d×d_i
    const Eigen::MatrixXd VtSh = gains[iu].V[iu].transpose() * S_hat_inv[iu];
    bs.P_y.block(i * d, i * d, d, d) = rho * Id - snap.b_x.transpose() + UtS * snap.b[iu].transpose();
    bs.P_hat_y.block(i * d, i * d, d, d) =
        rho * Id - snap.b_x_hat.transpose() + VtSh * snap.b_hat[iu].transpose();
    Eigen::VectorXd own = snap.cost[iu].L[iu];
    Eigen::VectorXd fhat = -snap.cost[iu].L_x - Lam * snap.beta;
    for (int l = 0; l < snap.kappa; ++l) {
      const auto lu = static_cast<std::size_t>(l);
      bs.P_z[lu].block(i * d, i * d, d, d) =
          -snap.sigma_x[lu].transpose() + UtS * snap.sigma[lu][iu].transpose();
      bs.P_hat_z[lu].block(i * d, i * d, d, d) =
          -snap.sigma_x_hat[lu].transpose() + VtSh * snap.sigma_hat[lu][iu].transpose();
      own += snap.sigma_hat[lu][iu].transpose() * K * snap.gamma[lu];
      fhat -= snap.sigma_x_hat[lu].transpose() * K * snap.gamma[lu];
    }
    bs.F_hat.segment(i * d, d) = fhat + VtSh * own;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto ju = static_cast<std::size_t>(j);
      const int oj = snap.control_offsets[ju];
      const int dj = snap.control_dims[ju];
      bs.P_alpha.block(i * d, oj, d, dj) =
          -gains[iu].U[ju].transpose() +
          0.5 * UtS * (gains[iu].J[iu][ju] + gains[iu].J[ju][iu].transpose());
      bs.P_hat_alpha.block(i * d, oj, d, dj) =
          -gains[iu].V[ju].transpose() +
          0.5 * VtSh * (gains[iu].J_hat[iu][ju] + gains[iu].J_hat[ju][iu].transpose());
    }
  }
  return bs;
}

void pi_rates(const BlockSystem& bs, const CoefficientSnapshot& snap, const Eigen::MatrixXd& pi,
              const Eigen::MatrixXd& pi_hat, Eigen::MatrixXd& pi_dot, Eigen::MatrixXd& pi_hat_dot,
              const SolverOptions& opt) {
  const int dA = bs.d_a;
  const Eigen::MatrixXd IdA = Eigen::MatrixXd::Identity(dA, dA);

  Eigen::MatrixXd M = IdA;
  Eigen::MatrixXd M_hat = IdA;
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    M -= bs.S_z[lu] * pi * snap.Sigma[lu];
    M_hat -= bs.S_hat_z[lu] * pi * snap.Sigma_hat[lu];
  }
  if (condition_number(M) > opt.cond_limit || condition_number(M_hat) > opt.cond_limit)
    throw SolverError("fixed-point system ill-posed at t=" + std::to_string(bs.t), bs.t);

  Eigen::MatrixXd rhs = bs.S_x + bs.S_y * pi;
  Eigen::MatrixXd rhs_hat = bs.S_hat_x + bs.S_hat_y * pi_hat;
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    rhs += bs.S_z[lu] * pi * snap.sigma_x[lu];
    rhs_hat += bs.S_hat_z[lu] * pi * snap.sigma_x_hat[lu];
  }
  const Eigen::MatrixXd A_x = M.partialPivLu().solve(rhs);
  const Eigen::MatrixXd A_hat_x = M_hat.partialPivLu().solve(rhs_hat);

  Eigen::MatrixXd coup = bs.P_alpha - pi * snap.B;
  Eigen::MatrixXd coup_hat = bs.P_hat_alpha - pi_hat * snap.B_hat;
  pi_dot = -pi * snap.b_x + bs.P_y * pi;
  pi_hat_dot = -pi_hat * snap.b_x_hat + bs.P_hat_y * pi_hat;
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    coup += bs.P_z[lu] * pi * snap.Sigma[lu];
    coup_hat += bs.P_hat_z[lu] * pi * snap.Sigma_hat[lu];
    pi_dot += bs.P_z[lu] * pi * snap.sigma_x[lu];
    pi_hat_dot += bs.P_hat_z[lu] * pi * snap.sigma_x_hat[lu];
  }
  pi_dot += coup * A_x;
  pi_hat_dot += coup_hat * A_hat_x;
}

void solve_pi(const GameSpec& game, const RiccatiSolution& rs, const std::vector<double>& grid,
              MatrixPath& pi, MatrixPath& pi_hat, const SolverOptions& opt) {
  const int nd = game.n_players() * game.d();
  const int d = game.d();
  std::vector<Eigen::MatrixXd> state{Eigen::MatrixXd::Zero(nd, d), Eigen::MatrixXd::Zero(nd, d)};
  const OdeRhs rhs = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(nd, d), Eigen::MatrixXd(nd, d)};
    unpack(y, ms);
    const auto bs = assemble_blocks(game, rs, t, opt);
    const auto snap = sample(game, t);
    Eigen::MatrixXd pd(nd, d), phd(nd, d);
    pi_rates(bs, snap, ms[0], ms[1], pd, phd, opt);
    return pack({pd, phd});
  };
  const auto states = integrate_backward(rhs, grid, pack(state));
  std::vector<Eigen::MatrixXd> pis(states.size()), pihs(states.size());
  for (std::size_t m = 0; m < states.size(); ++m) {
    std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(nd, d), Eigen::MatrixXd(nd, d)};
    unpack(states[m], ms);
    pis[m] = ms[0];
    pihs[m] = ms[1];
  }
  pi = MatrixPath(grid, std::move(pis));
  pi_hat = MatrixPath(grid, std::move(pihs));
}

double stationary_pi_residual(const GameSpec& game, const RiccatiSolution& rs,
                              const Eigen::MatrixXd& pi, const Eigen::MatrixXd& pi_hat,
                              const SolverOptions& opt) {
  const auto bs = assemble_blocks(game, rs, 0.0, opt);
  const auto snap = sample(game, 0.0);
  Eigen::MatrixXd pd, phd;
  pi_rates(bs, snap, pi, pi_hat, pd, phd, opt);
  return std::max(max_abs(pd), max_abs(phd));
}

void solve_pi_infinite(const GameSpec& game, const RiccatiSolution& rs, Eigen::MatrixXd& pi,
                       Eigen::MatrixXd& pi_hat, const SolverOptions& opt) {
  const int nd = game.n_players() * game.d();
  const int d = game.d();
  const auto bs = assemble_blocks(game, rs, 0.0, opt);
  const auto snap = sample(game, 0.0);

  const auto rates = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
    std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(nd, d), Eigen::MatrixXd(nd, d)};
    unpack(y, ms);
    Eigen::MatrixXd pd(nd, d), phd(nd, d);
    pi_rates(bs, snap, ms[0], ms[1], pd, phd, opt);
    return pack({pd, phd});
  };

  // Pseudo-horizon seed: backward flow from the terminal condition zero.
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2 * nd * d);
  const double dt = 1.0 / opt.steps_per_unit;
  const OdeRhs back = [&](double, const Eigen::VectorXd& v) { return (-rates(v)).eval(); };
  double elapsed = 0.0;
  bool stationary = false;
  while (elapsed < opt.max_pseudo_horizon) {
    for (int s = 0; s < static_cast<int>(opt.steps_per_unit); ++s) y = rk4_step(back, 0.0, y, dt);
    elapsed += 1.0;
    if (rates(y).lpNorm<Eigen::Infinity>() < opt.stationarity_tol) {
      stationary = true;
      break;
    }
  }
  if (!stationary && rates(y).lpNorm<Eigen::Infinity>() > 1e-3)
    throw SolverError("solve_pi_infinite: pseudo-horizon integration did not approach a "
                      "stationary point");

  const double res = newton_solve(rates, y, opt.newton_max_iter, opt.newton_tol);
  if (res > opt.algebraic_residual_tol)
    throw SolverError("solve_pi_infinite: Newton left residual " + std::to_string(res));
  std::vector<Eigen::MatrixXd> ms{Eigen::MatrixXd(nd, d), Eigen::MatrixXd(nd, d)};
  unpack(y, ms);
  pi = ms[0];
  pi_hat = ms[1];
}

bool is_symmetric_scalar(const GameSpec& game) {
  if (game.d() != 1 || game.finite()) return false;
  const auto snap = sample(game, 0.0);
  for (int di : snap.control_dims)
    if (di != 1) return false;
  const int n = snap.n;
  const double tol = 1e-14;
  for (int l = 0; l < snap.kappa; ++l)
    for (int i = 0; i < n; ++i)
      if (max_abs(snap.sigma[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)]) > tol ||
          max_abs(snap.sigma_tilde[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)]) >
              tol)
        return false;  // controlled volatility
  const auto& c0 = snap.cost[0];
  for (int i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    if (max_abs(snap.b[iu] - snap.b[0]) > tol || max_abs(snap.b_hat[iu] - snap.b_hat[0]) > tol)
      return false;
    const auto& ci = snap.cost[iu];
    if (max_abs(ci.Q - c0.Q) > tol || max_abs(ci.Q_hat - c0.Q_hat) > tol) return false;
    if (max_abs(ci.N[iu] - c0.N[0]) > tol || max_abs(ci.N_hat[iu] - c0.N_hat[0]) > tol)
      return false;
    if (max_abs(ci.I[iu] - c0.I[0]) > tol || max_abs(ci.I_hat[iu] - c0.I_hat[0]) > tol)
      return false;
    for (int k = 0; k < n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      if (k != i && (max_abs(ci.N[ku]) > tol || max_abs(ci.I[ku]) > tol)) return false;
      for (int l2 = 0; l2 < n; ++l2)
        if (max_abs(ci.G[ku][static_cast<std::size_t>(l2)]) > tol ||
            max_abs(ci.G_hat[ku][static_cast<std::size_t>(l2)]) > tol)
          return false;
    }
  }
  return true;
}

namespace {

// Stable root of a z² + b z + c = 0: the one the backward flow dz/ds = −(az²+bz+c)
// converges to, i.e. with 2az + b > 0.
double stable_root(double a, double b, double c, double disc, const char* what) {
  if (disc < 0.0)
    throw SolverError(std::string(what) +
                      ": no real symmetric solution (sufficient condition fails)");
  if (std::abs(a) < 1e-300) {
    if (std::abs(b) < 1e-300) throw SolverError(std::string(what) + ": degenerate quadratic");
    return -c / b;
  }
  const double r1 = (-b + std::sqrt(disc)) / (2.0 * a);
  const double r2 = (-b - std::sqrt(disc)) / (2.0 * a);
  return (2.0 * a * r1 + b > 0.0) ? r1 : r2;
}

}  // namespace

SymmetricScalarRoots solve_pi_symmetric_scalar(const GameSpec& game, const RiccatiSolution& rs,
                                               const SolverOptions& opt) {
  if (!is_symmetric_scalar(game))
    throw SolverError("solve_pi_symmetric_scalar: game is not symmetric scalar");
  const auto bs = assemble_blocks(game, rs, 0.0, opt);
  const auto snap = sample(game, 0.0);
  const int n = snap.n;
  const double b1 = snap.b[0](0, 0);
  const double b1h = snap.b_hat[0](0, 0);
  const double bx = snap.b_x(0, 0);
  const double bxh = snap.b_x_hat(0, 0);
  const double sx = snap.sigma_x[0](0, 0);       // scalar case uses kappa=1 conventions;
  const double sxh = snap.sigma_x_hat[0](0, 0);  // extra noises enter through the blocks anyway
  const double Sy = bs.S_y(0, 0);
  const double Syh = bs.S_hat_y(0, 0);
  const double Sx = bs.S_x(0, 0);
  const double Sxh = bs.S_hat_x(0, 0);
  const double Py = bs.P_y(0, 0);
  const double Pyh = bs.P_hat_y(0, 0);
  const double Pz = bs.P_z.empty() ? 0.0 : bs.P_z[0](0, 0);
  const double Pzh = bs.P_hat_z.empty() ? 0.0 : bs.P_hat_z[0](0, 0);
  double Pa_sum = 0.0, Pah_sum = 0.0;
  for (int j = 1; j < n; ++j) {
    Pa_sum += bs.P_alpha(0, j);
    Pah_sum += bs.P_hat_alpha(0, j);
  }

  SymmetricScalarRoots out;
  out.a = -n * b1 * Sy;
  out.b = -bx + Py + Pz * sx + Pa_sum * Sy - n * b1 * Sx;
  out.c = Pa_sum * Sx;
  out.disc = out.b * out.b - 4.0 * out.a * out.c;
  out.pi1 = stable_root(out.a, out.b, out.c, out.disc, "solve_pi_symmetric_scalar[pi]");

  out.a_hat = -n * b1h * Syh;
  out.b_hat = -bxh + Pyh + Pah_sum * Syh - n * b1h * Sxh;
  out.c_hat = Pah_sum * Sxh + out.pi1 * Pzh * sxh;
  out.disc_hat = out.b_hat * out.b_hat - 4.0 * out.a_hat * out.c_hat;
  out.pi_hat1 =
      stable_root(out.a_hat, out.b_hat, out.c_hat, out.disc_hat, "solve_pi_symmetric_scalar[pi_hat]");
  return out;
}

namespace {

struct EtaSystem {
  Eigen::MatrixXd G_bar;   // η̄ coefficient in ψ̄
  Eigen::VectorXd c_bar;   // constant part of ψ̄
  Eigen::MatrixXd G_dev;   // (η−η̄) coefficient in ψ−ψ̄ (sources vanish in scope)
};

EtaSystem eta_system(const GameSpec& game, const RiccatiSolution& rs, double t,
                     const Eigen::MatrixXd& pi, const Eigen::MatrixXd& pi_hat,
                     const SolverOptions& opt) {
  const auto bs = assemble_blocks(game, rs, t, opt);
  const auto snap = sample(game, t);
  const int dA = bs.d_a;
  const Eigen::MatrixXd IdA = Eigen::MatrixXd::Identity(dA, dA);

  Eigen::MatrixXd M = IdA, M_hat = IdA;
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    M -= bs.S_z[lu] * pi * snap.Sigma[lu];
    M_hat -= bs.S_hat_z[lu] * pi * snap.Sigma_hat[lu];
  }
  if (condition_number(M) > opt.cond_limit || condition_number(M_hat) > opt.cond_limit)
    throw SolverError("solve_eta: fixed-point system ill-posed at t=" + std::to_string(t), t);

  Eigen::MatrixXd coup = bs.P_alpha - pi * snap.B;
  Eigen::MatrixXd coup_hat = bs.P_hat_alpha - pi_hat * snap.B_hat;
  Eigen::VectorXd r_const = bs.H_hat;
  Eigen::VectorXd extra = Eigen::VectorXd::Zero(bs.n * bs.d);
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    coup += bs.P_z[lu] * pi * snap.Sigma[lu];
    coup_hat += bs.P_hat_z[lu] * pi * snap.Sigma_hat[lu];
    r_const += bs.S_hat_z[lu] * pi * snap.gamma[lu];
    extra += bs.P_hat_z[lu] * pi * snap.gamma[lu];
  }
  const auto M_lu = M.partialPivLu();
  const auto Mh_lu = M_hat.partialPivLu();

  EtaSystem sys;
  sys.G_bar = bs.P_hat_y + coup_hat * Mh_lu.solve(bs.S_hat_y);
  sys.c_bar = bs.F_hat - pi_hat * snap.beta + extra + coup_hat * Mh_lu.solve(r_const);
  sys.G_dev = bs.P_y + coup * M_lu.solve(bs.S_y);
  return sys;
}

}  // namespace

void solve_eta(const GameSpec& game, const RiccatiSolution& rs, const MatrixPath& pi,
               const MatrixPath& pi_hat, const std::vector<double>& grid, MatrixPath& eta,
               MatrixPath& eta_dev, MatrixPath& psi, const SolverOptions& opt) {
  const int nd = game.n_players() * game.d();
  const int d = game.d();
  Eigen::VectorXd r_stack(nd);
  for (int i = 0; i < game.n_players(); ++i)
    r_stack.segment(i * d, d) = game.cost.players[static_cast<std::size_t>(i)].r;

  if (game.finite()) {
    const OdeRhs rhs = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
      const auto sys = eta_system(game, rs, t, pi.at_clamped(t), pi_hat.at_clamped(t), opt);
      Eigen::VectorXd out(2 * nd);
      out.head(nd) = sys.G_bar * y.head(nd) + sys.c_bar;
      out.tail(nd) = sys.G_dev * y.tail(nd);
      return out;
    };
    Eigen::VectorXd terminal(2 * nd);
    terminal.head(nd) = r_stack;              // η̄_T = r (r deterministic ⇒ r − r̄ = 0)
    terminal.tail(nd).setZero();
    const auto states = integrate_backward(rhs, grid, terminal);
    std::vector<Eigen::MatrixXd> ebar(states.size()), edev(states.size()), psis(states.size());
    for (std::size_t m = 0; m < states.size(); ++m) {
      ebar[m] = states[m].head(nd);
      edev[m] = states[m].tail(nd);
      const auto sys = eta_system(game, rs, grid[m], pi.at_clamped(grid[m]),
                                  pi_hat.at_clamped(grid[m]), opt);
      psis[m] = sys.G_bar * states[m].head(nd) + sys.c_bar;
    }
    eta = MatrixPath(grid, std::move(ebar));
    eta_dev = MatrixPath(grid, std::move(edev));
    psi = MatrixPath(grid, std::move(psis));
    return;
  }

  // Infinite horizon: η̄_t = −∫_0^∞ e^{−𝒢 s} c(t+s) ds, truncated where the
  // kernel has decayed below opt.eta_truncation and integrated by Simpson.
  const Eigen::MatrixXd pic = pi.at_clamped(0.0);
  const Eigen::MatrixXd pihc = pi_hat.at_clamped(0.0);
  const auto sys0 = eta_system(game, rs, 0.0, pic, pihc, opt);
  const Eigen::EigenSolver<Eigen::MatrixXd> es(sys0.G_bar);
  const double m_min = es.eigenvalues().real().minCoeff();
  if (m_min <= 1e-12)
    throw SolverError("solve_eta: eta integral diverges (closed-loop exponent not positive "
                      "stable); check discount/stationarity conditions");
  const double tau = -std::log(opt.eta_truncation) / m_min;
  const int n_nodes = 4097;  // even interval count for Simpson
  const double h = tau / (n_nodes - 1);
  const Eigen::MatrixXd E_step = (-sys0.G_bar * h).exp();

  // c(t) varies only through the L-paths; detect constancy to evaluate once.
  bool c_constant = true;
  for (const auto& pc : game.cost.players) {
    if (!pc.L_x.is_constant()) c_constant = false;
    for (const auto& lk : pc.L)
      if (!lk.is_constant()) c_constant = false;
  }

  const auto eta_at = [&](double t) -> Eigen::VectorXd {
    Eigen::MatrixXd E = Eigen::MatrixXd::Identity(nd, nd);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(nd);
    Eigen::VectorXd c0 = sys0.c_bar;
    for (int j = 0; j < n_nodes; ++j) {
      Eigen::VectorXd cj =
          c_constant ? c0 : eta_system(game, rs, t + j * h, pic, pihc, opt).c_bar;
      const Eigen::VectorXd f = E * cj;
      const double w = (j == 0 || j == n_nodes - 1) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
      acc += w * f;
      E = E_step * E;
    }
    return (-h / 3.0) * acc;
  };

  if (c_constant) {
    const Eigen::VectorXd ebar = eta_at(0.0);
    eta = MatrixPath::constant(ebar);
    eta_dev = MatrixPath::constant(Eigen::VectorXd::Zero(nd));
    psi = MatrixPath::constant(sys0.G_bar * ebar + sys0.c_bar);
  } else {
    // Evaluate on a grid covering the varying span of the L-paths.
    double t_max = 1.0;
    for (const auto& pc : game.cost.players) {
      t_max = std::max(t_max, pc.L_x.t_back());
      for (const auto& lk : pc.L) t_max = std::max(t_max, lk.t_back());
    }
    const auto g = uniform_grid(0.0, t_max + 1.0, std::max(64, opt.grid_steps(t_max + 1.0) / 16));
    std::vector<Eigen::MatrixXd> vals(g.size()), psis(g.size());
    for (std::size_t m = 0; m < g.size(); ++m) {
      vals[m] = eta_at(g[m]);
      psis[m] = eta_system(game, rs, g[m], pic, pihc, opt).G_bar * vals[m] +
                eta_system(game, rs, g[m], pic, pihc, opt).c_bar;
    }
    eta = MatrixPath(g, std::move(vals));
    eta_dev = MatrixPath::constant(Eigen::VectorXd::Zero(nd));
    psi = MatrixPath(g, std::move(psis));
  }
}

FixedPointSolution solve_fixed_point(const GameSpec& game, const RiccatiSolution& rs,
                                     const SolverOptions& opt) {
  FixedPointSolution fp;
  if (game.finite()) {
    fp.grid = rs.grid;
    solve_pi(game, rs, fp.grid, fp.pi, fp.pi_hat, opt);
    solve_eta(game, rs, fp.pi, fp.pi_hat, fp.grid, fp.eta, fp.eta_dev, fp.psi, opt);
    fp.max_residual = fixed_point_residual(game, rs, fp, opt);
  } else {
    Eigen::MatrixXd pi, pi_hat;
    solve_pi_infinite(game, rs, pi, pi_hat, opt);
    fp.pi = MatrixPath::constant(pi);
    fp.pi_hat = MatrixPath::constant(pi_hat);
    solve_eta(game, rs, fp.pi, fp.pi_hat, {}, fp.eta, fp.eta_dev, fp.psi, opt);
    fp.max_residual = stationary_pi_residual(game, rs, pi, pi_hat, opt);
  }
  return fp;
}

double fixed_point_residual(const GameSpec& game, const RiccatiSolution& rs,
                            const FixedPointSolution& fp, const SolverOptions& opt) {
  if (fp.grid.empty()) {
    return stationary_pi_residual(game, rs, fp.pi.value(), fp.pi_hat.value(), opt);
  }
  double worst = 0.0;
  for (std::size_t m = 0; m + 1 < fp.grid.size(); ++m) {
    const double t0 = fp.grid[m], t1 = fp.grid[m + 1];
    const double tm = 0.5 * (t0 + t1);
    const double h = t1 - t0;
    const Eigen::MatrixXd pi_mid = 0.5 * (fp.pi.values()[m] + fp.pi.values()[m + 1]);
    const Eigen::MatrixXd pih_mid = 0.5 * (fp.pi_hat.values()[m] + fp.pi_hat.values()[m + 1]);
    const auto bs = assemble_blocks(game, rs, tm, opt);
    const auto snap = sample(game, tm);
    Eigen::MatrixXd pd, phd;
    pi_rates(bs, snap, pi_mid, pih_mid, pd, phd, opt);
    worst = std::max(worst, max_abs((fp.pi.values()[m + 1] - fp.pi.values()[m]) / h - pd));
    worst = std::max(worst,
                     max_abs((fp.pi_hat.values()[m + 1] - fp.pi_hat.values()[m]) / h - phd));
    // η̄ midpoint residual against its own linear ODE.
    const auto sys = eta_system(game, rs, tm, pi_mid, pih_mid, opt);
    const Eigen::VectorXd eta_mid = 0.5 * (fp.eta.values()[m] + fp.eta.values()[m + 1]);
    const Eigen::VectorXd eta_rate = (fp.eta.values()[m + 1] - fp.eta.values()[m]) / h;
    worst = std::max(worst, (eta_rate - (sys.G_bar * eta_mid + sys.c_bar)).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace lqmkv
