#include "lqmkv/law.hpp"

#include "lqmkv/numerics.hpp"

namespace lqmkv {

Eigen::VectorXd AffineLaw::eval(double t, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& xbar) const {
  return gain.at_clamped(t) * (x - xbar) + mean_gain.at_clamped(t) * xbar +
         intercept.at_clamped(t);
}

AffineLaw AffineLaw::zero(int d_i, int d) {
  AffineLaw l;
  l.gain = MatrixPath::zero(d_i, d);
  l.mean_gain = MatrixPath::zero(d_i, d);
  l.intercept = MatrixPath::zero(d_i, 1);
  return l;
}

ProfileAt profile_at(const LawProfile& laws, double t) {
  int d_a = 0;
  for (const auto& l : laws) d_a += static_cast<int>(l.gain.rows());
  const int d = laws.empty() ? 0 : static_cast<int>(laws[0].gain.cols());
  ProfileAt p;
  p.gain.resize(d_a, d);
  p.mean_gain.resize(d_a, d);
  p.intercept.resize(d_a);
  int off = 0;
  for (const auto& l : laws) {
    const int di = static_cast<int>(l.gain.rows());
    p.gain.middleRows(off, di) = l.gain.at_clamped(t);
    p.mean_gain.middleRows(off, di) = l.mean_gain.at_clamped(t);
    p.intercept.segment(off, di) = l.intercept.at_clamped(t);
    off += di;
  }
  return p;
}

ClosedLoopAt closed_loop_at(const CoefficientSnapshot& snap, const ProfileAt& prof,
                            const Eigen::VectorXd& xbar) {
  ClosedLoopAt cl;
  const Eigen::VectorXd abar = prof.mean_gain * xbar + prof.intercept;
  cl.drift_dev = snap.b_x + snap.B * prof.gain;
  cl.drift_mean = snap.beta + snap.b_x_hat * xbar + snap.B_hat * abar;
  cl.vol_dev.resize(static_cast<std::size_t>(snap.kappa));
  cl.vol_mean.resize(static_cast<std::size_t>(snap.kappa));
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    cl.vol_dev[lu] = snap.sigma_x[lu] + snap.Sigma[lu] * prof.gain;
    cl.vol_mean[lu] = snap.gamma[lu] + snap.sigma_x_hat[lu] * xbar + snap.Sigma_hat[lu] * abar;
  }
  return cl;
}

ClosedLoopAt pair_closed_loop_at(const CoefficientSnapshot& snap, const ProfileAt& base,
                                 int player, const ProfileAt& deviation,
                                 const Eigen::VectorXd& zbar) {
  const int d = snap.d;
  const int oi = snap.control_offsets[static_cast<std::size_t>(player)];
  const int di = snap.control_dims[static_cast<std::size_t>(player)];
  const Eigen::VectorXd xbar_ref = zbar.head(d);
  const Eigen::VectorXd xbar_dev = zbar.tail(d);

  // Mean controls: opponents from the reference mean, the deviating player
  // from the deviated mean.
  const Eigen::VectorXd abar_ref = base.mean_gain * xbar_ref + base.intercept;
  Eigen::VectorXd abar_dev = abar_ref;
  abar_dev.segment(oi, di) =
      deviation.mean_gain.middleRows(oi, di) * xbar_dev + deviation.intercept.segment(oi, di);

  // Deviation gains of the played profile along X′, split by which state
  // column they read: opponents read (x* − x̄*), the deviator reads (x′ − x̄′).
  Eigen::MatrixXd gain_opp = base.gain;
  gain_opp.middleRows(oi, di).setZero();
  const Eigen::MatrixXd gain_self = deviation.gain.middleRows(oi, di);

  ClosedLoopAt cl;
  cl.drift_dev = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  cl.drift_dev.topLeftCorner(d, d) = snap.b_x + snap.B * base.gain;
  cl.drift_dev.bottomLeftCorner(d, d) = snap.B * gain_opp;
  cl.drift_dev.bottomRightCorner(d, d) =
      snap.b_x + snap.B.middleCols(oi, di) * gain_self;

  cl.drift_mean.resize(2 * d);
  cl.drift_mean.head(d) = snap.beta + snap.b_x_hat * xbar_ref + snap.B_hat * abar_ref;
  cl.drift_mean.tail(d) = snap.beta + snap.b_x_hat * xbar_dev + snap.B_hat * abar_dev;

  cl.vol_dev.resize(static_cast<std::size_t>(snap.kappa));
  cl.vol_mean.resize(static_cast<std::size_t>(snap.kappa));
  for (int l = 0; l < snap.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    Eigen::MatrixXd vd = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    vd.topLeftCorner(d, d) = snap.sigma_x[lu] + snap.Sigma[lu] * base.gain;
    vd.bottomLeftCorner(d, d) = snap.Sigma[lu] * gain_opp;
    vd.bottomRightCorner(d, d) = snap.sigma_x[lu] + snap.Sigma[lu].middleCols(oi, di) * gain_self;
    cl.vol_dev[lu] = std::move(vd);
    Eigen::VectorXd vm(2 * d);
    vm.head(d) = snap.gamma[lu] + snap.sigma_x_hat[lu] * xbar_ref + snap.Sigma_hat[lu] * abar_ref;
    vm.tail(d) =
        snap.gamma[lu] + snap.sigma_x_hat[lu] * xbar_dev + snap.Sigma_hat[lu] * abar_dev;
    cl.vol_mean[lu] = std::move(vm);
  }
  return cl;
}

Eigen::VectorXd MomentPaths::mean_at(double time) const {
  MatrixPath p(t, std::vector<Eigen::MatrixXd>(mean.begin(), mean.end()));
  return p.at_clamped(time);
}

Eigen::MatrixXd MomentPaths::cov_at(double time) const {
  MatrixPath p(t, cov);
  return p.at_clamped(time);
}

namespace {

MomentPaths integrate_moments(
    const std::vector<double>& grid, const Eigen::VectorXd& m0,
    const Eigen::MatrixXd& c0,
    const std::function<ClosedLoopAt(double, const Eigen::VectorXd&)>& loop) {
  const int dz = static_cast<int>(m0.size());
  const OdeRhs rhs = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    const Eigen::VectorXd m = y.head(dz);
    const Eigen::MatrixXd C = Eigen::Map<const Eigen::MatrixXd>(y.data() + dz, dz, dz);
    const auto cl = loop(t, m);
    Eigen::MatrixXd Cdot = cl.drift_dev * C + C * cl.drift_dev.transpose();
    for (std::size_t l = 0; l < cl.vol_dev.size(); ++l)
      Cdot += cl.vol_dev[l] * C * cl.vol_dev[l].transpose() +
              cl.vol_mean[l] * cl.vol_mean[l].transpose();
    Eigen::VectorXd out(dz + dz * dz);
    out.head(dz) = cl.drift_mean;
    out.tail(dz * dz) = Eigen::Map<const Eigen::VectorXd>(Cdot.data(), Cdot.size());
    return out;
  };

  Eigen::VectorXd y(dz + dz * dz);
  y.head(dz) = m0;
  y.tail(dz * dz) = Eigen::Map<const Eigen::VectorXd>(c0.data(), c0.size());

  MomentPaths mp;
  mp.t = grid;
  mp.mean.resize(grid.size());
  mp.cov.resize(grid.size());
  mp.mean[0] = m0;
  mp.cov[0] = c0;
  for (std::size_t m = 0; m + 1 < grid.size(); ++m) {
    y = rk4_step(rhs, grid[m], y, grid[m + 1] - grid[m]);
    Eigen::Map<Eigen::MatrixXd> C(y.data() + dz, dz, dz);
    C = 0.5 * (C + C.transpose()).eval();
    mp.mean[m + 1] = y.head(dz);
    mp.cov[m + 1] = C;
  }
  return mp;
}

}  // namespace

MomentPaths moment_paths(const GameSpec& game, const LawProfile& laws,
                         const std::vector<double>& grid) {
  return integrate_moments(
      grid, game.x0_mean, game.x0_cov,
      [&](double t, const Eigen::VectorXd& m) {
        return closed_loop_at(sample(game, t), profile_at(laws, t), m);
      });
}

MomentPaths pair_moment_paths(const GameSpec& game, const LawProfile& base, int player,
                              const AffineLaw& deviation, const std::vector<double>& grid) {
  const int d = game.d();
  Eigen::VectorXd m0(2 * d);
  m0 << game.x0_mean, game.x0_mean;
  Eigen::MatrixXd c0(2 * d, 2 * d);
  c0 << game.x0_cov, game.x0_cov, game.x0_cov, game.x0_cov;  // X′ starts at the same X₀
  LawProfile dev_profile = base;
  dev_profile[static_cast<std::size_t>(player)] = deviation;
  return integrate_moments(
      grid, m0, c0, [&](double t, const Eigen::VectorXd& m) {
        return pair_closed_loop_at(sample(game, t), profile_at(base, t), player,
                                   profile_at(dev_profile, t), m);
      });
}

double running_cost(const CoefficientSnapshot& snap, int player, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& xbar, const Eigen::VectorXd& a,
                    const Eigen::VectorXd& abar) {
  const auto& cs = snap.cost[static_cast<std::size_t>(player)];
  const Eigen::VectorXd xd = x - xbar;
  double f = xd.dot(cs.Q * xd) + xbar.dot(cs.Q_hat * xbar) + 2.0 * cs.L_x.dot(x);
  for (int k = 0; k < snap.n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const int ok = snap.control_offsets[ku];
    const int dk = snap.control_dims[ku];
    const Eigen::VectorXd ak = a.segment(ok, dk);
    const Eigen::VectorXd abk = abar.segment(ok, dk);
    const Eigen::VectorXd akd = ak - abk;
    f += ak.dot(cs.I[ku] * xd) + abk.dot(cs.I_hat[ku] * xbar);
    f += akd.dot(cs.N[ku] * akd) + abk.dot(cs.N_hat[ku] * abk);
    f += 2.0 * cs.L[ku].dot(ak);
    for (int l = 0; l < snap.n; ++l) {
      if (l == k) continue;
      const auto lu = static_cast<std::size_t>(l);
      const int ol = snap.control_offsets[lu];
      const int dl = snap.control_dims[lu];
      const Eigen::VectorXd ald = a.segment(ol, dl) - abar.segment(ol, dl);
      f += akd.dot(cs.G[ku][lu] * ald) + abk.dot(cs.G_hat[ku][lu] * abar.segment(ol, dl));
    }
  }
  return f;
}

double terminal_cost(const GameSpec& game, int player, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& xbar) {
  const auto& pc = game.cost.players[static_cast<std::size_t>(player)];
  const Eigen::VectorXd xd = x - xbar;
  return xd.dot(pc.P * xd) + xbar.dot((pc.P + pc.P_tilde) * xbar) + 2.0 * pc.r.dot(x);
}

double expected_running_cost(const CoefficientSnapshot& snap, int player, const ProfileAt& prof,
                             const Eigen::VectorXd& xbar, const Eigen::MatrixXd& cov) {
  const auto& cs = snap.cost[static_cast<std::size_t>(player)];
  const Eigen::VectorXd abar = prof.mean_gain * xbar + prof.intercept;
  double f = (cs.Q * cov).trace() + xbar.dot(cs.Q_hat * xbar) + 2.0 * cs.L_x.dot(xbar);
  for (int k = 0; k < snap.n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const int ok = snap.control_offsets[ku];
    const int dk = snap.control_dims[ku];
    const Eigen::MatrixXd Tk = prof.gain.middleRows(ok, dk);  // α_k − ᾱ_k = Tk (x − x̄)
    const Eigen::VectorXd abk = abar.segment(ok, dk);
    f += (Tk.transpose() * cs.I[ku] * cov).trace() + abk.dot(cs.I_hat[ku] * xbar);
    f += (Tk.transpose() * cs.N[ku] * Tk * cov).trace() + abk.dot(cs.N_hat[ku] * abk);
    f += 2.0 * cs.L[ku].dot(abk);
    for (int l = 0; l < snap.n; ++l) {
      if (l == k) continue;
      const auto lu = static_cast<std::size_t>(l);
      const Eigen::MatrixXd Tl = prof.gain.middleRows(snap.control_offsets[lu],
                                                      snap.control_dims[lu]);
      const Eigen::VectorXd abl = abar.segment(snap.control_offsets[lu], snap.control_dims[lu]);
      f += (Tk.transpose() * cs.G[ku][lu] * Tl * cov).trace() + abk.dot(cs.G_hat[ku][lu] * abl);
    }
  }
  return f;
}

}  // namespace lqmkv
