#include "lqmkv/simulate.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "lqmkv/numerics.hpp"
#include "lqmkv/rng.hpp"

namespace lqmkv {

void SimConfig::validate() const {
  if (n_paths < 2 || n_steps < 1 || !(t_end > 0.0))
    throw ConfigError("SimConfig: need n_paths >= 2, n_steps >= 1, t_end > 0");
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LQMKV_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 16u));
}

namespace {

std::vector<int> snapshot_steps(int n_steps, int max_snaps) {
  std::vector<int> snaps;
  const int count = std::min(std::max(2, max_snaps), n_steps + 1);
  for (int j = 0; j < count; ++j) {
    const int step = static_cast<int>(std::llround(static_cast<double>(j) * n_steps / (count - 1)));
    if (snaps.empty() || step > snaps.back()) snaps.push_back(step);
  }
  if (snaps.back() != n_steps) snaps.push_back(n_steps);
  return snaps;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(cov));
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

void parallel_over_blocks(int n_paths, int threads,
                          const std::function<void(int, int)>& body) {
  constexpr int kBlock = 2048;
  if (threads <= 1) {
    for (int b = 0; b < n_paths; b += kBlock) body(b, std::min(b + kBlock, n_paths));
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int b = next.fetch_add(kBlock);
        if (b >= n_paths) return;
        body(b, std::min(b + kBlock, n_paths));
      }
    });
  for (auto& th : pool) th.join();
}

// Per-step precomputed coefficients of the simulated affine system. For the
// single system the state is X (dim d); for a deviation pair it is (X*, X′)
// (dim 2d). Controls are recovered per system for the cost integrand.
struct StepData {
  double t = 0.0, dt = 0.0, disc = 1.0;
  Eigen::VectorXd zbar;      // analytic mean of the simulated state
  ClosedLoopAt cl;
  CoefficientSnapshot snap;
  ProfileAt base;            // base profile blocks
  ProfileAt dev;             // deviated profile blocks (pair runs only)
};

// Vectorised running cost of one player over path columns.
// Xdev: d×P deviations of the cost-relevant state; A: d_A×P full controls;
// Adev: d_A×P control deviations; xbar/abar: the means used.
Eigen::RowVectorXd running_cost_block(const CoefficientSnapshot& snap, int player,
                                      const Eigen::MatrixXd& Xdev, const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& Adev, const Eigen::VectorXd& xbar,
                                      const Eigen::VectorXd& abar) {
  const auto& cs = snap.cost[static_cast<std::size_t>(player)];
  const auto P = Xdev.cols();
  double c0 = xbar.dot(cs.Q_hat * xbar) + 2.0 * cs.L_x.dot(xbar);
  Eigen::RowVectorXd f = (Xdev.array() * (cs.Q * Xdev).array()).colwise().sum();
  f += 2.0 * (cs.L_x.transpose() * Xdev);
  for (int k = 0; k < snap.n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const int ok = snap.control_offsets[ku];
    const int dk = snap.control_dims[ku];
    const auto Ak = A.middleRows(ok, dk);
    const auto Akd = Adev.middleRows(ok, dk);
    const Eigen::VectorXd abk = abar.segment(ok, dk);
    f += (Ak.array() * (cs.I[ku] * Xdev).array()).colwise().sum().matrix();
    f += (Akd.array() * (cs.N[ku] * Akd).array()).colwise().sum().matrix();
    f += 2.0 * (cs.L[ku].transpose() * Akd);
    c0 += abk.dot(cs.I_hat[ku] * xbar) + abk.dot(cs.N_hat[ku] * abk) + 2.0 * cs.L[ku].dot(abk);
    for (int l = 0; l < snap.n; ++l) {
      if (l == k) continue;
      const auto lu = static_cast<std::size_t>(l);
      const auto Ald = Adev.middleRows(snap.control_offsets[lu], snap.control_dims[lu]);
      f += (Akd.array() * (cs.G[ku][lu] * Ald).array()).colwise().sum().matrix();
      c0 += abk.dot(cs.G_hat[ku][lu] * abar.segment(snap.control_offsets[lu],
                                                    snap.control_dims[lu]));
    }
  }
  f.array() += c0;
  (void)P;
  return f;
}

}  // namespace

PathEnsemble simulate(const GameSpec& game, const LawProfile& laws, const SimConfig& cfg) {
  cfg.validate();
  if (game.finite() && cfg.t_end > *game.horizon * (1.0 + 1e-12))
    throw ConfigError("simulate: t_end exceeds the game horizon");
  const int d = game.d();
  const int dA = game.total_control_dim();
  const int n = game.n_players();
  const int P = cfg.n_paths;
  const double dt = cfg.t_end / cfg.n_steps;
  const double rho = game.cost.rho;
  const bool particle = cfg.mean_mode == SimConfig::MeanMode::Particle;
  const int threads = particle ? 1 : resolve_threads(cfg.threads);

  // Per-step coefficients; Analytic mode pins the mean path up front.
  const auto step_grid = uniform_grid(0.0, cfg.t_end, cfg.n_steps);
  std::vector<Eigen::VectorXd> mean_path;
  {
    const auto mp = moment_paths(game, laws, step_grid);
    mean_path = mp.mean;
  }
  std::vector<StepData> steps(static_cast<std::size_t>(cfg.n_steps) + 1);
  for (int m = 0; m <= cfg.n_steps; ++m) {
    auto& sd = steps[static_cast<std::size_t>(m)];
    sd.t = step_grid[static_cast<std::size_t>(m)];
    sd.dt = dt;
    sd.disc = std::exp(-rho * sd.t);
    sd.snap = sample(game, sd.t);
    sd.base = profile_at(laws, sd.t);
    sd.zbar = mean_path[static_cast<std::size_t>(m)];
    sd.cl = closed_loop_at(sd.snap, sd.base, sd.zbar);
  }

  const auto snaps = snapshot_steps(cfg.n_steps, cfg.max_snapshots);
  PathEnsemble ens;
  ens.times.resize(snaps.size());
  ens.states.assign(snaps.size(), Eigen::MatrixXd(d, P));
  ens.controls.assign(snaps.size(), Eigen::MatrixXd(dA, P));
  ens.running_cost.assign(snaps.size(), Eigen::MatrixXd(n, P));
  ens.mean_used.assign(snaps.size(), Eigen::VectorXd(d));
  ens.total_cost.resize(n, P);
  ens.tail_bound = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < snaps.size(); ++j)
    ens.times[j] = step_grid[static_cast<std::size_t>(snaps[j])];

  const Eigen::MatrixXd cov_sqrt = psd_sqrt(game.x0_cov);
  const double sdt = std::sqrt(dt);

  const auto run_block = [&](int p0, int p1) {
    const int B = p1 - p0;
    Eigen::MatrixXd X(d, B), dW(game.dynamics.kappa, B);
    Eigen::MatrixXd running = Eigen::MatrixXd::Zero(n, B);
    std::vector<RandomStream> streams;
    streams.reserve(static_cast<std::size_t>(B));
    for (int p = p0; p < p1; ++p)
      streams.emplace_back(cfg.seed, static_cast<std::uint64_t>(p));
    for (int p = 0; p < B; ++p) {
      Eigen::VectorXd xi(d);
      for (int r = 0; r < d; ++r) xi[r] = streams[static_cast<std::size_t>(p)].next_normal();
      X.col(p) = game.x0_mean + cov_sqrt * xi;
    }

    std::size_t snap_idx = 0;
    for (int m = 0; m <= cfg.n_steps; ++m) {
      const auto& sd = steps[static_cast<std::size_t>(m)];
      const Eigen::VectorXd& xbar = sd.zbar;
      const Eigen::VectorXd abar = sd.base.mean_gain * xbar + sd.base.intercept;
      const Eigen::MatrixXd Xdev = X.colwise() - xbar;
      const Eigen::MatrixXd Adev = sd.base.gain * Xdev;
      const Eigen::MatrixXd A = Adev.colwise() + abar;

      while (snap_idx < snaps.size() && snaps[snap_idx] == m) {
        ens.states[snap_idx].middleCols(p0, B) = X;
        ens.controls[snap_idx].middleCols(p0, B) = A;
        ens.running_cost[snap_idx].middleCols(p0, B) = running;
        ++snap_idx;
      }
      if (m == cfg.n_steps) break;

      for (int i = 0; i < n; ++i)
        running.row(i) +=
            (sd.disc * dt) * running_cost_block(sd.snap, i, Xdev, A, Adev, xbar, abar);

      if (!X.allFinite())
        throw SolverError("simulate: non-finite state at step " + std::to_string(m));

      for (int p = 0; p < B; ++p)
        for (int l = 0; l < game.dynamics.kappa; ++l)
          dW(l, p) = sdt * streams[static_cast<std::size_t>(p)].next_normal();

      Eigen::MatrixXd incr = dt * (sd.cl.drift_dev * Xdev);
      incr.colwise() += dt * sd.cl.drift_mean;
      for (int l = 0; l < game.dynamics.kappa; ++l) {
        const auto lu = static_cast<std::size_t>(l);
        Eigen::MatrixXd vol = sd.cl.vol_dev[lu] * Xdev;
        vol.colwise() += sd.cl.vol_mean[lu];
        incr += (vol.array().rowwise() * dW.row(l).array()).matrix();
      }
      X += incr;
    }

    ens.total_cost.middleCols(p0, B) = running;
    if (game.finite()) {
      const double discT = std::exp(-rho * cfg.t_end);
      const Eigen::VectorXd& xbarT = steps.back().zbar;
      for (int p = 0; p < B; ++p)
        for (int i = 0; i < n; ++i)
          ens.total_cost(i, p0 + p) += discT * terminal_cost(game, i, X.col(p), xbarT);
    }
  };

  if (particle) {
    // Particle mode recomputes the mean from the ensemble every step, so all
    // paths advance in lockstep (single-threaded, fixed summation order).
    Eigen::MatrixXd X(d, P), dW(game.dynamics.kappa, P);
    Eigen::MatrixXd running = Eigen::MatrixXd::Zero(n, P);
    std::vector<RandomStream> streams;
    streams.reserve(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) streams.emplace_back(cfg.seed, static_cast<std::uint64_t>(p));
    for (int p = 0; p < P; ++p) {
      Eigen::VectorXd xi(d);
      for (int r = 0; r < d; ++r) xi[r] = streams[static_cast<std::size_t>(p)].next_normal();
      X.col(p) = game.x0_mean + cov_sqrt * xi;
    }
    std::size_t snap_idx = 0;
    for (int m = 0; m <= cfg.n_steps; ++m) {
      auto& sd = steps[static_cast<std::size_t>(m)];
      const Eigen::VectorXd xbar = X.rowwise().mean();
      sd.zbar = xbar;
      sd.cl = closed_loop_at(sd.snap, sd.base, xbar);
      const Eigen::VectorXd abar = sd.base.mean_gain * xbar + sd.base.intercept;
      const Eigen::MatrixXd Xdev = X.colwise() - xbar;
      const Eigen::MatrixXd Adev = sd.base.gain * Xdev;
      const Eigen::MatrixXd A = Adev.colwise() + abar;
      while (snap_idx < snaps.size() && snaps[snap_idx] == m) {
        ens.states[snap_idx] = X;
        ens.controls[snap_idx] = A;
        ens.running_cost[snap_idx] = running;
        ++snap_idx;
      }
      if (m == cfg.n_steps) break;
      for (int i = 0; i < n; ++i)
        running.row(i) +=
            (sd.disc * dt) * running_cost_block(sd.snap, i, Xdev, A, Adev, xbar, abar);
      if (!X.allFinite())
        throw SolverError("simulate: non-finite state at step " + std::to_string(m));
      for (int p = 0; p < P; ++p)
        for (int l = 0; l < game.dynamics.kappa; ++l)
          dW(l, p) = sdt * streams[static_cast<std::size_t>(p)].next_normal();
      Eigen::MatrixXd incr = dt * (sd.cl.drift_dev * Xdev);
      incr.colwise() += dt * sd.cl.drift_mean;
      for (int l = 0; l < game.dynamics.kappa; ++l) {
        const auto lu = static_cast<std::size_t>(l);
        Eigen::MatrixXd vol = sd.cl.vol_dev[lu] * Xdev;
        vol.colwise() += sd.cl.vol_mean[lu];
        incr += (vol.array().rowwise() * dW.row(l).array()).matrix();
      }
      X += incr;
    }
    ens.total_cost = running;
    if (game.finite()) {
      const double discT = std::exp(-rho * cfg.t_end);
      const Eigen::VectorXd xbarT = X.rowwise().mean();
      for (int p = 0; p < P; ++p)
        for (int i = 0; i < n; ++i)
          ens.total_cost(i, p) += discT * terminal_cost(game, i, X.col(p), xbarT);
    }
  } else {
    parallel_over_blocks(P, threads, run_block);
  }

  for (std::size_t j = 0; j < snaps.size(); ++j)
    ens.mean_used[j] = steps[static_cast<std::size_t>(snaps[j])].zbar;

  if (!game.finite() && rho > 0.0) {
    // Truncation tail bound e^{−ρ t_end}·(terminal mean cost rate)/ρ.
    const auto& last = steps.back();
    const Eigen::VectorXd abar = last.base.mean_gain * last.zbar + last.base.intercept;
    const Eigen::MatrixXd XdevT = ens.states.back().colwise() - last.zbar;
    const Eigen::MatrixXd AdevT = last.base.gain * XdevT;
    const Eigen::MatrixXd AT = AdevT.colwise() + abar;
    for (int i = 0; i < n; ++i) {
      const double f_end =
          running_cost_block(last.snap, i, XdevT, AT, AdevT, last.zbar, abar).mean();
      ens.tail_bound[i] = std::exp(-rho * cfg.t_end) * std::abs(f_end) / rho;
    }
  }
  return ens;
}

CostEstimate estimate_cost(const PathEnsemble& ens, int player) {
  const auto row = ens.total_cost.row(player);
  const auto P = row.cols();
  CostEstimate est;
  est.mean = row.mean();
  const double var = (row.array() - est.mean).square().sum() / static_cast<double>(P - 1);
  est.std_error = std::sqrt(var / static_cast<double>(P));
  return est;
}

PairCosts simulate_deviation(const GameSpec& game, const LawProfile& base, int player,
                             const AffineLaw& deviation, const SimConfig& cfg) {
  cfg.validate();
  const int d = game.d();
  const int P = cfg.n_paths;
  const double dt = cfg.t_end / cfg.n_steps;
  const double rho = game.cost.rho;
  const int threads = resolve_threads(cfg.threads);
  const int oi = game.dynamics.control_offset(player);
  const int di = game.control_dim(player);

  LawProfile dev_profile = base;
  dev_profile[static_cast<std::size_t>(player)] = deviation;

  const auto step_grid = uniform_grid(0.0, cfg.t_end, cfg.n_steps);
  const auto pair_means = pair_moment_paths(game, base, player, deviation, step_grid);
  std::vector<StepData> steps(static_cast<std::size_t>(cfg.n_steps) + 1);
  for (int m = 0; m <= cfg.n_steps; ++m) {
    auto& sd = steps[static_cast<std::size_t>(m)];
    sd.t = step_grid[static_cast<std::size_t>(m)];
    sd.dt = dt;
    sd.disc = std::exp(-rho * sd.t);
    sd.snap = sample(game, sd.t);
    sd.base = profile_at(base, sd.t);
    sd.dev = profile_at(dev_profile, sd.t);
    sd.zbar = pair_means.mean[static_cast<std::size_t>(m)];
    sd.cl = pair_closed_loop_at(sd.snap, sd.base, player, sd.dev, sd.zbar);
  }

  PairCosts out;
  out.base.resize(P);
  out.dev.resize(P);
  const Eigen::MatrixXd cov_sqrt = psd_sqrt(game.x0_cov);
  const double sdt = std::sqrt(dt);

  const auto run_block = [&](int p0, int p1) {
    const int B = p1 - p0;
    Eigen::MatrixXd Z(2 * d, B), dW(game.dynamics.kappa, B);
    Eigen::RowVectorXd cost_base = Eigen::RowVectorXd::Zero(B);
    Eigen::RowVectorXd cost_dev = Eigen::RowVectorXd::Zero(B);
    std::vector<RandomStream> streams;
    streams.reserve(static_cast<std::size_t>(B));
    for (int p = p0; p < p1; ++p)
      streams.emplace_back(cfg.seed, static_cast<std::uint64_t>(p));
    for (int p = 0; p < B; ++p) {
      Eigen::VectorXd xi(d);
      for (int r = 0; r < d; ++r) xi[r] = streams[static_cast<std::size_t>(p)].next_normal();
      const Eigen::VectorXd x0 = game.x0_mean + cov_sqrt * xi;
      Z.col(p).head(d) = x0;
      Z.col(p).tail(d) = x0;
    }

    for (int m = 0; m < cfg.n_steps; ++m) {
      const auto& sd = steps[static_cast<std::size_t>(m)];
      const Eigen::VectorXd xbar_ref = sd.zbar.head(d);
      const Eigen::VectorXd xbar_dev = sd.zbar.tail(d);
      const Eigen::MatrixXd Zdev = Z.colwise() - sd.zbar;
      const auto Xr = Zdev.topRows(d);
      const auto Xd = Zdev.bottomRows(d);

      // Base-system controls (all players on X*).
      const Eigen::VectorXd abar_ref = sd.base.mean_gain * xbar_ref + sd.base.intercept;
      const Eigen::MatrixXd Adev_ref = sd.base.gain * Xr;
      const Eigen::MatrixXd A_ref = Adev_ref.colwise() + abar_ref;
      cost_base +=
          (sd.disc * dt) * running_cost_block(sd.snap, player, Xr, A_ref, Adev_ref, xbar_ref,
                                              abar_ref);

      // Deviated-system controls: opponents keep their X*-processes.
      Eigen::VectorXd abar_d = abar_ref;
      abar_d.segment(oi, di) =
          sd.dev.mean_gain.middleRows(oi, di) * xbar_dev + sd.dev.intercept.segment(oi, di);
      Eigen::MatrixXd Adev_d = Adev_ref;
      Adev_d.middleRows(oi, di) = sd.dev.gain.middleRows(oi, di) * Xd;
      const Eigen::MatrixXd A_d = Adev_d.colwise() + abar_d;
      cost_dev +=
          (sd.disc * dt) * running_cost_block(sd.snap, player, Xd, A_d, Adev_d, xbar_dev, abar_d);

      if (!Z.allFinite())
        throw SolverError("simulate_deviation: non-finite state at step " + std::to_string(m));

      for (int p = 0; p < B; ++p)
        for (int l = 0; l < game.dynamics.kappa; ++l)
          dW(l, p) = sdt * streams[static_cast<std::size_t>(p)].next_normal();
      Eigen::MatrixXd incr = dt * (sd.cl.drift_dev * Zdev);
      incr.colwise() += dt * sd.cl.drift_mean;
      for (int l = 0; l < game.dynamics.kappa; ++l) {
        const auto lu = static_cast<std::size_t>(l);
        Eigen::MatrixXd vol = sd.cl.vol_dev[lu] * Zdev;
        vol.colwise() += sd.cl.vol_mean[lu];
        incr += (vol.array().rowwise() * dW.row(l).array()).matrix();
      }
      Z += incr;
    }

    if (game.finite()) {
      const auto& last = steps.back();
      const double discT = std::exp(-rho * cfg.t_end);
      for (int p = 0; p < B; ++p) {
        cost_base[p] += discT * terminal_cost(game, player, Z.col(p).head(d), last.zbar.head(d));
        cost_dev[p] += discT * terminal_cost(game, player, Z.col(p).tail(d), last.zbar.tail(d));
      }
    }
    out.base.segment(p0, B) = cost_base;
    out.dev.segment(p0, B) = cost_dev;
  };

  parallel_over_blocks(P, threads, run_block);

  const Eigen::VectorXd delta = out.dev - out.base;
  out.delta_mean = delta.mean();
  const double var = (delta.array() - out.delta_mean).square().sum() / (P - 1);
  out.delta_std_error = std::sqrt(var / P);
  return out;
}

SCurve martingale_curve(const GameSpec& game, const LawProfile& laws, const ValueField& field,
                        const SimConfig& cfg) {
  const auto ens = simulate(game, laws, cfg);
  const int P = cfg.n_paths;
  const double rho = game.cost.rho;
  const std::size_t S = ens.times.size();

  Eigen::MatrixXd s_vals(S, P);
  for (std::size_t j = 0; j < S; ++j) {
    const double t = ens.times[j];
    const double disc = std::exp(-rho * t);
    const Eigen::VectorXd& xbar = ens.mean_used[j];
    for (int p = 0; p < P; ++p) {
      const Eigen::VectorXd x = ens.states[j].col(p);
      s_vals(j, p) =
          disc * field.w(t, x, xbar, x, xbar) + ens.running_cost[j](field.player, p);
    }
  }

  SCurve c;
  c.times = ens.times;
  c.s_mean.resize(S);
  c.diff_mean.resize(S);
  c.diff_se.resize(S);
  c.incr_mean.resize(S);
  c.incr_se.resize(S);
  const auto paired_stats = [&](const Eigen::RowVectorXd& delta, double& mean, double& se) {
    mean = delta.mean();
    const double var = (delta.array() - mean).square().sum() / (P - 1);
    se = std::sqrt(var / P);
  };
  for (std::size_t j = 0; j < S; ++j) {
    c.s_mean[static_cast<Eigen::Index>(j)] = s_vals.row(static_cast<Eigen::Index>(j)).mean();
    double m, se;
    paired_stats(s_vals.row(static_cast<Eigen::Index>(j)) - s_vals.row(0), m, se);
    c.diff_mean[static_cast<Eigen::Index>(j)] = m;
    c.diff_se[static_cast<Eigen::Index>(j)] = se;
    const auto prev = j == 0 ? 0 : j - 1;
    paired_stats(s_vals.row(static_cast<Eigen::Index>(j)) -
                     s_vals.row(static_cast<Eigen::Index>(prev)),
                 m, se);
    c.incr_mean[static_cast<Eigen::Index>(j)] = m;
    c.incr_se[static_cast<Eigen::Index>(j)] = se;
  }
  return c;
}

}  // namespace lqmkv
