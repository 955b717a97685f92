#include "lqmkv/verify.hpp"

#include <cmath>
#include <sstream>

#include "lqmkv/numerics.hpp"
#include "lqmkv/rng.hpp"

namespace lqmkv {

DriftStats drift_check(const GameSpec& game, const RiccatiSolution& rs, const LawProfile& profile,
                       int player, const std::vector<double>& grid, const SolverOptions& opt) {
  const auto moments = moment_paths(game, profile, grid);
  ValueField field;
  field.player = player;
  field.K = rs.K[static_cast<std::size_t>(player)];
  field.Lambda = rs.Lambda[static_cast<std::size_t>(player)];
  profile_field_coeffs(game, rs, player, profile, grid, field.p, field.p_hat, field.e, opt);
  field.R = MatrixPath::zero(1, 1);  // R does not enter the drift

  DriftStats st;
  st.times = grid;
  st.values.resize(grid.size());
  st.max_abs = 0.0;
  st.min_value = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < grid.size(); ++m) {
    const double v = analytic_drift(game, rs, field, player, profile, grid[m], moments.mean[m],
                                    moments.cov[m]);
    st.values[m] = v;
    st.max_abs = std::max(st.max_abs, std::abs(v));
    st.min_value = std::min(st.min_value, v);
  }
  return st;
}

MartingaleStats martingale_check(const GameSpec& game, const RiccatiSolution& rs,
                                 const LawProfile& profile, int player, const SimConfig& cfg,
                                 const SolverOptions& opt) {
  const auto grid = analysis_grid(game, opt, cfg.t_end);
  const auto moments = moment_paths(game, profile, grid);
  const auto field = profile_field(game, rs, player, profile, grid, moments, opt);
  MartingaleStats st;
  st.curve = martingale_curve(game, profile, field, cfg);
  st.flatness_sigma = 0.0;
  st.worst_increment_sigma = 0.0;
  for (Eigen::Index j = 1; j < st.curve.diff_mean.size(); ++j) {
    if (st.curve.diff_se[j] > 0.0)
      st.flatness_sigma =
          std::max(st.flatness_sigma, std::abs(st.curve.diff_mean[j]) / st.curve.diff_se[j]);
    if (st.curve.incr_se[j] > 0.0)
      st.worst_increment_sigma =
          std::min(st.worst_increment_sigma, st.curve.incr_mean[j] / st.curve.incr_se[j]);
  }
  return st;
}

DeviationResult deviation_test(const GameSpec& game, const LawProfile& base, int player,
                               const AffineLaw& deviation, const SimConfig& cfg,
                               const std::string& description) {
  const auto pc = simulate_deviation(game, base, player, deviation, cfg);
  DeviationResult r;
  r.description = description;
  r.delta = pc.delta_mean;
  r.std_error = pc.delta_std_error;
  return r;
}

DeviationSweep deviation_sweep(const GameSpec& game, const LawProfile& base, int player,
                               const AffineLaw& direction, const std::vector<double>& epsilons,
                               const SimConfig& cfg) {
  DeviationSweep sweep;
  sweep.epsilons = epsilons;
  const auto& self = base[static_cast<std::size_t>(player)];
  for (double eps : epsilons) {
    AffineLaw dev;
    dev.gain = hat(self.gain, MatrixPath::constant((eps * direction.gain.at_clamped(0.0)).eval()));
    dev.mean_gain = hat(self.mean_gain,
                        MatrixPath::constant((eps * direction.mean_gain.at_clamped(0.0)).eval()));
    dev.intercept = hat(self.intercept,
                        MatrixPath::constant((eps * direction.intercept.at_clamped(0.0)).eval()));
    std::ostringstream os;
    os << "eps=" << eps;
    sweep.results.push_back(deviation_test(game, base, player, dev, cfg, os.str()));
  }

  // Least-squares fit ΔJ(ε) ≈ a ε² + b ε (ΔJ(0) = 0 exactly by common
  // random numbers, so no constant term).
  double s22 = 0.0, s21 = 0.0, s11 = 0.0, y2 = 0.0, y1 = 0.0;
  for (std::size_t k = 0; k < epsilons.size(); ++k) {
    const double e = epsilons[k], y = sweep.results[k].delta;
    s22 += e * e * e * e;
    s21 += e * e * e;
    s11 += e * e;
    y2 += e * e * y;
    y1 += e * y;
  }
  const double det = s22 * s11 - s21 * s21;
  if (std::abs(det) > 1e-300) {
    sweep.quadratic_coef = (y2 * s11 - s21 * y1) / det;
    sweep.linear_coef = (s22 * y1 - s21 * y2) / det;
  }
  double ss_res = 0.0, ss_tot = 0.0, ybar = 0.0;
  for (const auto& r : sweep.results) ybar += r.delta;
  ybar /= static_cast<double>(sweep.results.size());
  double se2 = 0.0;
  for (std::size_t k = 0; k < epsilons.size(); ++k) {
    const double e = epsilons[k];
    const double fit = sweep.quadratic_coef * e * e + sweep.linear_coef * e;
    ss_res += std::pow(sweep.results[k].delta - fit, 2);
    ss_tot += std::pow(sweep.results[k].delta - ybar, 2);
    // Propagate per-point MC errors through the linear-coefficient estimator.
    const double w = (s22 * e - s21 * e * e) / det;
    se2 += w * w * std::pow(sweep.results[k].std_error, 2);
  }
  sweep.linear_se = std::sqrt(se2);
  sweep.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return sweep;
}

AffineLaw perturb_law(const AffineLaw& base, double magnitude, std::uint64_t seed) {
  RandomStream rng(seed, 0x7e7b);
  const auto bump = [&](const MatrixPath& path) {
    Eigen::MatrixXd delta(path.rows(), path.cols());
    for (Eigen::Index r = 0; r < delta.rows(); ++r)
      for (Eigen::Index c = 0; c < delta.cols(); ++c) delta(r, c) = rng.next_normal();
    const double scale = magnitude * std::max(1.0, max_abs(path.at_clamped(0.0)));
    return hat(path, MatrixPath::constant((scale * delta).eval()));
  };
  AffineLaw out;
  out.gain = bump(base.gain);
  out.mean_gain = bump(base.mean_gain);
  out.intercept = bump(base.intercept);
  return out;
}

OracleComparison oracle_deterministic(const GameSpec& game, const SolverOptions& opt) {
  OracleComparison cmp;
  const int d = game.d();
  const int n = game.n_players();
  if (!game.finite()) {
    cmp.oracle_failed = true;
    cmp.message = "oracle_deterministic: finite horizon required";
    return cmp;
  }
  // Preconditions: no noise, no mean-field couplings, deterministic start.
  const auto snap0 = sample(game, 0.0);
  for (int l = 0; l < snap0.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    double vol = max_abs(snap0.gamma[lu]) + max_abs(snap0.sigma_x[lu]) +
                 max_abs(snap0.sigma_x_tilde[lu]);
    for (int i = 0; i < n; ++i)
      vol += max_abs(snap0.sigma[lu][static_cast<std::size_t>(i)]) +
             max_abs(snap0.sigma_tilde[lu][static_cast<std::size_t>(i)]);
    if (vol > 0.0) {
      cmp.oracle_failed = true;
      cmp.message = "oracle_deterministic: volatility coefficients must vanish";
      return cmp;
    }
  }
  if (max_abs(game.x0_cov) > 0.0) {
    cmp.oracle_failed = true;
    cmp.message = "oracle_deterministic: deterministic start required";
    return cmp;
  }

  const double T = *game.horizon;
  const double rho = game.cost.rho;
  const auto grid = uniform_grid(0.0, T, opt.grid_steps(T));

  // Backward coupled system for (Ǩ^i, m^i), all players jointly. The
  // closed-loop matrix couples the equations across players.
  const auto rhs = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    const auto snap = sample(game, t);
    std::vector<Eigen::MatrixXd> Kk(static_cast<std::size_t>(n));
    std::vector<Eigen::VectorXd> mm(static_cast<std::size_t>(n));
    Eigen::Index off = 0;
    for (int i = 0; i < n; ++i) {
      Kk[static_cast<std::size_t>(i)] = Eigen::Map<const Eigen::MatrixXd>(y.data() + off, d, d);
      off += d * d;
      mm[static_cast<std::size_t>(i)] = y.segment(off, d);
      off += d;
    }
    Eigen::MatrixXd A_cl = snap.b_x;
    Eigen::VectorXd c_cl = snap.beta;
    std::vector<Eigen::LDLT<Eigen::MatrixXd>> Nf(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      Nf[ku] = snap.cost[ku].N[ku].ldlt();
      const Eigen::MatrixXd gain =
          Nf[ku].solve(0.5 * snap.cost[ku].I[ku] + snap.b[ku].transpose() * Kk[ku]);
      const Eigen::VectorXd aff =
          Nf[ku].solve(snap.cost[ku].L[ku] + snap.b[ku].transpose() * mm[ku]);
      A_cl -= snap.b[ku] * gain;
      c_cl -= snap.b[ku] * aff;
    }
    Eigen::VectorXd out(y.size());
    off = 0;
    for (int i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const Eigen::MatrixXd& Ki = Kk[iu];
      const Eigen::VectorXd& mi = mm[iu];
      const Eigen::VectorXd ui_aff =
          Nf[iu].solve(snap.cost[iu].L[iu] + snap.b[iu].transpose() * mi);
      const Eigen::MatrixXd ui_gain =
          Nf[iu].solve(0.5 * snap.cost[iu].I[iu] + snap.b[iu].transpose() * Ki);
      const Eigen::MatrixXd Kdot = rho * Ki - snap.cost[iu].Q +
                                   0.5 * snap.cost[iu].I[iu].transpose() * ui_gain -
                                   snap.b_x.transpose() * Ki - Ki * A_cl;
      const Eigen::VectorXd mdot = rho * mi - snap.cost[iu].L_x +
                                   0.5 * snap.cost[iu].I[iu].transpose() * ui_aff -
                                   snap.b_x.transpose() * mi - Ki * c_cl;
      Eigen::Map<Eigen::MatrixXd>(out.data() + off, d, d) = Kdot;
      off += d * d;
      out.segment(off, d) = mdot;
      off += d;
    }
    return out;
  };

  Eigen::VectorXd terminal(n * (d * d + d));
  {
    Eigen::Index off = 0;
    for (int i = 0; i < n; ++i) {
      const auto& pc = game.cost.players[static_cast<std::size_t>(i)];
      Eigen::Map<Eigen::MatrixXd>(terminal.data() + off, d, d) = pc.P;
      off += d * d;
      terminal.segment(off, d) = pc.r;
      off += d;
    }
  }
  std::vector<Eigen::VectorXd> adj;
  try {
    adj = integrate_backward(rhs, grid, terminal);
  } catch (const std::exception& ex) {
    cmp.oracle_failed = true;
    cmp.message = std::string("oracle diverged: ") + ex.what();
    return cmp;
  }

  // Forward state under the oracle controls.
  cmp.times = grid;
  cmp.oracle_state.resize(grid.size());
  Eigen::VectorXd x = game.x0_mean;
  cmp.oracle_state[0] = x;
  const auto xdot = [&](double t, const Eigen::VectorXd& xs) -> Eigen::VectorXd {
    // Adjoint interpolated linearly between grid samples.
    const double span = grid.back() - grid.front();
    const double u = std::clamp((t - grid.front()) / span * (grid.size() - 1), 0.0,
                                static_cast<double>(grid.size() - 1));
    const auto lo = static_cast<std::size_t>(u);
    const auto hi = std::min(lo + 1, grid.size() - 1);
    const double w = u - static_cast<double>(lo);
    const Eigen::VectorXd y = (1.0 - w) * adj[lo] + w * adj[hi];
    const auto snap = sample(game, t);
    Eigen::VectorXd dx = snap.beta + snap.b_x * xs;
    Eigen::Index off = 0;
    for (int k = 0; k < n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const Eigen::MatrixXd Kk = Eigen::Map<const Eigen::MatrixXd>(y.data() + off, d, d);
      off += d * d;
      const Eigen::VectorXd mk = y.segment(off, d);
      off += d;
      const Eigen::VectorXd uk = -snap.cost[ku].N[ku].ldlt().solve(
          0.5 * snap.cost[ku].I[ku] * xs + snap.cost[ku].L[ku] +
          snap.b[ku].transpose() * (Kk * xs + mk));
      dx += snap.b[ku] * uk;
    }
    return dx;
  };
  for (std::size_t m = 0; m + 1 < grid.size(); ++m) {
    x = rk4_step(xdot, grid[m], x, grid[m + 1] - grid[m]);
    cmp.oracle_state[m + 1] = x;
  }

  // Mean-field pipeline route on the same game.
  const auto eq = solve_nash(game, opt);
  const auto mp = moment_paths(game, eq.players, grid);
  cmp.pipeline_state = mp.mean;
  for (std::size_t m = 0; m < grid.size(); ++m)
    cmp.max_deviation =
        std::max(cmp.max_deviation, (cmp.pipeline_state[m] - cmp.oracle_state[m]).cwiseAbs().maxCoeff());
  return cmp;
}

bool VerificationReport::pass() const {
  if (drift_eq_max > drift_tol) return false;
  if (drift_perturbed_min < -drift_tol) return false;
  if (flatness_sigma > n_sigma) return false;
  if (perturbed_increment_sigma < -n_sigma) return false;
  for (const auto& dv : deviations)
    if (dv.delta < -n_sigma * dv.std_error) return false;
  for (const auto& sw : sweeps) {
    if (std::abs(sw.linear_coef) > n_sigma * std::max(sw.linear_se, 1e-300)) return false;
    if (sw.r_squared < 0.99) return false;
    for (const auto& r : sw.results)
      if (r.delta < -n_sigma * r.std_error) return false;
  }
  return true;
}

std::string VerificationReport::summary() const {
  std::ostringstream os;
  os << "candidate drift: max |E[D_t]| = " << drift_eq_max << " (tol " << drift_tol << ")\n";
  os << "perturbed drift: min E[D_t] = " << drift_perturbed_min << "\n";
  os << "martingale flatness: max |E[S_t]-E[S_0]|/SE = " << flatness_sigma << " (limit "
     << n_sigma << ")\n";
  os << "perturbed S-curves: most negative increment = " << perturbed_increment_sigma
     << " SE\n";
  for (const auto& dv : deviations)
    os << "deviation " << dv.description << ": dJ = " << dv.delta << " +- " << dv.std_error
       << "\n";
  for (const auto& sw : sweeps)
    os << "eps-sweep: linear = " << sw.linear_coef << " +- " << sw.linear_se
       << ", quadratic = " << sw.quadratic_coef << ", R^2 = " << sw.r_squared << "\n";
  os << (pass() ? "VERIFY PASS\n" : "VERIFY FAIL\n");
  return os.str();
}

VerificationReport verify_equilibrium(const GameSpec& game, const RiccatiSolution& rs,
                                      const LawProfile& candidate, const SimConfig& cfg,
                                      int n_perturbations, std::uint64_t seed,
                                      const SolverOptions& opt) {
  VerificationReport rep;
  const int n = game.n_players();
  const auto grid = [&] {
    const double t_end = game.finite() ? *game.horizon : cfg.t_end;
    return uniform_grid(0.0, t_end, 200);
  }();

  rep.drift_eq_max = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto st = drift_check(game, rs, candidate, i, grid, opt);
    rep.drift_eq_max = std::max(rep.drift_eq_max, st.max_abs);
  }

  rep.drift_perturbed_min = std::numeric_limits<double>::infinity();
  rep.perturbed_increment_sigma = 0.0;
  SimConfig pcfg = cfg;
  pcfg.n_paths = std::max(2000, cfg.n_paths / 10);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n_perturbations; ++k) {
      LawProfile perturbed = candidate;
      perturbed[static_cast<std::size_t>(i)] = perturb_law(
          candidate[static_cast<std::size_t>(i)], 0.1,
          seed + 1000 * static_cast<std::uint64_t>(i) + static_cast<std::uint64_t>(k));
      const auto st = drift_check(game, rs, perturbed, i, grid, opt);
      rep.drift_perturbed_min = std::min(rep.drift_perturbed_min, st.min_value);
      pcfg.seed = cfg.seed + 17 * static_cast<std::uint64_t>(i * n_perturbations + k);
      const auto ms = martingale_check(game, rs, perturbed, i, pcfg, opt);
      rep.perturbed_increment_sigma =
          std::min(rep.perturbed_increment_sigma, ms.worst_increment_sigma);
    }
  }

  // Flatness at the candidate itself.
  rep.flatness_sigma = 0.0;
  for (int i = 0; i < n; ++i) {
    SimConfig fcfg = cfg;
    fcfg.seed = cfg.seed + 31 * static_cast<std::uint64_t>(i);
    const auto ms = martingale_check(game, rs, candidate, i, fcfg, opt);
    rep.flatness_sigma = std::max(rep.flatness_sigma, ms.flatness_sigma);
  }

  // ε-parametrized deviation sweeps: constant offsets per player.
  for (int i = 0; i < n; ++i) {
    AffineLaw dir = AffineLaw::zero(game.control_dim(i), game.d());
    dir.intercept = MatrixPath::constant(Eigen::VectorXd::Ones(game.control_dim(i)));
    SimConfig scfg = cfg;
    scfg.seed = cfg.seed + 101 * static_cast<std::uint64_t>(i);
    rep.sweeps.push_back(
        deviation_sweep(game, candidate, i, dir, {-0.2, -0.1, 0.1, 0.2}, scfg));
    for (const auto& r : rep.sweeps.back().results) rep.deviations.push_back(r);
  }
  return rep;
}

}  // namespace lqmkv
