#include "lqmkv/game.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "lqmkv/numerics.hpp"

namespace lqmkv {

namespace {

constexpr double kSymTol = 1e-12;
constexpr double kPsdTol = -1e-10;

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

void check_shape(const MatrixPath& p, Eigen::Index rows, Eigen::Index cols,
                 const std::string& name) {
  require(!p.empty(), name + ": missing coefficient path");
  require(p.rows() == rows && p.cols() == cols,
          name + ": sample shape does not match declared dimensions");
}

void check_symmetric_path(const MatrixPath& p, const std::string& name) {
  for (const auto& v : p.values())
    require(max_abs(v - v.transpose()) <= kSymTol, name + ": declared-symmetric block is not");
}

void check_covers(const MatrixPath& p, double T, const std::string& name) {
  if (p.is_constant()) return;
  require(p.t_front() <= 0.0 && p.t_back() >= T, name + ": path does not cover [0, T]");
}

void check_constant(const MatrixPath& p, const std::string& name) {
  require(p.is_constant(), name + ": infinite-horizon coefficients must be constant");
}

}  // namespace

int DynamicsSpec::total_control_dim() const {
  return std::accumulate(control_dims.begin(), control_dims.end(), 0);
}

int DynamicsSpec::control_offset(int player) const {
  int off = 0;
  for (int k = 0; k < player; ++k) off += control_dims[static_cast<std::size_t>(k)];
  return off;
}

void GameSpec::validate_structure() const {
  const auto& dy = dynamics;
  require(dy.d >= 1 && dy.n >= 1 && dy.kappa >= 1, "GameSpec: need d >= 1, n >= 1, kappa >= 1");
  require(static_cast<int>(dy.control_dims.size()) == dy.n, "GameSpec: control_dims size != n");
  for (int di : dy.control_dims) require(di >= 1, "GameSpec: every d_i must be >= 1");
  require(static_cast<int>(cost.players.size()) == dy.n, "GameSpec: cost players size != n");
  require(cost.rho >= 0.0, "GameSpec: rho must be nonnegative");
  if (finite()) require(*horizon > 0.0, "GameSpec: finite horizon requires T > 0");

  const int d = dy.d;
  check_shape(dy.b_x, d, d, "b_x");
  check_shape(dy.b_x_tilde, d, d, "b_x_tilde");
  check_shape(dy.beta, d, 1, "beta");
  require(static_cast<int>(dy.b.size()) == dy.n && static_cast<int>(dy.b_tilde.size()) == dy.n,
          "GameSpec: b/b_tilde must have one entry per player");
  require(static_cast<int>(dy.sigma_x.size()) == dy.kappa &&
              static_cast<int>(dy.sigma_x_tilde.size()) == dy.kappa &&
              static_cast<int>(dy.sigma.size()) == dy.kappa &&
              static_cast<int>(dy.sigma_tilde.size()) == dy.kappa &&
              static_cast<int>(dy.gamma.size()) == dy.kappa,
          "GameSpec: volatility blocks must have one entry per noise");
  for (int i = 0; i < dy.n; ++i) {
    const int di = dy.control_dims[static_cast<std::size_t>(i)];
    check_shape(dy.b[static_cast<std::size_t>(i)], d, di, "b_i");
    check_shape(dy.b_tilde[static_cast<std::size_t>(i)], d, di, "b_tilde_i");
  }
  for (int l = 0; l < dy.kappa; ++l) {
    check_shape(dy.sigma_x[static_cast<std::size_t>(l)], d, d, "sigma_x");
    check_shape(dy.sigma_x_tilde[static_cast<std::size_t>(l)], d, d, "sigma_x_tilde");
    check_shape(dy.gamma[static_cast<std::size_t>(l)], d, 1, "gamma");
    require(static_cast<int>(dy.sigma[static_cast<std::size_t>(l)].size()) == dy.n &&
                static_cast<int>(dy.sigma_tilde[static_cast<std::size_t>(l)].size()) == dy.n,
            "GameSpec: sigma blocks must have one entry per player");
    for (int i = 0; i < dy.n; ++i) {
      const int di = dy.control_dims[static_cast<std::size_t>(i)];
      check_shape(dy.sigma[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)], d, di,
                  "sigma_i");
      check_shape(dy.sigma_tilde[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)], d, di,
                  "sigma_tilde_i");
    }
  }

  for (int i = 0; i < dy.n; ++i) {
    const auto& pc = cost.players[static_cast<std::size_t>(i)];
    const std::string tag = "player " + std::to_string(i + 1) + " ";
    check_shape(pc.Q, d, d, tag + "Q");
    check_shape(pc.Q_tilde, d, d, tag + "Q_tilde");
    check_symmetric_path(pc.Q, tag + "Q");
    check_symmetric_path(pc.Q_tilde, tag + "Q_tilde");
    check_shape(pc.L_x, d, 1, tag + "L_x");
    require(pc.P.rows() == d && pc.P.cols() == d, tag + "P shape");
    require(pc.P_tilde.rows() == d && pc.P_tilde.cols() == d, tag + "P_tilde shape");
    require(max_abs(pc.P - pc.P.transpose()) <= kSymTol, tag + "P symmetry");
    require(max_abs(pc.P_tilde - pc.P_tilde.transpose()) <= kSymTol, tag + "P_tilde symmetry");
    require(pc.r.size() == d, tag + "r shape");
    require(static_cast<int>(pc.I.size()) == dy.n && static_cast<int>(pc.I_tilde.size()) == dy.n &&
                static_cast<int>(pc.N.size()) == dy.n &&
                static_cast<int>(pc.N_tilde.size()) == dy.n &&
                static_cast<int>(pc.L.size()) == dy.n,
            tag + "per-opponent cost blocks must have one entry per player");
    require(static_cast<int>(pc.G.size()) == dy.n && static_cast<int>(pc.G_tilde.size()) == dy.n,
            tag + "G must be n×n blocks");
    for (int k = 0; k < dy.n; ++k) {
      const int dk = dy.control_dims[static_cast<std::size_t>(k)];
      check_shape(pc.I[static_cast<std::size_t>(k)], dk, d, tag + "I_k");
      check_shape(pc.I_tilde[static_cast<std::size_t>(k)], dk, d, tag + "I_tilde_k");
      check_shape(pc.N[static_cast<std::size_t>(k)], dk, dk, tag + "N_k");
      check_shape(pc.N_tilde[static_cast<std::size_t>(k)], dk, dk, tag + "N_tilde_k");
      check_symmetric_path(pc.N[static_cast<std::size_t>(k)], tag + "N_k");
      check_symmetric_path(pc.N_tilde[static_cast<std::size_t>(k)], tag + "N_tilde_k");
      check_shape(pc.L[static_cast<std::size_t>(k)], dk, 1, tag + "L_k");
      require(static_cast<int>(pc.G[static_cast<std::size_t>(k)].size()) == dy.n &&
                  static_cast<int>(pc.G_tilde[static_cast<std::size_t>(k)].size()) == dy.n,
              tag + "G rows must have one entry per player");
      for (int l = 0; l < dy.n; ++l) {
        if (l == k) continue;
        const int dl = dy.control_dims[static_cast<std::size_t>(l)];
        check_shape(pc.G[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)], dk, dl,
                    tag + "G_kl");
        check_shape(pc.G_tilde[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)], dk, dl,
                    tag + "G_tilde_kl");
      }
    }
  }

  require(x0_mean.size() == d, "x0_mean shape");
  require(x0_cov.rows() == d && x0_cov.cols() == d, "x0_cov shape");
  require(max_abs(x0_cov - x0_cov.transpose()) <= kSymTol, "x0_cov symmetry");
  require(min_eigenvalue(x0_cov) >= kPsdTol, "x0_cov must be PSD");

  // Horizon coverage / constancy.
  const auto for_each_path = [&](const std::function<void(const MatrixPath&, const std::string&,
                                                          bool /*is_linear_term*/)>& fn) {
    fn(dy.b_x, "b_x", false);
    fn(dy.b_x_tilde, "b_x_tilde", false);
    fn(dy.beta, "beta", false);
    for (int i = 0; i < dy.n; ++i) {
      fn(dy.b[static_cast<std::size_t>(i)], "b_i", false);
      fn(dy.b_tilde[static_cast<std::size_t>(i)], "b_tilde_i", false);
    }
    for (int l = 0; l < dy.kappa; ++l) {
      fn(dy.sigma_x[static_cast<std::size_t>(l)], "sigma_x", false);
      fn(dy.sigma_x_tilde[static_cast<std::size_t>(l)], "sigma_x_tilde", false);
      fn(dy.gamma[static_cast<std::size_t>(l)], "gamma", false);
      for (int i = 0; i < dy.n; ++i) {
        fn(dy.sigma[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)], "sigma_i", false);
        fn(dy.sigma_tilde[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)],
           "sigma_tilde_i", false);
      }
    }
    for (int i = 0; i < dy.n; ++i) {
      const auto& pc = cost.players[static_cast<std::size_t>(i)];
      fn(pc.Q, "Q", false);
      fn(pc.Q_tilde, "Q_tilde", false);
      fn(pc.L_x, "L_x", true);
      for (int k = 0; k < dy.n; ++k) {
        fn(pc.I[static_cast<std::size_t>(k)], "I", false);
        fn(pc.I_tilde[static_cast<std::size_t>(k)], "I_tilde", false);
        fn(pc.N[static_cast<std::size_t>(k)], "N", false);
        fn(pc.N_tilde[static_cast<std::size_t>(k)], "N_tilde", false);
        fn(pc.L[static_cast<std::size_t>(k)], "L_k", true);
        for (int l = 0; l < dy.n; ++l) {
          if (l == k) continue;
          fn(pc.G[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)], "G", false);
          fn(pc.G_tilde[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)], "G_tilde",
             false);
        }
      }
    }
  };
  if (finite()) {
    const double T = *horizon;
    for_each_path([&](const MatrixPath& p, const std::string& name, bool) {
      check_covers(p, T, name);
    });
  } else {
    for_each_path([&](const MatrixPath& p, const std::string& name, bool is_linear) {
      if (!is_linear) check_constant(p, name);
    });
  }
}

namespace {

Eigen::MatrixXd path_at(const MatrixPath& p, double t, bool clamp) {
  return clamp ? p.at_clamped(t) : p.at(t);
}

}  // namespace

CoefficientSnapshot sample(const GameSpec& game, double t) {
  const auto& dy = game.dynamics;
  if (game.finite()) {
    const double T = *game.horizon;
    if (t < -1e-9 * std::max(1.0, T) || t > T * (1.0 + 1e-9) + 1e-12)
      throw RangeError("sample: t outside [0, T]");
  } else if (t < 0.0) {
    throw RangeError("sample: t must be nonnegative");
  }
  // Infinite-horizon L-paths may be time varying; clamp them past their last
  // sample. Everything else is constant there, so clamping is a no-op.
  const bool clamp = !game.finite();

  CoefficientSnapshot s;
  s.t = t;
  s.d = dy.d;
  s.n = dy.n;
  s.kappa = dy.kappa;
  s.control_dims = dy.control_dims;
  s.d_a = dy.total_control_dim();
  s.control_offsets.resize(dy.control_dims.size());
  for (int i = 0; i < dy.n; ++i)
    s.control_offsets[static_cast<std::size_t>(i)] = dy.control_offset(i);

  s.b_x = path_at(dy.b_x, t, clamp);
  s.b_x_tilde = path_at(dy.b_x_tilde, t, clamp);
  s.b_x_hat = s.b_x + s.b_x_tilde;
  s.beta = path_at(dy.beta, t, clamp);
  s.b.resize(dy.b.size());
  s.b_tilde.resize(dy.b.size());
  s.b_hat.resize(dy.b.size());
  s.B.resize(dy.d, s.d_a);
  s.B_tilde.resize(dy.d, s.d_a);
  for (int i = 0; i < dy.n; ++i) {
    auto& bi = s.b[static_cast<std::size_t>(i)];
    auto& bti = s.b_tilde[static_cast<std::size_t>(i)];
    bi = path_at(dy.b[static_cast<std::size_t>(i)], t, clamp);
    bti = path_at(dy.b_tilde[static_cast<std::size_t>(i)], t, clamp);
    s.b_hat[static_cast<std::size_t>(i)] = bi + bti;
    s.B.middleCols(dy.control_offset(i), bi.cols()) = bi;
    s.B_tilde.middleCols(dy.control_offset(i), bi.cols()) = bti;
  }
  s.B_hat = s.B + s.B_tilde;

  s.sigma_x.resize(static_cast<std::size_t>(dy.kappa));
  s.sigma_x_tilde.resize(static_cast<std::size_t>(dy.kappa));
  s.sigma_x_hat.resize(static_cast<std::size_t>(dy.kappa));
  s.sigma.resize(static_cast<std::size_t>(dy.kappa));
  s.sigma_tilde.resize(static_cast<std::size_t>(dy.kappa));
  s.sigma_hat.resize(static_cast<std::size_t>(dy.kappa));
  s.gamma.resize(static_cast<std::size_t>(dy.kappa));
  s.Sigma.resize(static_cast<std::size_t>(dy.kappa));
  s.Sigma_tilde.resize(static_cast<std::size_t>(dy.kappa));
  s.Sigma_hat.resize(static_cast<std::size_t>(dy.kappa));
  for (int l = 0; l < dy.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    s.sigma_x[lu] = path_at(dy.sigma_x[lu], t, clamp);
    s.sigma_x_tilde[lu] = path_at(dy.sigma_x_tilde[lu], t, clamp);
    s.sigma_x_hat[lu] = s.sigma_x[lu] + s.sigma_x_tilde[lu];
    s.gamma[lu] = path_at(dy.gamma[lu], t, clamp);
    s.sigma[lu].resize(static_cast<std::size_t>(dy.n));
    s.sigma_tilde[lu].resize(static_cast<std::size_t>(dy.n));
    s.sigma_hat[lu].resize(static_cast<std::size_t>(dy.n));
    s.Sigma[lu].resize(dy.d, s.d_a);
    s.Sigma_tilde[lu].resize(dy.d, s.d_a);
    for (int i = 0; i < dy.n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      s.sigma[lu][iu] = path_at(dy.sigma[lu][iu], t, clamp);
      s.sigma_tilde[lu][iu] = path_at(dy.sigma_tilde[lu][iu], t, clamp);
      s.sigma_hat[lu][iu] = s.sigma[lu][iu] + s.sigma_tilde[lu][iu];
      s.Sigma[lu].middleCols(dy.control_offset(i), s.sigma[lu][iu].cols()) = s.sigma[lu][iu];
      s.Sigma_tilde[lu].middleCols(dy.control_offset(i), s.sigma[lu][iu].cols()) =
          s.sigma_tilde[lu][iu];
    }
    s.Sigma_hat[lu] = s.Sigma[lu] + s.Sigma_tilde[lu];
  }

  s.cost.resize(static_cast<std::size_t>(dy.n));
  for (int i = 0; i < dy.n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const auto& pc = game.cost.players[iu];
    auto& cs = s.cost[iu];
    cs.Q = path_at(pc.Q, t, clamp);
    cs.Q_tilde = path_at(pc.Q_tilde, t, clamp);
    cs.Q_hat = cs.Q + cs.Q_tilde;
    cs.L_x = path_at(pc.L_x, t, clamp);
    cs.P = pc.P;
    cs.P_hat = pc.P + pc.P_tilde;
    cs.r = pc.r;
    cs.I.resize(static_cast<std::size_t>(dy.n));
    cs.I_hat.resize(static_cast<std::size_t>(dy.n));
    cs.N.resize(static_cast<std::size_t>(dy.n));
    cs.N_hat.resize(static_cast<std::size_t>(dy.n));
    cs.L.resize(static_cast<std::size_t>(dy.n));
    cs.G.resize(static_cast<std::size_t>(dy.n));
    cs.G_hat.resize(static_cast<std::size_t>(dy.n));
    for (int k = 0; k < dy.n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      cs.I[ku] = path_at(pc.I[ku], t, clamp);
      cs.I_hat[ku] = cs.I[ku] + path_at(pc.I_tilde[ku], t, clamp);
      cs.N[ku] = path_at(pc.N[ku], t, clamp);
      cs.N_hat[ku] = cs.N[ku] + path_at(pc.N_tilde[ku], t, clamp);
      cs.L[ku] = path_at(pc.L[ku], t, clamp);
      cs.G[ku].resize(static_cast<std::size_t>(dy.n));
      cs.G_hat[ku].resize(static_cast<std::size_t>(dy.n));
      for (int l = 0; l < dy.n; ++l) {
        const auto lu2 = static_cast<std::size_t>(l);
        const int dk = dy.control_dims[ku];
        const int dl = dy.control_dims[lu2];
        if (l == k) {
          cs.G[ku][lu2] = Eigen::MatrixXd::Zero(dk, dl);
          cs.G_hat[ku][lu2] = Eigen::MatrixXd::Zero(dk, dl);
        } else {
          cs.G[ku][lu2] = path_at(pc.G[ku][lu2], t, clamp);
          cs.G_hat[ku][lu2] = cs.G[ku][lu2] + path_at(pc.G_tilde[ku][lu2], t, clamp);
        }
      }
    }
  }
  return s;
}

bool AssumptionReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string AssumptionReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.pass ? "[pass] " : "[FAIL] ") << c.name;
    if (c.player >= 0) os << " (player " << c.player + 1 << ")";
    os << "  margin=" << c.margin;
    if (std::isfinite(c.worst_time)) os << "  at t=" << c.worst_time;
    os << "\n";
  }
  return os.str();
}

namespace {

// Evaluation times for the worst-case scan: every coefficient grid node plus
// a uniform refinement.
std::vector<double> scan_times(const GameSpec& game) {
  std::set<double> ts;
  const double t_end = game.finite() ? *game.horizon : 0.0;
  ts.insert(0.0);
  ts.insert(t_end);
  const auto add_grid = [&](const MatrixPath& p) {
    for (double t : p.grid())
      if (t >= 0.0 && t <= t_end) ts.insert(t);
  };
  for (const auto& pc : game.cost.players) {
    add_grid(pc.Q);
    for (const auto& p : pc.I) add_grid(p);
    for (const auto& p : pc.N) add_grid(p);
    for (const auto& p : pc.N_tilde) add_grid(p);
    add_grid(pc.Q_tilde);
    for (const auto& p : pc.I_tilde) add_grid(p);
  }
  if (game.finite()) {
    for (int m = 0; m <= 200; ++m) ts.insert(t_end * m / 200.0);
  }
  return {ts.begin(), ts.end()};
}

}  // namespace

AssumptionReport validate_assumptions(const GameSpec& game) {
  AssumptionReport rep;
  const int n = game.n_players();
  const auto times = scan_times(game);

  struct Worst {
    double margin = std::numeric_limits<double>::infinity();
    double t = 0.0;
    bool valid = true;
  };

  for (int i = 0; i < n; ++i) {
    Worst nmin, qin, nhat, qin_hat;
    for (double t : times) {
      const auto snap = sample(game, t);
      const auto& cs = snap.cost[static_cast<std::size_t>(i)];
      const auto iu = static_cast<std::size_t>(i);
      const double en = min_eigenvalue(cs.N[iu]);
      if (en < nmin.margin) nmin = {en, t, true};
      const double enh = min_eigenvalue(cs.N_hat[iu]);
      if (enh < nhat.margin) nhat = {enh, t, true};

      if (en > 0.0) {
        const Eigen::MatrixXd m =
            cs.Q - cs.I[iu].transpose() * cs.N[iu].ldlt().solve(cs.I[iu]);
        const double eq = min_eigenvalue(m);
        if (eq < qin.margin) qin = {eq, t, true};
      } else {
        qin.valid = false;
      }
      if (enh > 0.0) {
        const Eigen::MatrixXd m =
            cs.Q_hat - cs.I_hat[iu].transpose() * cs.N_hat[iu].ldlt().solve(cs.I_hat[iu]);
        const double eq = min_eigenvalue(m);
        if (eq < qin_hat.margin) qin_hat = {eq, t, true};
      } else {
        qin_hat.valid = false;
      }
    }
    const auto& pc = game.cost.players[static_cast<std::size_t>(i)];
    const double ep = min_eigenvalue(pc.P);
    const double eph = min_eigenvalue(pc.P + pc.P_tilde);

    rep.checks.push_back({"H2c: N_i^i positive definite", i, nmin.margin > 0.0, nmin.margin,
                          nmin.t});
    rep.checks.push_back({"H2c: P^i PSD", i, ep >= kPsdTol, ep, std::nan("")});
    rep.checks.push_back({"H2c: Q^i - I'N^{-1}I PSD", i, qin.valid && qin.margin >= kPsdTol,
                          qin.valid ? qin.margin : 0.0, qin.t});
    rep.checks.push_back({"H2d: N_hat_i^i positive definite", i, nhat.margin > 0.0, nhat.margin,
                          nhat.t});
    rep.checks.push_back({"H2d: P_hat^i PSD", i, eph >= kPsdTol, eph, std::nan("")});
    rep.checks.push_back({"H2d: Q_hat^i - I_hat'N_hat^{-1}I_hat PSD", i,
                          qin_hat.valid && qin_hat.margin >= kPsdTol,
                          qin_hat.valid ? qin_hat.margin : 0.0, qin_hat.t});
  }

  if (!game.finite()) {
    bool constant_ok = true;
    try {
      game.validate_structure();
    } catch (const DimensionError&) {
      constant_ok = false;
    }
    rep.checks.push_back({"H1'/H2': constant coefficients (except L paths)", -1, constant_ok,
                          constant_ok ? 1.0 : -1.0, std::nan("")});

    const auto snap = sample(game, 0.0);
    double sig2 = 0.0;
    for (int l = 0; l < snap.kappa; ++l) {
      const auto lu = static_cast<std::size_t>(l);
      sig2 += std::pow(snap.sigma_x[lu].operatorNorm(), 2) +
              std::pow(snap.sigma_x_tilde[lu].operatorNorm(), 2);
    }
    const double margin = game.cost.rho - 2.0 * (snap.b_x.operatorNorm() +
                                                 snap.b_x_tilde.operatorNorm() + 8.0 * sig2);
    rep.checks.push_back({"H3': rho > 2(|b_x|+|b_x~|+8(|s_x|^2+|s_x~|^2))", -1, margin > 0.0,
                          margin, std::nan("")});
  }
  return rep;
}

}  // namespace lqmkv
