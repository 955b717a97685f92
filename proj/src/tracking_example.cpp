#include "lqmkv/tracking_example.hpp"

#include <cmath>
#include <sstream>

#include "lqmkv/equilibrium.hpp"
#include "lqmkv/numerics.hpp"

namespace lqmkv {

void TrackingParams::validate() const {
  for (int i = 0; i < 2; ++i) {
    if (!(xi[static_cast<std::size_t>(i)] > 0.0))
      throw DimensionError("TrackingParams: xi must be positive");
    if (lambda[static_cast<std::size_t>(i)] < 0.0 || delta[static_cast<std::size_t>(i)] < 0.0 ||
        theta[static_cast<std::size_t>(i)] < 0.0)
      throw DimensionError("TrackingParams: lambda, delta, theta must be nonnegative");
    if (!(theta[static_cast<std::size_t>(i)] + xi[static_cast<std::size_t>(i)] > 0.0))
      throw DimensionError("TrackingParams: theta + xi must be positive");
    if (b[static_cast<std::size_t>(i)] == 0.0)
      throw DimensionError("TrackingParams: b must be nonzero");
  }
  if (!(rho > 0.0)) throw DimensionError("TrackingParams: rho must be positive");
  if (x0_var < 0.0) throw DimensionError("TrackingParams: x0_var must be nonnegative");
}

GameSpec build_game(const TrackingParams& p) {
  p.validate();
  GameSpec g;
  auto& dy = g.dynamics;
  dy.d = 1;
  dy.n = 2;
  dy.kappa = 1;
  dy.control_dims = {1, 1};
  const auto c1 = [](double v) {
    return MatrixPath::constant(Eigen::MatrixXd::Constant(1, 1, v));
  };
  dy.b_x = c1(0.0);
  dy.b_x_tilde = c1(0.0);
  dy.beta = c1(0.0);
  dy.b = {c1(p.b[0]), c1(p.b[1])};
  dy.b_tilde = {c1(0.0), c1(0.0)};
  dy.sigma_x = {c1(0.0)};
  dy.sigma_x_tilde = {c1(0.0)};
  dy.sigma = {{c1(0.0), c1(0.0)}};
  dy.sigma_tilde = {{c1(0.0), c1(0.0)}};
  dy.gamma = {c1(p.sigma)};

  g.cost.rho = p.rho;
  g.cost.players.resize(2);
  for (int i = 0; i < 2; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    auto& pc = g.cost.players[iu];
    // Rewritten cost: (λ+δ)(x−x̄)² + δ x̄² + (θ+ξ)(α−ᾱ)² + ξ ᾱ² − 2 δT x.
    pc.Q = c1(p.lambda[iu] + p.delta[iu]);
    pc.Q_tilde = c1(-p.lambda[iu]);
    pc.L_x = c1(-p.delta[iu] * p.target[iu]);
    pc.I = {c1(0.0), c1(0.0)};
    pc.I_tilde = {c1(0.0), c1(0.0)};
    pc.N.resize(2);
    pc.N_tilde.resize(2);
    for (int k = 0; k < 2; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      pc.N[ku] = c1(k == i ? p.theta[iu] + p.xi[iu] : 0.0);
      pc.N_tilde[ku] = c1(k == i ? -p.theta[iu] : 0.0);
    }
    pc.G.assign(2, std::vector<MatrixPath>(2, c1(0.0)));
    pc.G_tilde.assign(2, std::vector<MatrixPath>(2, c1(0.0)));
    pc.L = {c1(0.0), c1(0.0)};
    pc.P = Eigen::MatrixXd::Zero(1, 1);
    pc.P_tilde = Eigen::MatrixXd::Zero(1, 1);
    pc.r = Eigen::VectorXd::Zero(1);
  }
  g.horizon = std::nullopt;
  g.x0_mean = Eigen::VectorXd::Constant(1, p.x0_mean);
  g.x0_cov = Eigen::MatrixXd::Constant(1, 1, p.x0_var);
  g.validate_structure();
  return g;
}

namespace {

// Stable root of a z² + b z + c = 0 (the root the backward flow reaches).
double stable_root(double a, double b, double c, double disc, const char* what) {
  if (disc < 0.0)
    throw SolverError(std::string(what) + ": no closed-form equilibrium for these parameters "
                                          "(negative discriminant)");
  if (std::abs(a) < 1e-300) return -c / b;
  const double r1 = (-b + std::sqrt(disc)) / (2.0 * a);
  const double r2 = (-b - std::sqrt(disc)) / (2.0 * a);
  return (2.0 * a * r1 + b > 0.0) ? r1 : r2;
}

// Residual of the stationary two-dimensional pi system
//   0 = P_y π − (π B − P_α)(S_x + S_y π)
// with diag P_y, hollow P_α, stacked S_x, diag S_y and row B.
Eigen::Vector2d pi_system_residual(const Eigen::Vector2d& pi, const Eigen::Vector2d& Py,
                                   const Eigen::Matrix2d& Pa, const Eigen::Vector2d& Sx,
                                   const Eigen::Vector2d& Sy, const Eigen::Vector2d& B) {
  Eigen::Vector2d res;
  for (int i = 0; i < 2; ++i) {
    double acc = Py[i] * pi[i];
    for (int j = 0; j < 2; ++j)
      acc -= (pi[i] * B[j] - Pa(i, j)) * (Sx[j] + Sy[j] * pi[j]);
    res[i] = acc;
  }
  return res;
}

Eigen::Vector2d solve_pi_two_dim(const Eigen::Vector2d& Py, const Eigen::Matrix2d& Pa,
                                 const Eigen::Vector2d& Sx, const Eigen::Vector2d& Sy,
                                 const Eigen::Vector2d& B, const char* what) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  const double res = newton_solve(
      [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return pi_system_residual(v, Py, Pa, Sx, Sy, B);
      },
      x, 80, 1e-14);
  if (res > 1e-10)
    throw SolverError(std::string(what) + ": stationary system did not converge (residual " +
                      std::to_string(res) + ")");
  return x;
}

}  // namespace

ClosedFormSolution closed_form(const TrackingParams& p) {
  p.validate();
  ClosedFormSolution s;
  for (int i = 0; i < 2; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    s.P[iu] = p.b[iu] * p.b[iu] / (p.theta[iu] + p.xi[iu]);
    s.P_tilde[iu] = p.b[iu] * p.b[iu] / p.xi[iu];
    s.K[iu] = (-p.rho + std::sqrt(p.rho * p.rho +
                                  4.0 * s.P[iu] * (p.lambda[iu] + p.delta[iu]))) /
              (2.0 * s.P[iu]);
    s.Lambda[iu] =
        (-p.rho + std::sqrt(p.rho * p.rho + 4.0 * s.P_tilde[iu] * p.delta[iu])) /
        (2.0 * s.P_tilde[iu]);
  }

  Eigen::Vector2d B(p.b[0], p.b[1]);
  Eigen::Vector2d Sx(-s.P[0] * s.K[0] / p.b[0], -s.P[1] * s.K[1] / p.b[1]);
  Eigen::Vector2d Sy(-s.P[0] / p.b[0], -s.P[1] / p.b[1]);
  Eigen::Vector2d Py(s.P[0] * s.K[0] + p.rho, s.P[1] * s.K[1] + p.rho);
  Eigen::Matrix2d Pa;
  Pa << 0.0, -s.K[0] * p.b[1], -s.K[1] * p.b[0], 0.0;
  const Eigen::Vector2d pi = solve_pi_two_dim(Py, Pa, Sx, Sy, B, "closed_form[pi]");

  Eigen::Vector2d Sxh(-s.P_tilde[0] * s.Lambda[0] / p.b[0], -s.P_tilde[1] * s.Lambda[1] / p.b[1]);
  Eigen::Vector2d Syh(-s.P_tilde[0] / p.b[0], -s.P_tilde[1] / p.b[1]);
  Eigen::Vector2d Pyh(s.P_tilde[0] * s.Lambda[0] + p.rho, s.P_tilde[1] * s.Lambda[1] + p.rho);
  Eigen::Matrix2d Pah;
  Pah << 0.0, -s.Lambda[0] * p.b[1], -s.Lambda[1] * p.b[0], 0.0;
  const Eigen::Vector2d pih = solve_pi_two_dim(Pyh, Pah, Sxh, Syh, B, "closed_form[pi_hat]");

  for (int i = 0; i < 2; ++i) {
    s.pi[static_cast<std::size_t>(i)] = pi[i];
    s.pi_hat[static_cast<std::size_t>(i)] = pih[i];
  }

  const bool symmetric = p.lambda[0] == p.lambda[1] && p.delta[0] == p.delta[1] &&
                         p.theta[0] == p.theta[1] && p.xi[0] == p.xi[1] && p.b[0] == p.b[1];
  if (symmetric) {
    // Scalar quadratics of the symmetric reduction; roots must reproduce the
    // Newton solution.
    const double aq = -2.0 * p.b[0] * Sy[0];
    const double bq = Py[0] + Pa(0, 1) * Sy[0] - 2.0 * p.b[0] * Sx[0];
    const double cq = Pa(0, 1) * Sx[0];
    const double disc = bq * bq - 4.0 * aq * cq;
    s.pi_quadratic = {aq, bq, cq, disc};
    const double aqh = -2.0 * p.b[0] * Syh[0];
    const double bqh = Pyh[0] + Pah(0, 1) * Syh[0] - 2.0 * p.b[0] * Sxh[0];
    const double cqh = Pah(0, 1) * Sxh[0];
    const double disch = bqh * bqh - 4.0 * aqh * cqh;
    s.pi_hat_quadratic = {aqh, bqh, cqh, disch};
    // Keep the Newton values; the quadratic roots are diagnostics, and the
    // stable root must agree (asserted in tests).
    (void)stable_root(aq, bq, cq, disc, "closed_form[pi-quadratic]");
  }

  // η̄ = −M⁻¹ F̂ with M = P̂_y − (π̂ B − P̂_α) Ŝ_y and F̂ = (δ¹T¹, δ²T²).
  Eigen::Matrix2d M;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      M(i, j) = (i == j ? Pyh[i] : 0.0) - (pih[i] * B[j] - Pah(i, j)) * Syh[j];
  const Eigen::Vector2d Fh(p.delta[0] * p.target[0], p.delta[1] * p.target[1]);
  const Eigen::Vector2d eta = -M.fullPivLu().solve(Fh);
  s.eta_bar = {eta[0], eta[1]};

  s.a = 0.0;
  s.a_tilde = 0.0;
  double gamma_bar = 0.0;
  for (int i = 0; i < 2; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    s.a += s.P[iu] * (s.K[iu] + s.pi[iu]);
    s.a_tilde += s.P_tilde[iu] * (s.Lambda[iu] + s.pi_hat[iu]);
    gamma_bar -= s.P_tilde[iu] * eta[i];
    s.gain[iu] = -(s.P[iu] / p.b[iu]) * (s.K[iu] + s.pi[iu]);
    s.mean_gain[iu] = -(s.P_tilde[iu] / p.b[iu]) * (s.Lambda[iu] + s.pi_hat[iu]);
    s.intercept[iu] = -(s.P_tilde[iu] / p.b[iu]) * eta[i];
  }
  if (!(s.a > 0.0) || !(s.a_tilde > 0.0))
    throw SolverError("closed_form: closed loop is not mean-reverting (a or a~ <= 0)");
  s.xbar_inf = gamma_bar / s.a_tilde;
  s.var_inf = p.sigma * p.sigma / (2.0 * s.a);
  return s;
}

std::vector<SweepRow> sweep(const TrackingParams& base, SweepParameter which,
                            const std::vector<double>& values, bool sweep_both_players) {
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (double v : values) {
    TrackingParams p = base;
    const auto set = [&](std::array<double, 2>& field) {
      field[0] = v;
      if (sweep_both_players) field[1] = v;
    };
    switch (which) {
      case SweepParameter::Lambda1: set(p.lambda); break;
      case SweepParameter::Delta1: set(p.delta); break;
      case SweepParameter::Theta1: set(p.theta); break;
      case SweepParameter::Xi1: set(p.xi); break;
    }
    SweepRow row;
    row.value = v;
    try {
      const auto s = closed_form(p);
      row.K1 = s.K[0];
      row.Lambda1 = s.Lambda[0];
      row.a = s.a;
      row.a_tilde = s.a_tilde;
      row.var_inf = s.var_inf;
      row.xbar_inf = s.xbar_inf;
      row.gain_norm1 = std::max({std::abs(s.gain[0]), std::abs(s.mean_gain[0]),
                                 std::abs(s.intercept[0])});
    } catch (const std::exception& ex) {
      row.ok = false;
      row.error = ex.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string CrossCheckReport::summary() const {
  std::ostringstream os;
  os << "cross-check deltas: K=" << dK << " Lambda=" << dLambda << " pi=" << dPi
     << " pi_hat=" << dPiHat << " eta=" << dEta << " gain=" << dGain
     << " mean_gain=" << dMeanGain << " intercept=" << dIntercept << " (max " << max_delta
     << ")";
  return os.str();
}

CrossCheckReport cross_check(const TrackingParams& p) {
  const GameSpec game = build_game(p);
  const auto cf = closed_form(p);
  const auto eq = solve_nash(game);

  CrossCheckReport rep;
  for (int i = 0; i < 2; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    rep.dK = std::max(rep.dK, std::abs(eq.riccati.K_at(i, 0.0)(0, 0) - cf.K[iu]));
    rep.dLambda =
        std::max(rep.dLambda, std::abs(eq.riccati.Lambda_at(i, 0.0)(0, 0) - cf.Lambda[iu]));
    rep.dPi = std::max(rep.dPi, std::abs(eq.fixed_point.pi_at(0.0)(i, 0) - cf.pi[iu]));
    rep.dPiHat =
        std::max(rep.dPiHat, std::abs(eq.fixed_point.pi_hat_at(0.0)(i, 0) - cf.pi_hat[iu]));
    rep.dEta = std::max(rep.dEta, std::abs(eq.fixed_point.eta_at(0.0)(i) - cf.eta_bar[iu]));
    const auto& law = eq.slice(i);
    rep.dGain = std::max(rep.dGain, std::abs(law.gain.at_clamped(0.0)(0, 0) - cf.gain[iu]));
    rep.dMeanGain =
        std::max(rep.dMeanGain, std::abs(law.mean_gain.at_clamped(0.0)(0, 0) - cf.mean_gain[iu]));
    rep.dIntercept = std::max(rep.dIntercept,
                              std::abs(law.intercept.at_clamped(0.0)(0, 0) - cf.intercept[iu]));
  }
  rep.max_delta = std::max({rep.dK, rep.dLambda, rep.dPi, rep.dPiHat, rep.dEta, rep.dGain,
                            rep.dMeanGain, rep.dIntercept});
  return rep;
}

}  // namespace lqmkv
