#include <doctest.h>

#include <cmath>

#include "lqmkv/fixed_point.hpp"
#include "lqmkv/numerics.hpp"
#include "lqmkv/tracking_example.hpp"
#include "test_games.hpp"

using namespace lqmkv;
using lqmkv::testing::c1;
using lqmkv::testing::scalar_game;

// Frozen stationary values for lambda=delta=theta=xi=b=sigma=1, rho=3,
// T = (0, 10) (independent closed-form derivation):
//   pi      = (3 - 2 sqrt(13) + sqrt(17))/2
//   pi_hat  = (3 - 2 sqrt(13) + sqrt(17))/4
//   eta_bar = (0.26278463464459098, -3.0705486986887424)
namespace {
constexpr double kToyPi = -0.043998462655159018;
constexpr double kToyPiHat = -0.021999231327579509;
constexpr double kToyEta1 = 0.26278463464459098;
constexpr double kToyEta2 = -3.0705486986887424;
}  // namespace

TEST_CASE("block assembly reproduces the tracking-game blocks") {
  const GameSpec game = build_game(TrackingParams{});
  const auto rs = solve_riccati(game);
  const double K = rs.K_at(0, 0.0)(0, 0);
  const auto bs = assemble_blocks(game, rs, 0.0);

  // P = b^2/(theta+xi) = 1/2, so S_x = -(P K / b) per player.
  CHECK(bs.S_x(0, 0) == doctest::Approx(-0.5 * K).epsilon(1e-10));
  CHECK(bs.S_x(1, 0) == doctest::Approx(-0.5 * K).epsilon(1e-10));
  CHECK(bs.S_y(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(bs.S_y(0, 1) == 0.0);
  CHECK(bs.S_y(1, 1) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(bs.P_alpha(0, 0) == 0.0);
  CHECK(bs.P_alpha(0, 1) == doctest::Approx(-K).epsilon(1e-10));
  CHECK(bs.P_alpha(1, 0) == doctest::Approx(-K).epsilon(1e-10));
  CHECK(bs.P_y(0, 0) == doctest::Approx(3.0 + 0.5 * K).epsilon(1e-10));
  CHECK(bs.P_y(0, 1) == 0.0);
  CHECK(bs.H.cwiseAbs().maxCoeff() == 0.0);
  // F_hat = (delta^1 T^1, delta^2 T^2) = (0, 10).
  CHECK(bs.F_hat(0) == doctest::Approx(0.0));
  CHECK(bs.F_hat(1) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(bs.F.cwiseAbs().maxCoeff() == 0.0);
  CHECK(bs.cond_IJ == doctest::Approx(1.0));  // J = 0 for the toy
}

TEST_CASE("single-player and identity reductions of the coupling") {
  // n=1, G=0: J = 0 and Jcal = -(S^1_1)^{-1}.
  GameSpec g = scalar_game(1, 3.0, std::nullopt);
  g.dynamics.b[0] = c1(1.0);
  g.cost.players[0].N[0] = c1(2.0);
  g.cost.players[0].Q = c1(1.0);
  const auto rs = solve_riccati(g);
  const auto bs = assemble_blocks(g, rs, 0.0);
  CHECK(bs.J.cwiseAbs().maxCoeff() == 0.0);
  const double S11 = 2.0;  // sigma_1 = 0 so S = N
  CHECK(bs.Jcal(0, 0) == doctest::Approx(-1.0 / S11).epsilon(1e-12));

  // K=0, N=I, G=0, b_i=I, sigma_i=0: S = I and Jcal = -I.
  GameSpec g2 = scalar_game(2, 3.0, std::nullopt);
  for (int i = 0; i < 2; ++i) {
    g2.dynamics.b[static_cast<std::size_t>(i)] = c1(1.0);
    g2.cost.players[static_cast<std::size_t>(i)].N[static_cast<std::size_t>(i)] = c1(1.0);
  }
  const auto rs2 = solve_riccati(g2);  // zero costs: K = Lambda = 0
  const auto bs2 = assemble_blocks(g2, rs2, 0.0);
  CHECK((bs2.S - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((bs2.Jcal + Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("stationary pi matches the frozen closed form and the quadratic route") {
  const GameSpec game = build_game(TrackingParams{});
  const auto rs = solve_riccati(game);
  Eigen::MatrixXd pi, pi_hat;
  solve_pi_infinite(game, rs, pi, pi_hat);
  for (int i = 0; i < 2; ++i) {
    CHECK(pi(i, 0) == doctest::Approx(kToyPi).epsilon(1e-9));
    CHECK(pi_hat(i, 0) == doctest::Approx(kToyPiHat).epsilon(1e-9));
  }
  CHECK(stationary_pi_residual(game, rs, pi, pi_hat) <= 1e-9);

  REQUIRE(is_symmetric_scalar(game));
  const auto roots = solve_pi_symmetric_scalar(game, rs);
  CHECK(roots.pi1 == doctest::Approx(kToyPi).epsilon(1e-10));
  CHECK(roots.pi_hat1 == doctest::Approx(kToyPiHat).epsilon(1e-10));
  CHECK(roots.disc == doctest::Approx(17.0).epsilon(1e-9));
  CHECK(roots.disc_hat == doctest::Approx(17.0).epsilon(1e-9));
  // Both roots of the quadratic have zero residual by construction; the
  // selected one is the stable root of the backward flow.
  const double other = (-roots.b - std::sqrt(roots.disc)) / (2.0 * roots.a);
  const auto quad = [&](double z) { return roots.a * z * z + roots.b * z + roots.c; };
  CHECK(std::abs(quad(roots.pi1)) <= 1e-12);
  CHECK(std::abs(quad(other)) <= 1e-10);
  CHECK(2.0 * roots.a * roots.pi1 + roots.b > 0.0);
}

TEST_CASE("zero cross-coupling constant term makes pi = 0 a root") {
  // Single player, I = 0, L = 0, H = 0: pi = 0 solves the system.
  GameSpec g = scalar_game(1, 3.0, std::nullopt);
  g.dynamics.b[0] = c1(1.0);
  g.cost.players[0].N[0] = c1(1.0);
  g.cost.players[0].Q = c1(2.0);
  const auto rs = solve_riccati(g);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1);
  CHECK(stationary_pi_residual(g, rs, zero, zero) <= 1e-12);
  Eigen::MatrixXd pi, pi_hat;
  solve_pi_infinite(g, rs, pi, pi_hat);
  CHECK(std::abs(pi(0, 0)) <= 1e-10);
  CHECK(std::abs(pi_hat(0, 0)) <= 1e-10);
}

TEST_CASE("stationary eta matches the frozen closed form") {
  const GameSpec game = build_game(TrackingParams{});
  const auto rs = solve_riccati(game);
  const auto fp = solve_fixed_point(game, rs);
  CHECK(fp.eta.value()(0, 0) == doctest::Approx(kToyEta1).epsilon(1e-8));
  CHECK(fp.eta.value()(1, 0) == doctest::Approx(kToyEta2).epsilon(1e-8));
  // Stationary eta has zero drift and zero deviation part.
  CHECK(fp.psi.value().cwiseAbs().maxCoeff() <= 1e-7);
  CHECK(fp.eta_dev.value().cwiseAbs().maxCoeff() == 0.0);
  CHECK(fp.max_residual <= 1e-9);
}

TEST_CASE("scalar single-player eta with constant forcing") {
  // With constant forcing h and positive scalar exponent m the stationary
  // solution of the exponential integral is -h/m.
  GameSpec g = scalar_game(1, 3.0, std::nullopt);
  g.dynamics.b[0] = c1(1.0);
  g.cost.players[0].N[0] = c1(1.0);
  g.cost.players[0].Q = c1(2.0);
  g.cost.players[0].Q_tilde = c1(0.0);
  g.cost.players[0].L_x = c1(-4.0);  // F_hat = -L_x = 4
  const auto rs = solve_riccati(g);
  const auto fp = solve_fixed_point(g, rs);
  // m = P_hat_y - (pi_hat B_hat - P_hat_alpha) S_hat_y with pi_hat = 0:
  // m = rho + Lambda b^2 / N_hat. Here N_hat = 1, b = 1.
  const double lambda = rs.Lambda_at(0, 0.0)(0, 0);
  const double m = 3.0 + lambda;
  CHECK(fp.eta.value()(0, 0) == doctest::Approx(-4.0 / m).epsilon(1e-7));
}

TEST_CASE("zero forcing gives eta = 0") {
  GameSpec g = scalar_game(2, 3.0, std::nullopt);
  for (int i = 0; i < 2; ++i) {
    g.dynamics.b[static_cast<std::size_t>(i)] = c1(1.0);
    g.cost.players[static_cast<std::size_t>(i)].N[static_cast<std::size_t>(i)] = c1(1.0);
    g.cost.players[static_cast<std::size_t>(i)].Q = c1(1.0);
  }
  const auto rs = solve_riccati(g);
  const auto fp = solve_fixed_point(g, rs);
  CHECK(fp.eta.value().cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("finite horizon: terminal conditions exact and residual small") {
  // Two-player scalar game with state feedback, controlled volatility and
  // linear terms, to exercise every block of the pi/eta systems.
  GameSpec g = scalar_game(2, 0.3, 1.0);
  g.dynamics.b_x = c1(0.2);
  g.dynamics.b_x_tilde = c1(-0.1);
  g.dynamics.beta = c1(0.1);
  g.dynamics.sigma_x = {c1(0.15)};
  g.dynamics.sigma_x_tilde = {c1(0.05)};
  g.dynamics.gamma = {c1(0.4)};
  for (int i = 0; i < 2; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    g.dynamics.b[iu] = c1(1.0 + 0.3 * i);
    g.dynamics.b_tilde[iu] = c1(0.1);
    g.dynamics.sigma[0][iu] = c1(0.1 + 0.05 * i);
    g.dynamics.sigma_tilde[0][iu] = c1(0.02);
    auto& pc = g.cost.players[iu];
    pc.Q = c1(1.0 + 0.5 * i);
    pc.Q_tilde = c1(0.2);
    pc.N[iu] = c1(1.0);
    pc.N_tilde[iu] = c1(0.3);
    pc.I[iu] = c1(0.1);
    pc.I_tilde[iu] = c1(0.05);
    pc.L_x = c1(-0.3);
    pc.L[iu] = c1(0.1);
    pc.P = Eigen::MatrixXd::Constant(1, 1, 0.4);
    pc.P_tilde = Eigen::MatrixXd::Constant(1, 1, 0.1);
    pc.r = Eigen::VectorXd::Constant(1, 0.2);
    // cross-control couplings
    const auto ju = static_cast<std::size_t>(1 - i);
    pc.G[iu][ju] = c1(0.05);
    pc.G_tilde[iu][ju] = c1(0.02);
  }
  g.validate_structure();

  SolverOptions opt;
  opt.steps_per_unit = 10000;  // midpoint residual estimator is O(h^2); needs a fine grid
  const auto rs = solve_riccati(g, opt);
  const auto fp = solve_fixed_point(g, rs, opt);

  CHECK(fp.pi.values().back().cwiseAbs().maxCoeff() == 0.0);
  CHECK(fp.pi_hat.values().back().cwiseAbs().maxCoeff() == 0.0);
  CHECK(fp.eta.values().back()(0, 0) == 0.2);  // eta_T = r exactly
  CHECK(fp.eta.values().back()(1, 0) == 0.2);
  CHECK(fp.eta_dev.values().back().cwiseAbs().maxCoeff() == 0.0);
  for (const auto& v : fp.eta_dev.values()) CHECK(v.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(fp.max_residual <= 1e-8);
}

TEST_CASE("pi_0 vanishes as the horizon shrinks") {
  GameSpec g = scalar_game(2, 0.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    g.dynamics.b[static_cast<std::size_t>(i)] = c1(1.0);
    auto& pc = g.cost.players[static_cast<std::size_t>(i)];
    pc.N[static_cast<std::size_t>(i)] = c1(1.0);
    pc.Q = c1(1.0);
    pc.P = Eigen::MatrixXd::Constant(1, 1, 0.5);
  }
  double prev = 1e9;
  for (double T : {0.5, 0.1, 0.02}) {
    g.horizon = T;
    const auto rs = solve_riccati(g);
    const auto fp = solve_fixed_point(g, rs);
    const double pi0 = fp.pi_at(0.0).cwiseAbs().maxCoeff();
    CHECK(pi0 < prev);
    prev = pi0;
  }
  CHECK(prev <= 2e-2);
}
