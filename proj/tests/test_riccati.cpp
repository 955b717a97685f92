#include <doctest.h>

#include <cmath>

#include "lqmkv/numerics.hpp"
#include "lqmkv/riccati.hpp"
#include "lqmkv/tracking_example.hpp"
#include "test_games.hpp"

using namespace lqmkv;
using lqmkv::testing::c1;
using lqmkv::testing::scalar_game;

// Frozen closed forms for the tracking game (independent derivation):
// K = sqrt(13) - 3, Lambda = (sqrt(13) - 3)/2 at lambda=delta=theta=xi=b=1, rho=3.
namespace {
constexpr double kToyK = 0.60555127546398929;
constexpr double kToyLambda = 0.30277563773199465;
}  // namespace

TEST_CASE("stationary K and Lambda on the tracking game") {
  const GameSpec game = build_game(TrackingParams{});
  for (int i = 0; i < 2; ++i) {
    const Eigen::MatrixXd K = solve_K_infinite(game, i);
    CHECK(K(0, 0) == doctest::Approx(kToyK).epsilon(1e-9));
    const Eigen::MatrixXd L = solve_Lambda_infinite(game, i, K);
    CHECK(L(0, 0) == doctest::Approx(kToyLambda).epsilon(1e-9));
    // Algebraic residuals of the stationary equations.
    const auto snap = sample(game, 0.0);
    CHECK(std::abs(riccati_residual_K(snap, i, 3.0, K)(0, 0)) <= 1e-9);
    CHECK(std::abs(riccati_residual_Lambda(snap, i, 3.0, K, L)(0, 0)) <= 1e-9);
  }
}

TEST_CASE("quadratic root selection rejects the negative root") {
  // P K^2 + rho K - Q = 0 with P=0.5, rho=3, Q=2: roots -3+sqrt(13) and
  // -3-sqrt(13) (scaled); the PSD one is returned.
  const GameSpec game = build_game(TrackingParams{});
  const Eigen::MatrixXd K = solve_K_infinite(game, 0);
  CHECK(K(0, 0) > 0.0);
  CHECK(K(0, 0) == doctest::Approx(-3.0 + std::sqrt(13.0)).epsilon(1e-10));
}

TEST_CASE("zero costs give the zero solution") {
  GameSpec g = scalar_game(1, 3.0, std::nullopt);
  g.cost.players[0].N[0] = c1(1.0);
  g.dynamics.b[0] = c1(1.0);
  CHECK(solve_K_infinite(g, 0)(0, 0) == doctest::Approx(0.0).epsilon(1e-12));

  GameSpec gf = scalar_game(1, 0.0, 1.0);
  gf.cost.players[0].N[0] = c1(1.0);
  const auto grid = uniform_grid(0.0, 1.0, 400);
  const auto K = solve_K(gf, 0, grid);
  for (const auto& v : K.values()) CHECK(std::abs(v(0, 0)) <= 1e-14);
  const auto L = solve_Lambda(gf, 0, K, grid);
  for (const auto& v : L.values()) CHECK(std::abs(v(0, 0)) <= 1e-14);
}

TEST_CASE("linear backward equation has the exponential solution") {
  // rho=0, b_x=1, no control influence, Q=0, P=1, T=1:
  // Kdot = -2K backward from K_T = 1, so K_0 = e^2.
  GameSpec g = scalar_game(1, 0.0, 1.0);
  g.dynamics.b_x = c1(1.0);
  g.cost.players[0].N[0] = c1(1.0);
  g.cost.players[0].P = Eigen::MatrixXd::Constant(1, 1, 1.0);
  const auto grid = uniform_grid(0.0, 1.0, 2000);
  const auto K = solve_K(g, 0, grid);
  CHECK(K.at(0.0)(0, 0) == doctest::Approx(std::exp(2.0)).epsilon(1e-10));
  CHECK(K.at(1.0)(0, 0) == 1.0);  // terminal assigned exactly
}

TEST_CASE("RK4 grid-halving convergence order on a smooth Riccati instance") {
  GameSpec g = scalar_game(1, 1.0, 1.0);
  g.dynamics.b_x = c1(0.4);
  g.dynamics.b[0] = c1(1.0);
  g.cost.players[0].Q = c1(2.0);
  g.cost.players[0].N[0] = c1(1.0);
  g.cost.players[0].P = Eigen::MatrixXd::Constant(1, 1, 0.5);
  const auto solve_at = [&](int steps) {
    return solve_K(g, 0, uniform_grid(0.0, 1.0, steps)).at(0.0)(0, 0);
  };
  const double ref = solve_at(3200);
  const double e1 = std::abs(solve_at(50) - ref);
  const double e2 = std::abs(solve_at(100) - ref);
  const double order = std::log2(e1 / e2);
  CHECK(order >= 3.5);
}

TEST_CASE("derived gains on the tracking game") {
  const GameSpec game = build_game(TrackingParams{});
  const auto snap = sample(game, 0.0);
  const Eigen::MatrixXd K = solve_K_infinite(game, 0);
  const Eigen::MatrixXd L = solve_Lambda_infinite(game, 0, K);
  const auto g = derived_gains(snap, 0, K, L);
  CHECK(g.S[0](0, 0) == doctest::Approx(2.0));            // N + 0 (sigma_i = 0)
  CHECK(g.S_hat[0](0, 0) == doctest::Approx(1.0));
  CHECK(g.U[0](0, 0) == doctest::Approx(K(0, 0)));        // b_1 K with b_1 = 1
  CHECK(g.V[0](0, 0) == doctest::Approx(L(0, 0)));
  CHECK(g.U[1](0, 0) == doctest::Approx(K(0, 0)));        // opponent block: b_2 K
  CHECK(g.J[0][1](0, 0) == 0.0);

  // K = 0 reduces S to N.
  const auto g0 = derived_gains(snap, 0, Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1));
  CHECK(g0.S[0](0, 0) == doctest::Approx(2.0));
  CHECK(g0.U[0](0, 0) == 0.0);
}

TEST_CASE("multi-noise gains sum over noise sources") {
  // Two identical noises double every sigma' K sigma term.
  GameSpec g = scalar_game(1, 1.0, 1.0);
  g.dynamics.kappa = 2;
  g.dynamics.sigma_x = {c1(0.5), c1(0.5)};
  g.dynamics.sigma_x_tilde = {c1(0.0), c1(0.0)};
  g.dynamics.sigma = {{c1(0.3)}, {c1(0.3)}};
  g.dynamics.sigma_tilde = {{c1(0.0)}, {c1(0.0)}};
  g.dynamics.gamma = {c1(0.0), c1(0.0)};
  g.dynamics.b[0] = c1(1.0);
  g.cost.players[0].N[0] = c1(1.0);
  g.validate_structure();
  const auto snap = sample(g, 0.0);
  const Eigen::MatrixXd K = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const auto gains = derived_gains(snap, 0, K, K);
  CHECK(gains.S[0](0, 0) == doctest::Approx(1.0 + 2.0 * 0.3 * 2.0 * 0.3));
  CHECK(gains.U[0](0, 0) == doctest::Approx(1.0 * 2.0 + 2.0 * 0.3 * 2.0 * 0.5));
}

TEST_CASE("symmetry and PSD hold along a matrix-valued path") {
  GameSpec g = scalar_game(1, 0.5, 1.0);
  g.dynamics.d = 2;
  g.dynamics.b_x = MatrixPath::constant((Eigen::MatrixXd(2, 2) << 0.1, 0.3, -0.2, 0.0).finished());
  g.dynamics.b_x_tilde = MatrixPath::zero(2, 2);
  g.dynamics.beta = MatrixPath::zero(2, 1);
  g.dynamics.b = {MatrixPath::constant((Eigen::MatrixXd(2, 1) << 1.0, 0.5).finished())};
  g.dynamics.b_tilde = {MatrixPath::zero(2, 1)};
  g.dynamics.sigma_x = {MatrixPath::constant(0.2 * Eigen::MatrixXd::Identity(2, 2))};
  g.dynamics.sigma_x_tilde = {MatrixPath::zero(2, 2)};
  g.dynamics.sigma = {{MatrixPath::constant((Eigen::MatrixXd(2, 1) << 0.1, 0.0).finished())}};
  g.dynamics.sigma_tilde = {{MatrixPath::zero(2, 1)}};
  g.dynamics.gamma = {MatrixPath::zero(2, 1)};
  auto& pc = g.cost.players[0];
  pc.Q = MatrixPath::constant((Eigen::MatrixXd(2, 2) << 2.0, 0.4, 0.4, 1.0).finished());
  pc.Q_tilde = MatrixPath::zero(2, 2);
  pc.L_x = MatrixPath::zero(2, 1);
  pc.I = {MatrixPath::constant((Eigen::MatrixXd(1, 2) << 0.1, -0.1).finished())};
  pc.I_tilde = {MatrixPath::zero(1, 2)};
  pc.N = {c1(1.0)};
  pc.N_tilde = {c1(0.2)};
  pc.L = {c1(0.0)};
  pc.P = (Eigen::MatrixXd(2, 2) << 0.5, 0.1, 0.1, 0.3).finished();
  pc.P_tilde = Eigen::MatrixXd::Zero(2, 2);
  pc.r = Eigen::VectorXd::Zero(2);
  g.x0_mean = Eigen::VectorXd::Zero(2);
  g.x0_cov = Eigen::MatrixXd::Zero(2, 2);
  g.validate_structure();

  const auto rs = solve_riccati(g);
  for (int i : {0}) {
    for (const auto& v : rs.K[static_cast<std::size_t>(i)].values()) {
      CHECK((v - v.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
    for (const auto& v : rs.Lambda[static_cast<std::size_t>(i)].values())
      CHECK((v - v.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  }
  // Terminal conditions are assigned exactly.
  CHECK((rs.K[0].values().back() - pc.P).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rs.Lambda[0].values().back() - (pc.P + pc.P_tilde)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("K is strictly increasing in the variance penalty") {
  double prev = -1.0;
  for (double lam : {0.0, 10.0, 100.0, 500.0}) {
    TrackingParams p;
    p.lambda = {lam, lam};
    const GameSpec game = build_game(p);
    const double K = solve_K_infinite(game, 0)(0, 0);
    CHECK(K > prev);
    prev = K;
    // Closed form: K = sqrt(11 + 2 lambda) - 3.
    CHECK(K == doctest::Approx(std::sqrt(11.0 + 2.0 * lam) - 3.0).epsilon(1e-9));
  }
}

TEST_CASE("singular effective control weight is reported with a time") {
  GameSpec g = scalar_game(1, 0.0, 1.0);
  g.dynamics.b[0] = c1(1.0);
  g.cost.players[0].Q = c1(1.0);  // N = 0 with control influence: S = 0
  const auto grid = uniform_grid(0.0, 1.0, 100);
  CHECK_THROWS_AS(solve_K(g, 0, grid), SolverError);
}
