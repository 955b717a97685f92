#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "lqmkv/equilibrium.hpp"
#include "lqmkv/law.hpp"

namespace lqmkv {

struct SimConfig {
  int n_paths = 10000;
  int n_steps = 1000;
  double t_end = 1.0;        // horizon T, or truncation time on infinite horizons
  std::uint64_t seed = 1;
  enum class MeanMode { Analytic, Particle };
  MeanMode mean_mode = MeanMode::Analytic;
  int threads = 0;           // 0 = decide from LQMKV_THREADS / hardware
  int max_snapshots = 33;    // state snapshots kept (start and end always included)

  void validate() const;     // n_paths >= 2, n_steps >= 1, t_end > 0
};

/// Euler–Maruyama ensemble under an affine law profile. States, controls and
/// discounted running costs are recorded at a deterministic subset of step
/// times; per-path total costs cover the whole run (plus the terminal cost
/// on finite horizons; infinite horizons report the truncation tail bound).
struct PathEnsemble {
  std::vector<double> times;                 // snapshot times
  std::vector<Eigen::MatrixXd> states;       // per snapshot: d × n_paths
  std::vector<Eigen::MatrixXd> controls;     // per snapshot: d_A × n_paths
  std::vector<Eigen::MatrixXd> running_cost; // per snapshot: n × n_paths (discounted, to time)
  Eigen::MatrixXd total_cost;                // n × n_paths
  std::vector<Eigen::VectorXd> mean_used;    // per snapshot: the x̄ fed to laws/costs
  Eigen::VectorXd tail_bound;                // per player; zero on finite horizons
};

PathEnsemble simulate(const GameSpec& game, const LawProfile& laws, const SimConfig& cfg);

/// Sample mean and standard error of the per-path discounted cost of one
/// player.
struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};
CostEstimate estimate_cost(const PathEnsemble& ens, int player);

/// Open-loop deviation run with common random numbers: the base profile
/// drives the reference system X*, `deviation` replaces `player`'s control
/// along the deviated system X′ while the opponents keep playing their
/// X*-processes. Returns per-path costs of `player` under both systems.
struct PairCosts {
  Eigen::VectorXd base;  // n_paths
  Eigen::VectorXd dev;   // n_paths
  double delta_mean = 0.0;
  double delta_std_error = 0.0;
};
PairCosts simulate_deviation(const GameSpec& game, const LawProfile& base, int player,
                             const AffineLaw& deviation, const SimConfig& cfg);

/// Monte Carlo curve of the optimality-principle process
/// S_t = e^{−ρt} w^i(X_t, x̄_t) + ∫_0^t e^{−ρu} f^i du along simulated paths
/// of the played profile (single-system feedback interpretation). Paired
/// statistics of S_t − S_0 are returned per snapshot.
struct SCurve {
  std::vector<double> times;
  Eigen::VectorXd s_mean;        // E[S_t]
  Eigen::VectorXd diff_mean;     // E[S_t − S_0]
  Eigen::VectorXd diff_se;       // SE of S_t − S_0
  Eigen::VectorXd incr_mean;     // E[S_{t_k} − S_{t_{k−1}}]
  Eigen::VectorXd incr_se;
};
SCurve martingale_curve(const GameSpec& game, const LawProfile& laws, const ValueField& field,
                        const SimConfig& cfg);

int resolve_threads(int requested);

}  // namespace lqmkv
