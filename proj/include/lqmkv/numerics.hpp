#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace lqmkv {

/// Uniform grid with n_steps intervals over [t0, t1] (n_steps + 1 points).
std::vector<double> uniform_grid(double t0, double t1, int n_steps);

using OdeRhs = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

/// One classical RK4 step from (t, y) with signed step h.
Eigen::VectorXd rk4_step(const OdeRhs& f, double t, const Eigen::VectorXd& y, double h);

/// Integrates dy/dt = f backward over `grid` from y(grid.back()) = terminal.
/// Returns values on the grid (front-to-back ordering). `post_step`, when
/// set, is applied to the state after every step (e.g. symmetrisation).
std::vector<Eigen::VectorXd> integrate_backward(
    const OdeRhs& f, const std::vector<double>& grid, const Eigen::VectorXd& terminal,
    const std::function<void(Eigen::VectorXd&)>& post_step = nullptr);

/// Composite Simpson over uniformly spaced samples (odd count preferred; an
/// even count falls back to a trapezoid on the last interval).
double simpson(const std::vector<double>& samples, double h);

/// Damped Newton on F(x) = 0 with forward-difference Jacobian and
/// backtracking line search on ‖F‖. Returns the final residual max-norm.
double newton_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                    Eigen::VectorXd& x, int max_iter = 60, double tol = 1e-12);

// Small symmetric-matrix helpers used throughout the solvers.
inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}
double min_eigenvalue(const Eigen::MatrixXd& symmetric);
double max_abs(const Eigen::MatrixXd& m);

/// 2-norm condition number via SVD (matrices here are small).
double condition_number(const Eigen::MatrixXd& m);

// Flat packing of matrix lists into ODE state vectors.
Eigen::VectorXd pack(const std::vector<Eigen::MatrixXd>& ms);
void unpack(const Eigen::VectorXd& v, std::vector<Eigen::MatrixXd>& ms);

}  // namespace lqmkv
