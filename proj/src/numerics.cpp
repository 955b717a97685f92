#include "lqmkv/numerics.hpp"

#include <cmath>

#include "lqmkv/errors.hpp"

namespace lqmkv {

std::vector<double> uniform_grid(double t0, double t1, int n_steps) {
  if (n_steps < 1 || !(t1 > t0)) throw DimensionError("uniform_grid: need t1 > t0, n_steps >= 1");
  std::vector<double> g(static_cast<std::size_t>(n_steps) + 1);
  const double h = (t1 - t0) / n_steps;
  for (int m = 0; m <= n_steps; ++m) g[static_cast<std::size_t>(m)] = t0 + h * m;
  g.back() = t1;
  return g;
}

Eigen::VectorXd rk4_step(const OdeRhs& f, double t, const Eigen::VectorXd& y, double h) {
  const Eigen::VectorXd k1 = f(t, y);
  const Eigen::VectorXd k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
  const Eigen::VectorXd k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
  const Eigen::VectorXd k4 = f(t + h, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<Eigen::VectorXd> integrate_backward(
    const OdeRhs& f, const std::vector<double>& grid, const Eigen::VectorXd& terminal,
    const std::function<void(Eigen::VectorXd&)>& post_step) {
  if (grid.size() < 2) throw DimensionError("integrate_backward: grid needs >= 2 points");
  std::vector<Eigen::VectorXd> out(grid.size());
  out.back() = terminal;
  for (std::size_t m = grid.size() - 1; m > 0; --m) {
    const double h = grid[m - 1] - grid[m];  // negative
    Eigen::VectorXd y = rk4_step(f, grid[m], out[m], h);
    if (post_step) post_step(y);
    out[m - 1] = std::move(y);
  }
  return out;
}

double simpson(const std::vector<double>& samples, double h) {
  const std::size_t n = samples.size();
  if (n < 2) return 0.0;
  std::size_t m = n;
  double tail = 0.0;
  if (n % 2 == 0) {  // odd number of intervals: trapezoid on the last one
    tail = 0.5 * h * (samples[n - 2] + samples[n - 1]);
    m = n - 1;
  }
  double s = samples[0] + samples[m - 1];
  for (std::size_t i = 1; i + 1 < m; ++i) s += samples[i] * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0 + tail;
}

double newton_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F,
                    Eigen::VectorXd& x, int max_iter, double tol) {
  Eigen::VectorXd r = F(x);
  double rn = r.lpNorm<Eigen::Infinity>();
  const auto dim = x.size();
  for (int it = 0; it < max_iter && rn > tol; ++it) {
    Eigen::MatrixXd jac(r.size(), dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double step = 1e-7 * (1.0 + std::abs(x[j]));
      Eigen::VectorXd xp = x;
      xp[j] += step;
      jac.col(j) = (F(xp) - r) / step;
    }
    Eigen::VectorXd dx = jac.fullPivLu().solve(-r);
    double lambda = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 30; ++bt) {
      Eigen::VectorXd xn = x + lambda * dx;
      Eigen::VectorXd rnew = F(xn);
      const double rnn = rnew.lpNorm<Eigen::Infinity>();
      if (rnn < rn || rnn <= tol) {
        x = std::move(xn);
        r = std::move(rnew);
        rn = rnn;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;  // stalled; caller inspects the returned residual
  }
  return rn;
}

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(symmetric),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(sv.size() - 1);
}

Eigen::VectorXd pack(const std::vector<Eigen::MatrixXd>& ms) {
  Eigen::Index total = 0;
  for (const auto& m : ms) total += m.size();
  Eigen::VectorXd v(total);
  Eigen::Index off = 0;
  for (const auto& m : ms) {
    v.segment(off, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    off += m.size();
  }
  return v;
}

void unpack(const Eigen::VectorXd& v, std::vector<Eigen::MatrixXd>& ms) {
  Eigen::Index off = 0;
  for (auto& m : ms) {
    m = Eigen::Map<const Eigen::MatrixXd>(v.data() + off, m.rows(), m.cols());
    off += m.size();
  }
}

}  // namespace lqmkv
