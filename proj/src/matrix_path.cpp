#include "lqmkv/matrix_path.hpp"

#include <algorithm>
#include <cmath>

namespace lqmkv {

MatrixPath MatrixPath::constant(Eigen::MatrixXd value) {
  MatrixPath p;
  p.values_.push_back(std::move(value));
  return p;
}

MatrixPath MatrixPath::zero(Eigen::Index rows, Eigen::Index cols) {
  return constant(Eigen::MatrixXd::Zero(rows, cols));
}

MatrixPath::MatrixPath(std::vector<double> grid, std::vector<Eigen::MatrixXd> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (grid_.empty() || values_.size() != grid_.size())
    throw DimensionError("MatrixPath: values.length must equal grid.length (>= 1)");
  for (std::size_t i = 1; i < grid_.size(); ++i)
    if (!(grid_[i] > grid_[i - 1]))
      throw DimensionError("MatrixPath: grid must be strictly increasing");
  for (const auto& v : values_)
    if (v.rows() != values_[0].rows() || v.cols() != values_[0].cols())
      throw DimensionError("MatrixPath: all samples must share one shape");
  if (grid_.size() == 1) grid_.clear();  // single sample behaves as a constant
}

double MatrixPath::t_front() const { return grid_.empty() ? 0.0 : grid_.front(); }
double MatrixPath::t_back() const { return grid_.empty() ? 0.0 : grid_.back(); }

const Eigen::MatrixXd& MatrixPath::value() const {
  if (!is_constant() || values_.empty())
    throw RangeError("MatrixPath::value: path is not constant");
  return values_[0];
}

Eigen::MatrixXd MatrixPath::interpolate(double t) const {
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  if (it == grid_.begin()) return values_.front();
  if (it == grid_.end()) return values_.back();
  const std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
  const std::size_t lo = hi - 1;
  if (t == grid_[lo]) return values_[lo];
  const double w = (t - grid_[lo]) / (grid_[hi] - grid_[lo]);
  return (1.0 - w) * values_[lo] + w * values_[hi];
}

Eigen::MatrixXd MatrixPath::at(double t) const {
  if (values_.empty()) throw RangeError("MatrixPath::at: empty path");
  if (is_constant()) return values_[0];
  const double span = grid_.back() - grid_.front();
  const double tol = 1e-9 * std::max(1.0, std::abs(span));
  if (t < grid_.front() - tol || t > grid_.back() + tol)
    throw RangeError("MatrixPath::at: t outside the grid span");
  return interpolate(std::clamp(t, grid_.front(), grid_.back()));
}

Eigen::MatrixXd MatrixPath::at_clamped(double t) const {
  if (values_.empty()) throw RangeError("MatrixPath::at_clamped: empty path");
  if (is_constant()) return values_[0];
  return interpolate(std::clamp(t, grid_.front(), grid_.back()));
}

MatrixPath hat(const MatrixPath& c, const MatrixPath& c_tilde) {
  if (c.rows() != c_tilde.rows() || c.cols() != c_tilde.cols())
    throw DimensionError("hat: shape mismatch");
  if (c.is_constant() && c_tilde.is_constant())
    return MatrixPath::constant(c.value() + c_tilde.value());
  if (!c.is_constant() && !c_tilde.is_constant()) {
    if (c.grid() != c_tilde.grid())
      throw DimensionError("hat: gridded inputs must share the grid");
    std::vector<Eigen::MatrixXd> sums(c.values().size());
    for (std::size_t i = 0; i < sums.size(); ++i) sums[i] = c.values()[i] + c_tilde.values()[i];
    return MatrixPath(c.grid(), std::move(sums));
  }
  const MatrixPath& gridded = c.is_constant() ? c_tilde : c;
  const Eigen::MatrixXd& fixed = (c.is_constant() ? c : c_tilde).value();
  std::vector<Eigen::MatrixXd> sums(gridded.values().size());
  for (std::size_t i = 0; i < sums.size(); ++i) sums[i] = gridded.values()[i] + fixed;
  return MatrixPath(gridded.grid(), std::move(sums));
}

}  // namespace lqmkv
