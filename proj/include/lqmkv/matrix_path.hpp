#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lqmkv/errors.hpp"

namespace lqmkv {

/// Matrix-valued function of time, stored as samples on a strictly
/// increasing grid and interpolated piecewise-linearly between them.
/// A path built from a single sample is constant and defined for all t.
class MatrixPath {
 public:
  MatrixPath() = default;

  static MatrixPath constant(Eigen::MatrixXd value);
  static MatrixPath zero(Eigen::Index rows, Eigen::Index cols);

  /// Gridded path. Requires a strictly increasing grid, one sample per grid
  /// point and a common shape across samples.
  MatrixPath(std::vector<double> grid, std::vector<Eigen::MatrixXd> values);

  bool is_constant() const { return grid_.empty(); }
  bool empty() const { return values_.empty(); }
  Eigen::Index rows() const { return values_.empty() ? 0 : values_[0].rows(); }
  Eigen::Index cols() const { return values_.empty() ? 0 : values_[0].cols(); }

  double t_front() const;
  double t_back() const;

  /// Value at time t. Gridded paths throw RangeError outside the grid span
  /// (up to a small relative tolerance); grid points return stored samples
  /// exactly.
  Eigen::MatrixXd at(double t) const;

  /// Like at(), but clamps t to the grid span instead of throwing. Used for
  /// infinite-horizon sampling past the end of a time-varying path.
  Eigen::MatrixXd at_clamped(double t) const;

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<Eigen::MatrixXd>& values() const { return values_; }
  const Eigen::MatrixXd& value() const;  // constant paths only

 private:
  Eigen::MatrixXd interpolate(double t) const;

  std::vector<double> grid_;               // empty for constant paths
  std::vector<Eigen::MatrixXd> values_;    // size 1 for constant paths
};

/// Pointwise sum of a coefficient and its mean-interaction companion.
/// Mixed constant/gridded inputs are allowed; two gridded inputs must share
/// the grid, and the shapes must always match.
MatrixPath hat(const MatrixPath& c, const MatrixPath& c_tilde);

}  // namespace lqmkv
