#pragma once

#include <functional>
#include <vector>

#include "sdelearn/common.hpp"

namespace sdelearn {

/// Endpoint-inclusive uniform grid with n points on [lo, hi].
inline Eigen::VectorXd uniform_grid(double lo, double hi, int n) {
  require(n >= 2, ErrorCode::invalid_config, "grid needs at least 2 points");
  return Eigen::VectorXd::LinSpaced(n, lo, hi);
}

/// Composite trapezoid weights for n uniform points with spacing h.
inline Eigen::VectorXd trapezoid_weights(int n, double h) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, h);
  w(0) = w(n - 1) = 0.5 * h;
  return w;
}

/// Composite Simpson weights for n uniform points with spacing h. For even n
/// the last interval falls back to trapezoid.
inline Eigen::VectorXd simpson_weights(int n, double h) {
  require(n >= 3, ErrorCode::invalid_config, "simpson needs at least 3 points");
  int m = (n % 2 == 1) ? n : n - 1;  // odd prefix handled by Simpson proper
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) {
    double c = (i == 0 || i == m - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    w(i) += c * h / 3.0;
  }
  if (m != n) {  // trapezoid on the trailing interval
    w(n - 2) += 0.5 * h;
    w(n - 1) += 0.5 * h;
  }
  return w;
}

/// Cumulative integral of uniformly sampled f (spacing h) from the first
/// node, local-quadratic (Simpson-type) rule on every interval. Exact for
/// quadratics.
inline Eigen::VectorXd cumulative_simpson(const Eigen::Ref<const Eigen::VectorXd>& f,
                                          double h) {
  int n = static_cast<int>(f.size());
  require(n >= 3, ErrorCode::invalid_config, "cumulative simpson needs >= 3 points");
  Eigen::VectorXd c(n);
  c(0) = 0.0;
  for (int i = 1; i + 1 < n; ++i)
    c(i) = c(i - 1) + h / 12.0 * (5.0 * f(i - 1) + 8.0 * f(i) - f(i + 1));
  c(n - 1) = c(n - 2) + h / 12.0 * (-f(n - 3) + 8.0 * f(n - 2) + 5.0 * f(n - 1));
  return c;
}

/// Tensor-product midpoint (cell-center) grid on a box: res[j] cells per axis.
/// Returns points as rows, last axis fastest; every point carries the same
/// cell volume weight.
inline Eigen::MatrixXd tensor_midpoint_grid(const Box& box, const std::vector<int>& res) {
  int n = box.dim();
  require(static_cast<int>(res.size()) == n, ErrorCode::invalid_config,
          "resolution list must match box dimension");
  long total = 1;
  for (int r : res) {
    require(r >= 1, ErrorCode::invalid_config, "grid resolution must be positive");
    total *= r;
  }
  Eigen::VectorXd h(n);
  for (int j = 0; j < n; ++j) h(j) = (box.upper(j) - box.lower(j)) / res[j];
  Eigen::MatrixXd pts(total, n);
  std::vector<int> idx(n, 0);
  for (long r = 0; r < total; ++r) {
    for (int j = 0; j < n; ++j) pts(r, j) = box.lower(j) + (idx[j] + 0.5) * h(j);
    for (int j = n - 1; j >= 0; --j) {
      if (++idx[j] < res[j]) break;
      idx[j] = 0;
    }
  }
  return pts;
}

inline double midpoint_cell_volume(const Box& box, const std::vector<int>& res) {
  double v = box.volume();
  for (int r : res) v /= r;
  return v;
}

/// Streamed tensor-product composite-Simpson integral of f over a box, with
/// points_per_axis endpoint nodes per axis (odd counts recommended). Nothing
/// is materialized, so this is usable up to 5-D.
inline double tensor_simpson_integral(
    const Box& box, const std::vector<int>& points_per_axis,
    const std::function<double(const Eigen::VectorXd&)>& f) {
  int n = box.dim();
  require(static_cast<int>(points_per_axis.size()) == n, ErrorCode::invalid_config,
          "points_per_axis must match box dimension");
  std::vector<Eigen::VectorXd> grids(n), weights(n);
  long total = 1;
  for (int j = 0; j < n; ++j) {
    int m = points_per_axis[j];
    grids[j] = uniform_grid(box.lower(j), box.upper(j), m);
    weights[j] = simpson_weights(m, (box.upper(j) - box.lower(j)) / (m - 1));
    total *= m;
  }
  std::vector<int> idx(n, 0);
  Eigen::VectorXd x(n);
  double acc = 0.0;
  for (long r = 0; r < total; ++r) {
    double w = 1.0;
    for (int j = 0; j < n; ++j) {
      x(j) = grids[j](idx[j]);
      w *= weights[j](idx[j]);
    }
    acc += w * f(x);
    for (int j = n - 1; j >= 0; --j) {
      if (++idx[j] < points_per_axis[j]) break;
      idx[j] = 0;
    }
  }
  return acc;
}

}  // namespace sdelearn
