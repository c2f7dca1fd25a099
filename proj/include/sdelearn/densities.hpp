#pragma once

#include <functional>
#include <map>
#include <string>

#include "sdelearn/common.hpp"

namespace sdelearn {

/// Observed (or generated) density values on a point set inside a box.
struct DensityObservation {
  Eigen::MatrixXd points;  // N x n, row per point
  Eigen::VectorXd values;  // q(x_i) >= 0
  Box domain;
  std::string label;

  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }

  /// Checks the type invariants: finite non-negative values, points inside
  /// the domain. Not an integral check (see integral_1d / callers).
  void validate() const;

  /// Simpson integral for a monotone 1-D grid of values.
  double integral_1d() const;
};

/// p(x) = C / sigma^2(x) * exp(int_{x*}^{x} 2 b / sigma^2), normalized over
/// [lo, hi] (cumulative Simpson inner integral, Simpson normalization).
/// ref_point defaults to the domain midpoint; any choice only shifts C.
DensityObservation stationary_density_1d(const std::function<double(double)>& drift,
                                         const std::function<double(double)>& sigma,
                                         double lo, double hi, int grid_n,
                                         double ref_point = std::nan(""));

/// Drift of the gene regulation model b(x) = k_f x^2/(x^2+K_d) - k_d x + R_bas.
double gene_regulation_drift(double x, double K_d = 10.0, double k_d = 1.0,
                             double k_f = 6.0, double R_bas = 0.4);

/// Named observation densities: gaussian, double_well, cauchy, gene_regulation.
/// Recognized params: grid_n, lo, hi, sigma, and for gene_regulation
/// K_d, k_d, k_f, R_bas.
DensityObservation observation_library(const std::string& name,
                                       const std::map<std::string, double>& params = {});

/// values <- values * (1 + level * nu), nu iid standard normal, clamped at 0.
DensityObservation perturb_observation(const DensityObservation& obs, double level,
                                       std::uint64_t seed);

void save_observation_csv(const DensityObservation& obs, const std::string& path);
DensityObservation load_observation_csv(const std::string& path);

}  // namespace sdelearn
