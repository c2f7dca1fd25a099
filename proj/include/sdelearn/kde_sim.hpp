#pragma once

#include <optional>
#include <string>

#include "sdelearn/common.hpp"
#include "sdelearn/densities.hpp"
#include "sdelearn/sde_model.hpp"

namespace sdelearn {

struct Trajectory {
  Eigen::VectorXd times;
  Eigen::MatrixXd states;  // rows aligned with times
  double dt = 0.0;
  std::uint64_t seed = 0;

  long size() const { return static_cast<long>(times.size()); }
  int dim() const { return static_cast<int>(states.cols()); }
};

/// Euler-Maruyama: X_{k+1} = X_k + b(X_k) dt + sigma(X_k) sqrt(dt) xi_k.
/// The first burn_in states are dropped; any coordinate leaving +-guard
/// raises blow_up with the step index.
Trajectory euler_maruyama(const SdeModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x0, double dt,
                          long steps, std::uint64_t seed, long burn_in = 0,
                          double guard = 50.0);

/// Keep every k-th state.
Eigen::MatrixXd thin_samples(const Eigen::Ref<const Eigen::MatrixXd>& samples, int k);

/// Silverman per-axis bandwidth 1.06 * std * m^(-1/5).
Eigen::VectorXd silverman_bandwidth(const Eigen::Ref<const Eigen::MatrixXd>& samples);

/// Gaussian product-kernel density estimate of samples (rows) on grid (rows).
/// Empty bandwidth selects Silverman per axis.
DensityObservation kde(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                       const Eigen::Ref<const Eigen::MatrixXd>& grid,
                       const std::optional<Eigen::VectorXd>& bandwidth = {});

void save_trajectory_csv(const Trajectory& t, const std::string& path);
Trajectory load_trajectory_csv(const std::string& path);

}  // namespace sdelearn
