#pragma once

#include "sdelearn/common.hpp"

namespace sdelearn {

/// Two densities sampled on a shared grid with quadrature weights.
struct GridPair {
  Eigen::MatrixXd points;   // N x n (optional provenance; may be empty)
  Eigen::VectorXd p, q;
  Eigen::VectorXd weights;  // > 0, volume units

  void validate() const;
};

GridPair make_grid_pair(Eigen::MatrixXd points, Eigen::VectorXd p, Eigen::VectorXd q,
                        Eigen::VectorXd weights);

/// Terms with density below this floor drop out of KL/JS sums (and logs are
/// floored), keeping the divergences finite on truncated grids.
inline constexpr double kDensityFloor = 1e-12;

enum class HellingerMode {
  paper_mean,   // (1/2N) sum (sqrt p - sqrt q)^2 — the training functional
  quadrature,   // sqrt( 1/2 sum w (sqrt p - sqrt q)^2 ) — true distance in [0,1]
};

double hellinger(const GridPair& pair, HellingerMode mode);

/// sum w_i p_i log(p_i / q_i); p_i below the floor contributes nothing;
/// q_i below the floor where p_i is not raises support_mismatch.
double kl(const GridPair& pair);

enum class JsForm {
  verbatim,    // 1/2 KL(p || m) + 1/2 KL(m || p),  m = (p+q)/2
  symmetric,   // 1/2 KL(p || m) + 1/2 KL(q || m)
};

double js(const GridPair& pair, JsForm form = JsForm::verbatim);

/// (1/N) sum (p_i - q_i)^2.
double mse(const GridPair& pair);

}  // namespace sdelearn
