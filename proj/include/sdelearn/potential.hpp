#pragma once

#include <vector>

#include "sdelearn/common.hpp"
#include "sdelearn/densities.hpp"

namespace sdelearn {

enum class PotentialFamily { three_dim, five_dim };

/// Two-well log-sum-exp potential families.
///   three_dim: Phi = -1/2 log[ 2 exp(E0) + exp(E1) ],
///              E_g = sum_i lambda0[3g+i] (x_i - lambda1[3g+i])^2
///   five_dim:  Phi = -1/2 log[ exp(E0) + exp(E1) ],
///              E_g = sum_i lambda0[5g+i] (x_i - lambda1[5g+i])
struct PotentialSpec {
  PotentialFamily family = PotentialFamily::three_dim;
  Eigen::VectorXd lambda0, lambda1;

  int dim() const { return family == PotentialFamily::three_dim ? 3 : 5; }
  int lambda_count() const { return family == PotentialFamily::three_dim ? 6 : 10; }
  /// Flat trainable vector [lambda0, lambda1].
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& p);
  void validate() const;

  static PotentialSpec paper_3d();
  static PotentialSpec paper_5d();
};

/// Potential value, spatial derivatives, and (optionally) sensitivities of
/// those derivatives with respect to the flat parameter vector
/// [lambda0, lambda1] (P = 2 * lambda_count columns).
struct PotentialJet {
  double value = 0.0;
  Eigen::VectorXd grad;             // n
  Eigen::VectorXd hess_diag;        // n
  Eigen::MatrixXd dgrad_dlambda;    // n x P (when requested)
  Eigen::MatrixXd dhess_dlambda;    // n x P (when requested)
};

PotentialJet potential_jet(const PotentialSpec& spec,
                           const Eigen::Ref<const Eigen::VectorXd>& x,
                           bool with_lambda_grads = false);

double potential_value(const PotentialSpec& spec,
                       const Eigen::Ref<const Eigen::VectorXd>& x);

std::pair<double, Eigen::VectorXd> potential_value_and_gradient(
    const PotentialSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);

/// log of the Boltzmann normalization: log integral of exp(-2 Phi / s^2)
/// over the box (tensor Simpson; points_per_axis 0 picks a default).
double boltzmann_log_norm(const PotentialSpec& spec, const Box& box, double s,
                          int points_per_axis = 0);

/// Boltzmann observation q = exp(-2 Phi / s^2)/Z on a midpoint tensor grid.
/// All sigma entries must be equal.
DensityObservation boltzmann_density(const PotentialSpec& spec, const Box& box,
                                     const std::vector<int>& grid_res,
                                     const Eigen::Ref<const Eigen::VectorXd>& sigma);

/// Boltzmann observation at caller-supplied points (e.g. uniform draws);
/// Z comes from an internal tensor-Simpson grid over the box.
DensityObservation boltzmann_density_at(const PotentialSpec& spec,
                                        const Eigen::Ref<const Eigen::MatrixXd>& points,
                                        const Box& box,
                                        const Eigen::Ref<const Eigen::VectorXd>& sigma);

}  // namespace sdelearn
