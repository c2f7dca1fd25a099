#pragma once

#include <functional>
#include <variant>

#include "sdelearn/common.hpp"
#include "sdelearn/neural_field.hpp"
#include "sdelearn/potential.hpp"

namespace sdelearn {

/// Drift given in closed form; jacobian_diag carries d b_i / d x_i (needed by
/// the stationary residual).
struct ClosedFormDrift {
  int dim = 1;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> jacobian_diag;
};

/// Drift b = -grad Phi for a parametric potential.
struct PotentialDrift {
  PotentialSpec spec;
};

using Drift = std::variant<NeuralField, PotentialDrift, ClosedFormDrift>;

struct ConstantDiagonalNoise {
  Eigen::VectorXd sigma;
};

/// State-dependent scalar noise, 1-D only; derivatives feed the
/// d^2(sigma^2 p) term of the residual.
struct ScalarNoise1d {
  std::function<double(double)> value, deriv1, deriv2;
};

using Diffusion = std::variant<ConstantDiagonalNoise, ScalarNoise1d>;

struct TrainableMask {
  bool drift = false;
  bool diffusion = false;
};

struct SdeModel {
  int dim = 1;
  Drift drift;
  Diffusion diffusion;
  TrainableMask trainable;

  void validate() const;
  Eigen::VectorXd drift_value(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd drift_jacobian_diag(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Diagonal sigma evaluated at x (constant or state-dependent).
  Eigen::VectorXd sigma_at(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Density given in closed form (value, gradient, diagonal Hessian).
struct ClosedFormDensity {
  int dim = 1;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> hess_diag;
};

using DensityModel = std::variant<NeuralField, ClosedFormDensity>;

// ---- closed-form factories used by experiments and oracle tests ----

/// b(x) = -k x (1-D).
ClosedFormDrift linear_drift_1d(double k);
/// b(x) = x - x^3.
ClosedFormDrift double_well_drift();
/// Gene regulation drift with the usual parameters.
ClosedFormDrift gene_drift(double K_d = 10.0, double k_d = 1.0, double k_f = 6.0,
                           double R_bas = 0.4);
/// The drift whose sigma=1 stationary density is the standard Cauchy:
/// b(x) = -x/(1+x^2).
ClosedFormDrift cauchy_matching_drift();

/// 1-D Gaussian N(mu, sd^2) with exact derivatives.
ClosedFormDensity gaussian_density_1d(double mu, double sd);
/// Density C exp(G(x)) with G' = 2b/sigma^2 for a polynomial drift
/// b(x) = c0 + c1 x + c3 x^3 and constant sigma; C normalizes over the box.
ClosedFormDensity polynomial_drift_stationary_density(double c0, double c1, double c3,
                                                      double sigma, const Box& box);
/// Boltzmann density exp(-2 Phi / s^2)/Z with exact derivatives via
/// potential jets.
ClosedFormDensity boltzmann_closed_form(const PotentialSpec& spec, double s,
                                        const Box& box);

}  // namespace sdelearn
