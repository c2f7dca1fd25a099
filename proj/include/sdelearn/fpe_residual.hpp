#pragma once

#include "sdelearn/common.hpp"
#include "sdelearn/sde_model.hpp"

namespace sdelearn {

struct ResidualBatch {
  Eigen::MatrixXd points;     // N x n
  Eigen::VectorXd residuals;  // f(x_i)
};

/// Per-batch ingredients of the stationary residual, column per point:
/// f = -sum_i [ (d_i b_i) p + b_i d_i p ] + 1/2 sum_i sigma_i^2 d_ii p.
struct ResidualParts {
  Eigen::MatrixXd b;         // n x N
  Eigen::MatrixXd jac_diag;  // n x N   d b_i / d x_i
  Eigen::RowVectorXd p;      // 1 x N
  Eigen::MatrixXd dp;        // n x N
  Eigen::MatrixXd d2p;       // n x N
};

Eigen::RowVectorXd residual_gaussian(const ResidualParts& parts,
                                     const Eigen::Ref<const Eigen::VectorXd>& sigma);

/// Adjoint seeds of residual_gaussian: given fbar = dL/df per point, fills
/// dL/d(ingredient). sigma_bar accumulates the per-axis total over the batch.
struct ResidualAdjoints {
  Eigen::MatrixXd b_bar, jac_diag_bar;  // n x N
  Eigen::RowVectorXd p_bar;             // 1 x N
  Eigen::MatrixXd dp_bar, d2p_bar;      // n x N
  Eigen::VectorXd sigma_bar;            // n
};

ResidualAdjoints residual_gaussian_adjoints(
    const ResidualParts& parts, const Eigen::Ref<const Eigen::VectorXd>& sigma,
    const Eigen::Ref<const Eigen::RowVectorXd>& fbar);

/// Stationary adjoint-operator residual at the given points (rows).
/// Constant diagonal diffusion for n > 1; 1-D also accepts scalar sigma(x).
ResidualBatch adjoint_residual(const SdeModel& model, const DensityModel& density,
                               const Eigen::Ref<const Eigen::MatrixXd>& points);

/// Scalar field on (a subset of) the line with derivatives; lo/hi bound the
/// domain where evaluation is valid (infinite for analytic fields).
struct ScalarField1d {
  std::function<double(double)> f, d1, d2;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

/// Wraps gridded values (uniform grid) with linear interpolation and
/// finite-difference derivatives.
ScalarField1d gridded_field_1d(const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& values);

/// C_{1,alpha} of the symmetric alpha-stable Levy measure
/// nu(dy) = C |y|^{-1-alpha} dy.
double levy_constant_1d(double alpha);

struct LevyOptions {
  double inner_cut = 0.0;     // delta; 0 -> quadrature step
  double outer_radius = 0.0;  // R; 0 -> 4x the point-range half-width
  double step = 0.0;          // y-quadrature step; 0 -> (point range)/1000
};

/// f(x) = -(b p)'(x) + eps^alpha * int [p(x+y)-p(x)] nu_alpha(dy).
/// Inner |y|<delta handled by the Taylor term p'' C delta^(2-alpha)/(2-alpha),
/// middle part by trapezoid on [delta, R] both sides, tail beyond R by the
/// analytic power-law estimate -p(x) 2C R^{-alpha}/alpha.
ResidualBatch levy_residual_1d(const ScalarField1d& drift, double eps, double alpha,
                               const ScalarField1d& density,
                               const Eigen::Ref<const Eigen::VectorXd>& points,
                               const LevyOptions& opts = {});

}  // namespace sdelearn
