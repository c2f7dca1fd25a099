#include "sdelearn/fpe_residual.hpp"

#include <cmath>
#include <memory>

namespace sdelearn {

Eigen::RowVectorXd residual_gaussian(const ResidualParts& parts,
                                     const Eigen::Ref<const Eigen::VectorXd>& sigma) {
  int n = static_cast<int>(parts.b.rows());
  Eigen::Index N = parts.b.cols();
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(N);
  for (int i = 0; i < n; ++i) {
    f.array() -= parts.jac_diag.row(i).array() * parts.p.array() +
                 parts.b.row(i).array() * parts.dp.row(i).array();
    f.array() += 0.5 * sigma(i) * sigma(i) * parts.d2p.row(i).array();
  }
  return f;
}

ResidualAdjoints residual_gaussian_adjoints(
    const ResidualParts& parts, const Eigen::Ref<const Eigen::VectorXd>& sigma,
    const Eigen::Ref<const Eigen::RowVectorXd>& fbar) {
  int n = static_cast<int>(parts.b.rows());
  Eigen::Index N = parts.b.cols();
  ResidualAdjoints adj;
  adj.b_bar.resize(n, N);
  adj.jac_diag_bar.resize(n, N);
  adj.dp_bar.resize(n, N);
  adj.d2p_bar.resize(n, N);
  adj.p_bar = Eigen::RowVectorXd::Zero(N);
  adj.sigma_bar.resize(n);
  for (int i = 0; i < n; ++i) {
    adj.b_bar.row(i) = (-fbar.array() * parts.dp.row(i).array()).matrix();
    adj.jac_diag_bar.row(i) = (-fbar.array() * parts.p.array()).matrix();
    adj.p_bar.array() -= fbar.array() * parts.jac_diag.row(i).array();
    adj.dp_bar.row(i) = (-fbar.array() * parts.b.row(i).array()).matrix();
    adj.d2p_bar.row(i) = (0.5 * sigma(i) * sigma(i) * fbar.array()).matrix();
    adj.sigma_bar(i) = sigma(i) * (fbar.array() * parts.d2p.row(i).array()).sum();
  }
  return adj;
}

namespace {

// Fill ResidualParts from closed-form / neural ingredients at points (rows).
ResidualParts assemble_parts(const SdeModel& model, const DensityModel& density,
                             const Eigen::Ref<const Eigen::MatrixXd>& points) {
  int n = model.dim;
  Eigen::Index N = points.rows();
  require(points.cols() == n, ErrorCode::dimension_mismatch,
          "points dimension mismatch");
  ResidualParts parts;
  parts.b.resize(n, N);
  parts.jac_diag.resize(n, N);
  parts.p.resize(N);
  parts.dp.resize(n, N);
  parts.d2p.resize(n, N);

  if (auto* nf = std::get_if<NeuralField>(&density)) {
    auto jet = nf->forward(points.transpose(), 2);
    parts.p = jet.value.row(0);
    for (int k = 0; k < n; ++k) {
      parts.dp.row(k) = jet.grad[k].row(0);
      parts.d2p.row(k) = jet.hess[k].row(0);
    }
  } else {
    const auto& cf = std::get<ClosedFormDensity>(density);
    for (Eigen::Index c = 0; c < N; ++c) {
      Eigen::VectorXd x = points.row(c).transpose();
      parts.p(c) = cf.value(x);
      parts.dp.col(c) = cf.grad(x);
      parts.d2p.col(c) = cf.hess_diag(x);
    }
  }

  if (auto* nf = std::get_if<NeuralField>(&model.drift)) {
    auto jet = nf->forward(points.transpose(), 1);
    parts.b = jet.value;
    for (int k = 0; k < n; ++k) parts.jac_diag.row(k) = jet.grad[k].row(k);
  } else {
    for (Eigen::Index c = 0; c < N; ++c) {
      Eigen::VectorXd x = points.row(c).transpose();
      parts.b.col(c) = model.drift_value(x);
      parts.jac_diag.col(c) = model.drift_jacobian_diag(x);
    }
  }
  return parts;
}

}  // namespace

ResidualBatch adjoint_residual(const SdeModel& model, const DensityModel& density,
                               const Eigen::Ref<const Eigen::MatrixXd>& points) {
  model.validate();
  ResidualParts parts = assemble_parts(model, density, points);

  ResidualBatch out;
  out.points = points;
  if (auto* cd = std::get_if<ConstantDiagonalNoise>(&model.diffusion)) {
    out.residuals = residual_gaussian(parts, cd->sigma).transpose();
  } else {
    // 1-D, sigma(x): f = -(b p)' + 1/2 (sigma^2 p)'' with
    // (s2 p)'' = s2'' p + 2 s2' p' + s2 p''.
    const auto& sn = std::get<ScalarNoise1d>(model.diffusion);
    Eigen::Index N = points.rows();
    out.residuals.resize(N);
    for (Eigen::Index c = 0; c < N; ++c) {
      double x = points(c, 0);
      double s = sn.value(x), s1 = sn.deriv1(x), s2d = sn.deriv2(x);
      double s2 = s * s;
      double s2p = 2.0 * s * s1;
      double s2pp = 2.0 * (s1 * s1 + s * s2d);
      double drift_term =
          parts.jac_diag(0, c) * parts.p(c) + parts.b(0, c) * parts.dp(0, c);
      out.residuals(c) = -drift_term + 0.5 * (s2pp * parts.p(c) +
                                              2.0 * s2p * parts.dp(0, c) +
                                              s2 * parts.d2p(0, c));
    }
  }
  require(out.residuals.allFinite(), ErrorCode::diverged_loss,
          "non-finite residual");
  return out;
}

ScalarField1d gridded_field_1d(const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& values) {
  Eigen::Index n = x.size();
  require(n >= 4 && values.size() == n, ErrorCode::invalid_config,
          "gridded field needs >= 4 nodes");
  double h = x(1) - x(0);
  auto xs = std::make_shared<Eigen::VectorXd>(x);
  auto vs = std::make_shared<Eigen::VectorXd>(values);
  double lo = x(0), hi = x(n - 1);
  auto locate = [xs, h, lo, n](double t) {
    int i = static_cast<int>(std::floor((t - lo) / h));
    return std::clamp(i, 0, static_cast<int>(n) - 2);
  };
  ScalarField1d f;
  f.lo = lo;
  f.hi = hi;
  f.f = [=](double t) {
    require(t >= lo - 1e-12 && t <= hi + 1e-12, ErrorCode::domain_coverage,
            "evaluation outside gridded density domain");
    int i = locate(t);
    double u = (t - (*xs)(i)) / h;
    return (1.0 - u) * (*vs)(i) + u * (*vs)(i + 1);
  };
  f.d1 = [=](double t) {
    int i = std::clamp(locate(t), 1, static_cast<int>(n) - 3);
    return ((*vs)(i + 1) - (*vs)(i - 1)) / (2.0 * h);
  };
  f.d2 = [=](double t) {
    int i = std::clamp(locate(t), 1, static_cast<int>(n) - 3);
    return ((*vs)(i + 1) - 2.0 * (*vs)(i) + (*vs)(i - 1)) / (h * h);
  };
  return f;
}

double levy_constant_1d(double alpha) {
  require(alpha > 0.0 && alpha < 2.0, ErrorCode::invalid_stability,
          "alpha must lie in (0,2)");
  return alpha * std::tgamma((1.0 + alpha) / 2.0) /
         (std::pow(2.0, 1.0 - alpha) * std::sqrt(M_PI) * std::tgamma(1.0 - alpha / 2.0));
}

ResidualBatch levy_residual_1d(const ScalarField1d& drift, double eps, double alpha,
                               const ScalarField1d& density,
                               const Eigen::Ref<const Eigen::VectorXd>& points,
                               const LevyOptions& opts) {
  require(alpha > 0.0 && alpha < 2.0, ErrorCode::invalid_stability,
          "alpha must lie in (0,2)");
  require(eps > 0.0, ErrorCode::invalid_config, "eps must be positive");
  Eigen::Index N = points.size();
  require(N > 0, ErrorCode::invalid_config, "no evaluation points");

  double xmin = points.minCoeff(), xmax = points.maxCoeff();
  double half_width = std::max(0.5 * (xmax - xmin), 1.0);
  double R = opts.outer_radius > 0 ? opts.outer_radius : 4.0 * half_width;
  double h = opts.step > 0 ? opts.step : (xmax - xmin > 0 ? (xmax - xmin) / 1000.0
                                                          : half_width / 500.0);
  double delta = opts.inner_cut > 0 ? opts.inner_cut : h;
  require(delta < R, ErrorCode::invalid_config, "inner cut must be below R");

  // padded-grid precondition for gridded densities
  require(density.lo <= xmin - R && density.hi >= xmax + R, ErrorCode::domain_coverage,
          "density must cover the points padded by the truncation radius R");

  double C = levy_constant_1d(alpha);
  double scale = std::pow(eps, alpha);

  // y-nodes for the half-line [delta, R]
  int ny = std::max(4, static_cast<int>(std::ceil((R - delta) / h)) + 1);
  Eigen::VectorXd y(ny), wy(ny);
  double hy = (R - delta) / (ny - 1);
  for (int j = 0; j < ny; ++j) {
    y(j) = delta + j * hy;
    wy(j) = (j == 0 || j == ny - 1) ? 0.5 * hy : hy;
  }
  Eigen::VectorXd nu = C * y.array().pow(-1.0 - alpha);

  ResidualBatch out;
  out.points = points;
  out.residuals.resize(N);
  for (Eigen::Index c = 0; c < N; ++c) {
    double x = points(c);
    double px = density.f(x);

    // drift part: -(b p)' = -(b' p + b p')
    double drift_term = drift.d1(x) * px + drift.f(x) * density.d1(x);

    // inner Taylor part: p'' C delta^(2-alpha) / (2-alpha)
    double inner = density.d2(x) * C * std::pow(delta, 2.0 - alpha) / (2.0 - alpha);

    // middle trapezoid; the odd p' y part cancels between the two branches
    double mid = 0.0;
    for (int j = 0; j < ny; ++j)
      mid += wy(j) * nu(j) *
             ((density.f(x + y(j)) - px) + (density.f(x - y(j)) - px));

    // analytic tail: drop p(x+y) beyond R, keep the -p(x) power law
    double tail = -px * 2.0 * C * std::pow(R, -alpha) / alpha;

    out.residuals(c) = -drift_term + scale * (inner + mid + tail);
  }
  require(out.residuals.allFinite(), ErrorCode::diverged_loss,
          "non-finite Levy residual");
  return out;
}

}  // namespace sdelearn
