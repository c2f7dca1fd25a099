#include "sdelearn/sde_model.hpp"

#include <cmath>

#include "sdelearn/quadrature.hpp"

namespace sdelearn {

void SdeModel::validate() const {
  require(dim >= 1, ErrorCode::invalid_config, "model dimension must be positive");
  if (auto* nf = std::get_if<NeuralField>(&drift)) {
    require(nf->input_dim() == dim && nf->output_dim() == dim,
            ErrorCode::dimension_mismatch, "neural drift must map R^n -> R^n");
  } else if (auto* pd = std::get_if<PotentialDrift>(&drift)) {
    pd->spec.validate();
    require(pd->spec.dim() == dim, ErrorCode::dimension_mismatch,
            "potential dimension mismatch");
  } else {
    require(std::get<ClosedFormDrift>(drift).dim == dim,
            ErrorCode::dimension_mismatch, "closed-form drift dimension mismatch");
  }
  if (auto* cd = std::get_if<ConstantDiagonalNoise>(&diffusion)) {
    require(cd->sigma.size() == dim, ErrorCode::dimension_mismatch,
            "sigma length mismatch");
    require((cd->sigma.array() != 0.0).all(), ErrorCode::degenerate_diffusion,
            "constant sigma entries must be nonzero");
  } else {
    require(dim == 1, ErrorCode::unsupported_diffusion,
            "state-dependent sigma is supported in 1-D only");
  }
}

Eigen::VectorXd SdeModel::drift_value(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (auto* nf = std::get_if<NeuralField>(&drift)) return nf->jet(x, 0).value;
  if (auto* pd = std::get_if<PotentialDrift>(&drift))
    return -potential_value_and_gradient(pd->spec, x).second;
  return std::get<ClosedFormDrift>(drift).value(x);
}

Eigen::VectorXd SdeModel::drift_jacobian_diag(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (auto* nf = std::get_if<NeuralField>(&drift)) {
    auto jet = nf->jet(x, 1);
    return jet.grad_x.diagonal();
  }
  if (auto* pd = std::get_if<PotentialDrift>(&drift))
    return -potential_jet(pd->spec, x).hess_diag;
  const auto& cf = std::get<ClosedFormDrift>(drift);
  require(static_cast<bool>(cf.jacobian_diag), ErrorCode::invalid_config,
          "closed-form drift lacks jacobian_diag");
  return cf.jacobian_diag(x);
}

Eigen::VectorXd SdeModel::sigma_at(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (auto* cd = std::get_if<ConstantDiagonalNoise>(&diffusion)) return cd->sigma;
  Eigen::VectorXd s(1);
  s(0) = std::get<ScalarNoise1d>(diffusion).value(x(0));
  return s;
}

ClosedFormDrift linear_drift_1d(double k) {
  ClosedFormDrift d;
  d.dim = 1;
  d.value = [k](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, -k * x(0)).eval();
  };
  d.jacobian_diag = [k](const Eigen::VectorXd&) {
    return Eigen::VectorXd::Constant(1, -k).eval();
  };
  return d;
}

ClosedFormDrift double_well_drift() {
  ClosedFormDrift d;
  d.dim = 1;
  d.value = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, x(0) - x(0) * x(0) * x(0)).eval();
  };
  d.jacobian_diag = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, 1.0 - 3.0 * x(0) * x(0)).eval();
  };
  return d;
}

ClosedFormDrift gene_drift(double K_d, double k_d, double k_f, double R_bas) {
  ClosedFormDrift d;
  d.dim = 1;
  d.value = [=](const Eigen::VectorXd& x) {
    double v = k_f * x(0) * x(0) / (x(0) * x(0) + K_d) - k_d * x(0) + R_bas;
    return Eigen::VectorXd::Constant(1, v).eval();
  };
  d.jacobian_diag = [=](const Eigen::VectorXd& x) {
    double s = x(0) * x(0) + K_d;
    return Eigen::VectorXd::Constant(1, 2.0 * k_f * K_d * x(0) / (s * s) - k_d).eval();
  };
  return d;
}

ClosedFormDrift cauchy_matching_drift() {
  ClosedFormDrift d;
  d.dim = 1;
  d.value = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, -x(0) / (1.0 + x(0) * x(0))).eval();
  };
  d.jacobian_diag = [](const Eigen::VectorXd& x) {
    double u = 1.0 + x(0) * x(0);
    return Eigen::VectorXd::Constant(1, (x(0) * x(0) - 1.0) / (u * u)).eval();
  };
  return d;
}

ClosedFormDensity gaussian_density_1d(double mu, double sd) {
  ClosedFormDensity p;
  p.dim = 1;
  double inv2 = 1.0 / (sd * sd);
  double norm = 1.0 / (sd * std::sqrt(2.0 * M_PI));
  p.value = [=](const Eigen::VectorXd& x) {
    double d = x(0) - mu;
    return norm * std::exp(-0.5 * d * d * inv2);
  };
  p.grad = [=](const Eigen::VectorXd& x) {
    double d = x(0) - mu;
    double v = norm * std::exp(-0.5 * d * d * inv2);
    return Eigen::VectorXd::Constant(1, -d * inv2 * v).eval();
  };
  p.hess_diag = [=](const Eigen::VectorXd& x) {
    double d = x(0) - mu;
    double v = norm * std::exp(-0.5 * d * d * inv2);
    return Eigen::VectorXd::Constant(1, (d * d * inv2 - 1.0) * inv2 * v).eval();
  };
  return p;
}

ClosedFormDensity polynomial_drift_stationary_density(double c0, double c1, double c3,
                                                      double sigma, const Box& box) {
  require(box.dim() == 1, ErrorCode::dimension_mismatch, "1-D box expected");
  double is2 = 2.0 / (sigma * sigma);
  auto G = [=](double x) {
    return is2 * (c0 * x + 0.5 * c1 * x * x + 0.25 * c3 * x * x * x * x);
  };
  auto G1 = [=](double x) { return is2 * (c0 + c1 * x + c3 * x * x * x); };
  auto G2 = [=](double x) { return is2 * (c1 + 3.0 * c3 * x * x); };
  int n = 2001;
  double lo = box.lower(0), hi = box.upper(0);
  Eigen::VectorXd xs = uniform_grid(lo, hi, n), vals(n);
  for (int i = 0; i < n; ++i) vals(i) = std::exp(G(xs(i)));
  double Z = simpson_weights(n, xs(1) - xs(0)).dot(vals);
  require(std::isfinite(Z) && Z > 0, ErrorCode::divergent_density,
          "stationary density does not normalize");
  ClosedFormDensity p;
  p.dim = 1;
  p.value = [=](const Eigen::VectorXd& x) { return std::exp(G(x(0))) / Z; };
  p.grad = [=](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, G1(x(0)) * std::exp(G(x(0))) / Z).eval();
  };
  p.hess_diag = [=](const Eigen::VectorXd& x) {
    double g1 = G1(x(0));
    return Eigen::VectorXd::Constant(
               1, (g1 * g1 + G2(x(0))) * std::exp(G(x(0))) / Z)
        .eval();
  };
  return p;
}

ClosedFormDensity boltzmann_closed_form(const PotentialSpec& spec, double s,
                                        const Box& box) {
  double logZ = boltzmann_log_norm(spec, box, s);
  double inv = 2.0 / (s * s);
  ClosedFormDensity p;
  p.dim = spec.dim();
  p.value = [=](const Eigen::VectorXd& x) {
    return std::exp(-inv * potential_value(spec, x) - logZ);
  };
  p.grad = [=](const Eigen::VectorXd& x) {
    auto jet = potential_jet(spec, x);
    double v = std::exp(-inv * jet.value - logZ);
    return (-inv * v * jet.grad).eval();
  };
  p.hess_diag = [=](const Eigen::VectorXd& x) {
    auto jet = potential_jet(spec, x);
    double v = std::exp(-inv * jet.value - logZ);
    return (v * (inv * inv * jet.grad.array().square() - inv * jet.hess_diag.array()))
        .matrix()
        .eval();
  };
  return p;
}

}  // namespace sdelearn
