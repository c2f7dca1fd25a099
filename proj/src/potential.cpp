#include "sdelearn/potential.hpp"

#include <cmath>

#include "sdelearn/quadrature.hpp"

namespace sdelearn {

Eigen::VectorXd PotentialSpec::parameters() const {
  Eigen::VectorXd p(2 * lambda_count());
  p << lambda0, lambda1;
  return p;
}

void PotentialSpec::set_parameters(const Eigen::Ref<const Eigen::VectorXd>& p) {
  int m = lambda_count();
  require(p.size() == 2 * m, ErrorCode::dimension_mismatch,
          "potential parameter vector length mismatch");
  lambda0 = p.head(m);
  lambda1 = p.tail(m);
}

void PotentialSpec::validate() const {
  int m = lambda_count();
  require(lambda0.size() == m && lambda1.size() == m, ErrorCode::invalid_config,
          "potential family requires lambda vectors of length " + std::to_string(m));
  require(lambda0.allFinite() && lambda1.allFinite(), ErrorCode::invalid_config,
          "potential parameters must be finite");
}

PotentialSpec PotentialSpec::paper_3d() {
  PotentialSpec s;
  s.family = PotentialFamily::three_dim;
  s.lambda0.resize(6);
  s.lambda0 << -5.0, -2.5, -5.0, -1.0, -1.0, -1.0;
  s.lambda1.resize(6);
  s.lambda1 << 1.0, 1.0, 1.0, -2.0, -1.0, -1.0;
  return s;
}

PotentialSpec PotentialSpec::paper_5d() {
  PotentialSpec s;
  s.family = PotentialFamily::five_dim;
  s.lambda0 = Eigen::VectorXd::Constant(10, -1.0);
  s.lambda1.resize(10);
  s.lambda1 << 1.0, 1.0, 1.0, 1.5, 1.5, -2.0, -1.0, -1.0, -1.0, -2.0;
  return s;
}

PotentialJet potential_jet(const PotentialSpec& spec,
                           const Eigen::Ref<const Eigen::VectorXd>& x,
                           bool with_lambda_grads) {
  spec.validate();
  int n = spec.dim();
  require(x.size() == n, ErrorCode::invalid_point, "point dimension mismatch");
  require(x.allFinite(), ErrorCode::invalid_point, "non-finite point");
  bool quad = spec.family == PotentialFamily::three_dim;
  const int G = 2;
  const double logc[2] = {quad ? std::log(2.0) : 0.0, 0.0};
  int m = spec.lambda_count();  // lambdas per kind; n per group

  // Exponents and their x-derivatives per group.
  double E[2] = {0.0, 0.0};
  Eigen::MatrixXd Ei(G, n), Eii(G, n);  // dE_g/dx_i, d2E_g/dx_i^2
  for (int g = 0; g < G; ++g)
    for (int i = 0; i < n; ++i) {
      int j = g * n + i;
      double d = x(i) - spec.lambda1(j);
      double l0 = spec.lambda0(j);
      if (quad) {
        E[g] += l0 * d * d;
        Ei(g, i) = 2.0 * l0 * d;
        Eii(g, i) = 2.0 * l0;
      } else {
        E[g] += l0 * d;
        Ei(g, i) = l0;
        Eii(g, i) = 0.0;
      }
    }

  // Softmax weights of log(c_g) + E_g, computed stably.
  double a0 = logc[0] + E[0], a1 = logc[1] + E[1];
  double M = std::max(a0, a1);
  double s0 = std::exp(a0 - M), s1 = std::exp(a1 - M);
  double S = s0 + s1;
  double w[2] = {s0 / S, s1 / S};

  PotentialJet jet;
  jet.value = -0.5 * (M + std::log(S));
  jet.grad.resize(n);
  jet.hess_diag.resize(n);
  Eigen::VectorXd wEi(n), wEii(n), wEi2(n);
  for (int i = 0; i < n; ++i) {
    wEi(i) = w[0] * Ei(0, i) + w[1] * Ei(1, i);
    wEii(i) = w[0] * Eii(0, i) + w[1] * Eii(1, i);
    wEi2(i) = w[0] * Ei(0, i) * Ei(0, i) + w[1] * Ei(1, i) * Ei(1, i);
    jet.grad(i) = -0.5 * wEi(i);
    jet.hess_diag(i) = -0.5 * (wEii(i) + wEi2(i) - wEi(i) * wEi(i));
  }

  if (!with_lambda_grads) return jet;

  // Sensitivities w.r.t. theta in [lambda0, lambda1]. Each theta lives in one
  // group h; write t = dE_h/dtheta. Then dw_g/dtheta = w_g (delta_gh - w_h) t,
  // and the chain rule below follows from the grad / hess_diag expressions.
  int P = 2 * m;
  jet.dgrad_dlambda = Eigen::MatrixXd::Zero(n, P);
  jet.dhess_dlambda = Eigen::MatrixXd::Zero(n, P);
  for (int kind = 0; kind < 2; ++kind) {    // 0: lambda0, 1: lambda1
    for (int j = 0; j < m; ++j) {
      int h = j / n;          // group of this parameter
      int k = j % n;          // axis it attaches to
      int col = kind * m + j;
      double d = x(k) - spec.lambda1(h * n + k);
      double l0 = spec.lambda0(h * n + k);
      double t;               // dE_h/dtheta
      double dEi_k;           // d(E_h,k)/dtheta; other axes unaffected
      double dEii_k;          // d(E_h,kk)/dtheta
      if (quad) {
        if (kind == 0) {
          t = d * d;
          dEi_k = 2.0 * d;
          dEii_k = 2.0;
        } else {
          t = -2.0 * l0 * d;
          dEi_k = -2.0 * l0;
          dEii_k = 0.0;
        }
      } else {
        if (kind == 0) {
          t = d;
          dEi_k = 1.0;
          dEii_k = 0.0;
        } else {
          t = -l0;
          dEi_k = 0.0;
          dEii_k = 0.0;
        }
      }
      double wh = w[h];
      for (int i = 0; i < n; ++i) {
        // d(sum_g w_g E_g,i)/dtheta
        double dwEi = t * wh * (Ei(h, i) - wEi(i)) + (i == k ? wh * dEi_k : 0.0);
        jet.dgrad_dlambda(i, col) = -0.5 * dwEi;
        double dwEii = t * wh * (Eii(h, i) - wEii(i)) + (i == k ? wh * dEii_k : 0.0);
        double dwEi2 = t * wh * (Ei(h, i) * Ei(h, i) - wEi2(i)) +
                       (i == k ? 2.0 * wh * Ei(h, i) * dEi_k : 0.0);
        jet.dhess_dlambda(i, col) =
            -0.5 * (dwEii + dwEi2 - 2.0 * wEi(i) * dwEi);
      }
    }
  }
  return jet;
}

double potential_value(const PotentialSpec& spec,
                       const Eigen::Ref<const Eigen::VectorXd>& x) {
  // allocation-free value path; the normalizers call this tens of millions
  // of times
  bool quad = spec.family == PotentialFamily::three_dim;
  int n = spec.dim();
  double E[2] = {quad ? std::log(2.0) : 0.0, 0.0};
  for (int g = 0; g < 2; ++g)
    for (int i = 0; i < n; ++i) {
      int j = g * n + i;
      double d = x(i) - spec.lambda1(j);
      E[g] += spec.lambda0(j) * (quad ? d * d : d);
    }
  double M = std::max(E[0], E[1]);
  return -0.5 * (M + std::log(std::exp(E[0] - M) + std::exp(E[1] - M)));
}

std::pair<double, Eigen::VectorXd> potential_value_and_gradient(
    const PotentialSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  auto jet = potential_jet(spec, x, false);
  return {jet.value, jet.grad};
}

double boltzmann_log_norm(const PotentialSpec& spec, const Box& box, double s,
                          int points_per_axis) {
  require(box.dim() == spec.dim(), ErrorCode::dimension_mismatch,
          "box dimension mismatch");
  if (points_per_axis <= 0) points_per_axis = spec.dim() <= 3 ? 81 : 31;
  // Shift by the box-center exponent so the integrand stays in range.
  double phi0 = potential_value(spec, box.center());
  double inv = 2.0 / (s * s);
  double integral = tensor_simpson_integral(
      box, std::vector<int>(spec.dim(), points_per_axis),
      [&](const Eigen::VectorXd& x) {
        return std::exp(-inv * (potential_value(spec, x) - phi0));
      });
  require(std::isfinite(integral) && integral > 0.0, ErrorCode::divergent_density,
          "Boltzmann normalization failed");
  return std::log(integral) - inv * phi0;
}

namespace {

void check_equal_sigma(const Eigen::Ref<const Eigen::VectorXd>& sigma, int n) {
  require(sigma.size() == n, ErrorCode::dimension_mismatch, "sigma length mismatch");
  for (int j = 1; j < n; ++j)
    require(sigma(j) == sigma(0), ErrorCode::unsupported_diffusion,
            "Boltzmann density requires all sigma_j equal");
  require(sigma(0) != 0.0, ErrorCode::degenerate_diffusion, "sigma must be nonzero");
}

}  // namespace

DensityObservation boltzmann_density(const PotentialSpec& spec, const Box& box,
                                     const std::vector<int>& grid_res,
                                     const Eigen::Ref<const Eigen::VectorXd>& sigma) {
  check_equal_sigma(sigma, spec.dim());
  Eigen::MatrixXd pts = tensor_midpoint_grid(box, grid_res);
  auto obs = boltzmann_density_at(spec, pts, box, sigma);
  obs.label = "boltzmann";
  return obs;
}

DensityObservation boltzmann_density_at(const PotentialSpec& spec,
                                        const Eigen::Ref<const Eigen::MatrixXd>& points,
                                        const Box& box,
                                        const Eigen::Ref<const Eigen::VectorXd>& sigma) {
  check_equal_sigma(sigma, spec.dim());
  double s = std::abs(sigma(0));
  double logZ = boltzmann_log_norm(spec, box, s);
  double inv = 2.0 / (s * s);
  DensityObservation obs;
  obs.points = points;
  obs.values.resize(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    obs.values(i) =
        std::exp(-inv * potential_value(spec, points.row(i).transpose()) - logZ);
  obs.domain = box;
  obs.label = "boltzmann_at";
  obs.validate();
  return obs;
}

}  // namespace sdelearn
