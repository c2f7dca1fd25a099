#include "sdelearn/divergences.hpp"

#include <cmath>

namespace sdelearn {

void GridPair::validate() const {
  Eigen::Index n = p.size();
  require(q.size() == n && weights.size() == n && n > 0, ErrorCode::invalid_density,
          "grid pair arrays must have equal nonzero length");
  require(p.allFinite() && q.allFinite(), ErrorCode::invalid_density,
          "densities must be finite");
  require((p.array() >= 0.0).all() && (q.array() >= 0.0).all(),
          ErrorCode::invalid_density, "densities must be non-negative");
  require((weights.array() > 0.0).all(), ErrorCode::invalid_density,
          "quadrature weights must be positive");
}

GridPair make_grid_pair(Eigen::MatrixXd points, Eigen::VectorXd p, Eigen::VectorXd q,
                        Eigen::VectorXd weights) {
  GridPair g{std::move(points), std::move(p), std::move(q), std::move(weights)};
  g.validate();
  return g;
}

double hellinger(const GridPair& pair, HellingerMode mode) {
  pair.validate();
  Eigen::ArrayXd d = pair.p.array().sqrt() - pair.q.array().sqrt();
  if (mode == HellingerMode::paper_mean)
    return d.square().sum() / (2.0 * static_cast<double>(pair.p.size()));
  return std::sqrt(0.5 * (pair.weights.array() * d.square()).sum());
}

namespace {

// sum w a log(a/b) with the documented floor semantics.
double kl_core(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b,
               const Eigen::ArrayXd& w) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) < kDensityFloor) continue;
    require(b(i) >= kDensityFloor, ErrorCode::support_mismatch,
            "support mismatch: q vanishes where p does not");
    acc += w(i) * a(i) * std::log(a(i) / b(i));
  }
  return acc;
}

}  // namespace

double kl(const GridPair& pair) {
  pair.validate();
  return kl_core(pair.p.array(), pair.q.array(), pair.weights.array());
}

double js(const GridPair& pair, JsForm form) {
  pair.validate();
  Eigen::ArrayXd m = 0.5 * (pair.p.array() + pair.q.array());
  const auto w = pair.weights.array();
  double first = kl_core(pair.p.array(), m, w);
  double second = form == JsForm::verbatim ? kl_core(m, pair.p.array(), w)
                                           : kl_core(pair.q.array(), m, w);
  return 0.5 * first + 0.5 * second;
}

double mse(const GridPair& pair) {
  pair.validate();
  return (pair.p - pair.q).squaredNorm() / static_cast<double>(pair.p.size());
}

}  // namespace sdelearn
