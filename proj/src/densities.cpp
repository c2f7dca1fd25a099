#include "sdelearn/densities.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sdelearn/quadrature.hpp"
#include "sdelearn/rng.hpp"

namespace sdelearn {

void DensityObservation::validate() const {
  require(points.rows() == values.size(), ErrorCode::invalid_density,
          "points/values length mismatch");
  require(values.allFinite() && (values.array() >= 0.0).all(),
          ErrorCode::invalid_density, "density values must be finite and >= 0");
  require(domain.dim() == dim(), ErrorCode::dimension_mismatch,
          "domain dimension mismatch");
  for (int i = 0; i < size(); ++i)
    require(domain.contains(points.row(i).transpose(), 1e-12),
            ErrorCode::invalid_density, "observation point outside domain");
}

double DensityObservation::integral_1d() const {
  require(dim() == 1 && size() >= 3, ErrorCode::invalid_density,
          "integral_1d needs a 1-D grid");
  double h = points(1, 0) - points(0, 0);
  return simpson_weights(size(), h).dot(values);
}

DensityObservation stationary_density_1d(const std::function<double(double)>& drift,
                                         const std::function<double(double)>& sigma,
                                         double lo, double hi, int grid_n,
                                         double ref_point) {
  require(grid_n >= 5, ErrorCode::invalid_config, "grid too small");
  require(hi > lo, ErrorCode::invalid_config, "empty domain");
  Eigen::VectorXd x = uniform_grid(lo, hi, grid_n);
  double h = x(1) - x(0);
  double xstar = std::isnan(ref_point) ? 0.5 * (lo + hi) : ref_point;

  Eigen::VectorXd g(grid_n), logs2(grid_n);
  for (int i = 0; i < grid_n; ++i) {
    double s = sigma(x(i));
    require(std::abs(s) > 1e-12, ErrorCode::degenerate_diffusion,
            "sigma vanishes on the grid");
    g(i) = 2.0 * drift(x(i)) / (s * s);
    logs2(i) = std::log(s * s);
    require(std::isfinite(g(i)), ErrorCode::divergent_density,
            "non-finite drift/sigma ratio on the grid");
  }

  // Cumulative integral from the first node, then shift so the reference
  // point carries zero exponent; different x* only moves the constant.
  Eigen::VectorXd cum = cumulative_simpson(g, h);
  double at_star = 0.0;
  {
    // linear interpolation of the cumulative integral at x*
    double t = (xstar - lo) / h;
    int i0 = std::clamp(static_cast<int>(std::floor(t)), 0, grid_n - 2);
    at_star = cum(i0) + (t - i0) * (cum(i0 + 1) - cum(i0));
  }
  Eigen::VectorXd expo = cum.array() - at_star - logs2.array();
  double m = expo.maxCoeff();
  require(std::isfinite(m), ErrorCode::divergent_density, "divergent exponent");
  Eigen::VectorXd unnorm = (expo.array() - m).exp();
  double z = simpson_weights(grid_n, h).dot(unnorm);
  require(std::isfinite(z) && z > 0.0, ErrorCode::divergent_density,
          "density does not normalize on the domain");

  DensityObservation obs;
  obs.points = x;
  obs.values = unnorm / z;
  obs.domain = Box::interval(lo, hi);
  obs.label = "stationary_density_1d";
  return obs;
}

double gene_regulation_drift(double x, double K_d, double k_d, double k_f,
                             double R_bas) {
  return k_f * x * x / (x * x + K_d) - k_d * x + R_bas;
}

namespace {

double param_or(const std::map<std::string, double>& p, const std::string& k,
                double dflt) {
  auto it = p.find(k);
  return it == p.end() ? dflt : it->second;
}

DensityObservation analytic_on_grid(const std::function<double(double)>& q, double lo,
                                    double hi, int n, const std::string& label) {
  Eigen::VectorXd x = uniform_grid(lo, hi, n);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = q(x(i));
  DensityObservation obs;
  obs.points = x;
  obs.values = v;
  obs.domain = Box::interval(lo, hi);
  obs.label = label;
  return obs;
}

}  // namespace

DensityObservation observation_library(const std::string& name,
                                       const std::map<std::string, double>& params) {
  int n = static_cast<int>(param_or(params, "grid_n", 1001));
  if (name == "gaussian") {
    double lo = param_or(params, "lo", -5.0), hi = param_or(params, "hi", 5.0);
    return analytic_on_grid(
        [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }, lo, hi,
        n, "gaussian");
  }
  if (name == "double_well") {
    double sigma = param_or(params, "sigma", 1.0);
    require(std::abs(sigma - 1.0) < 1e-12, ErrorCode::unsupported_diffusion,
            "double_well observation is defined for sigma = 1 only");
    double lo = param_or(params, "lo", -5.0), hi = param_or(params, "hi", 5.0);
    auto raw = [](double x) { return std::exp(x * x - 0.5 * x * x * x * x); };
    auto obs = analytic_on_grid(raw, lo, hi, n, "double_well");
    obs.values /= obs.integral_1d();
    return obs;
  }
  if (name == "cauchy") {
    // [-5,5] keeps only 87% of the Cauchy mass; the wider default satisfies
    // the truncated-integral invariant.
    double lo = param_or(params, "lo", -15.0), hi = param_or(params, "hi", 15.0);
    return analytic_on_grid([](double x) { return 1.0 / (M_PI * (1.0 + x * x)); }, lo,
                            hi, n, "cauchy");
  }
  if (name == "gene_regulation") {
    double lo = param_or(params, "lo", 0.0), hi = param_or(params, "hi", 15.0);
    double K_d = param_or(params, "K_d", 10.0), k_d = param_or(params, "k_d", 1.0);
    double k_f = param_or(params, "k_f", 6.0), R_bas = param_or(params, "R_bas", 0.4);
    double sigma = param_or(params, "sigma", 1.0);
    auto obs = stationary_density_1d(
        [=](double x) { return gene_regulation_drift(x, K_d, k_d, k_f, R_bas); },
        [=](double) { return sigma; }, lo, hi, n);
    obs.label = "gene_regulation";
    return obs;
  }
  fail(ErrorCode::unknown_observation, "unknown observation: " + name);
}

DensityObservation perturb_observation(const DensityObservation& obs, double level,
                                       std::uint64_t seed) {
  require(level >= 0.0, ErrorCode::invalid_config, "noise level must be >= 0");
  DensityObservation out = obs;
  if (level == 0.0) return out;
  Rng rng(split_seed(seed, streams::observation_noise));
  for (Eigen::Index i = 0; i < out.values.size(); ++i)
    out.values(i) = std::max(0.0, out.values(i) * (1.0 + level * rng.normal()));
  out.label = obs.label + "+noise";
  return out;
}

void save_observation_csv(const DensityObservation& obs, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  for (int j = 0; j < obs.dim(); ++j) os << "x" << (j + 1) << ",";
  os << "q\n";
  char buf[64];
  for (int i = 0; i < obs.size(); ++i) {
    for (int j = 0; j < obs.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,", obs.points(i, j));
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", obs.values(i));
    os << buf;
  }
  require(os.good(), ErrorCode::io_error, "write failed: " + path);
}

DensityObservation load_observation_csv(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorCode::io_error, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::io_error,
          path + ": empty file");
  int ncol = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  int n = ncol - 1;
  require(n >= 1 && line.substr(0, 2) == "x1", ErrorCode::io_error,
          path + ": expected header x1,...,q");
  std::vector<double> data;
  int rows = 0, lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int c = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        data.push_back(std::stod(cell));
      } catch (...) {
        fail(ErrorCode::io_error,
             path + ": bad number at line " + std::to_string(lineno));
      }
      ++c;
    }
    require(c == ncol, ErrorCode::io_error,
            path + ": wrong column count at line " + std::to_string(lineno));
    ++rows;
  }
  require(rows >= 1, ErrorCode::io_error, path + ": no data rows");
  DensityObservation obs;
  obs.points.resize(rows, n);
  obs.values.resize(rows);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < n; ++j) obs.points(i, j) = data[i * ncol + j];
    obs.values(i) = data[i * ncol + n];
  }
  Eigen::VectorXd lo = obs.points.colwise().minCoeff().transpose();
  Eigen::VectorXd hi = obs.points.colwise().maxCoeff().transpose();
  for (int j = 0; j < n; ++j)
    if (hi(j) <= lo(j)) hi(j) = lo(j) + 1e-9;
  obs.domain = Box(lo, hi);
  if (n == 1) {
    for (int i = 1; i < rows; ++i)
      require(obs.points(i, 0) > obs.points(i - 1, 0), ErrorCode::io_error,
              path + ": 1-D grid must be strictly increasing (line " +
                  std::to_string(i + 2) + ")");
  }
  obs.label = path;
  obs.validate();
  return obs;
}

}  // namespace sdelearn
