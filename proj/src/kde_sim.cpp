#include "sdelearn/kde_sim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sdelearn/rng.hpp"

namespace sdelearn {

Trajectory euler_maruyama(const SdeModel& model,
                          const Eigen::Ref<const Eigen::VectorXd>& x0, double dt,
                          long steps, std::uint64_t seed, long burn_in,
                          double guard) {
  model.validate();
  int n = model.dim;
  require(x0.size() == n, ErrorCode::dimension_mismatch, "x0 dimension mismatch");
  require(dt > 0.0 && steps > 0, ErrorCode::invalid_config,
          "dt and steps must be positive");
  require(burn_in >= 0 && burn_in <= steps, ErrorCode::invalid_config,
          "burn_in out of range");

  Rng rng(split_seed(seed, streams::trajectory));
  double sdt = std::sqrt(dt);
  long kept = steps + 1 - burn_in;
  Trajectory t;
  t.dt = dt;
  t.seed = seed;
  t.times.resize(kept);
  t.states.resize(kept, n);

  Eigen::VectorXd x = x0;
  long row = 0;
  auto record = [&](long k) {
    if (k >= burn_in) {
      t.times(row) = k * dt;
      t.states.row(row) = x.transpose();
      ++row;
    }
  };
  record(0);
  for (long k = 0; k < steps; ++k) {
    Eigen::VectorXd b = model.drift_value(x);
    Eigen::VectorXd s = model.sigma_at(x);
    for (int j = 0; j < n; ++j) x(j) += b(j) * dt + s(j) * sdt * rng.normal();
    if ((x.array().abs() > guard).any())
      fail(ErrorCode::blow_up,
           "trajectory left the guard box at step " + std::to_string(k + 1));
    record(k + 1);
  }
  return t;
}

Eigen::MatrixXd thin_samples(const Eigen::Ref<const Eigen::MatrixXd>& samples, int k) {
  require(k >= 1, ErrorCode::invalid_config, "thinning factor must be >= 1");
  Eigen::Index m = (samples.rows() + k - 1) / k;
  Eigen::MatrixXd out(m, samples.cols());
  for (Eigen::Index i = 0; i < m; ++i) out.row(i) = samples.row(i * k);
  return out;
}

Eigen::VectorXd silverman_bandwidth(const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  Eigen::Index m = samples.rows();
  require(m >= 2, ErrorCode::invalid_config, "need at least 2 samples");
  Eigen::VectorXd h(samples.cols());
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    double mean = samples.col(j).mean();
    double var = (samples.col(j).array() - mean).square().sum() /
                 static_cast<double>(m - 1);
    require(var > 0.0, ErrorCode::degenerate_bandwidth,
            "zero sample variance along axis " + std::to_string(j));
    h(j) = 1.06 * std::sqrt(var) * std::pow(static_cast<double>(m), -0.2);
  }
  return h;
}

DensityObservation kde(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                       const Eigen::Ref<const Eigen::MatrixXd>& grid,
                       const std::optional<Eigen::VectorXd>& bandwidth) {
  Eigen::Index m = samples.rows();
  int n = static_cast<int>(samples.cols());
  require(m >= 2, ErrorCode::invalid_config, "need at least 2 samples");
  require(grid.cols() == n, ErrorCode::dimension_mismatch, "grid dimension mismatch");

  Eigen::VectorXd h = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  require(h.size() == n && (h.array() > 0.0).all(), ErrorCode::degenerate_bandwidth,
          "bandwidth must be positive per axis");

  double norm = std::pow(2.0 * M_PI, -0.5 * n) / h.prod() / static_cast<double>(m);
  Eigen::VectorXd vals(grid.rows());
  // column-per-sample layout; one vectorized sweep per grid point
  Eigen::MatrixXd S = samples.transpose();
  Eigen::ArrayXd acc(m);
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    acc = ((S.row(0).transpose().array() - grid(g, 0)) / h(0)).square();
    for (int j = 1; j < n; ++j)
      acc += ((S.row(j).transpose().array() - grid(g, j)) / h(j)).square();
    vals(g) = norm * (-0.5 * acc).exp().sum();
  }

  DensityObservation obs;
  obs.points = grid;
  obs.values = vals;
  Eigen::VectorXd lo = grid.colwise().minCoeff().transpose();
  Eigen::VectorXd hi = grid.colwise().maxCoeff().transpose();
  for (int j = 0; j < n; ++j)
    if (hi(j) <= lo(j)) hi(j) = lo(j) + 1e-9;
  obs.domain = Box(lo, hi);
  obs.label = "kde";
  return obs;
}

void save_trajectory_csv(const Trajectory& t, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  os << "t";
  for (int j = 0; j < t.dim(); ++j) os << ",x" << (j + 1);
  os << "\n";
  char buf[64];
  for (long i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12g", t.times(i));
    os << buf;
    for (int j = 0; j < t.dim(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", t.states(i, j));
      os << buf;
    }
    os << "\n";
  }
  require(os.good(), ErrorCode::io_error, "write failed: " + path);
}

Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorCode::io_error, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line.substr(0, 1) == "t",
          ErrorCode::io_error, path + ": expected header t,x1,...");
  int ncol = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  require(ncol >= 2, ErrorCode::io_error, path + ": need at least t,x1");
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
        fail(ErrorCode::io_error, path + ": bad number at line " + std::to_string(lineno));
      }
      ++c;
    }
    require(c == ncol, ErrorCode::io_error,
            path + ": wrong column count at line " + std::to_string(lineno));
    ++rows;
  }
  require(rows >= 2, ErrorCode::io_error, path + ": need at least 2 rows");
  Trajectory t;
  t.times.resize(rows);
  t.states.resize(rows, ncol - 1);
  for (int i = 0; i < rows; ++i) {
    t.times(i) = data[i * ncol];
    for (int j = 1; j < ncol; ++j) t.states(i, j - 1) = data[i * ncol + j];
  }
  t.dt = rows >= 2 ? t.times(1) - t.times(0) : 0.0;
  return t;
}

}  // namespace sdelearn
