#include "sdelearn/experiments.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sdelearn/divergences.hpp"
#include "sdelearn/kde_sim.hpp"
#include "sdelearn/quadrature.hpp"

namespace sdelearn {

using nlohmann::json;

void ExperimentSpec::validate() const {
  require(!name.empty(), ErrorCode::invalid_config, "experiment.name is empty");
  require(dim >= 1, ErrorCode::invalid_config, "experiment.dim must be positive");
  require(noise_level >= 0.0, ErrorCode::invalid_config,
          "experiment.noise_level must be >= 0");
  if (scan_mode) return;
  train.validate(dim);
  bool has_drift = !drift_widths.empty() || potential_init.has_value();
  require(has_drift, ErrorCode::invalid_config,
          "experiment needs a neural or parametric drift");
  require(sigma_init.size() == dim, ErrorCode::invalid_config,
          "experiment.sigma_init must have dim entries");
  if (source == Source::boltzmann)
    require(truth_potential.has_value(), ErrorCode::invalid_config,
            "boltzmann observation needs truth_potential");
  if (source == Source::trajectory_kde)
    require(truth_drift.has_value(), ErrorCode::invalid_config,
            "trajectory observation needs truth_drift");
}

namespace {

ClosedFormDrift make_truth_drift(const std::string& name) {
  if (name == "double_well") return double_well_drift();
  if (name == "gene_regulation") return gene_drift();
  if (name == "cauchy_matching") return cauchy_matching_drift();
  if (name == "ou_half") return linear_drift_1d(0.5);
  fail(ErrorCode::invalid_config, "unknown truth drift: " + name);
}

std::vector<int> default_density_widths(int dim) { return {dim, 20, 20, 20, 20, 1}; }
std::vector<int> default_drift_widths(int dim) { return {dim, 20, 20, 20, 20, dim}; }

ExperimentSpec base_1d(const std::string& name, double lo, double hi) {
  ExperimentSpec s;
  s.name = name;
  s.dim = 1;
  s.train.domain = Box::interval(lo, hi);
  s.train.n_residual = 2000;
  s.train.iterations = 30000;
  s.train.learning_rate = 1e-3;
  s.train.seed = 7;
  s.train.log_every = 100;
  s.density_widths = default_density_widths(1);
  s.drift_widths = default_drift_widths(1);
  s.sigma_init = Eigen::VectorXd::Ones(1);
  s.obs_grid_n = 1001;
  s.score_region = Box::interval(-2.0, 2.0);
  return s;
}

PotentialSpec scaled_potential(const PotentialSpec& truth, double factor) {
  PotentialSpec init = truth;
  init.lambda0 *= factor;
  init.lambda1 *= factor;
  return init;
}

ExperimentSpec base_3d(const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  s.dim = 3;
  s.train.mode = TrainMode::parametric;
  s.train.domain = Box::cube(3, -4.0, 4.0);
  s.train.n_residual = 2000;
  s.train.iterations = 12000;
  s.train.learning_rate = 1e-3;
  s.train.lr_scale_parametric = 3.0;
  s.train.seed = 11;
  s.source = ExperimentSpec::Source::boltzmann;
  s.obs_random_count = 20000;
  s.density_widths = default_density_widths(3);
  s.truth_potential = PotentialSpec::paper_3d();
  s.potential_init = scaled_potential(*s.truth_potential, 1.25);
  s.sigma_init = Eigen::VectorXd::Ones(3);
  s.truth_sigma = Eigen::VectorXd::Ones(3);
  s.score_region = Box::cube(3, -2.0, 2.0);
  return s;
}

}  // namespace

std::vector<std::string> experiment_names() {
  return {"ex1_parametric_scan",
          "ex2_drift_only",
          "ex2_joint_anchor",
          "ex2_trajectory_kde",
          "ex3_cauchy_drift",
          "ex4_gene_drift_only",
          "ex4_gene_joint_anchor5",
          "ex5_all_params",
          "ex5_diffusion_only",
          "ex5_drift_given_diffusion",
          "ex5_drift_given_diffusion_noise5",
          "ex5_drift_given_diffusion_noise10",
          "ex5_drift_js",
          "ex5_drift_pinn",
          "ex6_5d_drift"};
}

ExperimentSpec experiment_registry(const std::string& name) {
  if (name == "ex1_parametric_scan") {
    ExperimentSpec s;
    s.name = name;
    s.description = "closed-form family b=-kx: Hellinger scan over k";
    s.dim = 1;
    s.scan_mode = true;
    s.train.domain = Box::interval(-6.0, 6.0);
    s.obs_grid_n = 1201;
    return s;
  }
  if (name == "ex2_drift_only") {
    auto s = base_1d(name, -5.0, 5.0);
    s.description = "double-well drift from its stationary density, sigma given";
    s.source = ExperimentSpec::Source::library;
    s.obs_name = "double_well";
    s.train.stop_below_total = 6e-4;
    s.truth_drift = "double_well";
    return s;
  }
  if (name == "ex2_joint_anchor") {
    auto s = base_1d(name, -5.0, 5.0);
    s.description = "double-well drift and constant sigma, one drift anchor at x=-2";
    s.source = ExperimentSpec::Source::library;
    s.obs_name = "double_well";
    s.train.mode = TrainMode::joint;
    s.train.iterations = 40000;
    s.train.stop_below_total = 4e-4;
    s.train_sigma = true;
    s.sigma_init = Eigen::VectorXd::Constant(1, 0.5);
    s.train.anchors = {{Eigen::VectorXd::Constant(1, -2.0),
                        Eigen::VectorXd::Constant(1, 6.0)}};
    s.truth_drift = "double_well";
    s.truth_sigma = Eigen::VectorXd::Ones(1);
    return s;
  }
  if (name == "ex2_trajectory_kde") {
    auto s = base_1d(name, -5.0, 5.0);
    s.description = "double-well drift from one long trajectory via KDE";
    s.source = ExperimentSpec::Source::trajectory_kde;
    s.truth_drift = "double_well";
    s.truth_sigma = Eigen::VectorXd::Ones(1);
    s.train.stop_below_total = 0.0;
    s.train.iterations = 20000;
    return s;
  }
  if (name == "ex3_cauchy_drift") {
    auto s = base_1d(name, -15.0, 15.0);
    s.description = "drift matching a Cauchy stationary density, sigma given";
    s.source = ExperimentSpec::Source::library;
    s.obs_name = "cauchy";
    s.train.iterations = 20000;
    s.truth_drift = "cauchy_matching";
    s.score_region = Box::interval(-3.0, 3.0);
    return s;
  }
  if (name == "ex4_gene_drift_only") {
    auto s = base_1d(name, 0.0, 15.0);
    s.description = "gene regulation drift, sigma given";
    s.source = ExperimentSpec::Source::library;
    s.obs_name = "gene_regulation";
    s.train.stop_below_total = 6e-4;
    s.truth_drift = "gene_regulation";
    s.score_region_from_q = true;
    return s;
  }
  if (name == "ex4_gene_joint_anchor5") {
    auto s = base_1d(name, 0.0, 15.0);
    s.description = "gene regulation drift and sigma, one drift anchor at x=5";
    s.source = ExperimentSpec::Source::library;
    s.obs_name = "gene_regulation";
    s.train.mode = TrainMode::joint;
    s.train.iterations = 40000;
    s.train.stop_below_total = 4e-4;
    s.train_sigma = true;
    s.sigma_init = Eigen::VectorXd::Constant(1, 0.5);
    Eigen::VectorXd ax = Eigen::VectorXd::Constant(1, 5.0);
    Eigen::VectorXd ab = Eigen::VectorXd::Constant(1, gene_regulation_drift(5.0));
    s.train.anchors = {{ax, ab}};
    s.truth_drift = "gene_regulation";
    s.truth_sigma = Eigen::VectorXd::Ones(1);
    s.score_region_from_q = true;
    return s;
  }
  if (name == "ex5_drift_given_diffusion") {
    auto s = base_3d(name);
    s.description = "3-D two-well potential parameters, diffusion given, clean data";
    return s;
  }
  if (name == "ex5_drift_given_diffusion_noise5") {
    auto s = base_3d(name);
    s.description = "3-D potential parameters with 5% multiplicative noise";
    s.noise_level = 0.05;
    return s;
  }
  if (name == "ex5_drift_given_diffusion_noise10") {
    auto s = base_3d(name);
    s.description = "3-D potential parameters with 10% multiplicative noise";
    s.noise_level = 0.10;
    return s;
  }
  if (name == "ex5_drift_js") {
    auto s = base_3d(name);
    s.description = "3-D potential parameters with the Jensen-Shannon loss";
    s.train.obs_loss = ObsLoss::js;
    return s;
  }
  if (name == "ex5_drift_pinn") {
    auto s = base_3d(name);
    s.description = "3-D potential parameters with the PINN mean-square loss";
    s.train.mode = TrainMode::pinn_baseline;
    s.train.obs_loss = ObsLoss::mse;
    return s;
  }
  if (name == "ex5_all_params") {
    auto s = base_3d(name);
    s.description = "3-D potential: drift and diffusion learned jointly (known "
                    "to be only partly identifiable)";
    s.train_sigma = true;
    s.sigma_init = Eigen::VectorXd::Constant(3, 1.3);
    return s;
  }
  if (name == "ex5_diffusion_only") {
    auto s = base_3d(name);
    s.description = "3-D potential: diffusion learned, drift given";
    s.train_drift = false;
    s.potential_init = s.truth_potential;  // drift fixed at truth
    s.train_sigma = true;
    s.train.iterations = 8000;
    s.sigma_init = Eigen::VectorXd::Constant(3, 0.5);
    return s;
  }
  if (name == "ex6_5d_drift") {
    ExperimentSpec s;
    s.name = name;
    s.description = "5-D two-well (linear exponent) potential parameters";
    s.dim = 5;
    s.train.mode = TrainMode::parametric;
    s.train.domain = Box::cube(5, -4.0, 4.0);
    s.train.n_residual = 2000;
    s.train.iterations = 6000;
    s.train.learning_rate = 1e-3;
    s.train.lr_scale_parametric = 3.0;
    s.train.seed = 13;
    s.source = ExperimentSpec::Source::boltzmann;
    s.obs_random_count = 20000;
    s.density_widths = default_density_widths(5);
    s.truth_potential = PotentialSpec::paper_5d();
    s.potential_init = scaled_potential(*s.truth_potential, 1.25);
    s.sigma_init = Eigen::VectorXd::Ones(5);
    s.truth_sigma = Eigen::VectorXd::Ones(5);
    s.score_region = Box::cube(5, -2.0, 2.0);
    return s;
  }
  fail(ErrorCode::invalid_config, "unknown experiment: " + name);
}

DensityObservation build_observation(const ExperimentSpec& spec) {
  DensityObservation obs;
  switch (spec.source) {
    case ExperimentSpec::Source::library: {
      auto params = spec.obs_params;
      params.emplace("grid_n", spec.obs_grid_n);
      params.emplace("lo", spec.train.domain.lower(0));
      params.emplace("hi", spec.train.domain.upper(0));
      obs = observation_library(spec.obs_name, params);
      break;
    }
    case ExperimentSpec::Source::boltzmann: {
      const auto& truth = *spec.truth_potential;
      if (spec.obs_random_count > 0) {
        Rng rng(split_seed(spec.train.seed, streams::observation_points));
        Eigen::MatrixXd pts =
            sample_collocation(spec.train.domain, spec.obs_random_count, rng);
        obs = boltzmann_density_at(truth, pts, spec.train.domain, spec.truth_sigma);
      } else {
        std::vector<int> res(spec.dim, spec.obs_grid_n);
        obs = boltzmann_density(truth, spec.train.domain, res, spec.truth_sigma);
      }
      break;
    }
    case ExperimentSpec::Source::trajectory_kde: {
      SdeModel truth;
      truth.dim = spec.dim;
      truth.drift = make_truth_drift(*spec.truth_drift);
      truth.diffusion = ConstantDiagonalNoise{spec.truth_sigma};
      Eigen::VectorXd x0 = spec.train.domain.center();
      Trajectory traj = euler_maruyama(truth, x0, spec.traj_dt, spec.traj_steps,
                                       spec.train.seed, spec.traj_burn_in);
      Eigen::MatrixXd samples = thin_samples(traj.states, spec.traj_thin);
      Eigen::MatrixXd grid = uniform_grid(spec.train.domain.lower(0),
                                          spec.train.domain.upper(0), spec.obs_grid_n);
      obs = kde(samples, grid);
      obs.domain = spec.train.domain;
      break;
    }
    case ExperimentSpec::Source::file:
      obs = load_observation_csv(spec.obs_name);
      break;
  }
  if (spec.noise_level > 0.0)
    obs = perturb_observation(obs, spec.noise_level, spec.train.seed);
  return obs;
}

TrainProblem build_problem(const ExperimentSpec& spec, const DensityObservation& obs) {
  TrainProblem prob;
  prob.obs = obs;
  prob.model.dim = spec.dim;
  if (spec.potential_init) {
    prob.model.drift = PotentialDrift{*spec.potential_init};
  } else {
    prob.model.drift =
        NeuralField::random_init(spec.drift_widths, split_seed(spec.train.seed,
                                                               streams::drift_init),
                                 OutputTransform::identity);
  }
  prob.model.diffusion = ConstantDiagonalNoise{spec.sigma_init};
  prob.model.trainable.drift = spec.train_drift;
  prob.model.trainable.diffusion = spec.train_sigma;
  auto widths = spec.density_widths.empty() || spec.density_widths[0] == 0
                    ? default_density_widths(spec.dim)
                    : spec.density_widths;
  prob.density = NeuralField::random_init(
      widths, split_seed(spec.train.seed, streams::density_init),
      OutputTransform::squared);
  return prob;
}

double drift_relative_l2(const SdeModel& learned, const SdeModel& truth,
                         const Box& region, int points_per_axis) {
  int n = region.dim();
  int per_axis = n == 1 ? points_per_axis : (n == 3 ? 33 : 9);
  std::vector<int> res(n, per_axis);
  Eigen::MatrixXd pts = tensor_midpoint_grid(region, res);
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    Eigen::VectorXd x = pts.row(i).transpose();
    Eigen::VectorXd bl = learned.drift_value(x);
    Eigen::VectorXd bt = truth.drift_value(x);
    num += (bl - bt).squaredNorm();
    den += bt.squaredNorm();
  }
  require(den > 0.0, ErrorCode::invalid_config,
          "reference drift vanishes on the scoring region");
  return std::sqrt(num / den);
}

namespace {

Box region_where_q_matters(const DensityObservation& obs, double frac = 0.01) {
  double cut = frac * obs.values.maxCoeff();
  Eigen::VectorXd lo = obs.domain.upper, hi = obs.domain.lower;
  bool any = false;
  for (int i = 0; i < obs.size(); ++i) {
    if (obs.values(i) <= cut) continue;
    any = true;
    for (int j = 0; j < obs.dim(); ++j) {
      lo(j) = std::min(lo(j), obs.points(i, j));
      hi(j) = std::max(hi(j), obs.points(i, j));
    }
  }
  require(any, ErrorCode::invalid_density, "observation is identically ~0");
  for (int j = 0; j < obs.dim(); ++j)
    if (hi(j) <= lo(j)) hi(j) = lo(j) + 1e-6;
  return Box(lo, hi);
}

Eigen::VectorXd quadrature_weights_for(const DensityObservation& obs) {
  if (obs.dim() == 1 && obs.size() >= 3) {
    double h = obs.points(1, 0) - obs.points(0, 0);
    bool uniform = true;
    for (int i = 1; i + 1 < obs.size() && uniform; ++i)
      uniform = std::abs(obs.points(i + 1, 0) - obs.points(i, 0) - h) < 1e-9 * h;
    if (uniform) return simpson_weights(obs.size(), h);
  }
  // Monte Carlo / scattered points: equal volume shares.
  return Eigen::VectorXd::Constant(obs.size(),
                                   obs.domain.volume() / obs.size());
}

}  // namespace

MetricsReport score_against_truth(const SdeModel& model, const NeuralField& density,
                                  const ExperimentSpec& spec,
                                  const DensityObservation& obs) {
  MetricsReport rep;

  // density distances against the observation, quadrature mode
  {
    BatchJet jet = density.forward(obs.points.transpose(), 0);
    Eigen::VectorXd p = jet.value.row(0).transpose();
    GridPair pair = make_grid_pair(obs.points, p, obs.values,
                                   quadrature_weights_for(obs));
    rep.hellinger_q = hellinger(pair, HellingerMode::quadrature);
    rep.mse_q = mse(pair);
    // JS needs floored support; guard against exact zeros on wide grids
    Eigen::VectorXd pf = p.array().max(kDensityFloor).matrix();
    Eigen::VectorXd qf = obs.values.array().max(kDensityFloor).matrix();
    GridPair pair2 = make_grid_pair(obs.points, pf, qf, pair.weights);
    rep.js_q = js(pair2, JsForm::verbatim);
  }

  // reference truth pieces
  SdeModel truth;
  truth.dim = spec.dim;
  bool have_truth_drift = false;
  if (spec.truth_potential) {
    truth.drift = PotentialDrift{*spec.truth_potential};
    have_truth_drift = true;
  } else if (spec.truth_drift) {
    truth.drift = make_truth_drift(*spec.truth_drift);
    have_truth_drift = true;
  }
  truth.diffusion = ConstantDiagonalNoise{
      spec.truth_sigma.size() ? spec.truth_sigma : Eigen::VectorXd::Ones(spec.dim)};

  if (have_truth_drift) {
    Box region = spec.score_region_from_q ? region_where_q_matters(obs)
                                          : spec.score_region;
    if (region.dim() == spec.dim) {
      rep.drift_rel_l2 = drift_relative_l2(model, truth, region);
      rep.drift_region = region;
    }
  }

  if (spec.truth_potential) {
    if (auto* pd = std::get_if<PotentialDrift>(&model.drift)) {
      Eigen::VectorXd t = spec.truth_potential->parameters();
      Eigen::VectorXd l = pd->spec.parameters();
      Eigen::VectorXd err(t.size());
      for (Eigen::Index i = 0; i < t.size(); ++i)
        err(i) = std::abs(l(i) - t(i)) / std::max(std::abs(t(i)), 1e-12);
      rep.lambda_rel_error = err;
    }
  }
  if (spec.train_sigma && spec.truth_sigma.size() == spec.dim) {
    if (auto* cd = std::get_if<ConstantDiagonalNoise>(&model.diffusion))
      rep.sigma_abs_error =
          (cd->sigma.array().abs() - spec.truth_sigma.array().abs()).abs().matrix();
  }
  return rep;
}

namespace {

std::string iso_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json spec_to_json(const ExperimentSpec& s) {
  json j;
  j["name"] = s.name;
  j["description"] = s.description;
  j["dim"] = s.dim;
  j["scan_mode"] = s.scan_mode;
  if (s.scan_mode) {
    j["scan"] = {{"lo", s.scan_lo}, {"hi", s.scan_hi}, {"step", s.scan_step}};
    j["obs_grid_n"] = s.obs_grid_n;
    return j;
  }
  j["train"] = {
      {"mode", static_cast<int>(s.train.mode)},
      {"obs_loss", static_cast<int>(s.train.obs_loss)},
      {"n_residual", s.train.n_residual},
      {"learning_rate", s.train.learning_rate},
      {"lr_scale_parametric", s.train.lr_scale_parametric},
      {"iterations", s.train.iterations},
      {"seed", s.train.seed},
      {"weights",
       {s.train.weight_obs, s.train.weight_residual, s.train.weight_anchor}},
      {"domain_lower", vec_to_json(s.train.domain.lower)},
      {"domain_upper", vec_to_json(s.train.domain.upper)},
      {"log_every", s.train.log_every},
      {"stop_below_total", s.train.stop_below_total},
  };
  json anchors = json::array();
  for (auto& [x, b] : s.train.anchors)
    anchors.push_back({{"x", vec_to_json(x)}, {"b", vec_to_json(b)}});
  j["train"]["anchors"] = anchors;
  j["source"] = static_cast<int>(s.source);
  j["obs_name"] = s.obs_name;
  j["obs_grid_n"] = s.obs_grid_n;
  j["obs_random_count"] = s.obs_random_count;
  j["noise_level"] = s.noise_level;
  j["drift_widths"] = s.drift_widths;
  j["density_widths"] = s.density_widths;
  j["sigma_init"] = vec_to_json(s.sigma_init);
  j["train_drift"] = s.train_drift;
  j["train_sigma"] = s.train_sigma;
  if (s.potential_init) {
    j["potential_init"] = {
        {"family",
         s.potential_init->family == PotentialFamily::three_dim ? "3d" : "5d"},
        {"lambda0", vec_to_json(s.potential_init->lambda0)},
        {"lambda1", vec_to_json(s.potential_init->lambda1)}};
  }
  if (s.truth_potential) {
    j["truth_potential"] = {
        {"family",
         s.truth_potential->family == PotentialFamily::three_dim ? "3d" : "5d"},
        {"lambda0", vec_to_json(s.truth_potential->lambda0)},
        {"lambda1", vec_to_json(s.truth_potential->lambda1)}};
  }
  if (s.truth_drift) j["truth_drift"] = *s.truth_drift;
  j["truth_sigma"] = vec_to_json(s.truth_sigma);
  if (s.source == ExperimentSpec::Source::trajectory_kde)
    j["trajectory"] = {{"dt", s.traj_dt},
                       {"steps", s.traj_steps},
                       {"burn_in", s.traj_burn_in},
                       {"thin", s.traj_thin}};
  return j;
}

json metrics_to_json(const MetricsReport& m) {
  json j;
  if (m.drift_rel_l2) j["drift_rel_l2"] = *m.drift_rel_l2;
  if (m.drift_region)
    j["drift_region"] = {{"lower", vec_to_json(m.drift_region->lower)},
                         {"upper", vec_to_json(m.drift_region->upper)}};
  if (m.sigma_abs_error) j["sigma_abs_error"] = vec_to_json(*m.sigma_abs_error);
  if (m.lambda_rel_error) j["lambda_rel_error"] = vec_to_json(*m.lambda_rel_error);
  if (m.hellinger_q) j["hellinger_quadrature"] = *m.hellinger_q;
  if (m.js_q) j["js_quadrature"] = *m.js_q;
  if (m.mse_q) j["mse"] = *m.mse_q;
  j["final_loss"] = {{"iteration", m.final_loss.iteration},
                     {"loss_H", m.final_loss.loss_obs},
                     {"loss_f", m.final_loss.loss_residual},
                     {"total", m.final_loss.total}};
  if (m.final_loss.loss_anchor) j["final_loss"]["loss_b"] = *m.final_loss.loss_anchor;
  for (auto& [k, v] : m.extra) j[k] = v;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  require(os.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  os << text;
  require(os.good(), ErrorCode::io_error, "write failed: " + path);
}

void write_history_csv(const std::string& path,
                       const std::vector<LossBreakdown>& history) {
  std::string out = "iter,loss_H,loss_f,loss_b,total,seconds\n";
  char buf[200];
  for (const auto& h : history) {
    if (h.loss_anchor)
      std::snprintf(buf, sizeof buf, "%ld,%.12g,%.12g,%.12g,%.12g,%.3f\n",
                    h.iteration, h.loss_obs, h.loss_residual, *h.loss_anchor, h.total,
                    h.seconds);
    else
      std::snprintf(buf, sizeof buf, "%ld,%.12g,%.12g,,%.12g,%.3f\n", h.iteration,
                    h.loss_obs, h.loss_residual, h.total, h.seconds);
    out += buf;
  }
  write_text(path, out);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void write_plotdata(const ExperimentSpec& spec, const TrainedModel& trained,
                    const DensityObservation& obs, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  char buf[256];

  if (spec.dim == 1) {
    // density along the grid
    {
      BatchJet jet = trained.best_density.forward(obs.points.transpose(), 0);
      std::string out = "x,q_obs,p_learned\n";
      for (int i = 0; i < obs.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g,%.12g,%.12g\n", obs.points(i, 0),
                      obs.values(i), jet.value(0, i));
        out += buf;
      }
      write_text(dir + "/density_vs_x.csv", out);
    }
    // drift along the domain
    {
      Eigen::VectorXd xs = uniform_grid(spec.train.domain.lower(0),
                                        spec.train.domain.upper(0), 401);
      std::optional<ClosedFormDrift> truth;
      if (spec.truth_drift) truth = make_truth_drift(*spec.truth_drift);
      std::string out = truth ? "x,b_learned,b_true\n" : "x,b_learned\n";
      for (int i = 0; i < xs.size(); ++i) {
        Eigen::VectorXd x = xs.segment(i, 1);
        double bl = trained.best_model.drift_value(x)(0);
        if (truth)
          std::snprintf(buf, sizeof buf, "%.10g,%.12g,%.12g\n", xs(i), bl,
                        truth->value(x)(0));
        else
          std::snprintf(buf, sizeof buf, "%.10g,%.12g\n", xs(i), bl);
        out += buf;
      }
      write_text(dir + "/drift_vs_x.csv", out);
    }
  }

  if (!trained.parametric_trace.empty()) {
    std::string out = "iter";
    int nv = static_cast<int>(trained.parametric_trace.front().second.size());
    for (int j = 0; j < nv; ++j) out += ",p" + std::to_string(j);
    out += "\n";
    for (auto& [it, vals] : trained.parametric_trace) {
      out += std::to_string(it);
      for (int j = 0; j < nv; ++j) {
        std::snprintf(buf, sizeof buf, ",%.12g", vals(j));
        out += buf;
      }
      out += "\n";
    }
    write_text(dir + "/lambda_vs_iteration.csv", out);
  }

  if (spec.dim == 3 && spec.truth_potential) {
    // learned vs true density on z-slices, and the min-z potential projection
    double s = spec.truth_sigma.size() ? spec.truth_sigma(0) : 1.0;
    auto q_true = boltzmann_closed_form(*spec.truth_potential, s, spec.train.domain);
    const auto* learned_pot = std::get_if<PotentialDrift>(&trained.best_model.drift);
    Eigen::VectorXd xs = uniform_grid(-4.0, 4.0, 41);
    for (double z : {-1.0, 0.5, 1.0}) {
      std::string out = "x,y,q_true,p_learned\n";
      Eigen::MatrixXd pts(41 * 41, 3);
      int r = 0;
      for (int i = 0; i < 41; ++i)
        for (int j = 0; j < 41; ++j, ++r) pts.row(r) << xs(i), xs(j), z;
      BatchJet jet = trained.best_density.forward(pts.transpose(), 0);
      r = 0;
      for (int i = 0; i < 41; ++i)
        for (int j = 0; j < 41; ++j, ++r) {
          std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.12g,%.12g\n", xs(i), xs(j),
                        q_true.value(pts.row(r).transpose()), jet.value(0, r));
          out += buf;
        }
      std::snprintf(buf, sizeof buf, "%+.1f", z);
      write_text(dir + "/pdf_slice_z" + std::string(buf) + ".csv", out);
    }
    if (learned_pot) {
      std::string out = "x,y,phi_true_minz,phi_learned_minz\n";
      for (int i = 0; i < 41; ++i)
        for (int j = 0; j < 41; ++j) {
          double best_t = std::numeric_limits<double>::infinity();
          double best_l = best_t;
          for (int k = 0; k < 41; ++k) {
            Eigen::Vector3d x(xs(i), xs(j), xs(k));
            best_t = std::min(best_t, potential_value(*spec.truth_potential, x));
            best_l = std::min(best_l, potential_value(learned_pot->spec, x));
          }
          std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.12g,%.12g\n", xs(i), xs(j),
                        best_t, best_l);
          out += buf;
        }
      write_text(dir + "/potential_proj_xy.csv", out);
    }
  }
}

RunResult run_scan(const ExperimentSpec& spec, const std::string& out_dir) {
  // Example-1 style functional scan: for each k, the stationary density of
  // b = -k x against the standard normal observation, quadrature Hellinger.
  int n = spec.obs_grid_n;
  double lo = spec.train.domain.lower(0), hi = spec.train.domain.upper(0);
  Eigen::VectorXd xs = uniform_grid(lo, hi, n);
  Eigen::VectorXd w = simpson_weights(n, xs(1) - xs(0));
  Eigen::VectorXd q(n);
  for (int i = 0; i < n; ++i)
    q(i) = std::exp(-0.5 * xs(i) * xs(i)) / std::sqrt(2.0 * M_PI);

  int steps = static_cast<int>(std::lround((spec.scan_hi - spec.scan_lo) / spec.scan_step));
  double best_k = 0.0, best_h = std::numeric_limits<double>::infinity();
  double h_at_half = -1.0;
  std::string csv = "k,hellinger\n";
  char buf[64];
  for (int i = 0; i <= steps; ++i) {
    double k = spec.scan_lo + i * spec.scan_step;
    auto pk = stationary_density_1d([k](double x) { return -k * x; },
                                    [](double) { return 1.0; }, lo, hi, n);
    GridPair pair = make_grid_pair(pk.points, pk.values, q, w);
    double H = hellinger(pair, HellingerMode::quadrature);
    if (H < best_h) {
      best_h = H;
      best_k = k;
    }
    if (std::abs(k - 0.5) < 1e-12) h_at_half = H;
    std::snprintf(buf, sizeof buf, "%.4f,%.12g\n", k, H);
    csv += buf;
  }

  RunResult res;
  res.metrics.extra["argmin_k"] = best_k;
  res.metrics.extra["hellinger_at_argmin"] = best_h;
  res.metrics.extra["hellinger_at_half"] = h_at_half;
  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir + "/plotdata");
    write_text(out_dir + "/plotdata/hellinger_vs_k.csv", csv);
    write_text(out_dir + "/metrics.json", metrics_to_json(res.metrics).dump(2) + "\n");
    json manifest = {{"tool_version", kVersion},
                     {"experiment", spec.name},
                     {"config_hash", config_hash(spec)},
                     {"started", iso_now()},
                     {"finished", iso_now()},
                     {"config", spec_to_json(spec)}};
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  }
  return res;
}

}  // namespace

std::string config_hash(const ExperimentSpec& spec) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(spec_to_json(spec).dump())));
  return buf;
}

RunResult run_experiment(const ExperimentSpec& spec, const std::string& out_dir) {
  spec.validate();
  std::string started = iso_now();
  if (spec.scan_mode) return run_scan(spec, out_dir);

  DensityObservation obs = build_observation(spec);
  TrainProblem problem = build_problem(spec, obs);
  RunResult res;
  res.trained = train(problem, spec.train);
  res.metrics = score_against_truth(res.trained.best_model, res.trained.best_density,
                                    spec, obs);
  if (!res.trained.history.empty()) res.metrics.final_loss = res.trained.history.back();
  res.metrics.extra["best_total"] = res.trained.best_total;
  res.metrics.extra["best_iteration"] = static_cast<double>(res.trained.best_iteration);

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_history_csv(out_dir + "/history.csv", res.trained.history);
    write_text(out_dir + "/metrics.json", metrics_to_json(res.metrics).dump(2) + "\n");
    res.trained.best_density.save(out_dir + "/model.bin");
    json learned;
    if (auto* nf = std::get_if<NeuralField>(&res.trained.best_model.drift)) {
      nf->save(out_dir + "/model_drift.bin");
      learned["drift"] = "model_drift.bin";
    } else if (auto* pd = std::get_if<PotentialDrift>(&res.trained.best_model.drift)) {
      learned["lambda0"] = vec_to_json(pd->spec.lambda0);
      learned["lambda1"] = vec_to_json(pd->spec.lambda1);
      learned["family"] =
          pd->spec.family == PotentialFamily::three_dim ? "3d" : "5d";
    }
    if (auto* cd =
            std::get_if<ConstantDiagonalNoise>(&res.trained.best_model.diffusion))
      learned["sigma"] = vec_to_json(cd->sigma);
    json manifest = {{"tool_version", kVersion},
                     {"experiment", spec.name},
                     {"config_hash", config_hash(spec)},
                     {"seed", spec.train.seed},
                     {"started", started},
                     {"finished", iso_now()},
                     {"diverged", res.trained.diverged},
                     {"learned", learned},
                     {"config", spec_to_json(spec)}};
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    write_plotdata(spec, res.trained, obs, out_dir + "/plotdata");
  }
  if (res.trained.diverged)
    fail(ErrorCode::diverged_loss,
         spec.name + " diverged: " + res.trained.divergence_note +
             " (partial artifacts written)");
  return res;
}

}  // namespace sdelearn
