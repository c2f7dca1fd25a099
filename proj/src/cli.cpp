#include "sdelearn/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sdelearn/divergences.hpp"
#include "sdelearn/experiments.hpp"
#include "sdelearn/kde_sim.hpp"
#include "sdelearn/quadrature.hpp"

namespace sdelearn {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string resolve_out(const std::string& out) {
  const char* root = std::getenv("SDELEARN_OUT_ROOT");
  if (root && *root && !out.empty() && out.front() != '/')
    return std::string(root) + "/" + out;
  return out;
}

json load_json(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorCode::io_error, "cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    fail(ErrorCode::invalid_config, path + ": " + e.what());
  }
  return j;
}

Eigen::VectorXd json_vec(const json& a, const std::string& where) {
  require(a.is_array() && !a.empty(), ErrorCode::invalid_config,
          where + " must be a non-empty array");
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
  return v;
}

void apply_overrides(ExperimentSpec& spec, const json& ov, const std::string& where) {
  for (auto it = ov.begin(); it != ov.end(); ++it) {
    const std::string& k = it.key();
    if (k == "iterations")
      spec.train.iterations = it->get<long>();
    else if (k == "seed")
      spec.train.seed = it->get<std::uint64_t>();
    else if (k == "N_f")
      spec.train.n_residual = it->get<int>();
    else if (k == "N_H") {
      if (spec.obs_random_count > 0)
        spec.obs_random_count = it->get<int>();
      else
        spec.obs_grid_n = it->get<int>();
    } else if (k == "learning_rate")
      spec.train.learning_rate = it->get<double>();
    else if (k == "lr_scale_parametric")
      spec.train.lr_scale_parametric = it->get<double>();
    else if (k == "noise_level")
      spec.noise_level = it->get<double>();
    else if (k == "stop_below_total")
      spec.train.stop_below_total = it->get<double>();
    else if (k == "log_every")
      spec.train.log_every = it->get<int>();
    else
      fail(ErrorCode::invalid_config, where + "." + k + ": unknown override");
  }
}

struct RunItem {
  ExperimentSpec spec;
};

int cmd_run(const std::vector<std::string>& names, const std::string& config_path,
            const std::string& out_dir, long seed_override, int jobs) {
  std::vector<RunItem> items;
  if (!config_path.empty()) {
    json cfg = load_json(config_path);
    require(cfg.contains("experiments") && cfg["experiments"].is_array(),
            ErrorCode::invalid_config, "config.experiments must be an array");
    int i = 0;
    for (const auto& e : cfg["experiments"]) {
      std::string where = "experiments[" + std::to_string(i++) + "]";
      require(e.contains("name"), ErrorCode::invalid_config, where + ".name missing");
      ExperimentSpec spec = experiment_registry(e["name"].get<std::string>());
      if (e.contains("overrides"))
        apply_overrides(spec, e["overrides"], where + ".overrides");
      items.push_back({std::move(spec)});
    }
  }
  for (const auto& n : names) items.push_back({experiment_registry(n)});
  require(!items.empty(), ErrorCode::invalid_config,
          "nothing to run: pass experiment names or --config");
  for (auto& item : items) {
    if (seed_override >= 0)
      item.spec.train.seed = static_cast<std::uint64_t>(seed_override);
    item.spec.validate();
  }

  std::string root = resolve_out(out_dir);
  fs::create_directories(root);
  std::string started = [] {
    char buf[32];
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return std::string(buf);
  }();

  auto run_one = [&](const RunItem& item) {
    run_experiment(item.spec, root + "/" + item.spec.name);
    return item.spec.name;
  };

  std::vector<std::string> done;
  if (jobs <= 1 || items.size() == 1) {
    for (auto& item : items) {
      done.push_back(run_one(item));
      std::cout << "finished " << done.back() << "\n";
    }
  } else {
    std::vector<std::future<std::string>> futs;
    for (auto& item : items)
      futs.push_back(std::async(std::launch::async, run_one, std::cref(item)));
    for (auto& f : futs) {
      done.push_back(f.get());
      std::cout << "finished " << done.back() << "\n";
    }
  }

  json names_json = json::array();
  std::string hashes;
  for (auto& item : items) {
    names_json.push_back(item.spec.name);
    hashes += config_hash(item.spec);
  }
  char buf2[32];
  auto t2 = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::strftime(buf2, sizeof buf2, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t2));
  json manifest = {{"tool_version", kVersion},
                   {"config_hash", hashes},
                   {"seed", seed_override},
                   {"started", started},
                   {"finished", buf2},
                   {"experiments", names_json},
                   {"output_root", root}};
  std::ofstream os(root + "/run_manifest.json");
  os << manifest.dump(2) << "\n";
  return 0;
}

SdeModel model_from_spec_json(const json& j, const std::string& where) {
  SdeModel model;
  require(j.contains("dim"), ErrorCode::invalid_config, where + ".dim missing");
  model.dim = j["dim"].get<int>();
  require(j.contains("drift") && j["drift"].contains("kind"),
          ErrorCode::invalid_config, where + ".drift.kind missing");
  std::string kind = j["drift"]["kind"].get<std::string>();
  if (kind == "double_well")
    model.drift = double_well_drift();
  else if (kind == "linear")
    model.drift = linear_drift_1d(j["drift"].value("k", 1.0));
  else if (kind == "gene_regulation")
    model.drift = gene_drift(j["drift"].value("K_d", 10.0), j["drift"].value("k_d", 1.0),
                             j["drift"].value("k_f", 6.0), j["drift"].value("R_bas", 0.4));
  else if (kind == "cauchy_matching")
    model.drift = cauchy_matching_drift();
  else if (kind == "potential") {
    PotentialSpec spec;
    spec.family = model.dim == 3 ? PotentialFamily::three_dim : PotentialFamily::five_dim;
    spec.lambda0 = json_vec(j["drift"]["lambda0"], where + ".drift.lambda0");
    spec.lambda1 = json_vec(j["drift"]["lambda1"], where + ".drift.lambda1");
    spec.validate();
    model.drift = PotentialDrift{spec};
  } else
    fail(ErrorCode::invalid_config, where + ".drift.kind: unknown kind " + kind);
  require(j.contains("sigma"), ErrorCode::invalid_config, where + ".sigma missing");
  model.diffusion = ConstantDiagonalNoise{json_vec(j["sigma"], where + ".sigma")};
  model.validate();
  return model;
}

int cmd_simulate(const std::string& model_path, double dt, long steps,
                 std::uint64_t seed, long burn_in, const std::string& out_path) {
  json j = load_json(model_path);
  SdeModel model = model_from_spec_json(j, "model");
  Eigen::VectorXd x0 = j.contains("x0") ? json_vec(j["x0"], "model.x0")
                                        : Eigen::VectorXd::Zero(model.dim);
  Trajectory traj = euler_maruyama(model, x0, dt, steps, seed, burn_in);
  save_trajectory_csv(traj, resolve_out(out_path));
  Eigen::VectorXd mean = traj.states.colwise().mean();
  std::cout << "rows " << traj.size() << "\n";
  for (int jx = 0; jx < traj.dim(); ++jx) {
    double var = (traj.states.col(jx).array() - mean(jx)).square().sum() /
                 std::max<long>(1, traj.size() - 1);
    std::cout << "axis " << (jx + 1) << ": mean " << mean(jx) << " var " << var
              << "\n";
  }
  return 0;
}

int cmd_kde(const std::string& traj_path, const std::string& grid_spec,
            const std::string& bandwidth, int thin, const std::string& out_path) {
  Trajectory traj = load_trajectory_csv(traj_path);
  require(traj.size() >= 2, ErrorCode::invalid_config,
          "trajectory has too few rows for a density estimate");
  double lo, hi;
  int n;
  if (std::sscanf(grid_spec.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || n < 3 ||
      hi <= lo)
    fail(ErrorCode::invalid_config, "--grid must be lo:hi:n");
  require(traj.dim() == 1, ErrorCode::invalid_config,
          "kde command supports 1-D trajectories; use the library for n-D");
  Eigen::MatrixXd samples = thin_samples(traj.states, std::max(1, thin));
  std::optional<Eigen::VectorXd> h;
  if (bandwidth != "auto") {
    double hv = std::atof(bandwidth.c_str());
    require(hv > 0.0, ErrorCode::invalid_config, "--bandwidth must be auto or > 0");
    h = Eigen::VectorXd::Constant(1, hv);
  }
  DensityObservation obs = kde(samples, uniform_grid(lo, hi, n), h);
  save_observation_csv(obs, resolve_out(out_path));
  std::cout << "integral " << obs.integral_1d() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& model_dir, const std::string& reference,
                 std::vector<double> region, const std::string& out_path) {
  json manifest = load_json(model_dir + "/manifest.json");
  ExperimentSpec spec = experiment_registry(
      manifest.contains("experiment") ? manifest["experiment"].get<std::string>()
                                      : reference);
  if (!reference.empty()) spec = experiment_registry(reference);

  NeuralField density = NeuralField::load(model_dir + "/model.bin");
  SdeModel model;
  model.dim = spec.dim;
  const json& learned = manifest.at("learned");
  if (fs::exists(model_dir + "/model_drift.bin")) {
    model.drift = NeuralField::load(model_dir + "/model_drift.bin");
  } else if (learned.contains("lambda0")) {
    PotentialSpec pot;
    pot.family = learned["family"] == "3d" ? PotentialFamily::three_dim
                                           : PotentialFamily::five_dim;
    pot.lambda0 = json_vec(learned["lambda0"], "learned.lambda0");
    pot.lambda1 = json_vec(learned["lambda1"], "learned.lambda1");
    model.drift = PotentialDrift{pot};
  } else
    fail(ErrorCode::invalid_config, model_dir + ": no drift in saved model");
  model.diffusion = ConstantDiagonalNoise{
      learned.contains("sigma") ? json_vec(learned["sigma"], "learned.sigma")
                                : Eigen::VectorXd::Ones(spec.dim)};
  model.trainable.diffusion = spec.train_sigma;
  model.validate();
  require(density.input_dim() == spec.dim, ErrorCode::dimension_mismatch,
          "model dimension does not match the reference");

  if (!region.empty()) {
    require(static_cast<int>(region.size()) == 2 * spec.dim,
            ErrorCode::invalid_config, "--region needs 2*dim numbers (lo... hi...)");
    Eigen::VectorXd lo(spec.dim), hi(spec.dim);
    for (int j = 0; j < spec.dim; ++j) {
      lo(j) = region[j];
      hi(j) = region[spec.dim + j];
    }
    Box r(lo, hi);
    for (int j = 0; j < spec.dim; ++j)
      if (r.lower(j) < spec.train.domain.lower(j) ||
          r.upper(j) > spec.train.domain.upper(j)) {
        std::cerr << "warning: scoring region extends beyond the training box\n";
        break;
      }
    spec.score_region = r;
    spec.score_region_from_q = false;
  }

  DensityObservation obs = build_observation(spec);
  MetricsReport rep = score_against_truth(model, density, spec, obs);
  json out;
  if (rep.drift_rel_l2) out["drift_rel_l2"] = *rep.drift_rel_l2;
  if (rep.lambda_rel_error) {
    json a = json::array();
    for (Eigen::Index i = 0; i < rep.lambda_rel_error->size(); ++i)
      a.push_back((*rep.lambda_rel_error)(i));
    out["lambda_rel_error"] = a;
  }
  if (rep.sigma_abs_error) {
    json a = json::array();
    for (Eigen::Index i = 0; i < rep.sigma_abs_error->size(); ++i)
      a.push_back((*rep.sigma_abs_error)(i));
    out["sigma_abs_error"] = a;
  }
  if (rep.hellinger_q) out["hellinger_quadrature"] = *rep.hellinger_q;
  if (rep.js_q) out["js_quadrature"] = *rep.js_q;
  if (rep.mse_q) out["mse"] = *rep.mse_q;
  std::string path = resolve_out(out_path);
  if (!path.empty()) {
    std::ofstream os(path);
    require(os.good(), ErrorCode::io_error, "cannot open " + path);
    os << out.dump(2) << "\n";
  }
  std::cout << "evaluate " << model_dir << ": ";
  if (rep.drift_rel_l2) std::cout << "drift_rel_l2 " << *rep.drift_rel_l2 << " ";
  if (rep.hellinger_q) std::cout << "H " << *rep.hellinger_q;
  std::cout << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"learn SDE drift/diffusion from stationary densities"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run named or file-defined experiments");
  std::vector<std::string> run_names;
  std::string run_config, run_out = "out";
  long run_seed = -1;
  int run_jobs = 1;
  run->add_option("names", run_names, "registry experiment names");
  run->add_option("--config", run_config, "experiment config JSON");
  run->add_option("--out", run_out, "output directory");
  run->add_option("--seed", run_seed, "seed override");
  run->add_option("--jobs", run_jobs, "parallel experiment jobs");

  auto* sim = app.add_subcommand("simulate", "Euler-Maruyama trajectory");
  std::string sim_model, sim_out = "trajectory.csv";
  double sim_dt = 1e-3;
  long sim_steps = 100000, sim_burn = 0;
  std::uint64_t sim_seed = 1;
  sim->add_option("--model", sim_model, "model spec JSON")->required();
  sim->add_option("--dt", sim_dt, "time step");
  sim->add_option("--steps", sim_steps, "step count");
  sim->add_option("--seed", sim_seed, "seed");
  sim->add_option("--burn-in", sim_burn, "discarded leading steps");
  sim->add_option("--out", sim_out, "output CSV");

  auto* kd = app.add_subcommand("kde", "kernel density estimate of a trajectory");
  std::string kde_traj, kde_grid = "-5:5:1001", kde_bw = "auto",
              kde_out = "density.csv";
  int kde_thin = 1;
  kd->add_option("--trajectory", kde_traj, "trajectory CSV")->required();
  kd->add_option("--grid", kde_grid, "evaluation grid lo:hi:n");
  kd->add_option("--bandwidth", kde_bw, "auto or a positive number");
  kd->add_option("--thin", kde_thin, "keep every k-th sample");
  kd->add_option("--out", kde_out, "output CSV");

  auto* ev = app.add_subcommand("evaluate", "score a saved model against a reference");
  std::string ev_model, ev_ref, ev_out;
  std::vector<double> ev_region;
  ev->add_option("--model", ev_model, "experiment output directory")->required();
  ev->add_option("--reference", ev_ref, "registry name of the reference");
  ev->add_option("--region", ev_region, "scoring box: lo... hi...");
  ev->add_option("--out", ev_out, "metrics JSON path");

  auto* ls = app.add_subcommand("list", "list registry experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_names, run_config, run_out, run_seed, run_jobs);
    if (*sim) return cmd_simulate(sim_model, sim_dt, sim_steps, sim_seed, sim_burn, sim_out);
    if (*kd) return cmd_kde(kde_traj, kde_grid, kde_bw, kde_thin, kde_out);
    if (*ev) return cmd_evaluate(ev_model, ev_ref, ev_region, ev_out);
    if (*ls) {
      for (const auto& n : experiment_names()) {
        auto spec = experiment_registry(n);
        std::cout << n << "  -  " << spec.description << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_numeric() ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace sdelearn
