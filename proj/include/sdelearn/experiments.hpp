#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdelearn/densities.hpp"
#include "sdelearn/trainer.hpp"

namespace sdelearn {

/// Everything needed to reproduce one named run: observation construction,
/// model construction, training config, and scoring references.
struct ExperimentSpec {
  std::string name;
  std::string description;
  int dim = 1;
  TrainConfig train;

  enum class Source { library, boltzmann, trajectory_kde, file };
  Source source = Source::library;
  std::string obs_name;                      // library entry or csv path
  std::map<std::string, double> obs_params;  // library overrides
  int obs_grid_n = 1001;                     // 1-D grid size
  int obs_random_count = 0;                  // > 0: uniform random points
  double noise_level = 0.0;

  std::vector<int> drift_widths;                 // neural drift when non-empty
  std::optional<PotentialSpec> potential_init;   // parametric drift when set
  std::vector<int> density_widths{0};            // filled by registry
  Eigen::VectorXd sigma_init;
  bool train_drift = true;
  bool train_sigma = false;

  // ex1-style scan over b = -k x instead of gradient training
  bool scan_mode = false;
  double scan_lo = 0.05, scan_hi = 2.0, scan_step = 0.01;

  // trajectory observation parameters
  double traj_dt = 1e-3;
  long traj_steps = 2000000;
  long traj_burn_in = 100000;
  int traj_thin = 10;

  // scoring
  Box score_region;
  bool score_region_from_q = false;  // restrict to where q > 1% of its max
  std::optional<std::string> truth_drift;        // closed-form factory name
  std::optional<PotentialSpec> truth_potential;  // parametric truth
  Eigen::VectorXd truth_sigma;

  void validate() const;
};

struct MetricsReport {
  std::optional<double> drift_rel_l2;
  std::optional<Box> drift_region;
  std::optional<Eigen::VectorXd> sigma_abs_error;
  std::optional<Eigen::VectorXd> lambda_rel_error;  // [lambda0, lambda1] order
  std::optional<double> hellinger_q, js_q, mse_q;   // learned density vs obs
  LossBreakdown final_loss;
  std::map<std::string, double> extra;
};

struct RunResult {
  TrainedModel trained;
  MetricsReport metrics;
};

/// Registry of the named experiments (the paper's roster).
std::vector<std::string> experiment_names();
ExperimentSpec experiment_registry(const std::string& name);

/// Builds the observation an experiment trains against (noise applied).
DensityObservation build_observation(const ExperimentSpec& spec);

/// Builds the initial training problem (seeded field inits).
TrainProblem build_problem(const ExperimentSpec& spec, const DensityObservation& obs);

/// Scores a trained model against the spec's reference truth.
MetricsReport score_against_truth(const SdeModel& model, const NeuralField& density,
                                  const ExperimentSpec& spec,
                                  const DensityObservation& obs);

/// Runs one experiment end to end and writes artifacts when out_dir is
/// non-empty: metrics.json, history.csv, model.bin (+ model_drift.bin),
/// manifest.json, plotdata/*.csv.
RunResult run_experiment(const ExperimentSpec& spec, const std::string& out_dir = "");

/// Stable 64-bit FNV-1a hash of the canonical (key-sorted) config JSON.
std::string config_hash(const ExperimentSpec& spec);

/// Drift relative L2 distance over a box, by quadrature.
double drift_relative_l2(const SdeModel& learned, const SdeModel& truth,
                         const Box& region, int points_per_axis = 201);

}  // namespace sdelearn
