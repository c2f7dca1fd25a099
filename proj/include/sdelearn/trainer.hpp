#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdelearn/common.hpp"
#include "sdelearn/densities.hpp"
#include "sdelearn/rng.hpp"
#include "sdelearn/sde_model.hpp"

namespace sdelearn {

enum class TrainMode { drift_only, joint, parametric, pinn_baseline };
enum class ObsLoss { hellinger, js, mse };

struct TrainConfig {
  TrainMode mode = TrainMode::drift_only;
  ObsLoss obs_loss = ObsLoss::hellinger;
  int n_residual = 1000;  // collocation points per iteration
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> anchors;  // (x, b(x))
  double learning_rate = 1e-4;
  double lr_scale_parametric = 1.0;  // multiplier for lambda/sigma segments
  long iterations = 10000;
  std::uint64_t seed = 0;
  double weight_obs = 1.0, weight_residual = 1.0, weight_anchor = 1.0;
  Box domain;
  int log_every = 100;
  double stop_below_total = 0.0;  // 0 disables early stop

  void validate(int dim) const;
};

struct LossBreakdown {
  long iteration = 0;
  double loss_obs = 0.0;
  double loss_residual = 0.0;
  std::optional<double> loss_anchor;  // absent without anchors
  double total = 0.0;
  double seconds = 0.0;
};

struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState zero(Eigen::Index n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
  }
};

/// Standard Adam with bias correction; lr may vary per element.
void adam_step(Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads, AdamState& state,
               const Eigen::Ref<const Eigen::VectorXd>& lr);
void adam_step(Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads, AdamState& state,
               double lr);

/// Fresh iid-uniform collocation points in the box (rows).
Eigen::MatrixXd sample_collocation(const Box& box, int count, Rng& rng);

/// Where each trainable block lives in the flat parameter vector.
struct ParamLayout {
  Eigen::Index drift_off = -1, drift_size = 0;      // neural drift
  Eigen::Index density_off = -1, density_size = 0;  // density field
  Eigen::Index lambda_off = -1, lambda_size = 0;    // potential parameters
  Eigen::Index sigma_off = -1, sigma_size = 0;      // constant diagonal sigma
  Eigen::Index total = 0;
};

struct TrainProblem {
  SdeModel model;
  NeuralField density;
  DensityObservation obs;
};

ParamLayout make_layout(const TrainProblem& problem);
Eigen::VectorXd pack_parameters(const TrainProblem& problem, const ParamLayout& layout);
void unpack_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta,
                       const ParamLayout& layout, TrainProblem& problem);

/// One evaluation of the full training loss; accumulates the flat gradient
/// when grad_out is non-null (must be zeroed by the caller).
LossBreakdown assemble_loss(const TrainConfig& config, const TrainProblem& problem,
                            const Eigen::Ref<const Eigen::MatrixXd>& residual_points,
                            Eigen::VectorXd* grad_out = nullptr);

struct TrainedModel {
  SdeModel model;  // final iterate
  NeuralField density;
  SdeModel best_model;  // lowest-total-loss iterate
  NeuralField best_density;
  double best_total = 0.0;
  long best_iteration = 0;
  std::vector<LossBreakdown> history;
  /// (iteration, [lambda; sigma]) at each log point, for parametric parts.
  std::vector<std::pair<long, Eigen::VectorXd>> parametric_trace;
  TrainConfig config;
  bool diverged = false;
  std::string divergence_note;
};

TrainedModel train(const TrainProblem& problem, const TrainConfig& config);

}  // namespace sdelearn
