#include "sdelearn/trainer.hpp"

#include <chrono>
#include <cmath>

#include "sdelearn/divergences.hpp"
#include "sdelearn/fpe_residual.hpp"

namespace sdelearn {

void TrainConfig::validate(int dim) const {
  require(n_residual > 0, ErrorCode::invalid_config, "train.N_f must be positive");
  require(iterations > 0, ErrorCode::invalid_config, "train.iterations must be positive");
  require(learning_rate > 0, ErrorCode::invalid_config, "train.learning_rate must be positive");
  require(log_every > 0, ErrorCode::invalid_config, "train.log_every must be positive");
  require(domain.dim() == dim, ErrorCode::invalid_config, "train.domain dimension mismatch");
  for (const auto& [x, b] : anchors)
    require(x.size() == dim && b.size() == dim, ErrorCode::invalid_config,
            "anchor dimension mismatch");
  if (mode == TrainMode::joint)
    require(!anchors.empty(), ErrorCode::invalid_config,
            "joint drift+diffusion learning is not unique without at least one "
            "drift anchor");
  if (mode == TrainMode::pinn_baseline)
    require(obs_loss == ObsLoss::mse, ErrorCode::invalid_config,
            "pinn_baseline uses the mean-square observation loss");
  else
    require(obs_loss != ObsLoss::mse, ErrorCode::invalid_config,
            "mean-square observation loss is the pinn_baseline mode");
}

void adam_step(Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads, AdamState& state,
               const Eigen::Ref<const Eigen::VectorXd>& lr) {
  require(params.size() == grads.size() && params.size() == state.m.size() &&
              params.size() == lr.size(),
          ErrorCode::dimension_mismatch, "adam vector length mismatch");
  require(grads.allFinite(), ErrorCode::diverged_gradient, "non-finite gradient");
  state.t += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v.array().matrix() +
            (1.0 - state.beta2) * grads.array().square().matrix();
  double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  params.array() -= lr.array() * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + state.eps);
}

void adam_step(Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads, AdamState& state,
               double lr) {
  adam_step(params, grads, state, Eigen::VectorXd::Constant(params.size(), lr));
}

Eigen::MatrixXd sample_collocation(const Box& box, int count, Rng& rng) {
  require(count > 0, ErrorCode::invalid_config, "collocation count must be positive");
  int n = box.dim();
  Eigen::MatrixXd pts(count, n);
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < n; ++j) pts(i, j) = rng.uniform(box.lower(j), box.upper(j));
  return pts;
}

ParamLayout make_layout(const TrainProblem& problem) {
  ParamLayout layout;
  Eigen::Index at = 0;
  if (problem.model.trainable.drift) {
    if (auto* nf = std::get_if<NeuralField>(&problem.model.drift)) {
      layout.drift_off = at;
      layout.drift_size = nf->parameter_count();
      at += layout.drift_size;
    }
  }
  layout.density_off = at;
  layout.density_size = problem.density.parameter_count();
  at += layout.density_size;
  if (problem.model.trainable.drift) {
    if (auto* pd = std::get_if<PotentialDrift>(&problem.model.drift)) {
      layout.lambda_off = at;
      layout.lambda_size = 2 * pd->spec.lambda_count();
      at += layout.lambda_size;
    }
  }
  if (problem.model.trainable.diffusion) {
    auto* cd = std::get_if<ConstantDiagonalNoise>(&problem.model.diffusion);
    require(cd != nullptr, ErrorCode::unsupported_diffusion,
            "only constant diagonal sigma is trainable");
    layout.sigma_off = at;
    layout.sigma_size = cd->sigma.size();
    at += layout.sigma_size;
  }
  layout.total = at;
  return layout;
}

Eigen::VectorXd pack_parameters(const TrainProblem& problem, const ParamLayout& layout) {
  Eigen::VectorXd theta(layout.total);
  if (layout.drift_size)
    theta.segment(layout.drift_off, layout.drift_size) =
        std::get<NeuralField>(problem.model.drift).flatten();
  theta.segment(layout.density_off, layout.density_size) = problem.density.flatten();
  if (layout.lambda_size)
    theta.segment(layout.lambda_off, layout.lambda_size) =
        std::get<PotentialDrift>(problem.model.drift).spec.parameters();
  if (layout.sigma_size)
    theta.segment(layout.sigma_off, layout.sigma_size) =
        std::get<ConstantDiagonalNoise>(problem.model.diffusion).sigma;
  return theta;
}

void unpack_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta,
                       const ParamLayout& layout, TrainProblem& problem) {
  require(theta.size() == layout.total, ErrorCode::dimension_mismatch,
          "parameter vector length mismatch");
  if (layout.drift_size)
    std::get<NeuralField>(problem.model.drift)
        .unflatten(theta.segment(layout.drift_off, layout.drift_size));
  problem.density.unflatten(theta.segment(layout.density_off, layout.density_size));
  if (layout.lambda_size)
    std::get<PotentialDrift>(problem.model.drift)
        .spec.set_parameters(theta.segment(layout.lambda_off, layout.lambda_size));
  if (layout.sigma_size)
    std::get<ConstantDiagonalNoise>(problem.model.diffusion).sigma =
        theta.segment(layout.sigma_off, layout.sigma_size);
}

namespace {

struct ObsLossResult {
  double value = 0.0;
  Eigen::ArrayXd dvalue;  // dL/dp per point (value channel), or raw-channel seed
  bool seed_raw = false;  // seeds attach to the raw output instead of value
};

// Hellinger paper-mean over the observation points. For squared-transform
// fields sqrt(p) = |raw| and the seed attaches to the raw output, which keeps
// the gradient finite through p = 0.
ObsLossResult hellinger_mean_loss(const BatchJet& jet, const Eigen::VectorXd& q,
                                  OutputTransform transform, bool want_grad) {
  Eigen::Index N = q.size();
  Eigen::ArrayXd sqrtq = q.array().sqrt();
  ObsLossResult r;
  if (transform == OutputTransform::squared) {
    Eigen::ArrayXd raw = jet.raw.row(0).transpose().array();
    Eigen::ArrayXd diff = raw.abs() - sqrtq;
    r.value = diff.square().sum() / (2.0 * N);
    if (want_grad) {
      r.seed_raw = true;
      r.dvalue = diff * raw.sign() / static_cast<double>(N);
    }
  } else {
    Eigen::ArrayXd p = jet.value.row(0).transpose().array().max(0.0);
    Eigen::ArrayXd sp = p.sqrt();
    Eigen::ArrayXd diff = sp - sqrtq;
    r.value = diff.square().sum() / (2.0 * N);
    if (want_grad)
      r.dvalue = diff / (2.0 * static_cast<double>(N) * sp.max(kDensityFloor));
  }
  return r;
}

// Jensen-Shannon in the paper's written form, as a plain mean over the
// observation points:  (1/N) sum 1/2 p log(p/m) + 1/2 m log(m/p), m=(p+q)/2.
ObsLossResult js_mean_loss(const BatchJet& jet, const Eigen::VectorXd& q,
                           bool want_grad) {
  Eigen::Index N = q.size();
  Eigen::ArrayXd p = jet.value.row(0).transpose().array().max(kDensityFloor);
  Eigen::ArrayXd m = (0.5 * (p + q.array())).max(kDensityFloor);
  Eigen::ArrayXd lpm = (p / m).log();
  ObsLossResult r;
  r.value = (0.5 * p * lpm + 0.5 * m * (m / p).log()).sum() / static_cast<double>(N);
  if (want_grad)
    r.dvalue = (0.25 * lpm + 0.75 - p / (4.0 * m) - m / (2.0 * p)) /
               static_cast<double>(N);
  return r;
}

ObsLossResult mse_mean_loss(const BatchJet& jet, const Eigen::VectorXd& q,
                            bool want_grad) {
  Eigen::Index N = q.size();
  Eigen::ArrayXd diff = jet.value.row(0).transpose().array() - q.array();
  ObsLossResult r;
  r.value = diff.square().sum() / static_cast<double>(N);
  if (want_grad) r.dvalue = 2.0 * diff / static_cast<double>(N);
  return r;
}

void check_term(double v, const char* name) {
  require(std::isfinite(v), ErrorCode::diverged_loss,
          std::string("loss term ") + name + " is non-finite");
}

}  // namespace

LossBreakdown assemble_loss(const TrainConfig& config, const TrainProblem& problem,
                            const Eigen::Ref<const Eigen::MatrixXd>& residual_points,
                            Eigen::VectorXd* grad_out) {
  const int n = problem.model.dim;
  const ParamLayout layout = make_layout(problem);
  if (grad_out)
    require(grad_out->size() == layout.total, ErrorCode::dimension_mismatch,
            "gradient vector length mismatch");
  const bool want_grad = grad_out != nullptr;
  auto density_grad = [&]() {
    return grad_out->segment(layout.density_off, layout.density_size);
  };

  LossBreakdown bd;

  // ---- observation term ----
  {
    thread_local EvalTape tape;  // reused across iterations
    Eigen::MatrixXd Xobs = problem.obs.points.transpose();
    BatchJet jet = problem.density.forward(Xobs, 0, want_grad ? &tape : nullptr);
    ObsLossResult obs;
    switch (config.obs_loss) {
      case ObsLoss::hellinger:
        obs = hellinger_mean_loss(jet, problem.obs.values,
                                  problem.density.transform(), want_grad);
        break;
      case ObsLoss::js:
        obs = js_mean_loss(jet, problem.obs.values, want_grad);
        break;
      case ObsLoss::mse:
        obs = mse_mean_loss(jet, problem.obs.values, want_grad);
        break;
    }
    bd.loss_obs = obs.value;
    check_term(bd.loss_obs, "loss_H");
    if (want_grad) {
      BatchAdjoint adj;
      Eigen::MatrixXd seed = (config.weight_obs * obs.dvalue).matrix().transpose();
      if (obs.seed_raw)
        adj.raw = seed;
      else
        adj.value = seed;
      problem.density.backward(tape, adj, density_grad());
    }
  }

  // ---- residual term ----
  {
    require(residual_points.cols() == n, ErrorCode::dimension_mismatch,
            "residual points dimension mismatch");
    const Eigen::Index Nf = residual_points.rows();
    require(Nf > 0, ErrorCode::invalid_config, "empty residual batch");
    auto* cd = std::get_if<ConstantDiagonalNoise>(&problem.model.diffusion);
    require(cd != nullptr, ErrorCode::unsupported_diffusion,
            "training supports constant diagonal diffusion");
    Eigen::MatrixXd Xr = residual_points.transpose();

    thread_local EvalTape tape_p, tape_b;  // reused across iterations
    BatchJet jp = problem.density.forward(Xr, 2, want_grad ? &tape_p : nullptr);
    ResidualParts parts;
    parts.p = jp.value.row(0);
    parts.dp.resize(n, Nf);
    parts.d2p.resize(n, Nf);
    for (int k = 0; k < n; ++k) {
      parts.dp.row(k) = jp.grad[k].row(0);
      parts.d2p.row(k) = jp.hess[k].row(0);
    }

    const auto* neural_drift = std::get_if<NeuralField>(&problem.model.drift);
    const auto* pot_drift = std::get_if<PotentialDrift>(&problem.model.drift);
    bool train_drift = problem.model.trainable.drift && want_grad;
    std::vector<PotentialJet> pot_jets;  // kept when lambda gradients are needed
    parts.b.resize(n, Nf);
    parts.jac_diag.resize(n, Nf);
    BatchJet jb;
    if (neural_drift) {
      jb = neural_drift->forward(Xr, 1, (train_drift && layout.drift_size)
                                            ? &tape_b
                                            : nullptr);
      parts.b = jb.value;
      for (int k = 0; k < n; ++k) parts.jac_diag.row(k) = jb.grad[k].row(k);
    } else if (pot_drift) {
      bool lam = train_drift && layout.lambda_size;
      if (lam) pot_jets.reserve(Nf);
      for (Eigen::Index c = 0; c < Nf; ++c) {
        PotentialJet pj =
            potential_jet(pot_drift->spec, residual_points.row(c).transpose(), lam);
        parts.b.col(c) = -pj.grad;
        parts.jac_diag.col(c) = -pj.hess_diag;
        if (lam) pot_jets.push_back(std::move(pj));
      }
    } else {
      const auto& cf = std::get<ClosedFormDrift>(problem.model.drift);
      for (Eigen::Index c = 0; c < Nf; ++c) {
        Eigen::VectorXd x = residual_points.row(c).transpose();
        parts.b.col(c) = cf.value(x);
        parts.jac_diag.col(c) = cf.jacobian_diag(x);
      }
    }

    Eigen::RowVectorXd f = residual_gaussian(parts, cd->sigma);
    bd.loss_residual = f.squaredNorm() / static_cast<double>(Nf);
    check_term(bd.loss_residual, "loss_f");

    if (want_grad) {
      Eigen::RowVectorXd fbar =
          (2.0 * config.weight_residual / static_cast<double>(Nf)) * f;
      ResidualAdjoints radj = residual_gaussian_adjoints(parts, cd->sigma, fbar);

      BatchAdjoint adj_p;
      adj_p.value = radj.p_bar;
      adj_p.grad.resize(n);
      adj_p.hess.resize(n);
      for (int k = 0; k < n; ++k) {
        adj_p.grad[k] = radj.dp_bar.row(k);
        adj_p.hess[k] = radj.d2p_bar.row(k);
      }
      problem.density.backward(tape_p, adj_p, density_grad());

      if (train_drift && neural_drift && layout.drift_size) {
        BatchAdjoint adj_b;
        adj_b.value = radj.b_bar;
        adj_b.grad.assign(n, Eigen::MatrixXd());
        for (int k = 0; k < n; ++k) {
          adj_b.grad[k] = Eigen::MatrixXd::Zero(n, Nf);
          adj_b.grad[k].row(k) = radj.jac_diag_bar.row(k);
        }
        neural_drift->backward(tape_b, adj_b,
                               grad_out->segment(layout.drift_off, layout.drift_size));
      }
      if (train_drift && pot_drift && layout.lambda_size) {
        auto gl = grad_out->segment(layout.lambda_off, layout.lambda_size);
        for (Eigen::Index c = 0; c < Nf; ++c) {
          const PotentialJet& pj = pot_jets[c];
          // b = -dPhi, jac = -d2Phi
          gl.noalias() -= pj.dgrad_dlambda.transpose() * radj.b_bar.col(c);
          gl.noalias() -= pj.dhess_dlambda.transpose() * radj.jac_diag_bar.col(c);
        }
      }
      if (layout.sigma_size && problem.model.trainable.diffusion)
        grad_out->segment(layout.sigma_off, layout.sigma_size) += radj.sigma_bar;
    }
  }

  // ---- anchor term ----
  if (!config.anchors.empty()) {
    const Eigen::Index Na = static_cast<Eigen::Index>(config.anchors.size());
    Eigen::MatrixXd Xa(n, Na), Ba(n, Na);
    for (Eigen::Index c = 0; c < Na; ++c) {
      Xa.col(c) = config.anchors[c].first;
      Ba.col(c) = config.anchors[c].second;
    }
    const auto* neural_drift = std::get_if<NeuralField>(&problem.model.drift);
    const auto* pot_drift = std::get_if<PotentialDrift>(&problem.model.drift);
    bool train_drift = problem.model.trainable.drift && want_grad;
    double acc = 0.0;
    if (neural_drift) {
      EvalTape tape_a;
      BatchJet ja = neural_drift->forward(Xa, 0, (train_drift && layout.drift_size)
                                                     ? &tape_a
                                                     : nullptr);
      Eigen::MatrixXd diff = ja.value - Ba;
      acc = diff.squaredNorm() / static_cast<double>(Na);
      if (train_drift && layout.drift_size) {
        BatchAdjoint adj;
        adj.value =
            (2.0 * config.weight_anchor / static_cast<double>(Na)) * diff;
        neural_drift->backward(tape_a, adj,
                               grad_out->segment(layout.drift_off, layout.drift_size));
      }
    } else {
      for (Eigen::Index c = 0; c < Na; ++c) {
        Eigen::VectorXd x = Xa.col(c);
        if (pot_drift) {
          bool lam = train_drift && layout.lambda_size;
          PotentialJet pj = potential_jet(pot_drift->spec, x, lam);
          Eigen::VectorXd diff = -pj.grad - Ba.col(c);
          acc += diff.squaredNorm() / static_cast<double>(Na);
          if (lam)
            grad_out->segment(layout.lambda_off, layout.lambda_size).noalias() -=
                (2.0 * config.weight_anchor / static_cast<double>(Na)) *
                (pj.dgrad_dlambda.transpose() * diff);
        } else {
          Eigen::VectorXd diff = problem.model.drift_value(x) - Ba.col(c);
          acc += diff.squaredNorm() / static_cast<double>(Na);
        }
      }
    }
    bd.loss_anchor = acc;
    check_term(acc, "loss_b");
  }

  bd.total = config.weight_obs * bd.loss_obs +
             config.weight_residual * bd.loss_residual +
             (bd.loss_anchor ? config.weight_anchor * *bd.loss_anchor : 0.0);
  check_term(bd.total, "total");
  return bd;
}

TrainedModel train(const TrainProblem& problem_in, const TrainConfig& config) {
  TrainProblem problem = problem_in;
  problem.model.validate();
  config.validate(problem.model.dim);
  require(problem.obs.size() > 0, ErrorCode::invalid_config, "empty observation");
  require(problem.density.input_dim() == problem.model.dim &&
              problem.density.output_dim() == 1,
          ErrorCode::dimension_mismatch, "density field must map R^n -> R");

  const ParamLayout layout = make_layout(problem);
  Eigen::VectorXd theta = pack_parameters(problem, layout);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout.total);
  AdamState adam = AdamState::zero(layout.total);
  Eigen::VectorXd lr = Eigen::VectorXd::Constant(layout.total, config.learning_rate);
  if (layout.lambda_size)
    lr.segment(layout.lambda_off, layout.lambda_size).array() *=
        config.lr_scale_parametric;
  if (layout.sigma_size)
    lr.segment(layout.sigma_off, layout.sigma_size).array() *=
        config.lr_scale_parametric;

  Rng coll_rng(split_seed(config.seed, streams::collocation));

  TrainedModel out;
  out.config = config;
  out.best_total = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta = theta;

  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  auto log_point = [&](long it, const LossBreakdown& bd) {
    LossBreakdown row = bd;
    row.iteration = it;
    row.seconds = elapsed();
    out.history.push_back(row);
    if (layout.lambda_size || layout.sigma_size) {
      Eigen::VectorXd vals(layout.lambda_size + layout.sigma_size);
      if (layout.lambda_size)
        vals.head(layout.lambda_size) = theta.segment(layout.lambda_off, layout.lambda_size);
      if (layout.sigma_size)
        vals.tail(layout.sigma_size) = theta.segment(layout.sigma_off, layout.sigma_size);
      out.parametric_trace.emplace_back(it, vals);
    }
  };

  long it = 0;
  for (; it < config.iterations; ++it) {
    Eigen::MatrixXd pts = sample_collocation(config.domain, config.n_residual, coll_rng);
    grad.setZero();
    try {
      LossBreakdown bd = assemble_loss(config, problem, pts, &grad);
      if (bd.total < out.best_total) {
        out.best_total = bd.total;
        out.best_iteration = it;
        best_theta = theta;
      }
      bool stop = config.stop_below_total > 0.0 && bd.total < config.stop_below_total;
      if (it % config.log_every == 0 || it == config.iterations - 1 || stop)
        log_point(it, bd);
      if (stop) break;
      adam_step(theta, grad, adam, lr);
    } catch (const Error& e) {
      if (!e.is_numeric()) throw;
      out.diverged = true;
      out.divergence_note = e.what();
      break;
    }
    unpack_parameters(theta, layout, problem);
  }

  out.model = problem.model;
  out.density = problem.density;
  TrainProblem best = problem;
  unpack_parameters(best_theta, layout, best);
  out.best_model = best.model;
  out.best_density = best.density;
  return out;
}

}  // namespace sdelearn
