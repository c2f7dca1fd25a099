#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sdelearn/common.hpp"

namespace sdelearn {

enum class OutputTransform { identity, squared };

/// Value and exact input-derivatives of a field at one point.
struct FieldJet {
  Eigen::VectorXd value;                    // m
  Eigen::MatrixXd grad_x;                   // m x n       (order >= 1)
  Eigen::MatrixXd hess_diag;                // m x n       (order >= 2)
  std::vector<Eigen::MatrixXd> hess_mixed;  // m entries, n x n, on request
};

/// Batched jets over a point batch X (n x N, column per point). Channel
/// layout: every channel is an m x N matrix. `hess` channels follow `slices`;
/// the default order-2 plan is the diagonal (k,k).
struct BatchJet {
  int order = 0;
  std::vector<std::pair<int, int>> slices;
  Eigen::MatrixXd value;                 // m x N, post-transform
  Eigen::MatrixXd raw;                   // m x N, pre-transform output
  std::vector<Eigen::MatrixXd> grad;     // n channels
  std::vector<Eigen::MatrixXd> hess;     // one channel per slice
};

/// Adjoint seeds for the reverse pass. Empty matrices mean "no seed". `raw`
/// seeds attach directly to the pre-transform output (used by losses written
/// in terms of sqrt(p) = |raw| for squared-transform density fields).
struct BatchAdjoint {
  Eigen::MatrixXd value;
  Eigen::MatrixXd raw;
  std::vector<Eigen::MatrixXd> grad;
  std::vector<Eigen::MatrixXd> hess;
};

/// Forward intermediates recorded for the reverse pass.
struct EvalTape {
  int order = 0;
  std::vector<std::pair<int, int>> slices;
  Eigen::MatrixXd X;                              // n x N
  std::vector<Eigen::MatrixXd> T;                 // tanh(A) per hidden layer
  std::vector<std::vector<Eigen::MatrixXd>> DA;   // per hidden layer, per dim
  std::vector<std::vector<Eigen::MatrixXd>> SA;   // per hidden layer, per slice
  Eigen::MatrixXd V;                              // pre-transform output
  std::vector<Eigen::MatrixXd> DV;
  std::vector<Eigen::MatrixXd> SV;
};

/// Dense feedforward approximator, tanh hidden layers, identity or squared
/// output transform. Carries exact jets (orders 0-2) of its output with
/// respect to inputs, and a reverse pass that turns jet adjoints into
/// parameter gradients.
class NeuralField {
 public:
  NeuralField() = default;
  NeuralField(std::vector<int> widths, OutputTransform transform);

  /// Weights ~ truncated normal (sd 1/sqrt(fan_in), cut at 2 sd), biases zero.
  static NeuralField random_init(const std::vector<int>& widths, std::uint64_t seed,
                                 OutputTransform transform);

  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  const std::vector<int>& widths() const { return widths_; }
  OutputTransform transform() const { return transform_; }
  std::uint64_t seed() const { return seed_; }
  int parameter_count() const;

  const Eigen::MatrixXd& weight(int layer) const { return weights_[layer]; }
  const Eigen::VectorXd& bias(int layer) const { return biases_[layer]; }
  Eigen::MatrixXd& weight(int layer) { return weights_[layer]; }
  Eigen::VectorXd& bias(int layer) { return biases_[layer]; }

  /// Flat parameter vector, layer by layer, W (column-major) then b.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::Ref<const Eigen::VectorXd>& theta);

  /// Jets at one point. order 0: value only; 1: + grad; 2: + diagonal second
  /// derivatives, plus the full mixed Hessian when `mixed` is set.
  FieldJet jet(const Eigen::Ref<const Eigen::VectorXd>& x, int order,
               bool mixed = false) const;

  /// Batched forward over X (n x N). Pass a tape to enable backward().
  /// `slices` selects which second-derivative channels to carry at order 2;
  /// empty means the diagonal.
  BatchJet forward(const Eigen::Ref<const Eigen::MatrixXd>& X, int order,
                   EvalTape* tape = nullptr,
                   const std::vector<std::pair<int, int>>& slices = {}) const;

  /// Reverse pass: accumulates d(loss)/d(params) into grad_out (same layout
  /// as flatten()) given per-channel adjoint seeds.
  void backward(const EvalTape& tape, const BatchAdjoint& adj,
                Eigen::Ref<Eigen::VectorXd> grad_out) const;

  /// Binary persistence; byte layout documented in docs/model_format.md.
  void save(const std::string& path) const;
  static NeuralField load(const std::string& path);

 private:
  std::vector<int> widths_;
  OutputTransform transform_ = OutputTransform::identity;
  std::uint64_t seed_ = 0;
  std::vector<Eigen::MatrixXd> weights_;  // W[l]: widths[l+1] x widths[l]
  std::vector<Eigen::VectorXd> biases_;
};

}  // namespace sdelearn
