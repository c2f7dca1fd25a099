#include "sdelearn/neural_field.hpp"
#include <map>
#include <deque>

#include <bit>
#include <cstring>
#include <fstream>

#include "sdelearn/rng.hpp"

namespace sdelearn {

namespace {

void check_widths(const std::vector<int>& widths) {
  require(widths.size() >= 2, ErrorCode::invalid_architecture,
          "field needs at least input and output widths");
  for (int w : widths)
    require(w > 0, ErrorCode::invalid_architecture, "layer widths must be positive");
}

std::vector<std::pair<int, int>> diagonal_slices(int n) {
  std::vector<std::pair<int, int>> s;
  s.reserve(n);
  for (int k = 0; k < n; ++k) s.emplace_back(k, k);
  return s;
}

// Reusable per-thread matrix pool for the backward pass, keyed by shape so
// interleaved calls with different batch sizes still reuse their buffers
// after the first training iteration.
struct MatPool {
  // deque keeps references stable while the bucket grows
  std::map<std::pair<Eigen::Index, Eigen::Index>,
           std::pair<std::deque<Eigen::MatrixXd>, std::size_t>>
      by_size;

  void reset() {
    for (auto& [k, v] : by_size) v.second = 0;
  }
  Eigen::MatrixXd& get(Eigen::Index rows, Eigen::Index cols) {
    auto& [vec, used] = by_size[{rows, cols}];
    if (used == vec.size()) vec.emplace_back(rows, cols);
    return vec[used++];
  }
};

thread_local MatPool g_backward_pool;
thread_local MatPool g_forward_pool;

}  // namespace

NeuralField::NeuralField(std::vector<int> widths, OutputTransform transform)
    : widths_(std::move(widths)), transform_(transform) {
  check_widths(widths_);
  int L = static_cast<int>(widths_.size()) - 1;
  weights_.resize(L);
  biases_.resize(L);
  for (int l = 0; l < L; ++l) {
    weights_[l] = Eigen::MatrixXd::Zero(widths_[l + 1], widths_[l]);
    biases_[l] = Eigen::VectorXd::Zero(widths_[l + 1]);
  }
}

NeuralField NeuralField::random_init(const std::vector<int>& widths, std::uint64_t seed,
                                     OutputTransform transform) {
  NeuralField f(widths, transform);
  f.seed_ = seed;
  Rng rng(seed);
  for (std::size_t l = 0; l < f.weights_.size(); ++l) {
    double scale = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    auto& W = f.weights_[l];
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i)
        W(i, j) = scale * rng.truncated_normal(2.0);
  }
  return f;
}

int NeuralField::parameter_count() const {
  int c = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
    c += widths_[l] * widths_[l + 1] + widths_[l + 1];
  return c;
}

Eigen::VectorXd NeuralField::flatten() const {
  Eigen::VectorXd theta(parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& W = weights_[l];
    std::memcpy(theta.data() + at, W.data(), sizeof(double) * W.size());
    at += W.size();
    std::memcpy(theta.data() + at, biases_[l].data(), sizeof(double) * biases_[l].size());
    at += biases_[l].size();
  }
  return theta;
}

void NeuralField::unflatten(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  require(theta.size() == parameter_count(), ErrorCode::dimension_mismatch,
          "parameter vector length mismatch");
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto& W = weights_[l];
    std::memcpy(W.data(), theta.data() + at, sizeof(double) * W.size());
    at += W.size();
    std::memcpy(biases_[l].data(), theta.data() + at, sizeof(double) * biases_[l].size());
    at += biases_[l].size();
  }
}

// tanh via vectorized exp: identical to std::tanh to ~3e-16, several times
// faster than the scalar libm loop on arrays.
#define TANH_ARR(A) (1.0 - 2.0 / ((2.0 * (A).array()).exp() + 1.0))

BatchJet NeuralField::forward(const Eigen::Ref<const Eigen::MatrixXd>& X, int order,
                              EvalTape* tape,
                              const std::vector<std::pair<int, int>>& slices_in) const {
  const int n = input_dim();
  const Eigen::Index N = X.cols();
  require(X.rows() == n, ErrorCode::dimension_mismatch, "input dimension mismatch");
  require(X.allFinite(), ErrorCode::non_finite_input, "non-finite evaluation point");
  require(order >= 0 && order <= 2, ErrorCode::invalid_config, "order must be 0, 1 or 2");

  std::vector<std::pair<int, int>> slices;
  if (order >= 2) slices = slices_in.empty() ? diagonal_slices(n) : slices_in;
  const int ns = static_cast<int>(slices.size());
  const int L = num_layers();

  EvalTape local;
  EvalTape& tp = tape ? *tape : local;
  tp.order = order;
  tp.slices = slices;
  tp.X = X;
  tp.T.resize(L - 1);
  tp.DA.resize(L - 1);
  tp.SA.resize(L - 1);

  // Output jets of the layer below, materialized in pooled scratch.
  // Convention: an empty SH/SA matrix means identically zero.
  MatPool& pool = g_forward_pool;
  pool.reset();
  std::vector<Eigen::MatrixXd*> DH(order >= 1 ? n : 0, nullptr);
  std::vector<Eigen::MatrixXd*> SH(order >= 2 ? ns : 0, nullptr);
  static const Eigen::MatrixXd kEmpty;

  for (int l = 0; l < L; ++l) {
    const auto& W = weights_[l];
    const Eigen::Index w = W.rows();
    const bool is_output = (l == L - 1);
    const Eigen::MatrixXd& Hprev = (l == 0) ? tp.X : tp.T[l - 1];

    Eigen::MatrixXd& A = is_output ? tp.V : tp.T[l];
    A.resize(w, N);
    A.noalias() = W * Hprev;
    A.colwise() += biases_[l];

    auto& DAl = is_output ? tp.DV : tp.DA[l];
    auto& SAl = is_output ? tp.SV : tp.SA[l];
    DAl.resize(order >= 1 ? n : 0);
    SAl.resize(order >= 2 ? ns : 0);
    if (order >= 1) {
      for (int k = 0; k < n; ++k) {
        DAl[k].resize(w, N);
        if (l == 0)
          DAl[k] = W.col(k).replicate(1, N);
        else
          DAl[k].noalias() = W * *DH[k];
      }
    }
    if (order >= 2) {
      for (int s = 0; s < ns; ++s) {
        if (l == 0 || !SH[s]) {
          SAl[s].resize(0, 0);  // zero by convention
        } else {
          SAl[s].resize(w, N);
          SAl[s].noalias() = W * *SH[s];
        }
      }
    }
    if (is_output) break;

    A = TANH_ARR(A).matrix();  // in place: pre-activations are not kept
    const auto& T = A;
    if (order >= 1) {
      // jets of this layer's outputs, consumed by the next layer
      for (int k = 0; k < n; ++k) {
        DH[k] = &pool.get(w, N);
        DH[k]->array() = (1.0 - T.array().square()) * DAl[k].array();
      }
    }
    if (order >= 2) {
      for (int s = 0; s < ns; ++s) {
        auto [k, m] = slices[s];
        SH[s] = &pool.get(w, N);
        auto P1 = 1.0 - T.array().square();
        if (SAl[s].size())
          SH[s]->array() = (-2.0 * T.array() * P1) * DAl[k].array() * DAl[m].array() +
                           P1 * SAl[s].array();
        else
          SH[s]->array() = (-2.0 * T.array() * P1) * DAl[k].array() * DAl[m].array();
      }
    }
  }

  BatchJet out;
  out.order = order;
  out.slices = slices;
  out.raw = tp.V;
  const Eigen::Index m_out = output_dim();
  if (transform_ == OutputTransform::identity) {
    out.value = tp.V;
    out.grad = tp.DV;
    if (order >= 2) {
      out.hess.resize(ns);
      for (int s = 0; s < ns; ++s)
        out.hess[s] = tp.SV[s].size() ? tp.SV[s]
                                      : Eigen::MatrixXd::Zero(m_out, N).eval();
    }
  } else {
    out.value = tp.V.array().square().matrix();
    if (order >= 1) {
      out.grad.resize(n);
      for (int k = 0; k < n; ++k)
        out.grad[k] = (2.0 * tp.V.array() * tp.DV[k].array()).matrix();
    }
    if (order >= 2) {
      out.hess.resize(ns);
      for (int s = 0; s < ns; ++s) {
        auto [k, m] = slices[s];
        if (tp.SV[s].size())
          out.hess[s] = (2.0 * (tp.DV[k].array() * tp.DV[m].array() +
                                tp.V.array() * tp.SV[s].array()))
                            .matrix();
        else
          out.hess[s] = (2.0 * tp.DV[k].array() * tp.DV[m].array()).matrix();
      }
    }
  }
  return out;
}

void NeuralField::backward(const EvalTape& tape, const BatchAdjoint& adj,
                           Eigen::Ref<Eigen::VectorXd> grad_out) const {
  const int n = input_dim();
  const int L = num_layers();
  const Eigen::Index N = tape.X.cols();
  const int ns = static_cast<int>(tape.slices.size());
  const int m_out = output_dim();
  require(grad_out.size() == parameter_count(), ErrorCode::dimension_mismatch,
          "gradient vector length mismatch");

  MatPool& pool = g_backward_pool;
  pool.reset();
  auto seeded = [](const Eigen::MatrixXd& m) { return m.size() > 0; };

  // Transform backward: (value, grad, hess, raw) seeds -> (V, DV, SV) seeds.
  Eigen::MatrixXd& Vb = pool.get(m_out, N);
  Vb.setZero();
  std::vector<Eigen::MatrixXd*> DVb(n, nullptr), SVb(ns, nullptr);
  auto ensure = [&](std::vector<Eigen::MatrixXd*>& v, int i, Eigen::Index rows) {
    if (!v[i])  {
      v[i] = &pool.get(rows, N);
      v[i]->setZero();
    }
    return v[i];
  };
  if (transform_ == OutputTransform::identity) {
    if (seeded(adj.value)) Vb = adj.value;
    for (int k = 0; k < n && k < static_cast<int>(adj.grad.size()); ++k)
      if (seeded(adj.grad[k])) *ensure(DVb, k, m_out) = adj.grad[k];
    for (int s = 0; s < ns && s < static_cast<int>(adj.hess.size()); ++s)
      if (seeded(adj.hess[s])) *ensure(SVb, s, m_out) = adj.hess[s];
  } else {
    const auto& V = tape.V;
    if (seeded(adj.value)) Vb = (2.0 * V.array() * adj.value.array()).matrix();
    for (int k = 0; k < n && k < static_cast<int>(adj.grad.size()); ++k) {
      if (!seeded(adj.grad[k])) continue;
      Vb.array() += 2.0 * adj.grad[k].array() * tape.DV[k].array();
      ensure(DVb, k, m_out)->array() += 2.0 * V.array() * adj.grad[k].array();
    }
    for (int s = 0; s < ns && s < static_cast<int>(adj.hess.size()); ++s) {
      if (!seeded(adj.hess[s])) continue;
      auto [k, m] = tape.slices[s];
      const auto hb = adj.hess[s].array();
      if (tape.SV[s].size()) Vb.array() += 2.0 * hb * tape.SV[s].array();
      ensure(DVb, k, m_out)->array() += 2.0 * hb * tape.DV[m].array();
      ensure(DVb, m, m_out)->array() += 2.0 * hb * tape.DV[k].array();
      *ensure(SVb, s, m_out) = (2.0 * V.array() * hb).matrix();
    }
  }
  if (seeded(adj.raw)) Vb += adj.raw;

  // Adjoints w.r.t. the current layer's output jets.
  Eigen::MatrixXd* Hb = &Vb;
  std::vector<Eigen::MatrixXd*> DHb = DVb, SHb = SVb;

  std::vector<Eigen::Index> w_off(L), b_off(L);
  {
    Eigen::Index at = 0;
    for (int l = 0; l < L; ++l) {
      w_off[l] = at;
      at += weights_[l].size();
      b_off[l] = at;
      at += biases_[l].size();
    }
  }

  for (int l = L - 1; l >= 0; --l) {
    const auto& W = weights_[l];
    const Eigen::Index w = W.rows();
    const bool is_output = (l == L - 1);

    // Activation backward: output-jet adjoints -> pre-activation adjoints.
    Eigen::MatrixXd* Ab;
    std::vector<Eigen::MatrixXd*> DAb(n, nullptr), SAb(ns, nullptr);
    if (is_output) {
      Ab = Hb;
      DAb = DHb;
      SAb = SHb;
    } else {
      const auto& T = tape.T[l];
      auto P1 = 1.0 - T.array().square();
      auto P2 = -2.0 * T.array() * P1;
      Ab = &pool.get(w, N);
      if (Hb)
        *Ab = (Hb->array() * P1).matrix();
      else
        Ab->setZero();
      for (int k = 0; k < n; ++k) {
        if (!DHb[k]) continue;
        Ab->array() += DHb[k]->array() * P2 * tape.DA[l][k].array();
        DAb[k] = &pool.get(w, N);
        *DAb[k] = (DHb[k]->array() * P1).matrix();
      }
      for (int s = 0; s < ns; ++s) {
        if (!SHb[s]) continue;
        auto [k, m] = tape.slices[s];
        const auto sb = SHb[s]->array();
        const auto dak = tape.DA[l][k].array();
        const auto dam = tape.DA[l][m].array();
        if (tape.SA[l][s].size())
          Ab->array() +=
              sb * (((6.0 * T.array().square() - 2.0) * P1) * dak * dam +
                    P2 * tape.SA[l][s].array());
        else
          Ab->array() += sb * ((6.0 * T.array().square() - 2.0) * P1) * dak * dam;
        if (!DAb[k]) {
          DAb[k] = &pool.get(w, N);
          DAb[k]->setZero();
        }
        DAb[k]->array() += sb * P2 * dam;
        if (!DAb[m]) {
          DAb[m] = &pool.get(w, N);
          DAb[m]->setZero();
        }
        DAb[m]->array() += sb * P2 * dak;
        SAb[s] = &pool.get(w, N);
        *SAb[s] = (sb * P1).matrix();
      }
    }

    auto Wb = Eigen::Map<Eigen::MatrixXd>(grad_out.data() + w_off[l], W.rows(), W.cols());
    auto bb = Eigen::Map<Eigen::VectorXd>(grad_out.data() + b_off[l], W.rows());
    bb += Ab->rowwise().sum();

    if (l == 0) {
      Wb.noalias() += *Ab * tape.X.transpose();
      for (int k = 0; k < n; ++k)
        if (DAb[k]) Wb.col(k) += DAb[k]->rowwise().sum();
      // input second-derivative jets vanish: no SA term
      break;
    }

    // Linear backward against the previous layer's output jets.
    const auto& Tp = tape.T[l - 1];
    auto P1p = 1.0 - Tp.array().square();
    Wb.noalias() += *Ab * Tp.transpose();
    Eigen::MatrixXd* Hb_prev = &pool.get(W.cols(), N);
    Hb_prev->noalias() = W.transpose() * *Ab;
    std::vector<Eigen::MatrixXd*> DHb_prev(n, nullptr), SHb_prev(ns, nullptr);
    for (int k = 0; k < n; ++k) {
      if (!DAb[k]) continue;
      Wb.noalias() += *DAb[k] * (P1p * tape.DA[l - 1][k].array()).matrix().transpose();
      DHb_prev[k] = &pool.get(W.cols(), N);
      DHb_prev[k]->noalias() = W.transpose() * *DAb[k];
    }
    for (int s = 0; s < ns; ++s) {
      if (!SAb[s]) continue;
      auto [k, m] = tape.slices[s];
      if (tape.SA[l - 1][s].size())
        Wb.noalias() += *SAb[s] *
                        ((-2.0 * Tp.array() * P1p) * tape.DA[l - 1][k].array() *
                             tape.DA[l - 1][m].array() +
                         P1p * tape.SA[l - 1][s].array())
                            .matrix()
                            .transpose();
      else
        Wb.noalias() += *SAb[s] *
                        ((-2.0 * Tp.array() * P1p) * tape.DA[l - 1][k].array() *
                         tape.DA[l - 1][m].array())
                            .matrix()
                            .transpose();
      SHb_prev[s] = &pool.get(W.cols(), N);
      SHb_prev[s]->noalias() = W.transpose() * *SAb[s];
    }
    Hb = Hb_prev;
    DHb = DHb_prev;
    SHb = SHb_prev;
  }
}

FieldJet NeuralField::jet(const Eigen::Ref<const Eigen::VectorXd>& x, int order,
                          bool mixed) const {
  int n = input_dim();
  require(x.size() == n, ErrorCode::dimension_mismatch, "point dimension mismatch");
  std::vector<std::pair<int, int>> slices;
  if (order >= 2) {
    for (int k = 0; k < n; ++k)
      for (int m = k; m < n; ++m)
        if (mixed || m == k) slices.emplace_back(k, m);
  }
  BatchJet bj = forward(x, order, nullptr, slices);
  int m_out = output_dim();
  FieldJet jet;
  jet.value = bj.value.col(0);
  if (order >= 1) {
    jet.grad_x.resize(m_out, n);
    for (int k = 0; k < n; ++k) jet.grad_x.col(k) = bj.grad[k].col(0);
  }
  if (order >= 2) {
    jet.hess_diag.resize(m_out, n);
    if (mixed) jet.hess_mixed.assign(m_out, Eigen::MatrixXd::Zero(n, n));
    for (std::size_t s = 0; s < slices.size(); ++s) {
      auto [k, m] = slices[s];
      if (k == m) jet.hess_diag.col(k) = bj.hess[s].col(0);
      if (mixed)
        for (int i = 0; i < m_out; ++i) {
          jet.hess_mixed[i](k, m) = bj.hess[s](i, 0);
          jet.hess_mixed[i](m, k) = bj.hess[s](i, 0);
        }
    }
  }
  return jet;
}

namespace {

template <typename T>
void put(std::ofstream& os, T v) {
  static_assert(std::endian::native == std::endian::little,
                "model files are little-endian");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

constexpr std::uint32_t kMagic = 0x444C464Eu;  // "NFLD"
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void NeuralField::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  put<std::uint32_t>(os, kMagic);
  put<std::uint32_t>(os, kFormatVersion);
  put<std::uint32_t>(os, transform_ == OutputTransform::squared ? 1u : 0u);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(widths_.size()));
  for (int w : widths_) put<std::uint32_t>(os, static_cast<std::uint32_t>(w));
  put<std::uint64_t>(os, seed_);
  Eigen::VectorXd theta = flatten();
  put<std::uint64_t>(os, static_cast<std::uint64_t>(theta.size()));
  os.write(reinterpret_cast<const char*>(theta.data()),
           static_cast<std::streamsize>(sizeof(double) * theta.size()));
  require(os.good(), ErrorCode::io_error, "write failed: " + path);
}

NeuralField NeuralField::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCode::io_error, "cannot open " + path);
  require(get<std::uint32_t>(is) == kMagic, ErrorCode::io_error,
          path + ": not a field model file");
  require(get<std::uint32_t>(is) == kFormatVersion, ErrorCode::io_error,
          path + ": unsupported format version");
  OutputTransform t =
      get<std::uint32_t>(is) == 1u ? OutputTransform::squared : OutputTransform::identity;
  auto nw = get<std::uint32_t>(is);
  require(nw >= 2 && nw < 1024, ErrorCode::io_error, path + ": corrupt widths");
  std::vector<int> widths(nw);
  for (auto& w : widths) w = static_cast<int>(get<std::uint32_t>(is));
  NeuralField f(widths, t);
  f.seed_ = get<std::uint64_t>(is);
  auto count = get<std::uint64_t>(is);
  require(count == static_cast<std::uint64_t>(f.parameter_count()), ErrorCode::io_error,
          path + ": parameter count mismatch");
  Eigen::VectorXd theta(static_cast<Eigen::Index>(count));
  is.read(reinterpret_cast<char*>(theta.data()),
          static_cast<std::streamsize>(sizeof(double) * count));
  require(is.good(), ErrorCode::io_error, path + ": truncated file");
  f.unflatten(theta);
  return f;
}

}  // namespace sdelearn
