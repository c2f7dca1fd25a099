#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdelearn {

inline constexpr const char* kVersion = "0.1.0";

/// Error taxonomy. Codes in the `validation` class map to CLI exit 2,
/// `numeric` class to exit 3.
enum class ErrorCode {
  invalid_architecture,
  non_finite_input,
  invalid_point,
  invalid_density,
  invalid_config,
  invalid_stability,
  unknown_observation,
  unsupported_diffusion,
  dimension_mismatch,
  domain_coverage,
  degenerate_bandwidth,
  degenerate_diffusion,
  support_mismatch,
  io_error,
  // numeric failures
  diverged_loss,
  diverged_gradient,
  divergent_density,
  blow_up,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

  bool is_numeric() const {
    switch (code_) {
      case ErrorCode::diverged_loss:
      case ErrorCode::diverged_gradient:
      case ErrorCode::divergent_density:
      case ErrorCode::blow_up:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

/// Axis-aligned box [lower_1,upper_1] x ... x [lower_n,upper_n].
struct Box {
  Eigen::VectorXd lower, upper;

  Box() = default;
  Box(Eigen::VectorXd lo, Eigen::VectorXd up)
      : lower(std::move(lo)), upper(std::move(up)) {
    require(lower.size() == upper.size() && (upper.array() > lower.array()).all(),
            ErrorCode::invalid_config, "box bounds must satisfy lower < upper");
  }

  static Box cube(int n, double lo, double up) {
    return Box(Eigen::VectorXd::Constant(n, lo), Eigen::VectorXd::Constant(n, up));
  }
  static Box interval(double lo, double up) { return cube(1, lo, up); }

  int dim() const { return static_cast<int>(lower.size()); }
  double volume() const { return (upper - lower).prod(); }
  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
  Eigen::VectorXd widths() const { return upper - lower; }

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x, double tol = 0.0) const {
    if (x.size() != lower.size()) return false;
    return (x.array() >= lower.array() - tol).all() &&
           (x.array() <= upper.array() + tol).all();
  }
};

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.allFinite();
}

}  // namespace sdelearn
