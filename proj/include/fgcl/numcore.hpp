#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgcl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

/// A caller broke a documented precondition (shape mismatch, empty input, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A computation produced a non-finite value or could not be completed numerically.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system or format failure; the message carries the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A trainable matrix with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParameterRefs = std::vector<Parameter*>;

void zero_grads(std::span<Parameter* const> params);

/// Adam moments for one ordered parameter list. One training loop owns one state.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// Adam update with decoupled weight decay: value <- value - lr*wd*value, then the Adam delta.
/// Moments are created on the first call; later calls must pass identically shaped parameters.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, double weight_decay);

/// base_lr * gamma^(number of milestones <= epoch).
double multistep_lr(std::int64_t epoch, double base_lr, std::span<const std::int64_t> milestones,
                    double gamma);

struct EigenEstimate {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Dominant eigenvalue of a symmetric matrix by power iteration with a Rayleigh-quotient
/// estimate. Converged when |Av - lambda v| / |v| < tol.
EigenEstimate power_iteration(const Matrix& a, double tol = 1e-9, int max_iter = 20000);

struct GradcheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  Eigen::Index skipped = 0;  ///< entries screened out as non-smooth at scale eps
  Eigen::Index total = 0;
};

/// Evaluates the loss at the current parameter values. When `with_grad` is set the callee
/// must also accumulate d(loss)/d(param) into each Parameter::grad.
using LossFn = std::function<double(bool with_grad)>;

/// Compares analytic gradients to central finite differences, entry by entry.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
/// With kink_tol > 0, entries whose forward and backward differences disagree by more than
/// kink_tol * max(|fwd|, |bwd|, 1) sit within eps of a kink or a sharp bend. They are skipped
/// and counted. The screen uses the loss alone, never the analytic gradient.
std::vector<GradcheckEntry> gradcheck(const LossFn& loss_fn, std::span<Parameter* const> params,
                                      double eps = 1e-5, double kink_tol = 0.0);

/// Independent 64-bit seed for sub-stream `stream` of `seed`.
std::uint64_t seed_stream(std::uint64_t seed, std::uint64_t stream);

/// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace fgcl
