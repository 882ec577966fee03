#include "fgcl/numcore.hpp"

#include <array>

#include <algorithm>
#include <cmath>

namespace fgcl {

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, double weight_decay) {
  if (state.first_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractViolation("adam_step: parameter count changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() ||
        state.first_moment[i].rows() != p.value.rows() ||
        state.first_moment[i].cols() != p.value.cols()) {
      throw ContractViolation("adam_step: shape mismatch for parameter '" + p.name + "'");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (weight_decay != 0.0) p.value -= (lr * weight_decay) * p.value;
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + state.epsilon);
  }
}

double multistep_lr(std::int64_t epoch, double base_lr, std::span<const std::int64_t> milestones,
                    double gamma) {
  const auto passed = std::count_if(milestones.begin(), milestones.end(),
                                    [epoch](std::int64_t m) { return m <= epoch; });
  return base_lr * std::pow(gamma, static_cast<double>(passed));
}

EigenEstimate power_iteration(const Matrix& a, double tol, int max_iter) {
  if (a.rows() != a.cols()) throw ContractViolation("power_iteration: matrix must be square");
  if (!a.allFinite()) throw NumericError("power_iteration: non-finite matrix entries");
  const Eigen::Index n = a.rows();
  EigenEstimate out;
  if (n == 0 || a.cwiseAbs().maxCoeff() == 0.0) {
    out.converged = true;
    return out;
  }

  // Index-dependent start keeps the iterate off symmetric eigenvectors such as the constant vector.
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
  v.normalize();

  double lambda = v.dot(a * v);
  for (int it = 1; it <= max_iter; ++it) {
    Vector av = a * v;
    lambda = v.dot(av);
    const double residual = (av - lambda * v).norm();
    out.iterations = it;
    if (residual < tol) {
      out.converged = true;
      break;
    }
    const double norm = av.norm();
    if (norm == 0.0) {
      // v is in the null space; the Rayleigh quotient 0 is exact for this iterate.
      out.converged = true;
      lambda = 0.0;
      break;
    }
    v = av / norm;
  }
  out.value = lambda;
  return out;
}

std::vector<GradcheckEntry> gradcheck(const LossFn& loss_fn, std::span<Parameter* const> params,
                                      double eps, double kink_tol) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw ContractViolation("gradcheck: eps must lie in (0, 1e-3]");
  if (!(kink_tol >= 0.0)) throw ContractViolation("gradcheck: kink_tol must be >= 0");

  zero_grads(params);
  const double base = loss_fn(true);
  if (!std::isfinite(base)) throw NumericError("gradcheck: non-finite loss at the unperturbed point");

  std::vector<GradcheckEntry> report;
  report.reserve(params.size());
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    GradcheckEntry entry{p->name, 0.0, 0.0, 0, p->value.size()};
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = loss_fn(false);
      x = saved - eps;
      const double down = loss_fn(false);
      x = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("gradcheck: non-finite loss while perturbing '" + p->name + "'");
      }
      if (kink_tol > 0.0) {
        const double fwd = (up - base) / eps, bwd = (base - down) / eps;
        if (std::abs(fwd - bwd) > kink_tol * std::max({std::abs(fwd), std::abs(bwd), 1.0})) {
          ++entry.skipped;
          continue;
        }
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.data()[i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_relative_error = std::max(entry.max_relative_error, abs_err / denom);
    }
    report.push_back(entry);
  }
  return report;
}

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

std::uint64_t seed_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace fgcl
