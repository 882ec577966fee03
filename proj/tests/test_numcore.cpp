#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fgcl/numcore.hpp"
#include "support.hpp"

#include <cmath>

using namespace fgcl;

TEST_CASE("adam_step matches a hand-computed first step") {
  Parameter p("w", Matrix::Constant(1, 2, 1.0));
  p.grad << 0.5, -2.0;
  Parameter* refs[] = {&p};
  AdamState st;
  adam_step(refs, st, 0.1, 0.0);
  // First step: m_hat = g, v_hat = g^2, delta = lr * g / (|g| + eps).
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(p.value(0, 1) == doctest::Approx(1.0 + 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
  CHECK(st.step == 1);
}

TEST_CASE("adam_step applies decoupled weight decay before the moment update") {
  Parameter p("w", Matrix::Constant(1, 1, 2.0));
  p.grad.setZero();
  Parameter* refs[] = {&p};
  AdamState st;
  adam_step(refs, st, 0.5, 0.1);
  CHECK(p.value(0, 0) == doctest::Approx(2.0 - 0.5 * 0.1 * 2.0).epsilon(1e-12));
}

TEST_CASE("adam_step two steps follow the bias-corrected recursion") {
  Parameter p("w", Matrix::Zero(1, 1));
  Parameter* refs[] = {&p};
  AdamState st;
  double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 1.0 : -3.0;
    p.grad(0, 0) = g;
    adam_step(refs, st, 0.01, 0.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(p.value(0, 0) == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("adam_step rejects a shape change between steps") {
  Parameter p("w", Matrix::Zero(2, 2));
  Parameter* refs[] = {&p};
  AdamState st;
  adam_step(refs, st, 0.1, 0.0);
  p = Parameter("w", Matrix::Zero(3, 2));
  CHECK_THROWS_AS(adam_step(refs, st, 0.1, 0.0), ContractViolation);
}

TEST_CASE("multistep_lr decays at each milestone") {
  const std::vector<std::int64_t> ms{200, 400, 600};
  CHECK(multistep_lr(0, 1e-3, ms, 0.5) == doctest::Approx(1e-3));
  CHECK(multistep_lr(199, 1e-3, ms, 0.5) == doctest::Approx(1e-3));
  CHECK(multistep_lr(200, 1e-3, ms, 0.5) == doctest::Approx(5e-4));
  CHECK(multistep_lr(450, 1e-3, ms, 0.5) == doctest::Approx(2.5e-4));
  CHECK(multistep_lr(699, 1e-3, ms, 0.5) == doctest::Approx(1.25e-4));
}

TEST_CASE("power_iteration agrees with a dense eigensolver") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = testing::random_matrix(9, 9, rng);
    const Matrix s = a * a.transpose();
    const auto est = power_iteration(s);
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    CHECK(est.converged);
    CHECK(est.value == doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-7));
  }
  const auto zero = power_iteration(Matrix::Zero(4, 4));
  CHECK(zero.value == 0.0);
  CHECK(zero.converged);
}

TEST_CASE("gradcheck accepts a correct gradient and flags a wrong one") {
  Rng rng(1);
  Parameter p("x", testing::random_matrix(3, 2, rng));
  Parameter* refs[] = {&p};
  const LossFn good = [&](bool with_grad) {
    if (with_grad) p.grad += 2.0 * p.value + Matrix::Constant(3, 2, 1.0);
    return p.value.squaredNorm() + p.value.sum();
  };
  const auto ok = gradcheck(good, refs);
  REQUIRE(ok.size() == 1);
  CHECK(ok[0].max_relative_error < 1e-6);

  const LossFn bad = [&](bool with_grad) {
    if (with_grad) p.grad += p.value;
    return p.value.squaredNorm();
  };
  CHECK(gradcheck(bad, refs)[0].max_relative_error > 0.1);
}

TEST_CASE("gradcheck rejects a step outside (0, 1e-3] and non-finite losses") {
  Parameter p("x", Matrix::Ones(1, 1));
  Parameter* refs[] = {&p};
  const LossFn f = [&](bool) { return p.value(0, 0); };
  CHECK_THROWS_AS(gradcheck(f, refs, 0.0), ContractViolation);
  CHECK_THROWS_AS(gradcheck(f, refs, 1e-2), ContractViolation);
  const LossFn nan = [&](bool) { return std::nan(""); };
  CHECK_THROWS_AS(gradcheck(nan, refs), NumericError);
}

TEST_CASE("glorot_uniform stays inside its bound and is seed-deterministic") {
  Rng a(5), b(5);
  const Matrix m = glorot_uniform(30, 20, a);
  const double bound = std::sqrt(6.0 / 50.0);
  CHECK(m.cwiseAbs().maxCoeff() <= bound);
  CHECK(m == glorot_uniform(30, 20, b));
}

TEST_CASE("seed_stream separates streams deterministically") {
  CHECK(seed_stream(1, 0) == seed_stream(1, 0));
  CHECK(seed_stream(1, 0) != seed_stream(1, 1));
  CHECK(seed_stream(1, 0) != seed_stream(2, 0));
}

TEST_CASE("gradcheck kink screening skips kinks but still catches wrong gradients") {
  Parameter p("p", Matrix::Constant(1, 2, 1.0));
  p.value(0, 0) = 3e-6;  // |x| has its kink within eps of this entry
  Parameter* refs[] = {&p};
  const LossFn kinked = [&](bool with_grad) {
    if (with_grad) {
      p.grad(0, 0) += p.value(0, 0) > 0 ? 1.0 : -1.0;
      p.grad(0, 1) += 2.0 * p.value(0, 1);
    }
    return std::abs(p.value(0, 0)) + p.value(0, 1) * p.value(0, 1);
  };
  CHECK(gradcheck(kinked, refs)[0].max_relative_error > 0.1);
  const auto screened = gradcheck(kinked, refs, 1e-5, 1e-3)[0];
  CHECK(screened.skipped == 1);
  CHECK(screened.total == 2);
  CHECK(screened.max_relative_error < 1e-8);

  // A smooth loss with a wrong analytic gradient is never screened.
  const LossFn wrong = [&](bool with_grad) {
    if (with_grad) p.grad += 3.0 * p.value;
    return p.value.squaredNorm();
  };
  p.value(0, 0) = 0.7;
  const auto bad = gradcheck(wrong, refs, 1e-5, 1e-3)[0];
  CHECK(bad.skipped == 0);
  CHECK(bad.max_relative_error > 0.1);
}
