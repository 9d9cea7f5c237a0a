#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oulmm/optim.hpp"

using namespace oulmm;

TEST_CASE("quadratic bowl is minimized to tight tolerance") {
  auto f = [](const VectorXd& x) {
    return (x(0) - 1.5) * (x(0) - 1.5) + 3.0 * (x(1) + 0.5) * (x(1) + 0.5);
  };
  OptimConfig cfg;
  const OptimResult r = nelder_mead(f, VectorXd::Zero(2), cfg);
  CHECK(r.converged);
  // the f-spread stopping rule (1e-10) bounds the x accuracy near sqrt(f_tol)
  CHECK(std::abs(r.x_min(0) - 1.5) < 1e-4);
  CHECK(std::abs(r.x_min(1) + 0.5) < 1e-4);
  CHECK(r.f_min < 1e-9);
}

TEST_CASE("Rosenbrock from the classic start") {
  auto f = [](const VectorXd& x) {
    const double a = 1.0 - x(0);
    const double b = x(1) - x(0) * x(0);
    return a * a + 100.0 * b * b;
  };
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  OptimConfig cfg;
  cfg.restarts = 2;
  const OptimResult r = nelder_mead(f, x0, cfg);
  CHECK((r.x_min - VectorXd::Ones(2)).norm() < 1e-4);
}

TEST_CASE("constant objective returns the starting point") {
  auto f = [](const VectorXd&) { return 4.2; };
  VectorXd x0(3);
  x0 << 1.0, -2.0, 0.5;
  const OptimResult r = nelder_mead(f, x0, OptimConfig{});
  CHECK(r.converged);
  CHECK((r.x_min - x0).norm() == 0.0);
  CHECK(r.f_min == 4.2);
}

TEST_CASE("non-finite objective values are treated as worst case") {
  auto f = [](const VectorXd& x) {
    if (x(0) < 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (x(0) - 0.2) * (x(0) - 0.2);
  };
  VectorXd x0(1);
  x0 << 1.0;
  const OptimResult r = nelder_mead(f, x0, OptimConfig{});
  CHECK(std::abs(r.x_min(0) - 0.2) < 1e-6);
}

TEST_CASE("best objective value along the trace is monotone") {
  auto f = [](const VectorXd& x) {
    return std::pow(x(0) - 2.0, 4) + std::pow(x(1) * x(0) - 1.0, 2);
  };
  VectorXd x0(2);
  x0 << -3.0, 4.0;
  const OptimResult r = nelder_mead(f, x0, OptimConfig{});
  REQUIRE(!r.trace.empty());
  for (size_t k = 1; k < r.trace.size(); ++k)
    CHECK(r.trace[k].f_best <= r.trace[k - 1].f_best);
}

TEST_CASE("optimizer output is deterministic") {
  auto f = [](const VectorXd& x) {
    return std::abs(x(0) - 0.3) + (x(1) + 1.0) * (x(1) + 1.0);
  };
  VectorXd x0(2);
  x0 << 5.0, 5.0;
  const OptimResult a = nelder_mead(f, x0, OptimConfig{});
  const OptimResult b = nelder_mead(f, x0, OptimConfig{});
  CHECK(a.f_min == b.f_min);
  CHECK((a.x_min - b.x_min).norm() == 0.0);
  CHECK(a.n_eval == b.n_eval);
}

TEST_CASE("budget exhaustion reports non-convergence") {
  auto f = [](const VectorXd& x) { return x.squaredNorm(); };
  OptimConfig cfg;
  cfg.max_iter = 3;
  cfg.max_eval = 10;
  cfg.restarts = 0;
  const OptimResult r = nelder_mead(f, VectorXd::Ones(4) * 10.0, cfg);
  CHECK(!r.converged);
}

TEST_CASE("transforms round-trip over random admissible parameters") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::vector<PsiParameterization> params = {
      {PsiParameterization::Kind::Scalar, 1},
      {PsiParameterization::Kind::DiagonalLog, 2},
      {PsiParameterization::Kind::LowerTriangularLogChol, 2}};
  for (const auto& psi : params) {
    const BoundTransform tf = BoundTransform::for_model(3, psi);
    for (int trial = 0; trial < 100; ++trial) {
      ThetaParams th;
      th.beta = VectorXd(3);
      for (int j = 0; j < 3; ++j) th.beta(j) = -5.0 + 10.0 * unif(rng);
      th.gamma = VectorXd(psi.gamma_dim());
      for (int j = 0; j < th.gamma.size(); ++j)
        th.gamma(j) = psi.kind == PsiParameterization::Kind::Scalar
                          ? 0.01 + 5.0 * unif(rng)
                          : -2.0 + 4.0 * unif(rng);
      th.lambda = 0.01 + 8.0 * unif(rng);
      th.sigma2 = 0.01 + 3.0 * unif(rng);
      th.sigma_eps2 = 0.01 + 3.0 * unif(rng);
      const VectorXd x = to_unconstrained(th, tf);
      const ThetaParams back =
          from_unconstrained(x, tf, 3, psi.gamma_dim());
      CHECK((back.to_vector() - th.to_vector()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("log coordinates respect the admissible box") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  BoundTransform tf = BoundTransform::for_model(1, psi);
  tf.box_lo = 1e-3;
  tf.box_hi = 1e2;
  VectorXd x(5);
  x << 0.0, -100.0, 100.0, 0.0, -30.0;  // beta, gamma, lambda, sigma2, eps2
  const ThetaParams th = from_unconstrained(x, tf, 1, 1);
  CHECK(th.gamma(0) >= 1e-3);
  CHECK(th.lambda <= 1e2);
  CHECK(th.sigma_eps2 >= 1e-3);
  th.check_admissible();
}

TEST_CASE("stage-2 transform covers only the covariance parameters") {
  const PsiParameterization psi{PsiParameterization::Kind::DiagonalLog, 2};
  const BoundTransform tf = BoundTransform::for_v(psi);
  CHECK(tf.dim() == psi.gamma_dim() + 3);
  VectorXd v(tf.dim());
  v << 0.3, -0.7, 1.1, 0.4, 0.2;  // gamma (free), lambda, sigma2, eps2
  const VectorXd x = tf.to_unconstrained(v);
  CHECK((tf.from_unconstrained(x) - v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("invalid configuration is rejected") {
  auto f = [](const VectorXd& x) { return x.squaredNorm(); };
  OptimConfig cfg;
  cfg.init_step = 0.0;
  CHECK_THROWS_AS(nelder_mead(f, VectorXd::Ones(2), cfg), input_error);
  CHECK_THROWS_AS(nelder_mead(f, VectorXd(), OptimConfig{}), input_error);
}
