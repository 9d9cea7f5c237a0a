#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oulmm/gqlf.hpp"
#include "oulmm/model.hpp"
#include "oulmm/simulate.hpp"

using namespace oulmm;

namespace {

Dataset small_dataset(int n_individuals, std::uint64_t seed,
                      const ThetaParams& theta, const PsiParameterization& psi,
                      int max_time = 8) {
  Scenario sc = Scenario::reference(n_individuals, seed);
  sc.theta_true = theta;
  sc.psi = psi;
  sc.random_effect.kind = RandomEffectLaw::Kind::GaussianVar;
  sc.design.n_i_min = 4;
  sc.design.n_i_max = 7;
  sc.design.time_pool = max_time;
  return simulate_dataset(sc);
}

ThetaParams reference_theta() {
  ThetaParams th;
  th.beta = VectorXd(3);
  th.beta << 2.0, -1.0, 0.5;
  th.gamma = VectorXd(1);
  th.gamma << 3.01;
  th.lambda = 1.3;
  th.sigma2 = 0.16;
  th.sigma_eps2 = 0.25;
  return th;
}

// Dense multivariate normal log density with explicit inverse/determinant.
double mvn_logpdf(const VectorXd& y, const VectorXd& mu, const MatrixXd& s) {
  const int n = static_cast<int>(y.size());
  const MatrixXd inv = s.inverse();
  const VectorXd r = y - mu;
  return -0.5 * (n * std::log(2.0 * M_PI) + std::log(s.determinant()) +
                 r.dot(inv * r));
}

}  // namespace

TEST_CASE("joint objective equals the sum of dense normal log densities") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const ThetaParams th = reference_theta();
  const Dataset data = small_dataset(6, 11, th, psi);
  double oracle = 0.0;
  for (const auto& ind : data.individuals)
    oracle += mvn_logpdf(ind.y, ind.x_mat * th.beta,
                         marginal_covariance(ind.z_mat, ind.times, th, psi));
  CHECK(joint_gqlf(data, th, psi) ==
        doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("joint objective is additive over individuals") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const ThetaParams th = reference_theta();
  const Dataset data = small_dataset(5, 3, th, psi);
  double partial = 0.0;
  for (const auto& ind : data.individuals) {
    Dataset one;
    one.p_beta = data.p_beta;
    one.p_b = data.p_b;
    one.individuals.push_back(ind);
    partial += joint_gqlf(one, th, psi);
  }
  CHECK(joint_gqlf(data, th, psi) ==
        doctest::Approx(partial).epsilon(1e-13));
}

TEST_CASE("score and information match finite differences of the objective") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const Dataset data = small_dataset(10, 5, reference_theta(), psi);
  const int pb = 3, pg = 1;
  const double root_n = std::sqrt(10.0);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int trial = 0; trial < 8; ++trial) {
    ThetaParams th;
    th.beta = VectorXd(pb);
    for (int j = 0; j < pb; ++j) th.beta(j) = -2.0 + 4.0 * unif(rng);
    th.gamma = VectorXd(pg);
    th.gamma << 0.5 + 3.0 * unif(rng);
    th.lambda = 0.5 + 2.0 * unif(rng);
    th.sigma2 = 0.1 + unif(rng);
    th.sigma_eps2 = 0.1 + unif(rng);
    const VectorXd x0 = th.to_vector();
    const int p = th.dim();

    auto h_at = [&](const VectorXd& x) {
      return joint_gqlf(data, ThetaParams::from_vector(x, pb, pg), psi);
    };
    VectorXd fd_grad(p);
    MatrixXd fd_hess(p, p);
    const double h = 1e-5;
    for (int j = 0; j < p; ++j) {
      VectorXd xp = x0, xm = x0;
      xp(j) += h;
      xm(j) -= h;
      fd_grad(j) = (h_at(xp) - h_at(xm)) / (2.0 * h);
      for (int k = 0; k <= j; ++k) {
        VectorXd xpp = x0, xpm = x0, xmp = x0, xmm = x0;
        xpp(j) += h; xpp(k) += h;
        xpm(j) += h; xpm(k) -= h;
        xmp(j) -= h; xmp(k) += h;
        xmm(j) -= h; xmm(k) -= h;
        fd_hess(j, k) = fd_hess(k, j) =
            (h_at(xpp) - h_at(xpm) - h_at(xmp) + h_at(xmm)) / (4.0 * h * h);
      }
    }
    const VectorXd analytic = root_n * quasi_score(data, th, psi).full();
    CHECK((analytic - fd_grad).norm() <
          1e-5 * std::max(1.0, fd_grad.norm()));
    const MatrixXd info = -10.0 * observed_information(data, th, psi);
    CHECK((info - fd_hess).norm() < 1e-4 * std::max(1.0, fd_hess.norm()));
  }
}

TEST_CASE("score has mean zero under the data-generating law") {
  // 4000 tiny Gaussian datasets at theta0: the Monte Carlo mean of every
  // score coordinate must sit within 4 standard errors of zero, and the
  // off-diagonal beta-v block of the observed information must too.
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const ThetaParams th = reference_theta();
  const int n_rep = 4000;
  const int p = th.dim();
  const int pb = th.p_beta();
  const int pv = th.p_v();

  Scenario sc = Scenario::reference(4, 77);
  sc.random_effect.kind = RandomEffectLaw::Kind::GaussianVar;
  sc.design.n_i_min = 3;
  sc.design.n_i_max = 5;
  sc.design.time_pool = 6;

  VectorXd mean = VectorXd::Zero(p), m2 = VectorXd::Zero(p);
  MatrixXd mean12 = MatrixXd::Zero(pb, pv), m2_12 = MatrixXd::Zero(pb, pv);
  for (int rep = 0; rep < n_rep; ++rep) {
    const Dataset data = simulate_dataset(sc, rep);
    const VectorXd s = quasi_score(data, th, psi).full();
    mean += s;
    m2 += s.cwiseProduct(s);
    const MatrixXd g12 =
        observed_information(data, th, psi).topRightCorner(pb, pv);
    mean12 += g12;
    m2_12 += g12.cwiseProduct(g12);
  }
  mean /= n_rep;
  mean12 /= n_rep;
  for (int j = 0; j < p; ++j) {
    const double se =
        std::sqrt((m2(j) / n_rep - mean(j) * mean(j)) / n_rep);
    CHECK(std::abs(mean(j)) < 4.0 * se);
  }
  for (int j = 0; j < pb; ++j)
    for (int k = 0; k < pv; ++k) {
      const double se = std::sqrt(
          (m2_12(j, k) / n_rep - mean12(j, k) * mean12(j, k)) / n_rep);
      CHECK(std::abs(mean12(j, k)) < 4.0 * se);
    }
}

TEST_CASE("Gaussian quartic-moment identity ties the two S22 code paths") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const ThetaParams th = reference_theta();
  const Dataset data = small_dataset(12, 21, th, psi, 12);
  const InfoMatrices info = sandwich_estimates(data, th, psi);
  const int pv = th.p_v();
  const MatrixXd gamma22 = info.gamma_n.bottomRightCorner(pv, pv);
  const MatrixXd s22 = gaussian_moment_s22(data, th, psi);
  CHECK((gamma22 - s22).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("plug-in information is exactly block diagonal") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const ThetaParams th = reference_theta();
  const Dataset data = small_dataset(8, 13, th, psi);
  const InfoMatrices info = sandwich_estimates(data, th, psi);
  const int pb = th.p_beta(), pv = th.p_v();
  CHECK(info.gamma_n.topRightCorner(pb, pv).cwiseAbs().maxCoeff() == 0.0);
  CHECK(info.gamma_n.bottomLeftCorner(pv, pb).cwiseAbs().maxCoeff() == 0.0);
  // and the expectation-form matches the sandwich Gamma block for beta
  const MatrixXd expected = expected_information(data, th, psi);
  CHECK((expected.topLeftCorner(pb, pb) - info.gamma_n.topLeftCorner(pb, pb))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("studentization inverts the avar square root") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const ThetaParams th = reference_theta();
  const Dataset data = small_dataset(60, 17, th, psi);
  const InfoMatrices info = sandwich_estimates(data, th, psi);
  const MatrixXd avar = info.avar();
  const int p = static_cast<int>(avar.rows());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss;
  VectorXd u(p);
  for (int j = 0; j < p; ++j) u(j) = gauss(rng);
  const VectorXd z = studentize(u, info);
  // z^T z == u^T avar^{-1} u
  CHECK(z.squaredNorm() ==
        doctest::Approx(u.dot(avar.inverse() * u)).epsilon(1e-8));
  // studentizing avar^{1/2} e recovers e
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(avar);
  const MatrixXd sqrt_avar = es.operatorSqrt();
  for (int j = 0; j < p; ++j) {
    const VectorXd e = VectorXd::Unit(p, j);
    CHECK((studentize(sqrt_avar * e, info) - e).norm() < 1e-8);
  }
}

TEST_CASE("information criteria follow their definitions") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const ThetaParams th = reference_theta();
  const Dataset data = small_dataset(9, 31, th, psi);
  const InfoMatrices info = sandwich_estimates(data, th, psi);
  const double h_n = joint_gqlf(data, th, psi);
  const auto [aic, bic] = information_criteria(data, h_n, th.dim(), info);
  const double penalty = (info.gamma_n.inverse() * info.s_n).trace();
  CHECK(aic == doctest::Approx(-2.0 * h_n + 2.0 * penalty).epsilon(1e-10));
  CHECK(bic ==
        doctest::Approx(-2.0 * h_n + th.dim() * std::log(9.0)).epsilon(1e-12));
}

TEST_CASE("quasi-KL diagnostics have the right signs and reference values") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const ThetaParams th0 = reference_theta();
  const Dataset data = small_dataset(10, 41, th0, psi);

  // identical parameters: everything vanishes
  const QuasiKl same = quasi_kl_diagnostics(data, th0, th0, psi);
  CHECK(same.y_n == 0.0);
  CHECK(std::abs(same.f_n1) < 1e-12);
  CHECK(same.f_n2 == 0.0);

  // perturbed parameters: F1 <= 0 by the log-det/trace inequality, F2 >= 0
  ThetaParams th = th0;
  th.beta(0) += 0.4;
  th.lambda = 2.2;
  th.sigma2 = 0.4;
  const QuasiKl diff = quasi_kl_diagnostics(data, th, th0, psi);
  CHECK(diff.f_n1 < 0.0);
  CHECK(diff.f_n2 > 0.0);
  CHECK(diff.y_n ==
        doctest::Approx((joint_gqlf(data, th, psi) -
                         joint_gqlf(data, th0, psi)) /
                        10.0));

  // mean-only perturbation leaves F1 at zero
  ThetaParams th_mean = th0;
  th_mean.beta(1) -= 0.3;
  const QuasiKl mean_only = quasi_kl_diagnostics(data, th_mean, th0, psi);
  CHECK(std::abs(mean_only.f_n1) < 1e-12);
  CHECK(mean_only.f_n2 > 0.0);
}

TEST_CASE("objective rejects inadmissible parameters and bad shapes") {
  const PsiParameterization psi{PsiParameterization::Kind::Scalar, 1};
  const ThetaParams th = reference_theta();
  const Dataset data = small_dataset(3, 51, th, psi);
  ThetaParams bad = th;
  bad.lambda = -1.0;
  CHECK_THROWS_AS(joint_gqlf(data, bad, psi), domain_error);
  ThetaParams wrong = th;
  wrong.beta = VectorXd::Ones(2);
  CHECK_THROWS_AS(joint_gqlf(data, wrong, psi), input_error);
}
