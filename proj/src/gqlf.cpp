#include "oulmm/gqlf.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace oulmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Per-individual factorization and residual, valid for one (theta, individual)
// pair within a single evaluation. Never forms Sigma^{-1} explicitly.
struct IndividualWork {
  Eigen::LLT<MatrixXd> llt;
  VectorXd r;       // Y - X beta
  VectorXd s;       // Sigma^{-1} r
  double logdet = 0.0;

  void init(const IndividualData& ind, const ThetaParams& theta,
            const PsiParameterization& param, int index) {
    if (ind.x_mat.cols() != theta.beta.size())
      throw input_error("beta dimension disagrees with the design matrix");
    const MatrixXd sigma =
        marginal_covariance(ind.z_mat, ind.times, theta, param);
    llt.compute(sigma);
    if (llt.info() != Eigen::Success)
      throw numerical_error("covariance factorization failed for individual " +
                            std::to_string(index));
    logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    r = ind.y - ind.x_mat * theta.beta;
    s = llt.solve(r);
  }
};

}  // namespace

MatrixXd InfoMatrices::avar() const {
  Eigen::LLT<MatrixXd> llt(gamma_n);
  if (llt.info() != Eigen::Success)
    throw numerical_error(
        "singular quasi-information; consider a larger N or a "
        "reparameterization");
  const MatrixXd gi_s = llt.solve(s_n);
  return llt.solve(gi_s.transpose()).transpose();
}

double joint_gqlf(const Dataset& data, const ThetaParams& theta,
                  const PsiParameterization& param) {
  theta.check_admissible();
  double total = 0.0;
  IndividualWork w;
  for (int i = 0; i < data.n_individuals(); ++i) {
    const auto& ind = data.individuals[i];
    w.init(ind, theta, param, i);
    total += -0.5 * (ind.n() * kLog2Pi + w.logdet + w.r.dot(w.s));
  }
  return total;
}

ScoreVector quasi_score(const Dataset& data, const ThetaParams& theta,
                        const PsiParameterization& param) {
  theta.check_admissible();
  const int pb = data.p_beta;
  const int pv = theta.p_v();
  const double root_n = std::sqrt(static_cast<double>(data.n_individuals()));
  ScoreVector score;
  score.beta_block = VectorXd::Zero(pb);
  score.v_block = VectorXd::Zero(pv);
  IndividualWork w;
  for (int i = 0; i < data.n_individuals(); ++i) {
    const auto& ind = data.individuals[i];
    w.init(ind, theta, param, i);
    score.beta_block.noalias() += ind.x_mat.transpose() * w.s;
    for (int j = 0; j < pv; ++j) {
      const MatrixXd dj =
          marginal_covariance_dv(ind.z_mat, ind.times, theta, param, j);
      const double quad = w.s.dot(dj * w.s);
      const double tr = w.llt.solve(dj).trace();
      score.v_block(j) += 0.5 * (quad - tr);
    }
  }
  score.beta_block /= root_n;
  score.v_block /= root_n;
  return score;
}

MatrixXd observed_information(const Dataset& data, const ThetaParams& theta,
                              const PsiParameterization& param) {
  theta.check_admissible();
  const int pb = data.p_beta;
  const int pv = theta.p_v();
  const int p = pb + pv;
  const int n_ind = data.n_individuals();
  MatrixXd gamma = MatrixXd::Zero(p, p);
  IndividualWork w;
  std::vector<MatrixXd> dj(pv), bj(pv);
  std::vector<VectorXd> wj(pv), uj(pv);
  for (int i = 0; i < n_ind; ++i) {
    const auto& ind = data.individuals[i];
    w.init(ind, theta, param, i);
    for (int j = 0; j < pv; ++j) {
      dj[j] = marginal_covariance_dv(ind.z_mat, ind.times, theta, param, j);
      bj[j] = w.llt.solve(dj[j]);
      wj[j].noalias() = dj[j] * w.s;
      uj[j] = w.llt.solve(wj[j]);
    }
    // beta-beta block: X^T Sigma^{-1} X (mu linear in beta)
    gamma.topLeftCorner(pb, pb).noalias() +=
        ind.x_mat.transpose() * w.llt.solve(ind.x_mat);
    // beta-v block: X^T A_j r
    for (int j = 0; j < pv; ++j)
      gamma.block(0, pb + j, pb, 1).noalias() += ind.x_mat.transpose() * uj[j];
    // v-v block
    for (int j = 0; j < pv; ++j) {
      for (int k = j; k < pv; ++k) {
        const MatrixXd d2 = marginal_covariance_d2v(ind.z_mat, ind.times,
                                                    theta, param, j, k);
        const double term1 = wj[j].dot(uj[k]);
        const double term2 = -0.5 * w.s.dot(d2 * w.s);
        const double term3 =
            0.5 * (-(bj[j] * bj[k]).trace() + w.llt.solve(d2).trace());
        gamma(pb + j, pb + k) += term1 + term2 + term3;
      }
    }
  }
  for (int j = 0; j < pv; ++j)
    for (int k = j + 1; k < pv; ++k)
      gamma(pb + k, pb + j) = gamma(pb + j, pb + k);
  gamma.bottomLeftCorner(pv, pb) = gamma.topRightCorner(pb, pv).transpose();
  gamma /= static_cast<double>(n_ind);
  return gamma;
}

MatrixXd expected_information(const Dataset& data, const ThetaParams& theta,
                              const PsiParameterization& param) {
  theta.check_admissible();
  const int pb = data.p_beta;
  const int pv = theta.p_v();
  const int p = pb + pv;
  const int n_ind = data.n_individuals();
  MatrixXd gamma = MatrixXd::Zero(p, p);
  IndividualWork w;
  std::vector<MatrixXd> bj(pv);
  for (int i = 0; i < n_ind; ++i) {
    const auto& ind = data.individuals[i];
    w.init(ind, theta, param, i);
    gamma.topLeftCorner(pb, pb).noalias() +=
        ind.x_mat.transpose() * w.llt.solve(ind.x_mat);
    for (int j = 0; j < pv; ++j)
      bj[j] = w.llt.solve(
          marginal_covariance_dv(ind.z_mat, ind.times, theta, param, j));
    for (int j = 0; j < pv; ++j)
      for (int k = j; k < pv; ++k)
        gamma(pb + j, pb + k) += 0.5 * (bj[j] * bj[k]).trace();
  }
  for (int j = 0; j < pv; ++j)
    for (int k = j + 1; k < pv; ++k)
      gamma(pb + k, pb + j) = gamma(pb + j, pb + k);
  gamma /= static_cast<double>(n_ind);
  return gamma;
}

InfoMatrices sandwich_estimates(const Dataset& data,
                                const ThetaParams& theta_hat,
                                const PsiParameterization& param) {
  theta_hat.check_admissible();
  const int pb = data.p_beta;
  const int pv = theta_hat.p_v();
  const int p = pb + pv;
  const int n_ind = data.n_individuals();
  MatrixXd s = MatrixXd::Zero(p, p);
  MatrixXd g = MatrixXd::Zero(p, p);
  IndividualWork w;
  VectorXd quad(pv), tr(pv);
  std::vector<MatrixXd> bj(pv);
  for (int i = 0; i < n_ind; ++i) {
    const auto& ind = data.individuals[i];
    w.init(ind, theta_hat, param, i);
    for (int j = 0; j < pv; ++j) {
      const MatrixXd dj =
          marginal_covariance_dv(ind.z_mat, ind.times, theta_hat, param, j);
      bj[j] = w.llt.solve(dj);
      quad(j) = w.s.dot(dj * w.s);  // r^T A_j r
      tr(j) = bj[j].trace();
    }
    const MatrixXd xtsx = ind.x_mat.transpose() * w.llt.solve(ind.x_mat);
    const VectorXd xs = ind.x_mat.transpose() * w.s;  // X^T Sigma^{-1} r
    s.topLeftCorner(pb, pb) += xtsx;
    g.topLeftCorner(pb, pb) += xtsx;
    for (int j = 0; j < pv; ++j) {
      s.block(0, pb + j, pb, 1) += 0.5 * xs * quad(j);
      for (int k = j; k < pv; ++k) {
        s(pb + j, pb + k) += 0.25 * (quad(j) * quad(k) - tr(j) * tr(k));
        g(pb + j, pb + k) += 0.5 * (bj[j] * bj[k]).trace();
      }
    }
  }
  for (int j = 0; j < pv; ++j) {
    for (int k = j + 1; k < pv; ++k) {
      s(pb + k, pb + j) = s(pb + j, pb + k);
      g(pb + k, pb + j) = g(pb + j, pb + k);
    }
  }
  s.bottomLeftCorner(pv, pb) = s.topRightCorner(pb, pv).transpose();
  s /= static_cast<double>(n_ind);
  g /= static_cast<double>(n_ind);
  InfoMatrices out;
  out.gamma_n = g;
  out.s_n = s;
  return out;
}

MatrixXd gaussian_moment_s22(const Dataset& data, const ThetaParams& theta,
                             const PsiParameterization& param) {
  // Replaces the quadratic-form expectations by their Gaussian moments:
  //   E[q_j q_k] = tr(A_j Sigma) tr(A_k Sigma) + 2 tr(A_j Sigma A_k Sigma)
  // and evaluates the three-term display literally with explicit A_j.
  theta.check_admissible();
  const int pv = theta.p_v();
  const int n_ind = data.n_individuals();
  MatrixXd s22 = MatrixXd::Zero(pv, pv);
  for (int i = 0; i < n_ind; ++i) {
    const auto& ind = data.individuals[i];
    const MatrixXd sigma =
        marginal_covariance(ind.z_mat, ind.times, theta, param);
    const MatrixXd sigma_inv = sigma.inverse();
    std::vector<MatrixXd> aj(pv);
    for (int j = 0; j < pv; ++j)
      aj[j] = sigma_inv *
              marginal_covariance_dv(ind.z_mat, ind.times, theta, param, j) *
              sigma_inv;
    for (int j = 0; j < pv; ++j) {
      for (int k = 0; k < pv; ++k) {
        const double tj = (aj[j] * sigma).trace();
        const double tk = (aj[k] * sigma).trace();
        const double cross = (aj[j] * sigma * aj[k] * sigma).trace();
        s22(j, k) += 0.25 * ((tj * tk + 2.0 * cross) - tj * tk);
      }
    }
  }
  return s22 / static_cast<double>(n_ind);
}

VectorXd studentize(const VectorXd& u_scaled, const InfoMatrices& info) {
  const MatrixXd avar = info.avar();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(avar);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw numerical_error("asymptotic covariance is not positive definite");
  const VectorXd inv_sqrt = es.eigenvalues().array().rsqrt();
  return es.eigenvectors() * inv_sqrt.asDiagonal() *
         es.eigenvectors().transpose() * u_scaled;
}

std::pair<double, double> information_criteria(const Dataset& data,
                                               double objective_at_optimum,
                                               int p,
                                               const InfoMatrices& info) {
  Eigen::LLT<MatrixXd> llt(info.gamma_n);
  if (llt.info() != Eigen::Success)
    throw numerical_error("singular quasi-information in AIC penalty");
  const double penalty = llt.solve(info.s_n).trace();
  const double aic = -2.0 * objective_at_optimum + 2.0 * penalty;
  const double bic = -2.0 * objective_at_optimum +
                     p * std::log(static_cast<double>(data.n_individuals()));
  return {aic, bic};
}

QuasiKl quasi_kl_diagnostics(const Dataset& data, const ThetaParams& theta,
                             const ThetaParams& theta_ref,
                             const PsiParameterization& param) {
  theta.check_admissible();
  theta_ref.check_admissible();
  const int n_ind = data.n_individuals();
  QuasiKl out;
  out.y_n = (joint_gqlf(data, theta, param) -
             joint_gqlf(data, theta_ref, param)) /
            n_ind;
  double f1 = 0.0, f2 = 0.0;
  for (int i = 0; i < n_ind; ++i) {
    const auto& ind = data.individuals[i];
    const MatrixXd sigma =
        marginal_covariance(ind.z_mat, ind.times, theta, param);
    const MatrixXd sigma_ref =
        marginal_covariance(ind.z_mat, ind.times, theta_ref, param);
    Eigen::LLT<MatrixXd> llt(sigma);
    Eigen::LLT<MatrixXd> llt_ref(sigma_ref);
    if (llt.info() != Eigen::Success || llt_ref.info() != Eigen::Success)
      throw numerical_error("factorization failed in quasi-KL diagnostics");
    const double logdet =
        2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double logdet_ref =
        2.0 * llt_ref.matrixLLT().diagonal().array().log().sum();
    f1 += logdet_ref - logdet -
          (llt.solve(sigma_ref).trace() - static_cast<double>(ind.n()));
    const VectorXd dmu = ind.x_mat * (theta.beta - theta_ref.beta);
    f2 += dmu.dot(llt.solve(dmu));
  }
  out.f_n1 = f1 / n_ind;
  out.f_n2 = f2 / n_ind;
  return out;
}

}  // namespace oulmm
