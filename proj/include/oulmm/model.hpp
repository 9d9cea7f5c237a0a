#ifndef OULMM_MODEL_HPP
#define OULMM_MODEL_HPP

#include "oulmm/types.hpp"

namespace oulmm {

// Covariance matrix of the integrated OU process observed at the given
// times (strictly increasing, positive):
//   H_jk = sigma2/(2 lambda^3) *
//          (2 lambda min(t_j,t_k) + e^{-l t_j} + e^{-l t_k} - 1 - e^{-l|t_j-t_k|})
MatrixXd intou_covariance(const VectorXd& times, double lambda, double sigma2);

// First and second partial derivatives of H with respect to lambda; the
// sigma2 derivative is H/sigma2 (H is linear in sigma2).
MatrixXd intou_covariance_dlambda(const VectorXd& times, double lambda,
                                  double sigma2);
MatrixXd intou_covariance_d2lambda(const VectorXd& times, double lambda,
                                   double sigma2);

// Psi(gamma) and its first/second derivatives in gamma.
MatrixXd psi_matrix(const VectorXd& gamma, const PsiParameterization& param);
MatrixXd psi_matrix_dgamma(const VectorXd& gamma,
                           const PsiParameterization& param, int j);
MatrixXd psi_matrix_d2gamma(const VectorXd& gamma,
                            const PsiParameterization& param, int j, int k);

// mu_i(beta) = X_i beta
VectorXd mean_vector(const MatrixXd& x_mat, const VectorXd& beta);

// Sigma_i(v) = Z Psi(gamma) Z^T + H(lambda, sigma2) + sigma_eps2 I
MatrixXd marginal_covariance(const MatrixXd& z_mat, const VectorXd& times,
                             const ThetaParams& theta,
                             const PsiParameterization& param);

// dSigma/dv_j for v = (gamma_1..gamma_pg, lambda, sigma2, sigma_eps2).
MatrixXd marginal_covariance_dv(const MatrixXd& z_mat, const VectorXd& times,
                                const ThetaParams& theta,
                                const PsiParameterization& param, int j);

// d^2 Sigma / dv_j dv_k. Cross blocks between gamma, (lambda, sigma2) and
// sigma_eps2 vanish except the (lambda, sigma2) pair.
MatrixXd marginal_covariance_d2v(const MatrixXd& z_mat, const VectorXd& times,
                                 const ThetaParams& theta,
                                 const PsiParameterization& param, int j,
                                 int k);

}  // namespace oulmm

#endif
