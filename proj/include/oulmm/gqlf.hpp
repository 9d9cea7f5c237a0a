#ifndef OULMM_GQLF_HPP
#define OULMM_GQLF_HPP

#include "oulmm/model.hpp"
#include "oulmm/types.hpp"

namespace oulmm {

// Quasi-score Delta_N(theta) = N^{-1/2} d/dtheta H_N(theta), split into the
// fixed-effect and covariance-parameter blocks.
struct ScoreVector {
  VectorXd beta_block;
  VectorXd v_block;

  VectorXd full() const {
    VectorXd out(beta_block.size() + v_block.size());
    out << beta_block, v_block;
    return out;
  }
};

// Plug-in sandwich ingredients: gamma_n is the block-diagonal quasi-information
// estimate, s_n the score-variability estimate.
struct InfoMatrices {
  MatrixXd gamma_n;
  MatrixXd s_n;

  // Gamma^{-1} S Gamma^{-1}, the asymptotic covariance of sqrt(N) * u_hat.
  MatrixXd avar() const;
};

struct FitResult {
  ThetaParams theta_hat;
  double objective = 0.0;
  MatrixXd avar;
  VectorXd std_errors;
  double aic = 0.0;
  double bic = 0.0;
  bool converged = false;
  long n_eval = 0;
  double wall_time_s = 0.0;
  // reporting on the SD scale for (sigma, sigma_eps), delta-method SEs
  double sigma_sd = 0.0, sigma_sd_se = 0.0;
  double sigma_eps_sd = 0.0, sigma_eps_sd_se = 0.0;
};

// Joint Gaussian quasi-log-likelihood
//   H_N(theta) = sum_i log phi_{n_i}(Y_i; mu_i(beta), Sigma_i(v)).
double joint_gqlf(const Dataset& data, const ThetaParams& theta,
                  const PsiParameterization& param);

// Analytic quasi-score; beta block sum_i X_i^T Sigma_i^{-1} r_i / sqrt(N),
// v block the half-trace form with analytic dSigma/dv_j.
ScoreVector quasi_score(const Dataset& data, const ThetaParams& theta,
                        const PsiParameterization& param);

// Gamma_N(theta) = -N^{-1} d^2 H_N, assembled analytically block by block.
MatrixXd observed_information(const Dataset& data, const ThetaParams& theta,
                              const PsiParameterization& param);

// Plug-in (S_hat, Gamma_hat) at a fitted value; Gamma_hat is exactly
// block-diagonal by construction.
InfoMatrices sandwich_estimates(const Dataset& data,
                                const ThetaParams& theta_hat,
                                const PsiParameterization& param);

// Expectation-form Gamma_hat blocks at theta, also used as the plug-in for
// the population information in expansion diagnostics.
MatrixXd expected_information(const Dataset& data, const ThetaParams& theta,
                              const PsiParameterization& param);

// Gaussian-moment form of S_22 computed through the quartic-moment identity
// for Gaussian quadratic forms; an independent route that must coincide with
// the Gamma_hat_22 block when the model is treated as Gaussian.
MatrixXd gaussian_moment_s22(const Dataset& data, const ThetaParams& theta,
                             const PsiParameterization& param);

// (Gamma^{-1} S Gamma^{-1})^{-1/2} u via symmetric eigendecomposition;
// asymptotically N_p(0, I_p) when u = sqrt(N)(theta_hat - theta_0).
VectorXd studentize(const VectorXd& u_scaled, const InfoMatrices& info);

// AIC = -2 H_N + 2 tr(Gamma^{-1} S), BIC = -2 H_N + p log N.
std::pair<double, double> information_criteria(const Dataset& data,
                                               double objective_at_optimum,
                                               int p,
                                               const InfoMatrices& info);

struct QuasiKl {
  double y_n = 0.0;   // N^{-1} (H_N(theta) - H_N(theta_ref))
  double f_n1 = 0.0;  // log-det/trace divergence of the covariance part (<= 0)
  double f_n2 = 0.0;  // weighted mean-squared mean discrepancy (>= 0)
};
QuasiKl quasi_kl_diagnostics(const Dataset& data, const ThetaParams& theta,
                             const ThetaParams& theta_ref,
                             const PsiParameterization& param);

}  // namespace oulmm

#endif
