#ifndef OULMM_ESTIMATORS_HPP
#define OULMM_ESTIMATORS_HPP

#include "oulmm/gqlf.hpp"
#include "oulmm/optim.hpp"

namespace oulmm {

struct FitConfig {
  PsiParameterization psi;
  OptimConfig optim;
  double box_lo = 1e-4;
  double box_hi = 1e4;
};

struct StepwiseResult {
  VectorXd beta1;       // stage-1 least squares
  ThetaParams v_tilde;  // stage-2 covariance parameters (beta slot = beta1)
  VectorXd beta_tilde;  // stage-3 GLS refit
  double stage_times_s[3] = {0.0, 0.0, 0.0};
  FitResult fit;        // assembled at (beta_tilde, v_tilde)
};

enum class EstimatorKind { Joint, Stepwise };

struct ExpansionDiag {
  VectorXd g1;
  VectorXd g2;
  VectorXd residual;        // sqrt(N)(est - theta0) - g1 - g2/sqrt(N)
  VectorXd u_scaled;        // sqrt(N)(est - theta0)
};

// Maximizes the joint GQLF over the transformed parameter space and attaches
// sandwich covariance, standard errors and information criteria.
FitResult fit_joint(const Dataset& data, const FitConfig& config);

// Stage 1: (sum X_i^T X_i)^{-1} sum X_i^T Y_i by SPD solve.
VectorXd stage1_ols(const Dataset& data);

// Stage 2: maximize v -> H_N(beta1, v) over the covariance parameters only.
ThetaParams stage2_covariance(const Dataset& data, const VectorXd& beta1,
                              const FitConfig& config, bool* converged,
                              long* n_eval);

// Stage 3: GLS normal equations
// (sum X_i^T Sigma_i^{-1} X_i)^{-1} sum X_i^T Sigma_i^{-1} Y_i.
VectorXd stage3_gls(const Dataset& data, const ThetaParams& v_tilde,
                    const PsiParameterization& param);

StepwiseResult fit_stepwise(const Dataset& data, const FitConfig& config);

// Second-order expansion diagnostics at a known theta0 (simulation truth).
// Population information matrices are replaced by their plug-in estimates at
// theta0; third-derivative tensors come from central finite differences of
// the analytic Hessian.
ExpansionDiag expansion_terms(const Dataset& data, const ThetaParams& theta0,
                              EstimatorKind kind, const FitConfig& config);

// Default starting point: stage-1 OLS for beta; the stage-1 residual
// variance split evenly across the random effect, the stationary OU variance
// sigma2/(2 lambda) and the measurement error, with lambda = 1.
ThetaParams default_start(const Dataset& data, const PsiParameterization& psi);

}  // namespace oulmm

#endif
