#include "oulmm/estimators.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace oulmm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void attach_inference(const Dataset& data, const PsiParameterization& psi,
                      FitResult* fit) {
  const int p = fit->theta_hat.dim();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  fit->sigma_sd = std::sqrt(fit->theta_hat.sigma2);
  fit->sigma_eps_sd = std::sqrt(fit->theta_hat.sigma_eps2);
  try {
    const InfoMatrices info = sandwich_estimates(data, fit->theta_hat, psi);
    // A numerically singular quasi-information marks a ridge of the
    // objective (typically lambda -> infinity with sigma^2/lambda^2 held
    // fixed, the Brownian limit of the system noise) where no interior
    // maximum exists: flag instead of reporting meaningless inference.
    {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(info.gamma_n);
      if (es.info() != Eigen::Success ||
          !(es.eigenvalues().minCoeff() >
            1e-10 * es.eigenvalues().maxCoeff()))
        throw numerical_error("quasi-information numerically singular");
    }
    fit->avar = info.avar();
    const int n = data.n_individuals();
    fit->std_errors =
        (fit->avar.diagonal().array().max(0.0) / n).sqrt().matrix();
    const auto [aic, bic] =
        information_criteria(data, fit->objective, p, info);
    fit->aic = aic;
    fit->bic = bic;
  } catch (const numerical_error&) {
    // a singular plug-in information at the optimum marks the fit as
    // unreliable rather than aborting the caller
    fit->avar = MatrixXd::Constant(p, p, nan);
    fit->std_errors = VectorXd::Constant(p, nan);
    fit->aic = nan;
    fit->bic = nan;
    fit->converged = false;
    fit->sigma_sd_se = nan;
    fit->sigma_eps_sd_se = nan;
    return;
  }
  // SD-scale reporting with delta-method standard errors
  const int iv = fit->theta_hat.p_beta() + fit->theta_hat.p_gamma() + 1;
  fit->sigma_sd_se = fit->std_errors(iv) / (2.0 * fit->sigma_sd);
  fit->sigma_eps_sd_se = fit->std_errors(iv + 1) / (2.0 * fit->sigma_eps_sd);
}

// Third-derivative tensor d^3 H_N(theta0) by central differences of the
// analytic Hessian; step eps^{1/3} * max(1, |theta_c|) per coordinate.
std::vector<MatrixXd> third_derivative_tensor(const Dataset& data,
                                              const ThetaParams& theta0,
                                              const PsiParameterization& psi) {
  const int p = theta0.dim();
  const int pb = theta0.p_beta();
  const int pg = theta0.p_gamma();
  const double n = data.n_individuals();
  const VectorXd t0 = theta0.to_vector();
  const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  std::vector<MatrixXd> tensor(p);
  for (int c = 0; c < p; ++c) {
    const double h = base * std::max(1.0, std::abs(t0(c)));
    VectorXd tp = t0, tm = t0;
    tp(c) += h;
    tm(c) -= h;
    const MatrixXd hess_p =
        -n * observed_information(data, ThetaParams::from_vector(tp, pb, pg),
                                  psi);
    const MatrixXd hess_m =
        -n * observed_information(data, ThetaParams::from_vector(tm, pb, pg),
                                  psi);
    tensor[c] = (hess_p - hess_m) / (2.0 * h);
    if (!tensor[c].allFinite())
      throw numerical_error("non-finite third-derivative tensor entries");
  }
  return tensor;
}

// tensor[c](a,b) holds d^3 H / dtheta_a dtheta_b dtheta_c; contract the last
// two slots against u and w, restricted to the requested index windows.
VectorXd contract_tensor(const std::vector<MatrixXd>& tensor, int out_off,
                         int out_len, int off_u, const VectorXd& u, int off_w,
                         const VectorXd& w) {
  VectorXd out = VectorXd::Zero(out_len);
  for (int a = 0; a < out_len; ++a)
    for (int b = 0; b < u.size(); ++b)
      for (int c = 0; c < w.size(); ++c)
        out(a) += tensor[off_w + c](out_off + a, off_u + b) * u(b) * w(c);
  return out;
}

}  // namespace

ThetaParams default_start(const Dataset& data,
                          const PsiParameterization& psi) {
  const VectorXd beta = stage1_ols(data);
  double rss = 0.0;
  long nobs = 0;
  for (const auto& ind : data.individuals) {
    rss += (ind.y - ind.x_mat * beta).squaredNorm();
    nobs += ind.n();
  }
  const double s2 = std::max(rss / std::max<long>(nobs, 1), 1e-6);
  const double third = s2 / 3.0;

  ThetaParams th;
  th.beta = beta;
  th.lambda = 1.0;
  th.sigma2 = 2.0 * th.lambda * third;  // sigma2/(2 lambda) = s2/3
  th.sigma_eps2 = third;
  using Kind = PsiParameterization::Kind;
  switch (psi.kind) {
    case Kind::Scalar:
      th.gamma = (VectorXd(1) << third).finished();
      break;
    case Kind::DiagonalLog:
      th.gamma = VectorXd::Constant(psi.p_b, std::log(third));
      break;
    case Kind::LowerTriangularLogChol: {
      th.gamma = VectorXd::Zero(psi.gamma_dim());
      int m = 0;
      for (int i = 0; i < psi.p_b; ++i)
        for (int j = 0; j <= i; ++j, ++m)
          if (i == j) th.gamma(m) = 0.5 * std::log(third);
      break;
    }
  }
  return th;
}

VectorXd stage1_ols(const Dataset& data) {
  data.validate();
  const int pb = data.p_beta;
  MatrixXd gram = MatrixXd::Zero(pb, pb);
  VectorXd rhs = VectorXd::Zero(pb);
  for (const auto& ind : data.individuals) {
    gram.noalias() += ind.x_mat.transpose() * ind.x_mat;
    rhs.noalias() += ind.x_mat.transpose() * ind.y;
  }
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    // name the offending column: first column whose removal restores rank
    Eigen::FullPivLU<MatrixXd> lu(gram);
    int col = 0;
    if (lu.rank() < pb) col = static_cast<int>(lu.rank());
    throw numerical_error("stage-1 design Gram matrix is rank deficient near "
                          "column " + std::to_string(col));
  }
  return llt.solve(rhs);
}

ThetaParams stage2_covariance(const Dataset& data, const VectorXd& beta1,
                              const FitConfig& config, bool* converged,
                              long* n_eval) {
  data.validate();
  const PsiParameterization& psi = config.psi;
  BoundTransform tf = BoundTransform::for_v(psi);
  tf.box_lo = config.box_lo;
  tf.box_hi = config.box_hi;

  ThetaParams start = default_start(data, psi);
  start.beta = beta1;
  const int pb = data.p_beta;
  const int pg = psi.gamma_dim();

  auto unpack = [&](const VectorXd& xv) {
    ThetaParams th = start;
    const VectorXd v = tf.from_unconstrained(xv);
    th.gamma = v.head(pg);
    th.lambda = v(pg);
    th.sigma2 = v(pg + 1);
    th.sigma_eps2 = v(pg + 2);
    return th;
  };
  auto objective = [&](const VectorXd& xv) -> double {
    try {
      return -joint_gqlf(data, unpack(xv), psi);
    } catch (const std::exception&) {
      return 1e300;
    }
  };

  const VectorXd x0 = tf.to_unconstrained(start.v_vector());
  const OptimResult opt = nelder_mead(objective, x0, config.optim);
  if (converged) *converged = opt.converged;
  if (n_eval) *n_eval = opt.n_eval;
  return unpack(opt.x_min);
}

VectorXd stage3_gls(const Dataset& data, const ThetaParams& v_tilde,
                    const PsiParameterization& param) {
  data.validate();
  const int pb = data.p_beta;
  MatrixXd gram = MatrixXd::Zero(pb, pb);
  VectorXd rhs = VectorXd::Zero(pb);
  for (const auto& ind : data.individuals) {
    const MatrixXd sigma =
        marginal_covariance(ind.z_mat, ind.times, v_tilde, param);
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw numerical_error("stage-3 covariance factorization failed");
    const MatrixXd six = llt.solve(ind.x_mat);
    gram.noalias() += ind.x_mat.transpose() * six;
    rhs.noalias() += six.transpose() * ind.y;
  }
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw numerical_error("stage-3 weighted Gram matrix is rank deficient");
  return llt.solve(rhs);
}

FitResult fit_joint(const Dataset& data, const FitConfig& config) {
  data.validate();
  const auto t0 = Clock::now();
  const PsiParameterization& psi = config.psi;
  const int pb = data.p_beta;
  const int pg = psi.gamma_dim();
  BoundTransform tf = BoundTransform::for_model(pb, psi);
  tf.box_lo = config.box_lo;
  tf.box_hi = config.box_hi;

  auto objective = [&](const VectorXd& x) -> double {
    try {
      return -joint_gqlf(data, from_unconstrained(x, tf, pb, pg), psi);
    } catch (const std::exception&) {
      return 1e300;
    }
  };

  const ThetaParams start = default_start(data, psi);
  const OptimResult opt =
      nelder_mead(objective, to_unconstrained(start, tf), config.optim);

  FitResult fit;
  fit.theta_hat = from_unconstrained(opt.x_min, tf, pb, pg);
  fit.objective = -opt.f_min;
  fit.converged = opt.converged;
  fit.n_eval = opt.n_eval;
  attach_inference(data, psi, &fit);
  fit.wall_time_s = seconds_since(t0);
  return fit;
}

StepwiseResult fit_stepwise(const Dataset& data, const FitConfig& config) {
  data.validate();
  StepwiseResult res;
  const auto t_all = Clock::now();

  auto t0 = Clock::now();
  res.beta1 = stage1_ols(data);
  res.stage_times_s[0] = seconds_since(t0);

  t0 = Clock::now();
  bool converged = false;
  long n_eval = 0;
  res.v_tilde =
      stage2_covariance(data, res.beta1, config, &converged, &n_eval);
  res.stage_times_s[1] = seconds_since(t0);

  t0 = Clock::now();
  res.beta_tilde = stage3_gls(data, res.v_tilde, config.psi);
  res.stage_times_s[2] = seconds_since(t0);

  res.fit.theta_hat = res.v_tilde;
  res.fit.theta_hat.beta = res.beta_tilde;
  res.fit.objective = joint_gqlf(data, res.fit.theta_hat, config.psi);
  res.fit.converged = converged;
  res.fit.n_eval = n_eval;
  attach_inference(data, config.psi, &res.fit);
  res.fit.wall_time_s = seconds_since(t_all);
  return res;
}

ExpansionDiag expansion_terms(const Dataset& data, const ThetaParams& theta0,
                              EstimatorKind kind, const FitConfig& config) {
  data.validate();
  theta0.check_admissible();
  const PsiParameterization& psi = config.psi;
  const int pb = theta0.p_beta();
  const int pv = theta0.p_v();
  const int p = pb + pv;
  const double n = data.n_individuals();
  const double root_n = std::sqrt(n);

  const ScoreVector score = quasi_score(data, theta0, psi);
  const MatrixXd gamma_obs = observed_information(data, theta0, psi);
  const MatrixXd gamma_hat = expected_information(data, theta0, psi);

  const MatrixXd g11 = gamma_hat.topLeftCorner(pb, pb);
  const MatrixXd g22 = gamma_hat.bottomRightCorner(pv, pv);
  Eigen::LLT<MatrixXd> llt11(g11), llt22(g22);
  if (llt11.info() != Eigen::Success || llt22.info() != Eigen::Success)
    throw numerical_error("plug-in information not positive definite");

  const VectorXd a = llt11.solve(score.beta_block);  // beta direction
  const VectorXd b = llt22.solve(score.v_block);     // v direction
  VectorXd g1(p);
  g1 << a, b;

  const std::vector<MatrixXd> tensor =
      third_derivative_tensor(data, theta0, psi);

  VectorXd g2(p);
  if (kind == EstimatorKind::Joint) {
    // block-diagonal plug-in for the population information
    MatrixXd gamma0 = MatrixXd::Zero(p, p);
    gamma0.topLeftCorner(pb, pb) = g11;
    gamma0.bottomRightCorner(pv, pv) = g22;
    const VectorXd lin = root_n * ((gamma0 - gamma_obs) * g1);
    VectorXd cubic = VectorXd::Zero(p);
    for (int c = 0; c < p; ++c)
      cubic += tensor[c] * g1 * (g1(c) / n);
    Eigen::LLT<MatrixXd> llt0(gamma0);
    g2 = llt0.solve(lin + 0.5 * cubic);
  } else {
    // stage-1 objects for the stepwise second-order term
    MatrixXd gram1 = MatrixXd::Zero(pb, pb);
    VectorXd delta1 = VectorXd::Zero(pb);
    for (const auto& ind : data.individuals) {
      gram1.noalias() += ind.x_mat.transpose() * ind.x_mat;
      delta1.noalias() +=
          ind.x_mat.transpose() * (ind.y - ind.x_mat * theta0.beta);
    }
    gram1 /= n;
    delta1 /= root_n;
    const VectorXd c1 = Eigen::LLT<MatrixXd>(gram1).solve(delta1);

    const MatrixXd h_bv = -n * gamma_obs.topRightCorner(pb, pv);
    const MatrixXd gobs11 = gamma_obs.topLeftCorner(pb, pb);
    const MatrixXd gobs22 = gamma_obs.bottomRightCorner(pv, pv);

    // beta block
    VectorXd gb = root_n * ((g11 - gobs11) * a) + (h_bv * b) / root_n;
    gb += 0.5 * contract_tensor(tensor, 0, pb, pb, b, pb, b) / n;
    gb += contract_tensor(tensor, 0, pb, 0, a, pb, b) / n;
    gb += 0.5 * contract_tensor(tensor, 0, pb, 0, a, 0, a) / n;
    const VectorXd g2_beta = llt11.solve(gb);

    // v block
    VectorXd gv = root_n * ((g22 - gobs22) * b) +
                  (h_bv.transpose() * c1) / root_n;
    gv += 0.5 * contract_tensor(tensor, pb, pv, 0, c1, 0, c1) / n;
    gv += contract_tensor(tensor, pb, pv, 0, c1, pb, b) / n;
    gv += 0.5 * contract_tensor(tensor, pb, pv, pb, b, pb, b) / n;
    const VectorXd g2_v = llt22.solve(gv);

    g2.resize(p);
    g2 << g2_beta, g2_v;
  }

  ThetaParams estimate;
  if (kind == EstimatorKind::Joint) {
    estimate = fit_joint(data, config).theta_hat;
  } else {
    estimate = fit_stepwise(data, config).fit.theta_hat;
  }

  ExpansionDiag diag;
  diag.g1 = g1;
  diag.g2 = g2;
  diag.u_scaled = root_n * (estimate.to_vector() - theta0.to_vector());
  diag.residual = diag.u_scaled - g1 - g2 / root_n;
  if (!diag.g2.allFinite())
    throw numerical_error("non-finite expansion term");
  return diag;
}

}  // namespace oulmm
