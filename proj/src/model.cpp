#include "oulmm/model.hpp"

#include <cmath>

namespace oulmm {

namespace {

void check_times(const VectorXd& times) {
  if (times.size() < 1) throw input_error("times must be non-empty");
  if (!(times(0) > 0.0)) throw input_error("times must be positive");
  for (int j = 1; j < times.size(); ++j)
    if (!(times(j) > times(j - 1)))
      throw input_error("times must be strictly increasing");
}

void check_ou_params(double lambda, double sigma2) {
  if (!(lambda > 0.0)) throw domain_error("lambda must be positive");
  if (!(sigma2 > 0.0)) throw domain_error("sigma2 must be positive");
}

// Lower-triangle index map for LowerTriangularLogChol: gamma stores the
// rows (i >= j) in order (0,0),(1,0),(1,1),(2,0),...; the diagonal entries
// are kept on log scale.
MatrixXd chol_factor(const VectorXd& gamma, int p_b) {
  MatrixXd L = MatrixXd::Zero(p_b, p_b);
  int m = 0;
  for (int i = 0; i < p_b; ++i)
    for (int j = 0; j <= i; ++j, ++m)
      L(i, j) = (i == j) ? std::exp(gamma(m)) : gamma(m);
  return L;
}

// dL/dgamma_m (single nonzero entry; exp factor on the diagonal).
MatrixXd chol_factor_d(const VectorXd& gamma, int p_b, int target) {
  MatrixXd D = MatrixXd::Zero(p_b, p_b);
  int m = 0;
  for (int i = 0; i < p_b; ++i)
    for (int j = 0; j <= i; ++j, ++m)
      if (m == target) D(i, j) = (i == j) ? std::exp(gamma(m)) : 1.0;
  return D;
}

bool chol_index_is_diagonal(int p_b, int target) {
  int m = 0;
  for (int i = 0; i < p_b; ++i)
    for (int j = 0; j <= i; ++j, ++m)
      if (m == target) return i == j;
  return false;
}

}  // namespace

MatrixXd intou_covariance(const VectorXd& times, double lambda,
                          double sigma2) {
  check_times(times);
  check_ou_params(lambda, sigma2);
  const int n = static_cast<int>(times.size());
  const double c = sigma2 / (2.0 * lambda * lambda * lambda);
  VectorXd e(n);
  for (int j = 0; j < n; ++j) e(j) = std::exp(-lambda * times(j));
  MatrixXd H(n, n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k <= j; ++k) {
      const double d = times(j) - times(k);  // >= 0, times sorted
      const double val =
          c * (2.0 * lambda * times(k) + e(j) + e(k) - 1.0 - std::exp(-lambda * d));
      H(j, k) = val;
      H(k, j) = val;
    }
  }
  return H;
}

MatrixXd intou_covariance_dlambda(const VectorXd& times, double lambda,
                                  double sigma2) {
  check_times(times);
  check_ou_params(lambda, sigma2);
  const int n = static_cast<int>(times.size());
  const double il = 1.0 / lambda;
  const double c3 = sigma2 / 2.0 * il * il * il;
  VectorXd e(n);
  for (int j = 0; j < n; ++j) e(j) = std::exp(-lambda * times(j));
  MatrixXd D(n, n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k <= j; ++k) {
      const double d = times(j) - times(k);
      const double ed = std::exp(-lambda * d);
      const double a = 2.0 * lambda * times(k) + e(j) + e(k) - 1.0 - ed;
      const double ap = 2.0 * times(k) - times(j) * e(j) - times(k) * e(k) + d * ed;
      const double val = c3 * (ap - 3.0 * il * a);
      D(j, k) = val;
      D(k, j) = val;
    }
  }
  return D;
}

MatrixXd intou_covariance_d2lambda(const VectorXd& times, double lambda,
                                   double sigma2) {
  check_times(times);
  check_ou_params(lambda, sigma2);
  const int n = static_cast<int>(times.size());
  const double il = 1.0 / lambda;
  const double c3 = sigma2 / 2.0 * il * il * il;
  VectorXd e(n);
  for (int j = 0; j < n; ++j) e(j) = std::exp(-lambda * times(j));
  MatrixXd D(n, n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k <= j; ++k) {
      const double tj = times(j), tk = times(k);
      const double d = tj - tk;
      const double ed = std::exp(-lambda * d);
      const double a = 2.0 * lambda * tk + e(j) + e(k) - 1.0 - ed;
      const double ap = 2.0 * tk - tj * e(j) - tk * e(k) + d * ed;
      const double app = tj * tj * e(j) + tk * tk * e(k) - d * d * ed;
      const double val = c3 * (app - 6.0 * il * ap + 12.0 * il * il * a);
      D(j, k) = val;
      D(k, j) = val;
    }
  }
  return D;
}

MatrixXd psi_matrix(const VectorXd& gamma, const PsiParameterization& param) {
  if (gamma.size() != param.gamma_dim())
    throw input_error("psi_matrix: gamma dimension mismatch");
  using Kind = PsiParameterization::Kind;
  switch (param.kind) {
    case Kind::Scalar: {
      if (gamma(0) < 0.0) throw domain_error("scalar Psi requires gamma >= 0");
      MatrixXd psi(1, 1);
      psi(0, 0) = gamma(0);
      return psi;
    }
    case Kind::DiagonalLog:
      return gamma.array().exp().matrix().asDiagonal();
    case Kind::LowerTriangularLogChol: {
      const MatrixXd L = chol_factor(gamma, param.p_b);
      return L * L.transpose();
    }
  }
  throw input_error("psi_matrix: unknown parameterization");
}

MatrixXd psi_matrix_dgamma(const VectorXd& gamma,
                           const PsiParameterization& param, int j) {
  if (gamma.size() != param.gamma_dim() || j < 0 || j >= param.gamma_dim())
    throw input_error("psi_matrix_dgamma: index/dimension mismatch");
  using Kind = PsiParameterization::Kind;
  const int pb = param.p_b;
  switch (param.kind) {
    case Kind::Scalar:
      return MatrixXd::Ones(1, 1);
    case Kind::DiagonalLog: {
      MatrixXd D = MatrixXd::Zero(pb, pb);
      D(j, j) = std::exp(gamma(j));
      return D;
    }
    case Kind::LowerTriangularLogChol: {
      const MatrixXd L = chol_factor(gamma, pb);
      const MatrixXd Dj = chol_factor_d(gamma, pb, j);
      return Dj * L.transpose() + L * Dj.transpose();
    }
  }
  throw input_error("psi_matrix_dgamma: unknown parameterization");
}

MatrixXd psi_matrix_d2gamma(const VectorXd& gamma,
                            const PsiParameterization& param, int j, int k) {
  if (gamma.size() != param.gamma_dim())
    throw input_error("psi_matrix_d2gamma: dimension mismatch");
  using Kind = PsiParameterization::Kind;
  const int pb = param.p_b;
  switch (param.kind) {
    case Kind::Scalar:
      return MatrixXd::Zero(1, 1);
    case Kind::DiagonalLog: {
      MatrixXd D = MatrixXd::Zero(pb, pb);
      if (j == k) D(j, j) = std::exp(gamma(j));
      return D;
    }
    case Kind::LowerTriangularLogChol: {
      const MatrixXd L = chol_factor(gamma, pb);
      const MatrixXd Dj = chol_factor_d(gamma, pb, j);
      const MatrixXd Dk = chol_factor_d(gamma, pb, k);
      MatrixXd out = Dj * Dk.transpose() + Dk * Dj.transpose();
      if (j == k && chol_index_is_diagonal(pb, j)) {
        // second derivative of exp(gamma_j) reappears on the diagonal entry
        out += Dj * L.transpose() + L * Dj.transpose();
      }
      return out;
    }
  }
  throw input_error("psi_matrix_d2gamma: unknown parameterization");
}

VectorXd mean_vector(const MatrixXd& x_mat, const VectorXd& beta) {
  if (x_mat.cols() != beta.size())
    throw input_error("mean_vector: dimension mismatch");
  return x_mat * beta;
}

MatrixXd marginal_covariance(const MatrixXd& z_mat, const VectorXd& times,
                             const ThetaParams& theta,
                             const PsiParameterization& param) {
  theta.check_admissible();
  if (z_mat.rows() != times.size() || z_mat.cols() != param.p_b)
    throw input_error("marginal_covariance: dimension mismatch");
  const MatrixXd psi = psi_matrix(theta.gamma, param);
  MatrixXd sigma = intou_covariance(times, theta.lambda, theta.sigma2);
  sigma.noalias() += z_mat * psi * z_mat.transpose();
  sigma.diagonal().array() += theta.sigma_eps2;
  return sigma;
}

MatrixXd marginal_covariance_dv(const MatrixXd& z_mat, const VectorXd& times,
                                const ThetaParams& theta,
                                const PsiParameterization& param, int j) {
  const int pg = param.gamma_dim();
  const int n = static_cast<int>(times.size());
  if (j < 0 || j >= pg + 3)
    throw input_error("marginal_covariance_dv: index out of range");
  if (j < pg) {
    const MatrixXd dpsi = psi_matrix_dgamma(theta.gamma, param, j);
    return z_mat * dpsi * z_mat.transpose();
  }
  if (j == pg)
    return intou_covariance_dlambda(times, theta.lambda, theta.sigma2);
  if (j == pg + 1)
    return intou_covariance(times, theta.lambda, 1.0);
  return MatrixXd::Identity(n, n);
}

MatrixXd marginal_covariance_d2v(const MatrixXd& z_mat, const VectorXd& times,
                                 const ThetaParams& theta,
                                 const PsiParameterization& param, int j,
                                 int k) {
  const int pg = param.gamma_dim();
  const int n = static_cast<int>(times.size());
  if (j < 0 || j >= pg + 3 || k < 0 || k >= pg + 3)
    throw input_error("marginal_covariance_d2v: index out of range");
  if (j > k) std::swap(j, k);
  if (k < pg) {
    const MatrixXd d2psi = psi_matrix_d2gamma(theta.gamma, param, j, k);
    return z_mat * d2psi * z_mat.transpose();
  }
  if (j == pg && k == pg)
    return intou_covariance_d2lambda(times, theta.lambda, theta.sigma2);
  if (j == pg && k == pg + 1)
    return intou_covariance_dlambda(times, theta.lambda, 1.0);
  return MatrixXd::Zero(n, n);
}

}  // namespace oulmm
