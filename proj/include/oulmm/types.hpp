#ifndef OULMM_TYPES_HPP
#define OULMM_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace oulmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Error taxonomy: input problems (bad shapes, bad files, bad config),
// parameter-domain violations, and numerical failures (factorization,
// singular information). The CLI maps input/domain to exit 2 and
// numerical to exit 3.
struct input_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct domain_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Random-effect covariance parameterizations for Psi(gamma).
//   Scalar:                p_b = 1, Psi = [[gamma_1]], gamma_1 >= 0
//   DiagonalLog:           Psi = diag(exp(gamma_k))
//   LowerTriangularLogChol: Psi = L L^T, L lower triangular with the
//                           diagonal of L stored on log scale
struct PsiParameterization {
  enum class Kind { Scalar, DiagonalLog, LowerTriangularLogChol };
  Kind kind = Kind::Scalar;
  int p_b = 1;

  int gamma_dim() const {
    switch (kind) {
      case Kind::Scalar: return 1;
      case Kind::DiagonalLog: return p_b;
      case Kind::LowerTriangularLogChol: return p_b * (p_b + 1) / 2;
    }
    return 1;
  }
};

// Full parameter theta = (beta, v), v = (gamma, lambda, sigma2, sigma_eps2).
struct ThetaParams {
  VectorXd beta;
  VectorXd gamma;
  double lambda = 1.0;
  double sigma2 = 1.0;
  double sigma_eps2 = 1.0;

  int p_beta() const { return static_cast<int>(beta.size()); }
  int p_gamma() const { return static_cast<int>(gamma.size()); }
  int p_v() const { return p_gamma() + 3; }
  int dim() const { return p_beta() + p_v(); }

  // Coordinate order: (beta, gamma, lambda, sigma2, sigma_eps2).
  VectorXd to_vector() const {
    VectorXd x(dim());
    x.head(p_beta()) = beta;
    x.segment(p_beta(), p_gamma()) = gamma;
    x(p_beta() + p_gamma()) = lambda;
    x(p_beta() + p_gamma() + 1) = sigma2;
    x(p_beta() + p_gamma() + 2) = sigma_eps2;
    return x;
  }
  VectorXd v_vector() const { return to_vector().tail(p_v()); }

  static ThetaParams from_vector(const VectorXd& x, int p_beta, int p_gamma) {
    if (x.size() != p_beta + p_gamma + 3)
      throw input_error("ThetaParams::from_vector: dimension mismatch");
    ThetaParams th;
    th.beta = x.head(p_beta);
    th.gamma = x.segment(p_beta, p_gamma);
    th.lambda = x(p_beta + p_gamma);
    th.sigma2 = x(p_beta + p_gamma + 1);
    th.sigma_eps2 = x(p_beta + p_gamma + 2);
    return th;
  }

  void check_admissible() const {
    if (!(lambda > 0.0)) throw domain_error("lambda must be positive");
    if (!(sigma2 > 0.0)) throw domain_error("sigma2 must be positive");
    if (!(sigma_eps2 > 0.0)) throw domain_error("sigma_eps2 must be positive");
  }
};

// One subject's block. t_{i0} = 0 is the process origin, never an
// observation row; observation times are strictly increasing and positive.
struct IndividualData {
  VectorXd times;
  MatrixXd x_mat;
  MatrixXd z_mat;
  VectorXd y;

  int n() const { return static_cast<int>(times.size()); }

  void validate() const {
    const int ni = n();
    if (ni < 1) throw input_error("individual has no observations");
    if (x_mat.rows() != ni || z_mat.rows() != ni || y.size() != ni)
      throw input_error("individual row counts disagree");
    if (!(times(0) > 0.0)) throw input_error("times must be positive");
    for (int j = 1; j < ni; ++j)
      if (!(times(j) > times(j - 1)))
        throw input_error("times must be strictly increasing");
  }
};

struct Dataset {
  std::vector<IndividualData> individuals;
  int p_beta = 0;
  int p_b = 0;

  int n_individuals() const { return static_cast<int>(individuals.size()); }
  long total_obs() const {
    long s = 0;
    for (const auto& ind : individuals) s += ind.n();
    return s;
  }

  void validate() const {
    if (individuals.empty()) throw input_error("dataset is empty");
    for (const auto& ind : individuals) {
      ind.validate();
      if (ind.x_mat.cols() != p_beta || ind.z_mat.cols() != p_b)
        throw input_error("individual design dimensions disagree with header");
    }
  }
};

}  // namespace oulmm

#endif
