#ifndef OULMM_OPTIM_HPP
#define OULMM_OPTIM_HPP

#include <functional>
#include <vector>

#include "oulmm/types.hpp"

namespace oulmm {

struct OptimConfig {
  double x_tol = 1e-8;
  double f_tol = 1e-10;
  long max_iter = 4000;
  long max_eval = 20000;
  double init_step = 0.1;   // per-coordinate simplex scale (unconstrained)
  int restarts = 1;         // deterministic restarts from the best point
};

// Per-coordinate constrained <-> unconstrained maps. Log coordinates carry
// the admissible box (default (1e-4, 1e4)); the box bounds are
// configuration.
struct BoundTransform {
  enum class Kind { Identity, Log, PassThrough };
  std::vector<Kind> kinds;
  double box_lo = 1e-4;
  double box_hi = 1e4;

  // beta identity; gamma Log for the scalar parameterization, PassThrough
  // otherwise; (lambda, sigma2, sigma_eps2) Log.
  static BoundTransform for_model(int p_beta, const PsiParameterization& param);
  // covariance-parameter part only (stage-2 optimization space)
  static BoundTransform for_v(const PsiParameterization& param);

  int dim() const { return static_cast<int>(kinds.size()); }
  VectorXd to_unconstrained(const VectorXd& theta_coords) const;
  VectorXd from_unconstrained(const VectorXd& x) const;
};

VectorXd to_unconstrained(const ThetaParams& theta, const BoundTransform& tf);
ThetaParams from_unconstrained(const VectorXd& x, const BoundTransform& tf,
                               int p_beta, int p_gamma);

struct TracePoint {
  long iter;
  double f_best;
  double simplex_diameter;
};

struct OptimResult {
  VectorXd x_min;
  double f_min = 0.0;
  bool converged = false;
  long n_eval = 0;
  long n_iter = 0;
  std::vector<TracePoint> trace;
};

// Nelder-Mead simplex minimizer: reflection 1, expansion 2, contraction 0.5,
// shrink 0.5. Terminates when the simplex diameter drops below x_tol, the
// f-spread drops below f_tol, or the budget runs out.
OptimResult nelder_mead(const std::function<double(const VectorXd&)>& objective,
                        const VectorXd& x0, const OptimConfig& config);

}  // namespace oulmm

#endif
