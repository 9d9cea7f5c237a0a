#include "oulmm/optim.hpp"

#include <algorithm>
#include <cmath>

namespace oulmm {

BoundTransform BoundTransform::for_model(int p_beta,
                                         const PsiParameterization& param) {
  BoundTransform tf;
  tf.kinds.assign(p_beta, Kind::Identity);
  const BoundTransform vpart = for_v(param);
  tf.kinds.insert(tf.kinds.end(), vpart.kinds.begin(), vpart.kinds.end());
  return tf;
}

BoundTransform BoundTransform::for_v(const PsiParameterization& param) {
  BoundTransform tf;
  const Kind gamma_kind = param.kind == PsiParameterization::Kind::Scalar
                              ? Kind::Log
                              : Kind::PassThrough;
  tf.kinds.assign(param.gamma_dim(), gamma_kind);
  tf.kinds.insert(tf.kinds.end(), 3, Kind::Log);  // lambda, sigma2, sigma_eps2
  return tf;
}

VectorXd BoundTransform::to_unconstrained(const VectorXd& coords) const {
  if (!(box_lo > 0.0) || !(box_lo < box_hi))
    throw input_error("BoundTransform: need 0 < box_lo < box_hi");
  if (coords.size() != dim())
    throw input_error("to_unconstrained: dimension mismatch");
  if (!coords.allFinite()) throw input_error("to_unconstrained: non-finite input");
  VectorXd x(coords.size());
  for (int i = 0; i < coords.size(); ++i) {
    switch (kinds[i]) {
      case Kind::Identity:
      case Kind::PassThrough:
        x(i) = coords(i);
        break;
      case Kind::Log:
        x(i) = std::log(std::clamp(coords(i), box_lo, box_hi));
        break;
    }
  }
  return x;
}

VectorXd BoundTransform::from_unconstrained(const VectorXd& x) const {
  if (x.size() != dim())
    throw input_error("from_unconstrained: dimension mismatch");
  if (!x.allFinite()) throw input_error("from_unconstrained: non-finite input");
  VectorXd coords(x.size());
  for (int i = 0; i < x.size(); ++i) {
    switch (kinds[i]) {
      case Kind::Identity:
      case Kind::PassThrough:
        coords(i) = x(i);
        break;
      case Kind::Log:
        coords(i) = std::clamp(std::exp(x(i)), box_lo, box_hi);
        break;
    }
  }
  return coords;
}

VectorXd to_unconstrained(const ThetaParams& theta, const BoundTransform& tf) {
  return tf.to_unconstrained(theta.to_vector());
}

ThetaParams from_unconstrained(const VectorXd& x, const BoundTransform& tf,
                               int p_beta, int p_gamma) {
  return ThetaParams::from_vector(tf.from_unconstrained(x), p_beta, p_gamma);
}

namespace {

struct Simplex {
  std::vector<VectorXd> x;
  std::vector<double> f;

  // sort vertices by objective, ties broken by insertion order (stable)
  void order() {
    std::vector<int> idx(x.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return f[a] < f[b]; });
    std::vector<VectorXd> xs(x.size());
    std::vector<double> fs(f.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      xs[i] = x[idx[i]];
      fs[i] = f[idx[i]];
    }
    x.swap(xs);
    f.swap(fs);
  }

  double diameter() const {
    double d = 0.0;
    for (size_t i = 1; i < x.size(); ++i)
      d = std::max(d, (x[i] - x[0]).cwiseAbs().maxCoeff());
    return d;
  }
};

OptimResult nm_single(const std::function<double(const VectorXd&)>& objective,
                      const VectorXd& x0, const OptimConfig& cfg,
                      long eval_budget, long* eval_counter,
                      std::vector<TracePoint>* trace, long trace_base) {
  const int n = static_cast<int>(x0.size());
  auto eval = [&](const VectorXd& x) {
    ++(*eval_counter);
    const double v = objective(x);
    return std::isfinite(v) ? v : 1e300;
  };

  Simplex s;
  s.x.resize(n + 1);
  s.f.resize(n + 1);
  s.x[0] = x0;
  s.f[0] = eval(x0);
  for (int i = 0; i < n; ++i) {
    VectorXd xi = x0;
    xi(i) += cfg.init_step;
    s.x[i + 1] = xi;
    s.f[i + 1] = eval(xi);
  }
  s.order();

  OptimResult res;
  long iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    const double spread = s.f[n] - s.f[0];
    const double diam = s.diameter();
    trace->push_back({trace_base + iter, s.f[0], diam});
    if (diam < cfg.x_tol || spread < cfg.f_tol) {
      res.converged = true;
      break;
    }
    if (*eval_counter >= eval_budget) break;

    VectorXd centroid = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += s.x[i];
    centroid /= n;

    const VectorXd xr = centroid + (centroid - s.x[n]);  // reflection
    const double fr = eval(xr);
    if (fr < s.f[0]) {
      const VectorXd xe = centroid + 2.0 * (centroid - s.x[n]);  // expansion
      const double fe = eval(xe);
      if (fe < fr) {
        s.x[n] = xe;
        s.f[n] = fe;
      } else {
        s.x[n] = xr;
        s.f[n] = fr;
      }
    } else if (fr < s.f[n - 1]) {
      s.x[n] = xr;
      s.f[n] = fr;
    } else {
      // contraction (outside if reflection improved the worst, else inside)
      const bool outside = fr < s.f[n];
      const VectorXd base = outside ? xr : s.x[n];
      const VectorXd xc = centroid + 0.5 * (base - centroid);
      const double fc = eval(xc);
      if (fc < std::min(fr, s.f[n])) {
        s.x[n] = xc;
        s.f[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {  // shrink toward the best vertex
          s.x[i] = s.x[0] + 0.5 * (s.x[i] - s.x[0]);
          s.f[i] = eval(s.x[i]);
        }
      }
    }
    s.order();
  }
  res.x_min = s.x[0];
  res.f_min = s.f[0];
  res.n_iter = iter;
  return res;
}

}  // namespace

OptimResult nelder_mead(const std::function<double(const VectorXd&)>& objective,
                        const VectorXd& x0, const OptimConfig& config) {
  if (x0.size() == 0) throw input_error("nelder_mead: empty start point");
  if (!x0.allFinite()) throw input_error("nelder_mead: non-finite start point");
  if (!(config.init_step > 0.0))
    throw input_error("nelder_mead: init_step must be positive");
  if (config.max_iter < 1 || config.max_eval < 1 || config.restarts < 0)
    throw input_error("nelder_mead: invalid iteration budget");
  if (!(config.x_tol > 0.0) || !(config.f_tol > 0.0))
    throw input_error("nelder_mead: tolerances must be positive");
  {
    const double f0 = objective(x0);
    if (!std::isfinite(f0))
      throw input_error("nelder_mead: objective non-finite at start point");
  }
  long evals = 0;
  std::vector<TracePoint> trace;
  OptimResult best = nm_single(objective, x0, config, config.max_eval, &evals,
                               &trace, 0);
  for (int r = 0; r < config.restarts && evals < config.max_eval; ++r) {
    OptimResult again = nm_single(objective, best.x_min, config,
                                  config.max_eval, &evals, &trace,
                                  best.n_iter + 1);
    if (again.f_min <= best.f_min) {
      again.n_iter += best.n_iter;
      best = again;
    }
  }
  best.n_eval = evals;
  best.trace = std::move(trace);
  return best;
}

}  // namespace oulmm
