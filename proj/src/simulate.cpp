#include "oulmm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oulmm/model.hpp"

namespace oulmm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_stream(std::uint64_t seed, std::uint64_t rep,
                         std::uint64_t ind, std::uint64_t tag) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ rep);
  h = splitmix64(h ^ ind);
  h = splitmix64(h ^ tag);
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t replication,
                     std::uint64_t individual, std::uint64_t tag)
    : engine_(mix_stream(seed, replication, individual, tag)) {}

double RngStream::uniform01() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double RngStream::normal() {
  return std::normal_distribution<double>(0.0, 1.0)(engine_);
}

double RngStream::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw domain_error("gamma draw requires positive shape and scale");
  return std::gamma_distribution<double>(shape, scale)(engine_);
}

std::uint64_t RngStream::next_u64() { return engine_(); }

void Scenario::validate() const {
  if (n_individuals < 1) throw input_error("n_individuals must be >= 1");
  theta_true.check_admissible();
  if (design.n_i_min < 1 || design.n_i_max < design.n_i_min)
    throw input_error("invalid n_i range");
  // n_i = floor(Uniform(min, max)) takes values in {min, ..., max-1}
  const int n_i_top =
      design.n_i_max > design.n_i_min ? design.n_i_max - 1 : design.n_i_min;
  if (n_i_top > design.time_pool)
    throw input_error("n_i range exceeds the time pool size");
  if (design.group_prob < 0.0 || design.group_prob > 1.0)
    throw input_error("group_prob must lie in [0,1]");
  if (driver.kind == DriverSpec::Kind::CompoundPoissonNormal &&
      !(driver.rate > 0.0))
    throw input_error("compound-Poisson rate must be positive");
  if (driver.kind == DriverSpec::Kind::GaussianEuler && !(driver.dt > 0.0))
    throw input_error("Euler step must be positive");
  if (random_effect.kind == RandomEffectLaw::Kind::VarianceGamma) {
    if (psi.p_b != 1)
      throw input_error("variance-gamma random effects require p_b = 1");
    if (!(random_effect.a1 > 0.0) || !(random_effect.a3 > 0.0))
      throw input_error("VG requires a1 > 0 and a3 > 0");
  }
}

Scenario Scenario::reference(int n_individuals, std::uint64_t seed) {
  Scenario sc;
  sc.n_individuals = n_individuals;
  sc.seed = seed;
  sc.theta_true.beta = (VectorXd(3) << 2.0, -1.0, 0.5).finished();
  sc.theta_true.gamma = (VectorXd(1) << 3.01).finished();
  sc.theta_true.lambda = 1.3;
  sc.theta_true.sigma2 = 0.16;       // 0.40^2
  sc.theta_true.sigma_eps2 = 0.25;   // 0.50^2
  sc.psi.kind = PsiParameterization::Kind::Scalar;
  sc.psi.p_b = 1;
  sc.random_effect.kind = RandomEffectLaw::Kind::VarianceGamma;
  sc.driver.kind = DriverSpec::Kind::GaussianExact;
  return sc;
}

DesignBlock generate_design_block(RngStream& rng, const Scenario& sc) {
  const auto& d = sc.design;
  const double u = d.n_i_min + (d.n_i_max - d.n_i_min) * rng.uniform01();
  const int ni = std::clamp(static_cast<int>(std::floor(u)), d.n_i_min,
                            d.time_pool);

  // partial Fisher-Yates over the pool, then sort the chosen prefix
  std::vector<int> pool(d.time_pool);
  std::iota(pool.begin(), pool.end(), 1);
  for (int j = 0; j < ni; ++j) {
    const int k =
        j + static_cast<int>(rng.uniform01() * (d.time_pool - j));
    std::swap(pool[j], pool[std::min(k, d.time_pool - 1)]);
  }
  std::sort(pool.begin(), pool.begin() + ni);

  const double g = rng.uniform01() < d.group_prob ? 1.0 : 0.0;

  DesignBlock block;
  block.times.resize(ni);
  block.x_mat.resize(ni, 3);
  block.z_mat = MatrixXd::Ones(ni, 1);
  for (int j = 0; j < ni; ++j) {
    block.times(j) = pool[j];
    block.x_mat(j, 0) = 1.0;
    block.x_mat(j, 1) = block.times(j);
    block.x_mat(j, 2) = g;
  }
  return block;
}

std::vector<DesignBlock> generate_design(const Scenario& sc,
                                         std::uint64_t replication) {
  sc.validate();
  std::vector<DesignBlock> blocks;
  blocks.reserve(sc.n_individuals);
  for (int i = 0; i < sc.n_individuals; ++i) {
    RngStream rng(sc.seed, replication, i, RngStream::kDesign);
    blocks.push_back(generate_design_block(rng, sc));
  }
  return blocks;
}

VectorXd sample_intou_gaussian(RngStream& rng, const VectorXd& times,
                               double lambda, double sigma2) {
  MatrixXd h = intou_covariance(times, lambda, sigma2);
  Eigen::LLT<MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) {
    h.diagonal().array() += 1e-12;  // ridge for near-zero times
    llt.compute(h);
    if (llt.info() != Eigen::Success)
      throw numerical_error("intOU covariance factorization failed");
  }
  VectorXd z(times.size());
  for (int j = 0; j < z.size(); ++j) z(j) = rng.normal();
  return llt.matrixL() * z;
}

OuPath sample_ou_levy_path(RngStream& rng, const VectorXd& times,
                           double lambda, double sigma,
                           const DriverSpec& driver) {
  if (!(lambda > 0.0) || !(sigma > 0.0))
    throw domain_error("OU path requires positive lambda and sigma");
  const double t_max = times(times.size() - 1);
  OuPath path;

  if (driver.kind == DriverSpec::Kind::GaussianEuler) {
    if (!(driver.dt > 0.0)) throw input_error("Euler step must be positive");
    // grid: multiples of dt plus the observation times, exactly
    std::vector<double> grid;
    const long nsteps = static_cast<long>(std::ceil(t_max / driver.dt));
    grid.reserve(nsteps + times.size() + 1);
    for (long k = 0; k <= nsteps; ++k)
      grid.push_back(std::min(k * driver.dt, t_max));
    for (int j = 0; j < times.size(); ++j) grid.push_back(times(j));
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    double zeta = std::sqrt(sigma * sigma / (2.0 * lambda)) * rng.normal();
    double w = 0.0;
    path.grid = grid;
    path.zeta.resize(grid.size());
    path.zeta[0] = zeta;
    path.w_at_times.resize(times.size());
    int obs = 0;
    if (std::abs(grid[0] - times(obs)) == 0.0) path.w_at_times(obs++) = w;
    for (size_t k = 1; k < grid.size(); ++k) {
      const double h = grid[k] - grid[k - 1];
      const double zeta_next =
          zeta - lambda * zeta * h + sigma * std::sqrt(h) * rng.normal();
      w += 0.5 * (zeta + zeta_next) * h;  // trapezoid
      zeta = zeta_next;
      path.zeta[k] = zeta;
      while (obs < times.size() && grid[k] >= times(obs)) {
        path.w_at_times(obs) = w;
        ++obs;
      }
    }
    return path;
  }

  if (driver.kind == DriverSpec::Kind::CompoundPoissonNormal) {
    if (!(driver.rate > 0.0)) throw input_error("rate must be positive");
    // jump times on [0, t_max]; zeta decays exponentially between events and
    // its integral over each inter-event stretch is exact
    std::vector<double> events;
    double t = 0.0;
    for (;;) {
      t += -std::log(1.0 - rng.uniform01()) / driver.rate;
      if (t >= t_max) break;
      events.push_back(t);
    }
    const double jump_sd = std::sqrt(1.0 / driver.rate);
    std::vector<double> all = events;
    for (int j = 0; j < times.size(); ++j) all.push_back(times(j));
    all.push_back(0.0);
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    double zeta = std::sqrt(sigma * sigma / (2.0 * lambda)) * rng.normal();
    double w = 0.0;
    path.grid = all;
    path.zeta.resize(all.size());
    path.w_at_times.resize(times.size());
    size_t ev = 0;
    int obs = 0;
    path.zeta[0] = zeta;
    for (size_t k = 1; k < all.size(); ++k) {
      const double h = all[k] - all[k - 1];
      w += zeta * (1.0 - std::exp(-lambda * h)) / lambda;
      zeta *= std::exp(-lambda * h);
      while (ev < events.size() && events[ev] <= all[k]) {
        if (events[ev] == all[k]) zeta += sigma * jump_sd * rng.normal();
        ++ev;
      }
      path.zeta[k] = zeta;
      while (obs < times.size() && all[k] >= times(obs)) {
        path.w_at_times(obs) = w;
        ++obs;
      }
    }
    return path;
  }

  throw input_error("sample_ou_levy_path: use sample_intou_gaussian for the "
                    "exact Gaussian driver");
}

double sample_vg(RngStream& rng, double a1, double a2, double a3, double a4) {
  if (!(a1 > 0.0) || !(a3 > 0.0))
    throw domain_error("variance-gamma requires a1 > 0 and a3 > 0");
  const double v = rng.gamma(a1, 1.0 / a1);  // mean 1, variance 1/a1
  return a2 + a4 * v + a3 * std::sqrt(v) * rng.normal();
}

Dataset simulate_dataset(const Scenario& sc, std::uint64_t replication) {
  sc.validate();
  Dataset data;
  data.p_beta = static_cast<int>(sc.theta_true.beta.size());
  data.p_b = sc.psi.p_b;
  data.individuals.reserve(sc.n_individuals);
  const MatrixXd psi = psi_matrix(sc.theta_true.gamma, sc.psi);
  Eigen::LLT<MatrixXd> psi_llt;
  if (sc.random_effect.kind == RandomEffectLaw::Kind::GaussianVar) {
    MatrixXd psi_r = psi;
    psi_r.diagonal().array() += 1e-14;
    psi_llt.compute(psi_r);
  }

  for (int i = 0; i < sc.n_individuals; ++i) {
    RngStream rng_design(sc.seed, replication, i, RngStream::kDesign);
    RngStream rng_b(sc.seed, replication, i, RngStream::kRandomEffect);
    RngStream rng_w(sc.seed, replication, i, RngStream::kSystemNoise);
    RngStream rng_eps(sc.seed, replication, i, RngStream::kMeasurementError);

    DesignBlock block = generate_design_block(rng_design, sc);
    const int ni = static_cast<int>(block.times.size());

    VectorXd b(sc.psi.p_b);
    if (sc.random_effect.kind == RandomEffectLaw::Kind::VarianceGamma) {
      const auto& re = sc.random_effect;
      b(0) = sample_vg(rng_b, re.a1, re.a2, re.a3, re.a4);
    } else {
      VectorXd z(sc.psi.p_b);
      for (int k = 0; k < z.size(); ++k) z(k) = rng_b.normal();
      b = psi_llt.matrixL() * z;
    }

    VectorXd w(ni);
    if (sc.driver.kind == DriverSpec::Kind::GaussianExact) {
      w = sample_intou_gaussian(rng_w, block.times, sc.theta_true.lambda,
                                sc.theta_true.sigma2);
    } else {
      w = sample_ou_levy_path(rng_w, block.times, sc.theta_true.lambda,
                              std::sqrt(sc.theta_true.sigma2), sc.driver)
              .w_at_times;
    }

    IndividualData ind;
    ind.times = block.times;
    ind.x_mat = block.x_mat;
    ind.z_mat = block.z_mat;
    ind.y = block.x_mat * sc.theta_true.beta + block.z_mat * b + w;
    const double eps_sd = std::sqrt(sc.theta_true.sigma_eps2);
    for (int j = 0; j < ni; ++j) ind.y(j) += eps_sd * rng_eps.normal();
    data.individuals.push_back(std::move(ind));
  }
  return data;
}

}  // namespace oulmm
