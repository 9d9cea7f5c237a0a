#ifndef OULMM_SIMULATE_HPP
#define OULMM_SIMULATE_HPP

#include <cstdint>
#include <random>

#include "oulmm/types.hpp"

namespace oulmm {

// Seedable substream generator: the state is derived from
// (seed, replication, individual, tag) by splitmix64 mixing, so draws are
// identical regardless of thread scheduling or individual ordering.
class RngStream {
 public:
  enum Tag : std::uint64_t { kDesign = 1, kRandomEffect = 2, kSystemNoise = 3,
                             kMeasurementError = 4, kGeneric = 5 };

  RngStream(std::uint64_t seed, std::uint64_t replication,
            std::uint64_t individual, std::uint64_t tag);

  double uniform01();                       // U(0,1)
  double normal();                          // N(0,1)
  double gamma(double shape, double scale);
  std::uint64_t next_u64();

 private:
  std::mt19937_64 engine_;
};

struct DesignSpec {
  int n_i_min = 15;
  int n_i_max = 20;   // n_i = floor(Uniform(min, max))
  int time_pool = 20; // observation times drawn from {1, ..., time_pool}
  double group_prob = 0.5;
};

struct RandomEffectLaw {
  enum class Kind { GaussianVar, VarianceGamma };
  Kind kind = Kind::GaussianVar;
  // VG mixture X = a2 + a4 V + a3 sqrt(V) Z, V ~ Gamma(a1, rate a1);
  // a3 is the Gaussian scale (enters the variance as a3^2).
  double a1 = 3.0, a2 = -3.0, a3 = 0.1, a4 = 3.0;
};

struct DriverSpec {
  enum class Kind { GaussianExact, CompoundPoissonNormal, GaussianEuler };
  Kind kind = Kind::GaussianExact;
  double rate = 50.0;  // Poisson jump intensity; jumps N(0, 1/rate)
  double dt = 1e-3;    // Euler step
};

struct Scenario {
  int n_individuals = 500;
  ThetaParams theta_true;
  PsiParameterization psi;
  DesignSpec design;
  RandomEffectLaw random_effect;
  DriverSpec driver;
  std::uint64_t seed = 1;

  void validate() const;
  // defaults matching the simulation-study settings
  static Scenario reference(int n_individuals, std::uint64_t seed);
};

struct DesignBlock {
  VectorXd times;
  MatrixXd x_mat;
  MatrixXd z_mat;
};

// Per individual: n_i = floor(Uniform(n_i_min, n_i_max)); times a sorted
// sample without replacement from {1..time_pool}; X rows (1, t, g) with
// g ~ Bernoulli(group_prob); Z a column of ones.
DesignBlock generate_design_block(RngStream& rng, const Scenario& scenario);
std::vector<DesignBlock> generate_design(const Scenario& scenario,
                                         std::uint64_t replication = 0);

// Exact draw from N(0, H(times, lambda, sigma2)).
VectorXd sample_intou_gaussian(RngStream& rng, const VectorXd& times,
                               double lambda, double sigma2);

struct OuPath {
  std::vector<double> grid;
  std::vector<double> zeta;
  VectorXd w_at_times;
};

// Levy-driven OU path with stationary start Var = sigma^2/(2 lambda) and a
// driver normalized to Var[L(t)] = t; W is the running integral of zeta.
OuPath sample_ou_levy_path(RngStream& rng, const VectorXd& times,
                           double lambda, double sigma,
                           const DriverSpec& driver);

double sample_vg(RngStream& rng, double a1, double a2, double a3, double a4);

Dataset simulate_dataset(const Scenario& scenario,
                         std::uint64_t replication = 0);

}  // namespace oulmm

#endif
