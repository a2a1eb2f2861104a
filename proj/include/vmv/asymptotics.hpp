#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vmv/regularity.hpp"
#include "vmv/volterra.hpp"

namespace vmv {

/// Fluctuation Z^eps = (X^eps - X0) / sqrt(eps) and its Gaussian Volterra
/// limit Z, driven by the same Brownian increments.
struct FluctuationPair {
  PathEnsemble z_eps;
  PathEnsemble z_lim;
  Path x0;
  double eps = 0.0;
};

/// Builds the coupled pair. Z_lim uses grad_b and the Lions derivative at
/// (X0, delta_X0); the expectation in its mean-field term is replaced by the
/// ensemble mean of the same particles.
FluctuationPair clt_pair(const GridKernel& k1, const GridKernel& k2, const CoefficientSet& coeffs,
                         std::span<const double> xi, double eps, std::size_t n_particles,
                         std::uint64_t seed, const SimulationOptions& options = {});

struct MomentEstimate {
  double value = 0.0;
  double std_error = 0.0;  // bootstrap
};

/// Monte Carlo E[sup_i |a_i - b_i|^p] over paired ensembles with a seeded
/// bootstrap standard error. Rejects pairs that do not share seed and drivers.
MomentEstimate clt_gap(const FluctuationPair& pair, double p, std::size_t bootstrap = 200);

/// E[sup_i |X_i - x0_i|^p] for one ensemble against a deterministic path.
MomentEstimate sup_deviation_moment(const PathEnsemble& ens, const Path& x0, double p,
                                    std::size_t bootstrap = 200);

/// sup_i E|X_i|^p.
double sup_moment(const PathEnsemble& ens, double p);

struct ScalingFit {
  LogLogFit fit;
  double expected_slope = 0.0;
  double slope_error() const { return fit.slope - expected_slope; }
};

/// OLS on log-log points. Needs at least 4 positive points whose abscissae
/// span 2 decades.
ScalingFit scaling_regression(std::span<const double> x, std::span<const double> y,
                              double expected_slope);

/// Sample mean, variance, skewness and excess kurtosis.
struct SampleShape {
  double mean = 0.0, variance = 0.0, skewness = 0.0, excess_kurtosis = 0.0;
};
SampleShape sample_shape(std::span<const double> values);

/// Component c of every particle at node i.
std::vector<double> marginal_component(const PathEnsemble& ens, std::size_t i, std::size_t c = 0);

inline constexpr std::size_t kHolderPairBudget = 1'000'000;

struct HolderStat {
  double value = 0.0;  // (E S^p)^(1/p), S = sup_{i<j} |X_j - X_i| / (t_j - t_i)^alpha
  std::size_t pairs_used = 0;
  std::size_t particles_used = 0;
};

/// Holder-quotient statistic. When all pairs would exceed the budget, the
/// lags are thinned geometrically and then particles are strided.
HolderStat holder_probe(const PathEnsemble& ens, double alpha, double p = 2.0);

}  // namespace vmv
