#include "vmv/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "history.hpp"
#include "vmv/errors.hpp"

namespace vmv {

namespace {

std::vector<double> dirac_field(const CoefficientSet::Field& f, const Path& x0, std::size_t k,
                                std::size_t size) {
  std::vector<double> out(size);
  const auto x = x0.at(k);
  f(x0.grid.t(k), x, EmpiricalMeasure::dirac(x), out);
  return out;
}

MomentEstimate bootstrap_mean(const std::vector<double>& values, std::uint64_t seed,
                              std::size_t resamples) {
  MomentEstimate est;
  const std::size_t n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  est.value = sum / static_cast<double>(n);
  if (n < 2 || resamples < 2) return est;
  const RngStream rng(seed);
  std::vector<double> means(resamples);
  for (std::size_t b = 0; b < resamples; ++b) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double u = rng.uniform(StreamTag::bootstrap, b, j, 0);
      const auto idx = std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)));
      s += values[idx];
    }
    means[b] = s / static_cast<double>(n);
  }
  double mean_of_means = 0.0;
  for (double m : means) mean_of_means += m;
  mean_of_means /= static_cast<double>(resamples);
  double var = 0.0;
  for (double m : means) var += (m - mean_of_means) * (m - mean_of_means);
  est.std_error = std::sqrt(var / static_cast<double>(resamples - 1));
  return est;
}

}  // namespace

FluctuationPair clt_pair(const GridKernel& k1, const GridKernel& k2, const CoefficientSet& coeffs,
                         std::span<const double> xi, double eps, std::size_t n_particles,
                         std::uint64_t seed, const SimulationOptions& options) {
  if (!coeffs.has_derivatives())
    throw DomainError("clt_pair needs grad_b and lions_b on the coefficient set");
  if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("clt_pair: eps must lie in (0, 1]");
  if (!options.particle_streams.empty())
    throw DomainError("clt_pair: custom particle streams are not supported");
  const TimeGrid& grid = k1.grid();
  const std::size_t d = coeffs.d, m = coeffs.m, n = grid.steps(), np = n_particles;

  Path x0 = solve_deterministic_limit(k1, coeffs, xi).path;
  PathEnsemble x_eps =
      simulate_particles(k1, k2, coeffs, InitialCondition::point({xi.begin(), xi.end()}), eps,
                         n_particles, seed, options);

  const double inv_sqrt_eps = 1.0 / std::sqrt(eps);
  PathEnsemble z_eps(grid, np, d, m, seed);
  z_eps.increments = x_eps.increments;
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
      auto src = x_eps.state(p, i);
      auto dst = z_eps.state(p, i);
      for (std::size_t c = 0; c < d; ++c) dst[c] = (src[c] - x0.at(i)[c]) * inv_sqrt_eps;
    }
  x_eps = PathEnsemble(grid, 0, d, m, seed);  // release

  // Frozen coefficients along X0.
  std::vector<std::vector<double>> grad(n), lions(n), sig(n);
  for (std::size_t k = 0; k < n; ++k) {
    grad[k] = dirac_field(coeffs.grad_b, x0, k, d * d);
    sig[k] = dirac_field(coeffs.sigma, x0, k, d * m);
    lions[k].resize(d * d);
    const auto x = x0.at(k);
    coeffs.lions_b(grid.t(k), x, EmpiricalMeasure::dirac(x), x, lions[k]);
  }

  PathEnsemble z_lim(grid, np, d, m, seed);
  z_lim.increments = z_eps.increments;
  std::vector<double> drift(np * n * d, 0.0), noise(np * n * d, 0.0);
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t k = 0; k < n; ++k) {
      auto dw = z_lim.increment(p, k);
      for (std::size_t r = 0; r < d; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < m; ++c) s += sig[k][r * m + c] * dw[c];
        noise[(p * n + k) * d + r] = s;
      }
    }

  const double dt = grid.dt();
  std::vector<double> mean(d), mean_term(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t p = 0; p < np; ++p) {
      auto z = z_lim.state(p, i);
      for (std::size_t c = 0; c < d; ++c) mean[c] += z[c];
    }
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += lions[i][r * d + c] * mean[c] / static_cast<double>(np);
      mean_term[r] = s;
    }
    const double* w1 = k1.row(i + 1).data();
    const double* w2 = k2.row(i + 1).data();
    auto advance = [&](std::size_t p) {
      auto z = z_lim.state(p, i);
      double* dh = drift.data() + (p * n + i) * d;
      for (std::size_t r = 0; r < d; ++r) {
        double s = mean_term[r];
        for (std::size_t c = 0; c < d; ++c) s += grad[i][r * d + c] * z[c];
        dh[r] = s;
      }
      thread_local std::vector<double> ad_buf, an_buf;
      ad_buf.assign(d, 0.0);
      an_buf.assign(d, 0.0);
      double* ad = ad_buf.data();
      double* an = an_buf.data();
      detail::weighted_history(w1, drift.data() + p * n * d, i + 1, d, ad);
      detail::weighted_history(w2, noise.data() + p * n * d, i + 1, d, an);
      auto next = z_lim.state(p, i + 1);
      for (std::size_t c = 0; c < d; ++c) next[c] = dt * ad[c] + an[c];
    };
    if (options.exec == Exec::serial) {
      for (std::size_t p = 0; p < np; ++p) advance(p);
    } else {
      const auto np_signed = static_cast<std::ptrdiff_t>(np);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t p = 0; p < np_signed; ++p) advance(static_cast<std::size_t>(p));
    }
  }
  return {std::move(z_eps), std::move(z_lim), std::move(x0), eps};
}

MomentEstimate clt_gap(const FluctuationPair& pair, double p, std::size_t bootstrap) {
  if (!(p >= 1.0)) throw DomainError("clt_gap: p must be at least 1");
  const PathEnsemble& a = pair.z_eps;
  const PathEnsemble& b = pair.z_lim;
  if (a.seed != b.seed || a.n_particles != b.n_particles || a.dim != b.dim ||
      !(a.grid == b.grid) || a.increments != b.increments)
    throw CouplingError("clt_gap: ensembles do not share seed and driver increments");
  std::vector<double> values(a.n_particles);
  for (std::size_t q = 0; q < a.n_particles; ++q) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.grid.nodes(); ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < a.dim; ++c) {
        const double diff = a.state(q, i)[c] - b.state(q, i)[c];
        s += diff * diff;
      }
      best = std::max(best, s);
    }
    values[q] = std::pow(std::sqrt(best), p);
  }
  return bootstrap_mean(values, a.seed, bootstrap);
}

MomentEstimate sup_deviation_moment(const PathEnsemble& ens, const Path& x0, double p,
                                    std::size_t bootstrap) {
  require_same_grid(ens.grid, x0.grid, "sup_deviation_moment");
  if (ens.dim != x0.dim) throw DimensionError("sup_deviation_moment: dimension mismatch");
  if (!(p > 0.0)) throw DomainError("sup_deviation_moment: p must be positive");
  std::vector<double> values(ens.n_particles);
  for (std::size_t q = 0; q < ens.n_particles; ++q) {
    double best = 0.0;
    for (std::size_t i = 0; i < ens.grid.nodes(); ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < ens.dim; ++c) {
        const double diff = ens.state(q, i)[c] - x0.at(i)[c];
        s += diff * diff;
      }
      best = std::max(best, s);
    }
    values[q] = std::pow(std::sqrt(best), p);
  }
  return bootstrap_mean(values, ens.seed, bootstrap);
}

double sup_moment(const PathEnsemble& ens, double p) {
  double best = 0.0;
  for (std::size_t i = 0; i < ens.grid.nodes(); ++i) {
    double s = 0.0;
    for (std::size_t q = 0; q < ens.n_particles; ++q) s += std::pow(euclidean_norm(ens.state(q, i)), p);
    best = std::max(best, s / static_cast<double>(ens.n_particles));
  }
  return best;
}

ScalingFit scaling_regression(std::span<const double> x, std::span<const double> y,
                              double expected_slope) {
  if (x.size() != y.size()) throw DimensionError("scaling_regression: length mismatch");
  if (x.size() < 4) throw DomainError("scaling_regression needs at least 4 points");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw DomainError("scaling_regression: inputs must be positive");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (std::log10(*hi / *lo) < 2.0 - 1e-12)
    throw DomainError("scaling_regression: abscissae must span at least 2 decades");
  return {fit_log_log(x, y), expected_slope};
}

SampleShape sample_shape(std::span<const double> values) {
  SampleShape s;
  const double n = static_cast<double>(values.size());
  if (values.size() < 2) throw DomainError("sample_shape needs at least two values");
  for (double v : values) s.mean += v;
  s.mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double c = v - s.mean;
    m2 += c * c;
    m3 += c * c * c;
    m4 += c * c * c * c;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.variance = m2 * n / (n - 1.0);
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return s;
}

std::vector<double> marginal_component(const PathEnsemble& ens, std::size_t i, std::size_t c) {
  std::vector<double> out(ens.n_particles);
  for (std::size_t p = 0; p < ens.n_particles; ++p) out[p] = ens.state(p, i)[c];
  return out;
}

HolderStat holder_probe(const PathEnsemble& ens, double alpha, double p) {
  if (!(alpha > 0.0 && alpha < 1.0 + 1e-15)) throw DomainError("holder_probe: alpha must lie in (0, 1]");
  if (!(p >= 1.0)) throw DomainError("holder_probe: p must be at least 1");
  const std::size_t n = ens.grid.steps();
  if (n < 1 || ens.n_particles < 1) throw DomainError("holder_probe: degenerate grid or ensemble");

  std::vector<std::size_t> lags;
  if (n * (n + 1) / 2 <= kHolderPairBudget) {
    for (std::size_t l = 1; l <= n; ++l) lags.push_back(l);
  } else {
    double l = 1.0;
    while (static_cast<std::size_t>(l) <= n) {
      const auto li = static_cast<std::size_t>(l);
      if (lags.empty() || lags.back() != li) lags.push_back(li);
      l *= 1.1;
    }
    if (lags.back() != n) lags.push_back(n);
  }
  std::size_t per_path = 0;
  for (std::size_t l : lags) per_path += n + 1 - l;
  const std::size_t use = std::clamp<std::size_t>(kHolderPairBudget / per_path, 1, ens.n_particles);
  const std::size_t stride = (ens.n_particles + use - 1) / use;

  std::vector<double> denom(lags.size());
  for (std::size_t j = 0; j < lags.size(); ++j)
    denom[j] = std::pow(static_cast<double>(lags[j]) * ens.grid.dt(), alpha);

  HolderStat stat;
  double acc = 0.0;
  for (std::size_t q = 0; q < ens.n_particles; q += stride) {
    double best = 0.0;
    for (std::size_t j = 0; j < lags.size(); ++j) {
      const std::size_t l = lags[j];
      for (std::size_t i = 0; i + l <= n; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < ens.dim; ++c) {
          const double diff = ens.state(q, i + l)[c] - ens.state(q, i)[c];
          s += diff * diff;
        }
        best = std::max(best, std::sqrt(s) / denom[j]);
      }
    }
    acc += std::pow(best, p);
    ++stat.particles_used;
  }
  stat.pairs_used = stat.particles_used * per_path;
  stat.value = std::pow(acc / static_cast<double>(stat.particles_used), 1.0 / p);
  return stat;
}

}  // namespace vmv
