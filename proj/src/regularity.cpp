#include "vmv/regularity.hpp"

#include <cmath>

#include "vmv/errors.hpp"
#include "vmv/quadrature.hpp"

namespace vmv {

LogLogFit fit_log_log(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DomainError("log-log fit needs at least two paired points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("log-log fit needs positive inputs");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("log-log fit needs distinct abscissae");
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ss_res += r * r;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.residual_rms = std::sqrt(ss_res / static_cast<double>(n));
  return fit;
}

double regularity_increment(const Kernel& kernel, double t, double h) {
  const double fresh = integrate_kernel(kernel, t + h, t, t + h, 2);
  if (kernel.family() == Kernel::Family::constant || !(t > 0.0)) return fresh;
  // Integrate the difference over the lag u = t - s so both kernels see
  // exact lags (u + h and u) near the diagonal.
  auto diff_sq = [&](double u) {
    const double s = t - u;
    const double d = kernel.raw(t + h, s, u + h) - kernel.raw(t, s, u);
    return d * d;
  };
  double shift = quad::singular_at_zero(diff_sq, t, h, 1e-10);
  if (!std::isfinite(shift))
    throw NonIntegrableError(kernel.name() + ": time increment is not square integrable");
  return shift + fresh;
}

RegularityEstimate regularity_probe(const Kernel& kernel, double t, std::span<const double> h_list,
                                    double horizon) {
  if (h_list.size() < 4) throw DomainError("regularity_probe needs at least four step sizes");
  if (!(t >= 0.0)) throw DomainError("regularity_probe needs t >= 0");
  RegularityEstimate est;
  for (double h : h_list) {
    if (!(h > 0.0) || !(t + h <= horizon))
      throw DomainError("regularity_probe: every h must satisfy 0 < h <= T - t");
    est.h.push_back(h);
    est.d.push_back(regularity_increment(kernel, t, h));
  }
  const LogLogFit fit = fit_log_log(est.h, est.d);
  est.gamma = 0.5 * fit.slope;
  est.fit_residual = fit.residual_rms;
  return est;
}

}  // namespace vmv
