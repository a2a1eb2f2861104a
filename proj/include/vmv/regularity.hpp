#pragma once

#include <span>
#include <vector>

#include "vmv/kernel.hpp"

namespace vmv {

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double residual_rms = 0.0;
};

/// Ordinary least squares of log y on log x. Throws DomainError on fewer
/// than two points or a nonpositive entry.
LogLogFit fit_log_log(std::span<const double> x, std::span<const double> y);

struct RegularityEstimate {
  double gamma = 0.0;          // half the log-log slope of D(h)
  double fit_residual = 0.0;   // rms residual of the log-log fit
  std::vector<double> h;
  std::vector<double> d;       // D(h) per step size
};

/// Time-regularity increment
///   D(h) = int_0^t |K(t+h, s) - K(t, s)|^2 ds + int_t^{t+h} K(t+h, s)^2 ds.
double regularity_increment(const Kernel& kernel, double t, double h);

/// Estimate the exponent gamma with D(h) ~ h^(2 gamma) from >= 4 step sizes.
RegularityEstimate regularity_probe(const Kernel& kernel, double t, std::span<const double> h_list,
                                    double horizon);

}  // namespace vmv
