#pragma once

#include <functional>

namespace vmv::quad {

/// Relative tolerance used by the kernel evaluators.
inline constexpr double kDefaultRelTol = 1e-8;

/// Double-exponential (tanh-sinh) rule on [a, b]. Handles integrable
/// power-type singularities at either endpoint; never samples the endpoints.
double tanh_sinh(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = kDefaultRelTol);

/// Fixed 10-point Gauss-Legendre rule; for integrands analytic on [a, b].
double gauss10(const std::function<double(double)>& f, double a, double b);

/// Integral of f over [0, len] where f has its only singularity at 0. The
/// range is split geometrically outward from `scale` so both the near-zero
/// and the bulk behaviour are resolved.
double singular_at_zero(const std::function<double(double)>& f, double len, double scale,
                        double rel_tol = kDefaultRelTol);

}  // namespace vmv::quad
