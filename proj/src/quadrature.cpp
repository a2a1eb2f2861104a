#include "vmv/quadrature.hpp"

#include <array>
#include <cmath>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace vmv::quad {

double tanh_sinh(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  if (!(b > a)) return 0.0;
  // Integrator tables are built lazily; one per thread avoids sharing them.
  thread_local boost::math::quadrature::tanh_sinh<double> integrator(12);
  double error = 0.0;
  double l1 = 0.0;
  try {
    return integrator.integrate(f, a, b, rel_tol, &error, &l1);
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

double gauss10(const std::function<double(double)>& f, double a, double b) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss<double, 10>::integrate(f, a, b);
}

double singular_at_zero(const std::function<double(double)>& f, double len, double scale,
                        double rel_tol) {
  if (!(len > 0.0)) return 0.0;
  double lo = 0.0;
  double hi = std::min(len, scale > 0.0 ? scale : len);
  double total = tanh_sinh(f, lo, hi, rel_tol);
  while (hi < len) {
    lo = hi;
    hi = std::min(len, hi * 16.0);
    total += tanh_sinh(f, lo, hi, rel_tol);
  }
  return total;
}

}  // namespace vmv::quad
