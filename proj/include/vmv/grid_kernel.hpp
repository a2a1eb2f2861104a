#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vmv/grid.hpp"
#include "vmv/kernel.hpp"

namespace vmv {

/// Loop execution: the serial path is the reference implementation the
/// OpenMP path is tested against (results are bitwise identical).
enum class Exec { serial, parallel };

/// Strictly lower-triangular discretisation of a kernel on a uniform grid.
///
/// Entry (i, j), j < i, is the cell average (1/dt) * integral of K(t_i, s)
/// over [t_j, t_{j+1}]. The same matrix doubles as point values
/// K(t_i, t_j) when the grid kernel is the result of a convolution or a
/// resolvent solve. Storage is a dense (n+1) x (n+1) row-major block.
class GridKernel {
public:
  GridKernel(TimeGrid grid) : grid_(grid), values_(grid.nodes() * grid.nodes(), 0.0) {}

  static GridKernel zero(const TimeGrid& grid) { return GridKernel(grid); }
  static GridKernel from_kernel(const Kernel& kernel, const TimeGrid& grid,
                                Exec exec = Exec::parallel);

  const TimeGrid& grid() const { return grid_; }
  std::size_t size() const { return grid_.nodes(); }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values_[i * size() + j]; }

  /// Entries (i, 0..i-1).
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * size(), i};
  }
  std::span<double> row(std::size_t i) { return {values_.data() + i * size(), i}; }

  /// max_i dt * sum_j |V(i, j)|: discrete sup_t of the integral over [0, t].
  double sup_row_mass() const;
  /// max |V(i, j)| over the triangle.
  double max_abs() const;
  bool all_finite() const;

private:
  TimeGrid grid_;
  std::vector<double> values_;
};

/// (K * L)(t_i, t_j) = dt * sum_{j<k<i} K(i, k) L(k, j).
GridKernel convolve(const GridKernel& k, const GridKernel& l, Exec exec = Exec::parallel);

/// max_{i,j} |A(i,j) - B(i,j)|.
double max_abs_diff(const GridKernel& a, const GridKernel& b);

struct ResolventOptions {
  enum class Method { series, direct };
  Method method = Method::direct;
  std::size_t n_max = 200;
  double tol = 1e-10;
};

struct SeriesResolvent {
  GridKernel kernel;
  std::size_t terms = 0;
  double last_term_mass = 0.0;
};

/// Resolvent R = sum_n R_n with R_1 = K, R_{n+1} = K * R_n, truncated once
/// the discrete sup-mass of R_n drops to `tol`.
SeriesResolvent resolvent_series(const GridKernel& k, std::size_t n_max = 200,
                                 double tol = 1e-10, Exec exec = Exec::parallel);

/// Resolvent via the lower-triangular system R = K + K * R.
GridKernel resolvent_direct(const GridKernel& k, Exec exec = Exec::parallel);

GridKernel resolvent(const GridKernel& k, const ResolventOptions& options = {},
                     Exec exec = Exec::parallel);

/// Discrete Volterra integral (K f)(t_i) = dt * sum_{k<i} K(i, k) f_k.
std::vector<double> apply_kernel(const GridKernel& k, std::span<const double> f);

struct GronwallReport {
  std::vector<double> f;      // solution of f = g + K f
  std::vector<double> bound;  // g + R g
  double slack = 0.0;         // kSlackFactor * dt * |g|_inf
  double max_excess = 0.0;    // max_i (f_i - bound_i), may be negative
  bool satisfied = false;
  static constexpr double kSlackFactor = 1.0;
};

/// Solve f = g + K f on the grid and compare with the resolvent bound
/// g + R g. Throws DomainError if g has a negative entry.
GronwallReport gronwall_check(const GridKernel& k, std::span<const double> g);

}  // namespace vmv
