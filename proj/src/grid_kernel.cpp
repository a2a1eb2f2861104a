#include "vmv/grid_kernel.hpp"

#include <algorithm>
#include <cmath>

#include "vmv/errors.hpp"

namespace vmv {

namespace {

// Cell integral of K(t_i, .) over [t_j, t_{j+1}].
double cell_integral(const Kernel& kernel, const TimeGrid& grid, std::size_t i, std::size_t j) {
  const double t = grid.t(i);
  const double a = grid.t(j);
  const double b = grid.t(j + 1);
  switch (kernel.family()) {
    case Kernel::Family::constant:
    case Kernel::Family::power:
      return integrate_kernel(kernel, t, a, b, 1);
    default:
      break;
  }
  const bool interior = j > 0 && j + 1 < i;
  return detail::kernel_quadrature(kernel, t, a, b, 1, interior);
}

void fill_row(GridKernel& out, const Kernel& kernel, std::size_t i) {
  const TimeGrid& grid = out.grid();
  const double inv_dt = 1.0 / grid.dt();
  auto row = out.row(i);
  for (std::size_t j = 0; j < i; ++j) row[j] = cell_integral(kernel, grid, i, j) * inv_dt;
}

// out(i, .) = dt * sum_{j<k<i} K(i, k) L(k, .). Row k of L is nonzero only
// on columns < k, so the inner loop is a contiguous axpy.
void convolve_row(const GridKernel& k, const GridKernel& l, GridKernel& out, std::size_t i) {
  const double dt = k.grid().dt();
  auto dst = out.row(i);
  std::fill(dst.begin(), dst.end(), 0.0);
  for (std::size_t m = 1; m < i; ++m) {
    const double w = k(i, m) * dt;
    if (w == 0.0) continue;
    auto src = l.row(m);
    for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
  }
}

}  // namespace

GridKernel GridKernel::from_kernel(const Kernel& kernel, const TimeGrid& grid, Exec exec) {
  GridKernel out(grid);
  const auto n = static_cast<std::ptrdiff_t>(grid.nodes());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t i = 1; i < n; ++i) fill_row(out, kernel, static_cast<std::size_t>(i));
  } else {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 1; i < n; ++i) fill_row(out, kernel, static_cast<std::size_t>(i));
  }
  if (!out.all_finite())
    throw SingularityError(kernel.name() + ": non-finite averaged grid weight");
  return out;
}

double GridKernel::sup_row_mass() const {
  double best = 0.0;
  for (std::size_t i = 1; i < size(); ++i) {
    double s = 0.0;
    for (double v : row(i)) s += std::abs(v);
    best = std::max(best, s * grid_.dt());
  }
  return best;
}

double GridKernel::max_abs() const {
  double best = 0.0;
  for (double v : values_) best = std::max(best, std::abs(v));
  return best;
}

bool GridKernel::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

GridKernel convolve(const GridKernel& k, const GridKernel& l, Exec exec) {
  require_same_grid(k.grid(), l.grid(), "convolve");
  GridKernel out(k.grid());
  const auto n = static_cast<std::ptrdiff_t>(k.size());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t i = 2; i < n; ++i) convolve_row(k, l, out, static_cast<std::size_t>(i));
  } else {
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 2; i < n; ++i) convolve_row(k, l, out, static_cast<std::size_t>(i));
  }
  return out;
}

double max_abs_diff(const GridKernel& a, const GridKernel& b) {
  require_same_grid(a.grid(), b.grid(), "max_abs_diff");
  double best = 0.0;
  for (std::size_t i = 1; i < a.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) best = std::max(best, std::abs(a(i, j) - b(i, j)));
  return best;
}

namespace {

void check_premise(const GridKernel& k) {
  if (!k.all_finite() || !std::isfinite(k.sup_row_mass()))
    throw DivergenceError("resolvent: kernel has infinite mass on the grid");
}

}  // namespace

SeriesResolvent resolvent_series(const GridKernel& k, std::size_t n_max, double tol, Exec exec) {
  check_premise(k);
  SeriesResolvent result{k, 1, k.sup_row_mass()};
  if (result.last_term_mass <= tol) return result;
  GridKernel term = k;
  double prev_mass = result.last_term_mass;
  std::size_t growth_run = 0;
  while (result.terms < n_max) {
    term = convolve(k, term, exec);
    ++result.terms;
    const double mass = term.sup_row_mass();
    for (std::size_t i = 1; i < term.size(); ++i) {
      auto dst = result.kernel.row(i);
      auto src = term.row(i);
      for (std::size_t j = 0; j < i; ++j) dst[j] += src[j];
    }
    result.last_term_mass = mass;
    if (!std::isfinite(mass)) throw DivergenceError("resolvent series: non-finite term");
    if (mass <= tol) return result;
    growth_run = mass > prev_mass ? growth_run + 1 : 0;
    prev_mass = mass;
  }
  if (growth_run + 1 >= n_max)
    throw DivergenceError("resolvent series: terms grew for every iteration");
  throw DivergenceError("resolvent series: tolerance not reached after n_max terms");
}

GridKernel resolvent_direct(const GridKernel& k, Exec exec) {
  check_premise(k);
  // Row i of R = K(i, .) + dt * sum_{m<i} K(i, m) R(m, .). Rows depend only
  // on earlier rows, so the parallel path splits each row into column blocks;
  // every entry accumulates over m in the same order on both paths.
  GridKernel r(k.grid());
  const double dt = k.grid().dt();
  constexpr std::size_t kBlock = 128;
  for (std::size_t i = 1; i < k.size(); ++i) {
    auto dst = r.row(i);
    auto krow = k.row(i);
    auto block = [&](std::size_t j0, std::size_t j1) {
      for (std::size_t j = j0; j < j1; ++j) dst[j] = krow[j];
      for (std::size_t m = j0 + 1; m < i; ++m) {
        const double w = krow[m] * dt;
        const double* src = r.row(m).data();
        const std::size_t hi = std::min(j1, m);
        for (std::size_t j = j0; j < hi; ++j) dst[j] += w * src[j];
      }
    };
    const std::size_t n_blocks = (i + kBlock - 1) / kBlock;
    if (exec == Exec::serial || n_blocks == 1) {
      for (std::size_t b = 0; b < n_blocks; ++b) block(b * kBlock, std::min(i, (b + 1) * kBlock));
    } else {
      const auto nb = static_cast<std::ptrdiff_t>(n_blocks);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t b = 0; b < nb; ++b) {
        const auto ub = static_cast<std::size_t>(b);
        block(ub * kBlock, std::min(i, (ub + 1) * kBlock));
      }
    }
  }
  if (!r.all_finite()) throw InternalError("resolvent: direct solve produced non-finite values");
  return r;
}

GridKernel resolvent(const GridKernel& k, const ResolventOptions& options, Exec exec) {
  if (options.method == ResolventOptions::Method::series)
    return resolvent_series(k, options.n_max, options.tol, exec).kernel;
  return resolvent_direct(k, exec);
}

std::vector<double> apply_kernel(const GridKernel& k, std::span<const double> f) {
  if (f.size() != k.size()) throw GridMismatchError("apply_kernel: path length differs from grid");
  std::vector<double> out(f.size(), 0.0);
  const double dt = k.grid().dt();
  for (std::size_t i = 1; i < k.size(); ++i) {
    double acc = 0.0;
    auto krow = k.row(i);
    for (std::size_t j = 0; j < i; ++j) acc += krow[j] * f[j];
    out[i] = acc * dt;
  }
  return out;
}

GronwallReport gronwall_check(const GridKernel& k, std::span<const double> g) {
  if (g.size() != k.size()) throw GridMismatchError("gronwall_check: g length differs from grid");
  for (double v : g)
    if (!(v >= 0.0)) throw DomainError("gronwall_check: g must be nonnegative");
  GronwallReport report;
  const double dt = k.grid().dt();
  report.f.assign(g.begin(), g.end());
  for (std::size_t i = 1; i < k.size(); ++i) {
    double acc = 0.0;
    auto krow = k.row(i);
    for (std::size_t j = 0; j < i; ++j) acc += krow[j] * report.f[j];
    report.f[i] = g[i] + dt * acc;
  }
  const GridKernel r = resolvent_direct(k);
  const auto rg = apply_kernel(r, g);
  report.bound.resize(g.size());
  double g_inf = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    report.bound[i] = g[i] + rg[i];
    g_inf = std::max(g_inf, g[i]);
  }
  report.slack = GronwallReport::kSlackFactor * dt * g_inf;
  report.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.size(); ++i)
    report.max_excess = std::max(report.max_excess, report.f[i] - report.bound[i]);
  report.satisfied = report.max_excess <= report.slack;
  return report;
}

}  // namespace vmv
