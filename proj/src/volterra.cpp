#include "vmv/volterra.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "history.hpp"
#include "vmv/errors.hpp"

namespace vmv {

Path::Path(TimeGrid g, std::size_t d, std::vector<double> v) : grid(g), dim(d), values(std::move(v)) {
  if (values.size() != grid.nodes() * dim) throw GridMismatchError("path length differs from grid");
}

double Path::sup_norm() const {
  double best = 0.0;
  for (std::size_t i = 0; i < grid.nodes(); ++i) best = std::max(best, euclidean_norm(at(i)));
  return best;
}

double sup_distance(const Path& a, const Path& b) {
  require_same_grid(a.grid, b.grid, "sup_distance");
  if (a.dim != b.dim) throw DimensionError("sup_distance: dimension mismatch");
  double best = 0.0;
  for (std::size_t i = 0; i < a.grid.nodes(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.dim; ++c) {
      const double d = a.at(i)[c] - b.at(i)[c];
      s += d * d;
    }
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

ControlPath::ControlPath(TimeGrid g, std::size_t m, std::vector<double> v)
    : grid(g), dim(m), values(std::move(v)) {
  if (values.size() != grid.steps() * dim) throw GridMismatchError("control length differs from grid");
}

ControlPath ControlPath::constant(TimeGrid g, std::size_t m, double c) {
  return ControlPath(g, m, std::vector<double>(g.steps() * m, c));
}

double ControlPath::energy() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return 0.5 * s * grid.dt();
}

PathEnsemble::PathEnsemble(TimeGrid g, std::size_t n, std::size_t d, std::size_t m, std::uint64_t s)
    : grid(g), n_particles(n), dim(d), noise_dim(m), states(n * g.nodes() * d, 0.0),
      increments(n * g.steps() * m, 0.0), seed(s) {}

EmpiricalMeasure PathEnsemble::marginal(std::size_t i) const {
  std::vector<double> pts(n_particles * dim);
  for (std::size_t p = 0; p < n_particles; ++p) {
    auto x = state(p, i);
    std::copy(x.begin(), x.end(), pts.begin() + static_cast<std::ptrdiff_t>(p * dim));
  }
  return EmpiricalMeasure(dim, std::move(pts));
}

double ensemble_memory_estimate(std::size_t n_particles, std::size_t n_steps, std::size_t d,
                                std::size_t m, bool controlled) {
  const double n = static_cast<double>(n_particles);
  const double steps = static_cast<double>(n_steps);
  const double hist = controlled ? 3.0 : 2.0;
  return 8.0 * n * ((steps + 1.0) * d + steps * m + hist * steps * d);
}

namespace {

using detail::weighted_history;

bool within_guard(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v) || std::abs(v) > kOverflowGuard) return false;
  return true;
}

[[noreturn]] void blow_up(std::size_t step) {
  throw BlowUpError("state exceeded the overflow guard 1e12 at step " + std::to_string(step));
}

// Generic particle scheme. Physical state x = base_k + scale * y where y is
// the simulated variable (scale = 1, base = 0 for the X-form). The drift
// history stores (b(x, mu) - b_ref_k) / scale.
struct Scheme {
  const GridKernel& w1;
  const GridKernel& w2;
  const GridKernel* wc = nullptr;
  const CoefficientSet& cs;
  const ControlPath* control = nullptr;
  double noise_scale = 0.0;
  const Path* base = nullptr;
  double scale = 1.0;
  std::vector<double> b_ref;  // steps x d, empty for the X-form
  const Path* frozen = nullptr;
};

struct Scratch {
  std::vector<double> x, b, sigma, acc_drift, acc_ctrl, acc_noise;
  Scratch(std::size_t d, std::size_t m)
      : x(d), b(d), sigma(d * m), acc_drift(d), acc_ctrl(d), acc_noise(d) {}
};

void run_scheme(const Scheme& sc, PathEnsemble& ens, std::span<const double> start_offset,
                const SimulationOptions& options) {
  const TimeGrid& grid = ens.grid;
  const std::size_t n = grid.steps();
  const std::size_t nodes = grid.nodes();
  const std::size_t d = ens.dim;
  const std::size_t m = ens.noise_dim;
  const std::size_t np = ens.n_particles;
  const double dt = grid.dt();
  const double sqrt_dt = std::sqrt(dt);
  const bool controlled = sc.control != nullptr;
  const RngStream rng(ens.seed);

  std::vector<double> drift(np * n * d, 0.0);
  std::vector<double> noise(np * n * d, 0.0);
  std::vector<double> ctrl(controlled ? np * n * d : 0, 0.0);
  std::vector<double> points(sc.frozen ? 0 : np * d);

  auto stream_of = [&](std::size_t p) -> std::uint64_t {
    return options.particle_streams.empty() ? p : options.particle_streams[p];
  };

  for (std::size_t i = 0; i < n; ++i) {
    const double t = grid.t(i);
    // Law at step i, complete before any particle advances.
    std::optional<EmpiricalMeasure> law;
    if (sc.frozen) {
      law = EmpiricalMeasure::dirac(sc.frozen->at(i));
    } else {
      for (std::size_t p = 0; p < np; ++p) {
        auto y = ens.state(p, i);
        for (std::size_t c = 0; c < d; ++c)
          points[p * d + c] = sc.base ? sc.base->at(i)[c] + sc.scale * y[c] : y[c];
      }
      law = EmpiricalMeasure(d, points);
    }
    const EmpiricalMeasure& mu = *law;
    const double* w1row = sc.w1.row(i + 1).data();
    const double* w2row = sc.w2.row(i + 1).data();
    const double* wcrow = controlled ? sc.wc->row(i + 1).data() : nullptr;

    auto advance = [&](std::size_t p, Scratch& s) -> bool {
      auto y = ens.state(p, i);
      for (std::size_t c = 0; c < d; ++c)
        s.x[c] = sc.base ? sc.base->at(i)[c] + sc.scale * y[c] : y[c];
      double* dh = drift.data() + (p * n + i) * d;
      double* nh = noise.data() + (p * n + i) * d;
      sc.cs.b(t, s.x, mu, s.b);
      for (std::size_t c = 0; c < d; ++c)
        dh[c] = sc.b_ref.empty() ? s.b[c] : (s.b[c] - sc.b_ref[i * d + c]) / sc.scale;
      sc.cs.sigma(t, s.x, mu, s.sigma);
      double* dw = ens.increments.data() + (p * n + i) * m;
      const std::uint64_t stream = stream_of(p);
      for (std::size_t c = 0; c < m; ++c)
        dw[c] = sqrt_dt * rng.normal(StreamTag::brownian, stream, i, c);
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m; ++c) acc += s.sigma[r * m + c] * dw[c];
        nh[r] = acc;
      }
      if (controlled) {
        double* ch = ctrl.data() + (p * n + i) * d;
        auto v = sc.control->at(i);
        for (std::size_t r = 0; r < d; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < m; ++c) acc += s.sigma[r * m + c] * v[c];
          ch[r] = acc;
        }
      }
      std::fill(s.acc_drift.begin(), s.acc_drift.end(), 0.0);
      std::fill(s.acc_ctrl.begin(), s.acc_ctrl.end(), 0.0);
      std::fill(s.acc_noise.begin(), s.acc_noise.end(), 0.0);
      const std::size_t count = i + 1;
      weighted_history(w1row, drift.data() + p * n * d, count, d, s.acc_drift.data());
      if (controlled)
        weighted_history(wcrow, ctrl.data() + p * n * d, count, d, s.acc_ctrl.data());
      if (sc.noise_scale != 0.0)
        weighted_history(w2row, noise.data() + p * n * d, count, d, s.acc_noise.data());
      auto next = ens.state(p, i + 1);
      for (std::size_t c = 0; c < d; ++c) {
        double v = start_offset.empty() ? ens.state(p, 0)[c] : start_offset[c];
        v += dt * s.acc_drift[c];
        if (controlled) v += dt * s.acc_ctrl[c];
        if (sc.noise_scale != 0.0) v += sc.noise_scale * s.acc_noise[c];
        next[c] = v;
      }
      return within_guard(next);
    };

    bool ok = true;
    if (options.exec == Exec::serial) {
      Scratch s(d, m);
      for (std::size_t p = 0; p < np; ++p) ok = advance(p, s) && ok;
    } else {
      const auto np_signed = static_cast<std::ptrdiff_t>(np);
#pragma omp parallel reduction(&& : ok)
      {
        Scratch s(d, m);
#pragma omp for schedule(static)
        for (std::ptrdiff_t p = 0; p < np_signed; ++p)
          ok = advance(static_cast<std::size_t>(p), s) && ok;
      }
    }
    if (!ok) blow_up(i + 1);
  }
  (void)nodes;
}

void check_budget(std::size_t n_particles, const TimeGrid& grid, std::size_t d, std::size_t m,
                  bool controlled, const SimulationOptions& options) {
  const double bytes = ensemble_memory_estimate(n_particles, grid.steps(), d, m, controlled);
  if (bytes > options.memory_limit_bytes)
    throw BudgetError("particle run needs ~" + std::to_string(bytes / (1024.0 * 1024.0)) +
                      " MiB, over the configured budget of " +
                      std::to_string(options.memory_limit_bytes / (1024.0 * 1024.0)) + " MiB");
}

void check_kernels(const TimeGrid& grid, const GridKernel& a, const GridKernel& b) {
  require_same_grid(grid, a.grid(), "kernel weights");
  require_same_grid(grid, b.grid(), "kernel weights");
}

}  // namespace

LimitSolution solve_deterministic_limit(const GridKernel& k1, const CoefficientSet& coeffs,
                                        std::span<const double> xi, LimitMethod method) {
  const TimeGrid& grid = k1.grid();
  const std::size_t d = coeffs.d;
  const std::size_t n = grid.steps();
  if (xi.size() != d) throw DimensionError("initial state has the wrong dimension");
  const double dt = grid.dt();
  std::vector<double> hist(n * d, 0.0);
  std::vector<double> b(d), acc(d);

  if (method.kind == LimitMethod::Kind::stepping) {
    LimitSolution sol{Path(grid, d), 1, 0.0};
    std::copy(xi.begin(), xi.end(), sol.path.at(0).begin());
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = sol.path.at(i);
      coeffs.b(grid.t(i), x, EmpiricalMeasure::dirac(x), b);
      std::copy(b.begin(), b.end(), hist.begin() + static_cast<std::ptrdiff_t>(i * d));
      std::fill(acc.begin(), acc.end(), 0.0);
      weighted_history(k1.row(i + 1).data(), hist.data(), i + 1, d, acc.data());
      auto next = sol.path.at(i + 1);
      for (std::size_t c = 0; c < d; ++c) next[c] = xi[c] + dt * acc[c];
      if (!within_guard(next)) blow_up(i + 1);
    }
    return sol;
  }

  // Picard: the Dirac law moves with the iterate.
  Path current(grid, d);
  for (std::size_t i = 0; i < grid.nodes(); ++i) std::copy(xi.begin(), xi.end(), current.at(i).begin());
  Path next(grid, d);
  double change = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= method.max_iter; ++it) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto x = current.at(k);
      coeffs.b(grid.t(k), x, EmpiricalMeasure::dirac(x), b);
      std::copy(b.begin(), b.end(), hist.begin() + static_cast<std::ptrdiff_t>(k * d));
    }
    std::copy(xi.begin(), xi.end(), next.at(0).begin());
    for (std::size_t i = 1; i <= n; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      weighted_history(k1.row(i).data(), hist.data(), i, d, acc.data());
      auto out = next.at(i);
      for (std::size_t c = 0; c < d; ++c) out[c] = xi[c] + dt * acc[c];
      if (!within_guard(out)) blow_up(i);
    }
    change = sup_distance(next, current);
    std::swap(current, next);
    if (change <= method.tol * (1.0 + current.sup_norm())) return {std::move(current), it, change};
  }
  throw ConvergenceError("Picard iteration did not converge; last sup-norm change " +
                         std::to_string(change));
}

PathEnsemble simulate_particles(const GridKernel& k1, const GridKernel& k2,
                                const CoefficientSet& coeffs, const InitialCondition& xi, double eps,
                                std::size_t n_particles, std::uint64_t seed,
                                const SimulationOptions& options) {
  const TimeGrid& grid = k1.grid();
  check_kernels(grid, k1, k2);
  if (!(eps >= 0.0 && eps <= 1.0)) throw DomainError("eps must lie in [0, 1]");
  if (n_particles < 1) throw DomainError("need at least one particle");
  if (xi.mean.size() != coeffs.d) throw DimensionError("initial state has the wrong dimension");
  if (!xi.spread.empty() && xi.spread.size() != coeffs.d)
    throw DimensionError("initial spread has the wrong dimension");
  if (!options.particle_streams.empty() && options.particle_streams.size() != n_particles)
    throw DimensionError("particle_streams needs one entry per particle");
  check_budget(n_particles, grid, coeffs.d, coeffs.m, false, options);

  PathEnsemble ens(grid, n_particles, coeffs.d, coeffs.m, seed);
  const RngStream rng(seed);
  for (std::size_t p = 0; p < n_particles; ++p) {
    auto x0 = ens.state(p, 0);
    const std::uint64_t stream = options.particle_streams.empty() ? p : options.particle_streams[p];
    for (std::size_t c = 0; c < coeffs.d; ++c) {
      x0[c] = xi.mean[c];
      if (!xi.spread.empty()) x0[c] += xi.spread[c] * rng.normal(StreamTag::initial_state, stream, 0, c);
    }
  }
  Scheme sc{k1, k2, nullptr, coeffs, nullptr, std::sqrt(eps), nullptr, 1.0, {}, nullptr};
  run_scheme(sc, ens, {}, options);
  return ens;
}

PathEnsemble simulate_controlled(const GridKernel& k1, const GridKernel& k2, const GridKernel& kc,
                                 const CoefficientSet& coeffs, std::span<const double> xi,
                                 const ControlPath& v, const ControlledSpec& spec,
                                 std::size_t n_particles, std::uint64_t seed,
                                 const SimulationOptions& options) {
  const TimeGrid& grid = k1.grid();
  check_kernels(grid, k1, k2);
  require_same_grid(grid, kc.grid(), "control kernel weights");
  require_same_grid(grid, v.grid, "control path");
  if (v.dim != coeffs.m) throw DimensionError("control dimension must equal the noise dimension");
  if (!(spec.eps >= 0.0 && spec.eps <= 1.0)) throw DomainError("eps must lie in [0, 1]");
  if (n_particles < 1) throw DomainError("need at least one particle");
  if (xi.size() != coeffs.d) throw DimensionError("initial state has the wrong dimension");
  if (spec.law.frozen) {
    require_same_grid(grid, spec.law.frozen->grid, "frozen law path");
    if (spec.law.frozen->dim != coeffs.d) throw DimensionError("frozen law path dimension");
  }
  check_budget(n_particles, grid, coeffs.d, coeffs.m, true, options);

  PathEnsemble ens(grid, n_particles, coeffs.d, coeffs.m, seed);
  Scheme sc{k1, k2, &kc, coeffs, &v, 0.0, nullptr, 1.0, {}, spec.law.frozen};
  std::vector<double> start(xi.begin(), xi.end());
  if (spec.form == ControlForm::ldp) {
    sc.noise_scale = std::sqrt(spec.eps);
    for (std::size_t p = 0; p < n_particles; ++p)
      std::copy(xi.begin(), xi.end(), ens.state(p, 0).begin());
    start.clear();
  } else {
    if (!spec.x0) throw DomainError("mdp form needs the limit path X0");
    require_same_grid(grid, spec.x0->grid, "limit path");
    if (!(spec.h_eps > 0.0)) throw DomainError("h(eps) must be positive");
    if (!(spec.eps > 0.0)) throw DomainError("mdp form needs eps > 0");
    sc.base = spec.x0;
    sc.scale = std::sqrt(spec.eps) * spec.h_eps;
    sc.noise_scale = 1.0 / spec.h_eps;
    sc.b_ref.resize(grid.steps() * coeffs.d);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      const auto x = spec.x0->at(k);
      coeffs.b(grid.t(k), x, EmpiricalMeasure::dirac(x),
               std::span<double>(sc.b_ref.data() + k * coeffs.d, coeffs.d));
    }
    start.assign(coeffs.d, 0.0);
  }
  run_scheme(sc, ens, start, options);
  return ens;
}

LimitSolution solve_controlled_deterministic(const GridKernel& k1, const GridKernel& kc,
                                             const CoefficientSet& coeffs,
                                             std::span<const double> xi, const ControlPath& v,
                                             const Path& x0, ControlledMode mode,
                                             std::size_t max_iter, double tol) {
  const TimeGrid& grid = k1.grid();
  require_same_grid(grid, kc.grid(), "control kernel weights");
  require_same_grid(grid, v.grid, "control path");
  require_same_grid(grid, x0.grid, "limit path");
  const std::size_t d = coeffs.d, m = coeffs.m, n = grid.steps();
  if (v.dim != m) throw DimensionError("control dimension must equal the noise dimension");
  if (x0.dim != d) throw DimensionError("limit path dimension");
  const double dt = grid.dt();
  std::vector<double> sig(d * m), b(d), acc1(d), acc2(d);
  std::vector<double> hist_drift(n * d, 0.0), hist_ctrl(n * d, 0.0);

  auto sigma_times_v = [&](std::size_t k, double* out) {
    auto vk = v.at(k);
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c) s += sig[r * m + c] * vk[c];
      out[r] = s;
    }
  };

  if (mode == ControlledMode::mdp_linearized) {
    if (!coeffs.grad_b) throw DomainError("mdp_linearized needs grad_b");
    LimitSolution sol{Path(grid, d), 1, 0.0};
    std::vector<double> grad(d * d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto xk = x0.at(i);
      const auto law = EmpiricalMeasure::dirac(xk);
      coeffs.grad_b(grid.t(i), xk, law, grad);
      coeffs.sigma(grid.t(i), xk, law, sig);
      const auto psi = sol.path.at(i);
      for (std::size_t r = 0; r < d; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += grad[r * d + c] * psi[c];
        hist_drift[i * d + r] = s;
      }
      sigma_times_v(i, hist_ctrl.data() + i * d);
      std::fill(acc1.begin(), acc1.end(), 0.0);
      std::fill(acc2.begin(), acc2.end(), 0.0);
      weighted_history(k1.row(i + 1).data(), hist_drift.data(), i + 1, d, acc1.data());
      weighted_history(kc.row(i + 1).data(), hist_ctrl.data(), i + 1, d, acc2.data());
      auto next = sol.path.at(i + 1);
      for (std::size_t c = 0; c < d; ++c) next[c] = dt * acc1[c] + dt * acc2[c];
      if (!within_guard(next)) blow_up(i + 1);
    }
    return sol;
  }

  if (xi.size() != d) throw DimensionError("initial state has the wrong dimension");
  Path current(grid, d);
  for (std::size_t i = 0; i < grid.nodes(); ++i) std::copy(xi.begin(), xi.end(), current.at(i).begin());
  Path next(grid, d);
  double change = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= max_iter; ++it) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto law = EmpiricalMeasure::dirac(x0.at(k));
      const auto phi = current.at(k);
      coeffs.b(grid.t(k), phi, law, b);
      coeffs.sigma(grid.t(k), phi, law, sig);
      std::copy(b.begin(), b.end(), hist_drift.begin() + static_cast<std::ptrdiff_t>(k * d));
      sigma_times_v(k, hist_ctrl.data() + k * d);
    }
    std::copy(xi.begin(), xi.end(), next.at(0).begin());
    for (std::size_t i = 1; i <= n; ++i) {
      std::fill(acc1.begin(), acc1.end(), 0.0);
      std::fill(acc2.begin(), acc2.end(), 0.0);
      weighted_history(k1.row(i).data(), hist_drift.data(), i, d, acc1.data());
      weighted_history(kc.row(i).data(), hist_ctrl.data(), i, d, acc2.data());
      auto out = next.at(i);
      for (std::size_t c = 0; c < d; ++c) out[c] = xi[c] + dt * acc1[c] + dt * acc2[c];
      if (!within_guard(out)) blow_up(i);
    }
    change = sup_distance(next, current);
    std::swap(current, next);
    if (change <= tol * (1.0 + current.sup_norm())) return {std::move(current), it, change};
  }
  throw ConvergenceError("controlled Picard iteration did not converge; last sup-norm change " +
                         std::to_string(change));
}

}  // namespace vmv
