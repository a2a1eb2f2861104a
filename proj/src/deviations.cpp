#include "vmv/deviations.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "vmv/errors.hpp"

namespace vmv {

double Halfspace::margin(std::span<const double> x) const {
  if (x.size() != normal.size()) throw DimensionError("halfspace normal has the wrong dimension");
  double s = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) s += normal[c] * x[c];
  return s - level;
}

namespace {

using Block = std::vector<double>;  // row-major small matrix

struct FirstKindSolution {
  std::vector<double> v;  // steps x m
  bool regularized = false;
  double lambda = 0.0;
};

// Solves g_i = dt * sum_{k<i} wc(i, k) S_k v_k for i = 1..n, where S_k is d x m.
FirstKindSolution solve_first_kind(const GridKernel& kc, const std::vector<Block>& s,
                                   std::span<const double> g, std::size_t d, std::size_t m,
                                   double lambda_reg) {
  const std::size_t n = kc.grid().steps();
  const double dt = kc.grid().dt();
  FirstKindSolution out;
  out.v.assign(n * m, 0.0);

  bool zero_diagonal = false;
  for (std::size_t k = 0; k < n; ++k)
    if (!(std::abs(kc(k + 1, k)) > 0.0)) zero_diagonal = true;

  // Square, unregularized, nonzero diagonal: forward substitution.
  if (d == m && lambda_reg == 0.0 && !zero_diagonal) {
    bool well_posed = true;
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lu(n);
    for (std::size_t k = 0; k < n && well_posed; ++k) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> sk(
          s[k].data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(sk);
      const auto& sv = svd.singularValues();
      if (!(sv(sv.size() - 1) > 1e-12 * sv(0))) well_posed = false;
      else lu[k] = Eigen::PartialPivLU<Eigen::MatrixXd>(sk);
    }
    if (well_posed) {
      Eigen::VectorXd rhs(static_cast<Eigen::Index>(d));
      for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t r = 0; r < d; ++r) rhs(static_cast<Eigen::Index>(r)) = g[i * d + r];
        for (std::size_t k = 0; k + 1 < i; ++k) {
          const double w = dt * kc(i, k);
          for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < m; ++c) acc += s[k][r * m + c] * out.v[k * m + c];
            rhs(static_cast<Eigen::Index>(r)) -= w * acc;
          }
        }
        rhs /= dt * kc(i, i - 1);
        const Eigen::VectorXd x = lu[i - 1].solve(rhs);
        for (std::size_t c = 0; c < m; ++c) out.v[(i - 1) * m + c] = x(static_cast<Eigen::Index>(c));
      }
      return out;
    }
  }

  // Dense least squares on the full triangular system.
  const auto rows = static_cast<Eigen::Index>(n * d);
  const auto cols = static_cast<Eigen::Index>(n * m);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd b(rows);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t r = 0; r < d; ++r) b(static_cast<Eigen::Index>((i - 1) * d + r)) = g[i * d + r];
    for (std::size_t k = 0; k < i; ++k) {
      const double w = dt * kc(i, k);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < m; ++c)
          a(static_cast<Eigen::Index>((i - 1) * d + r), static_cast<Eigen::Index>(k * m + c)) =
              w * s[k][r * m + c];
    }
  }
  double lambda = lambda_reg;
  if (lambda == 0.0 && zero_diagonal) lambda = 1e-10 * a.norm();
  Eigen::VectorXd x;
  if (lambda > 0.0) {
    Eigen::MatrixXd stacked(rows + cols, cols);
    stacked << a, lambda * Eigen::MatrixXd::Identity(cols, cols);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows + cols);
    rhs.head(rows) = b;
    x = stacked.householderQr().solve(rhs);
    out.regularized = true;
    out.lambda = lambda;
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    cod.setThreshold(1e-13);
    if (cod.rank() < std::min(rows, cols))
      throw RankDeficiencyError("rate inversion: control map is rank deficient (rank " +
                                std::to_string(cod.rank()) + " of " +
                                std::to_string(std::min(rows, cols)) +
                                "); supply a positive regularization");
    x = cod.solve(b);
  }
  for (Eigen::Index j = 0; j < cols; ++j) out.v[static_cast<std::size_t>(j)] = x(j);
  return out;
}

void check_problem(const RateProblem& pb) {
  const TimeGrid& grid = pb.k1.grid();
  require_same_grid(grid, pb.kc.grid(), "control kernel weights");
  require_same_grid(grid, pb.x0.grid, "limit path");
  require_same_grid(grid, pb.target.grid, "rate target");
  if (pb.target.dim != pb.coeffs.d || pb.x0.dim != pb.coeffs.d)
    throw DimensionError("rate target dimension differs from the model");
  if (!(pb.lambda_reg >= 0.0)) throw DomainError("regularization must be nonnegative");
}

double sup_abs(const Path& p) { return p.sup_norm(); }

RateSolution finish(const RateProblem& pb, FirstKindSolution sol) {
  const TimeGrid& grid = pb.k1.grid();
  RateSolution out{ControlPath(grid, pb.coeffs.m, std::move(sol.v))};
  out.rate = out.v_star.energy();
  out.regularized = sol.regularized;
  out.lambda_used = sol.lambda;
  const std::vector<double> start(pb.target.at(0).begin(), pb.target.at(0).end());
  try {
    const auto mode = pb.mode == RateMode::mdp ? ControlledMode::mdp_linearized : ControlledMode::ldp;
    const auto back = solve_controlled_deterministic(pb.k1, pb.kc, pb.coeffs, start, out.v_star,
                                                     pb.x0, mode);
    out.residual = sup_distance(back.path, pb.target);
  } catch (const Error& e) {
    out.residual = std::numeric_limits<double>::infinity();
    out.diagnostic = std::string("re-substitution failed: ") + e.what();
  }
  const double tol = kRateResidualTolerance * (1.0 + sup_abs(pb.target));
  out.attained = out.residual <= tol;
  if (!out.attained && out.diagnostic.empty())
    out.diagnostic = "target is not reachable by the controlled limit map; residual " +
                     std::to_string(out.residual);
  if (out.regularized)
    out.diagnostic += (out.diagnostic.empty() ? "" : "; ") +
                      std::string("Tikhonov regularization applied, lambda = ") +
                      std::to_string(out.lambda_used);
  return out;
}

// Forward stepping of the controlled limit map and its adjoint.
class ControlledMap {
public:
  ControlledMap(const CoefficientSet& coeffs, const GridKernel& k1, const GridKernel& kc,
                std::span<const double> xi, const Path& x0, RateMode mode)
      : cs_(coeffs), k1_(k1), kc_(kc), xi_(xi.begin(), xi.end()), x0_(x0), mode_(mode),
        path_(k1.grid(), coeffs.d) {
    const std::size_t n = grid().steps(), d = cs_.d, m = cs_.m;
    jac_.assign(n, Block(d * d, 0.0));
    dsv_.assign(n, Block(d * d, 0.0));
    sig_.assign(n, Block(d * m, 0.0));
    if (mode_ == RateMode::mdp) {
      if (!cs_.grad_b) throw DomainError("mdp mode needs grad_b");
      for (std::size_t k = 0; k < n; ++k) {
        const auto x = x0_.at(k);
        const auto law = EmpiricalMeasure::dirac(x);
        cs_.grad_b(grid().t(k), x, law, jac_[k]);
        cs_.sigma(grid().t(k), x, law, sig_[k]);
      }
    }
  }

  const TimeGrid& grid() const { return k1_.grid(); }
  const Path& path() const { return path_; }

  const Path& forward(std::span<const double> v) {
    const std::size_t n = grid().steps(), d = cs_.d, m = cs_.m;
    const double dt = grid().dt();
    std::vector<double> drift(n * d), ctrl(n * d), b(d);
    auto p0 = path_.at(0);
    for (std::size_t c = 0; c < d; ++c) p0[c] = mode_ == RateMode::ldp ? xi_[c] : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = path_.at(i);
      if (mode_ == RateMode::ldp) {
        const auto law = EmpiricalMeasure::dirac(x0_.at(i));
        const double t = grid().t(i);
        cs_.b(t, x, law, b);
        cs_.sigma(t, x, law, sig_[i]);
        linearize(i, t, x, law, v.subspan(i * m, m));
      } else {
        for (std::size_t r = 0; r < d; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) s += jac_[i][r * d + c] * x[c];
          b[r] = s;
        }
      }
      for (std::size_t r = 0; r < d; ++r) {
        drift[i * d + r] = b[r];
        double s = 0.0;
        for (std::size_t c = 0; c < m; ++c) s += sig_[i][r * m + c] * v[i * m + c];
        ctrl[i * d + r] = s;
      }
      auto next = path_.at(i + 1);
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k <= i; ++k)
          acc += k1_(i + 1, k) * drift[k * d + r] + kc_(i + 1, k) * ctrl[k * d + r];
        next[r] = p0[r] + dt * acc;
        if (!std::isfinite(next[r]) || std::abs(next[r]) > kOverflowGuard)
          throw BlowUpError("controlled path exceeded the overflow guard");
      }
    }
    return path_;
  }

  // Euclidean gradient in v of sum_{i>=1} <source_i, path_i>, at the last
  // forward point.
  std::vector<double> adjoint(std::span<const double> source) const {
    const std::size_t n = grid().steps(), d = cs_.d, m = cs_.m;
    const double dt = grid().dt();
    std::vector<double> lam((n + 1) * d, 0.0), a(d), c(d), grad(n * m, 0.0);
    auto accumulate = [&](std::size_t i) {
      std::fill(a.begin(), a.end(), 0.0);
      std::fill(c.begin(), c.end(), 0.0);
      for (std::size_t j = i + 1; j <= n; ++j)
        for (std::size_t r = 0; r < d; ++r) {
          a[r] += k1_(j, i) * lam[j * d + r];
          c[r] += kc_(j, i) * lam[j * d + r];
        }
    };
    for (std::size_t i = n; i >= 1; --i) {
      accumulate(i);
      for (std::size_t r = 0; r < d; ++r) {
        double s = source[i * d + r];
        if (i < n)
          for (std::size_t q = 0; q < d; ++q)
            s += dt * (jac_[i][q * d + r] * a[q] + dsv_[i][q * d + r] * c[q]);
        lam[i * d + r] = s;
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      accumulate(k);
      for (std::size_t col = 0; col < m; ++col) {
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += sig_[k][r * m + col] * c[r];
        grad[k * m + col] = dt * s;
      }
    }
    return grad;
  }

private:
  void linearize(std::size_t i, double t, std::span<const double> x, const EmpiricalMeasure& law,
                 std::span<const double> v) {
    const std::size_t d = cs_.d, m = cs_.m;
    if (cs_.grad_b) {
      cs_.grad_b(t, x, law, jac_[i]);
    }
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    std::vector<double> bp(d), bm(d), sp(d * m), sm(d * m);
    for (std::size_t c = 0; c < d; ++c) {
      const double h = 1e-6 * (1.0 + std::abs(x[c]));
      xp[c] = x[c] + h;
      xm[c] = x[c] - h;
      if (!cs_.grad_b) {
        cs_.b(t, xp, law, bp);
        cs_.b(t, xm, law, bm);
        for (std::size_t r = 0; r < d; ++r) jac_[i][r * d + c] = (bp[r] - bm[r]) / (2.0 * h);
      }
      cs_.sigma(t, xp, law, sp);
      cs_.sigma(t, xm, law, sm);
      for (std::size_t r = 0; r < d; ++r) {
        double s = 0.0;
        for (std::size_t q = 0; q < m; ++q) s += (sp[r * m + q] - sm[r * m + q]) * v[q];
        dsv_[i][r * d + c] = s / (2.0 * h);
      }
      xp[c] = x[c];
      xm[c] = x[c];
    }
  }

  const CoefficientSet& cs_;
  const GridKernel& k1_;
  const GridKernel& kc_;
  std::vector<double> xi_;
  const Path& x0_;
  RateMode mode_;
  Path path_;
  std::vector<Block> jac_, dsv_, sig_;
};

double norm2(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

struct Objective {
  std::function<double(const std::vector<double>&, std::vector<double>&)> eval;  // f and grad
};

// Barzilai-Borwein gradient descent with a nonmonotone Armijo safeguard.
std::vector<double> bb_descent(const Objective& obj, std::vector<double> v, std::size_t max_iter,
                               double step0, double tol, std::size_t* iterations = nullptr) {
  std::vector<double> g(v.size()), g_new(v.size()), v_new(v.size());
  double f = obj.eval(v, g);
  double step = step0 > 0.0 ? step0 : 1.0 / std::max(norm2(g), 1e-300);
  std::deque<double> history{f};
  std::size_t it = 0;
  const double scale0 = norm2(g);
  for (; it < max_iter; ++it) {
    const double gnorm = norm2(g);
    if (gnorm <= tol * std::max(1.0, scale0) || gnorm == 0.0) break;
    const double f_ref = *std::max_element(history.begin(), history.end());
    double f_new = 0.0;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t j = 0; j < v.size(); ++j) v_new[j] = v[j] - step * g[j];
      f_new = obj.eval(v_new, g_new);
      if (std::isfinite(f_new) && f_new <= f_ref - 1e-4 * step * gnorm * gnorm) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    double ss = 0.0, sy = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double sj = v_new[j] - v[j];
      const double yj = g_new[j] - g[j];
      ss += sj * sj;
      sy += sj * yj;
    }
    v.swap(v_new);
    g.swap(g_new);
    f = f_new;
    history.push_back(f);
    if (history.size() > 10) history.pop_front();
    if (ss == 0.0) break;
    step = sy > 0.0 ? ss / sy : step * 2.0;
  }
  if (iterations) *iterations = it;
  return v;
}

}  // namespace

RateSolution mdp_rate(const RateProblem& pb) {
  if (pb.mode != RateMode::mdp) throw DomainError("mdp_rate needs a problem in mdp mode");
  check_problem(pb);
  if (!pb.coeffs.grad_b) throw DomainError("mdp_rate needs grad_b");
  const TimeGrid& grid = pb.k1.grid();
  const std::size_t n = grid.steps(), d = pb.coeffs.d, m = pb.coeffs.m;
  for (double c : pb.target.at(0))
    if (c != 0.0) throw DomainError("mdp target must start at 0");
  const double dt = grid.dt();
  std::vector<Block> grad(n, Block(d * d)), sig(n, Block(d * m));
  for (std::size_t k = 0; k < n; ++k) {
    const auto x = pb.x0.at(k);
    const auto law = EmpiricalMeasure::dirac(x);
    pb.coeffs.grad_b(grid.t(k), x, law, grad[k]);
    pb.coeffs.sigma(grid.t(k), x, law, sig[k]);
  }
  std::vector<double> hist(n * d), g(grid.nodes() * d, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += grad[k][r * d + c] * pb.target.at(k)[c];
      hist[k * d + r] = s;
    }
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < i; ++k) acc += pb.k1(i, k) * hist[k * d + r];
      g[i * d + r] = pb.target.at(i)[r] - dt * acc;
    }
  return finish(pb, solve_first_kind(pb.kc, sig, g, d, m, pb.lambda_reg));
}

RateSolution ldp_rate(const RateProblem& pb, RateSolver solver, const DescentOptions& descent) {
  if (pb.mode != RateMode::ldp) throw DomainError("ldp_rate needs a problem in ldp mode");
  check_problem(pb);
  const TimeGrid& grid = pb.k1.grid();
  const std::size_t n = grid.steps(), d = pb.coeffs.d, m = pb.coeffs.m;
  const double dt = grid.dt();
  const auto xi = pb.target.at(0);

  if (solver == RateSolver::descent) {
    ControlledMap map(pb.coeffs, pb.k1, pb.kc, xi, pb.x0, RateMode::ldp);
    Objective obj{[&](const std::vector<double>& v, std::vector<double>& grad) {
      const Path& p = map.forward(v);
      std::vector<double> src(grid.nodes() * d, 0.0);
      double f = 0.0;
      for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
          const double r = p.at(i)[c] - pb.target.at(i)[c];
          f += 0.5 * dt * r * r;
          src[i * d + c] = dt * r;
        }
      grad = map.adjoint(src);
      return f;
    }};
    std::size_t iters = 0;
    auto v = bb_descent(obj, std::vector<double>(n * m, 0.0), descent.max_iter, descent.step,
                        descent.tol, &iters);
    RateSolution out = finish(pb, FirstKindSolution{std::move(v), false, 0.0});
    out.diagnostic += (out.diagnostic.empty() ? "" : "; ") + std::string("descent iterations ") +
                      std::to_string(iters);
    return out;
  }

  std::vector<Block> sig(n, Block(d * m));
  std::vector<double> hist(n * d), g(grid.nodes() * d, 0.0), b(d);
  for (std::size_t k = 0; k < n; ++k) {
    const auto x = pb.target.at(k);
    const auto law = EmpiricalMeasure::dirac(pb.x0.at(k));
    pb.coeffs.b(grid.t(k), x, law, b);
    pb.coeffs.sigma(grid.t(k), x, law, sig[k]);
    std::copy(b.begin(), b.end(), hist.begin() + static_cast<std::ptrdiff_t>(k * d));
  }
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < i; ++k) acc += pb.k1(i, k) * hist[k * d + r];
      g[i * d + r] = pb.target.at(i)[r] - xi[r] - dt * acc;
    }
  return finish(pb, solve_first_kind(pb.kc, sig, g, d, m, pb.lambda_reg));
}

RateSolution minimize_rate_endpoint(const CoefficientSet& coeffs, const GridKernel& k1,
                                    const GridKernel& kc, std::span<const double> xi,
                                    const Path& x0, RateMode mode, const Halfspace& event,
                                    const ControlPath& init, const RateMinOptions& options) {
  const TimeGrid& grid = k1.grid();
  require_same_grid(grid, kc.grid(), "control kernel weights");
  require_same_grid(grid, init.grid, "initial control");
  if (event.normal.size() != coeffs.d) throw DimensionError("halfspace normal has the wrong dimension");
  if (init.dim != coeffs.m) throw DimensionError("initial control dimension");
  const std::size_t n = grid.steps(), d = coeffs.d, m = coeffs.m;
  const double dt = grid.dt();

  ControlledMap map(coeffs, k1, kc, xi, x0, mode);
  std::vector<double> v(n * m, 0.0);
  const double margin0 = event.margin(map.forward(v).at(n));
  if (margin0 >= 0.0) {
    RateSolution out{ControlPath(grid, m)};
    out.attained = true;
    out.diagnostic = "uncontrolled path already ends in the event";
    return out;
  }

  std::vector<double> terminal_src(grid.nodes() * d, 0.0);
  for (std::size_t c = 0; c < d; ++c) terminal_src[n * d + c] = event.normal[c];

  v = init.values;
  double penalty = options.penalty0;
  for (std::size_t stage = 0; stage < options.stages; ++stage) {
    Objective obj{[&](const std::vector<double>& u, std::vector<double>& grad) {
      const double short_by = std::max(0.0, -event.margin(map.forward(u).at(n)));
      double energy = 0.0;
      for (double x : u) energy += x * x;
      energy *= 0.5 * dt;
      const auto dc = map.adjoint(terminal_src);
      for (std::size_t j = 0; j < u.size(); ++j) grad[j] = dt * u[j] - penalty * short_by * dc[j];
      return energy + 0.5 * penalty * short_by * short_by;
    }};
    v = bb_descent(obj, std::move(v), options.max_iter, options.step, 1e-12);
    penalty *= options.penalty_growth;
  }

  // Newton projection onto the boundary along the constraint gradient.
  double margin = event.margin(map.forward(v).at(n));
  bool feasible = margin >= 0.0;
  if (!feasible) {
    const auto dir = map.adjoint(terminal_src);
    double tau = 0.0;
    std::vector<double> trial(v.size());
    for (int it = 0; it < 60 && !feasible; ++it) {
      for (std::size_t j = 0; j < v.size(); ++j) trial[j] = v[j] + tau * dir[j];
      margin = event.margin(map.forward(trial).at(n));
      if (margin >= 0.0 && margin <= 1e-13 * (1.0 + std::abs(event.level))) {
        feasible = true;
        break;
      }
      const auto dc = map.adjoint(terminal_src);
      double slope = 0.0;
      for (std::size_t j = 0; j < v.size(); ++j) slope += dc[j] * dir[j];
      if (!(slope > 0.0)) break;
      tau -= margin / slope;
    }
    if (!feasible && margin >= 0.0) feasible = true;
    if (feasible) v = trial;
  }

  RateSolution out{ControlPath(grid, m, v)};
  out.rate = out.v_star.energy();
  out.residual = std::max(0.0, -margin);
  out.attained = feasible;
  if (!feasible)
    out.diagnostic = "no control within the iteration budget reaches the event; terminal shortfall " +
                     std::to_string(-margin);
  return out;
}

std::vector<TailCell> tail_probability_probe(const GridKernel& k1, const GridKernel& k2,
                                             const GridKernel& kc, const CoefficientSet& coeffs,
                                             std::span<const double> xi, const TailProbeSpec& spec,
                                             const SimulationOptions& options) {
  if (spec.event.normal.size() != coeffs.d)
    throw DimensionError("halfspace normal has the wrong dimension");
  if (spec.mode == RateMode::mdp && !(spec.beta > 0.0 && spec.beta < 0.5))
    throw DomainError("beta must lie in (0, 1/2)");
  const TimeGrid& grid = k1.grid();
  const std::size_t n = grid.steps();
  const RngStream root(spec.seed);
  std::optional<Path> x0;
  if (spec.mode == RateMode::mdp) x0 = solve_deterministic_limit(k1, coeffs, xi).path;

  std::vector<TailCell> cells;
  for (std::size_t cell = 0; cell < spec.eps_list.size(); ++cell) {
    TailCell tc;
    tc.eps = spec.eps_list[cell];
    if (!(tc.eps > 0.0 && tc.eps <= 1.0)) throw DomainError("eps values must lie in (0, 1]");
    tc.n = spec.n_particles;
    const std::uint64_t seed = root.derive(StreamTag::tail_cell, cell);
    if (spec.mode == RateMode::ldp) {
      const auto ens = simulate_particles(k1, k2, coeffs, InitialCondition::point({xi.begin(), xi.end()}),
                                          tc.eps, spec.n_particles, seed, options);
      for (std::size_t p = 0; p < ens.n_particles; ++p)
        if (spec.event.margin(ens.state(p, n)) >= 0.0) ++tc.hits;
    } else {
      tc.h = std::pow(tc.eps, -spec.beta);
      ControlledSpec cspec{ControlForm::mdp, tc.eps, tc.h, &*x0, LawMode::self()};
      const auto ens = simulate_controlled(k1, k2, kc, coeffs, xi, ControlPath(grid, coeffs.m), cspec,
                                           spec.n_particles, seed, options);
      for (std::size_t p = 0; p < ens.n_particles; ++p)
        if (spec.event.margin(ens.state(p, n)) >= 0.0) ++tc.hits;
    }
    const double nn = static_cast<double>(tc.n);
    tc.p_hat = static_cast<double>(tc.hits) / nn;
    tc.std_error = std::sqrt(tc.p_hat * (1.0 - tc.p_hat) / nn);
    tc.censored = tc.hits == 0;
    if (tc.censored) {
      tc.decay = std::numeric_limits<double>::quiet_NaN();
    } else {
      const double lp = std::log(tc.p_hat);
      tc.decay = spec.mode == RateMode::ldp ? -tc.eps * lp : -lp / (tc.h * tc.h);
      if (tc.decay == 0.0) tc.decay = 0.0;  // normalize -0
    }
    cells.push_back(tc);
  }
  return cells;
}

}  // namespace vmv
