#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vmv/volterra.hpp"

namespace vmv {

enum class RateMode { ldp, mdp };

/// Target path for a rate evaluation together with the model pieces it
/// needs. In ldp mode target[0] is the initial state; in mdp mode it is 0.
struct RateProblem {
  RateMode mode = RateMode::ldp;
  const CoefficientSet& coeffs;
  const GridKernel& k1;
  const GridKernel& kc;
  const Path& x0;
  const Path& target;
  double lambda_reg = 0.0;
};

struct RateSolution {
  explicit RateSolution(ControlPath v) : v_star(std::move(v)) {}

  ControlPath v_star;
  double rate = 0.0;       // energy of v_star
  double residual = 0.0;   // sup-norm defect after re-substitution
  bool attained = false;
  bool regularized = false;
  double lambda_used = 0.0;
  std::string diagnostic;
};

/// A re-substituted path within this multiple of (1 + sup|target|) counts
/// as attained.
inline constexpr double kRateResidualTolerance = 1e-8;

/// Moderate-deviation rate: invert the linearized controlled equation.
RateSolution mdp_rate(const RateProblem& problem);

enum class RateSolver { triangular, descent };

struct DescentOptions {
  std::size_t max_iter = 5000;
  double step = 0.0;   // initial step; 0 picks one from the first gradient
  double tol = 1e-12;  // relative gradient tolerance
};

/// Large-deviation rate. The triangular solver inverts the constraint, which
/// is affine in v once the target is fixed. The descent solver minimizes the
/// squared defect with adjoint gradients and exists to cross-check.
RateSolution ldp_rate(const RateProblem& problem, RateSolver solver = RateSolver::triangular,
                      const DescentOptions& descent = {});

/// Terminal event {x : normal . x >= level}.
struct Halfspace {
  std::vector<double> normal;
  double level = 0.0;
  double margin(std::span<const double> x) const;  // normal . x - level
};

struct RateMinOptions {
  std::size_t max_iter = 500;  // per penalty stage
  double step = 0.0;
  std::size_t stages = 8;
  double penalty0 = 1.0;
  double penalty_growth = 10.0;
};

/// Minimum control energy whose controlled limit path ends in the halfspace.
/// Penalty continuation followed by a Newton projection onto the boundary.
RateSolution minimize_rate_endpoint(const CoefficientSet& coeffs, const GridKernel& k1,
                                    const GridKernel& kc, std::span<const double> xi,
                                    const Path& x0, RateMode mode, const Halfspace& event,
                                    const ControlPath& init, const RateMinOptions& options = {});

struct TailProbeSpec {
  RateMode mode = RateMode::ldp;
  Halfspace event;
  std::vector<double> eps_list;
  double beta = 0.25;  // h(eps) = eps^-beta, mdp only
  std::size_t n_particles = 10000;
  std::uint64_t seed = 0;
};

struct TailCell {
  double eps = 0.0;
  double h = 1.0;
  std::size_t hits = 0;
  std::size_t n = 0;
  double p_hat = 0.0;
  double std_error = 0.0;
  double decay = 0.0;  // -eps log p (ldp) or -log p / h^2 (mdp); NaN when censored
  bool censored = false;
};

/// Crude Monte Carlo estimate of the terminal event probability per eps.
/// Cells use independent seeds derived from the root seed.
std::vector<TailCell> tail_probability_probe(const GridKernel& k1, const GridKernel& k2,
                                             const GridKernel& kc, const CoefficientSet& coeffs,
                                             std::span<const double> xi, const TailProbeSpec& spec,
                                             const SimulationOptions& options = {});

}  // namespace vmv
