#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vmv/coefficients.hpp"
#include "vmv/grid_kernel.hpp"
#include "vmv/rng.hpp"

namespace vmv {

inline constexpr double kOverflowGuard = 1e12;

/// Deterministic d-dimensional path on the grid nodes.
struct Path {
  TimeGrid grid;
  std::size_t dim = 1;
  std::vector<double> values;  // nodes x dim

  Path(TimeGrid g, std::size_t d) : grid(g), dim(d), values(g.nodes() * d, 0.0) {}
  Path(TimeGrid g, std::size_t d, std::vector<double> v);

  std::span<const double> at(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<double> at(std::size_t i) { return {values.data() + i * dim, dim}; }
  double sup_norm() const;
};

/// sup_i |a_i - b_i|.
double sup_distance(const Path& a, const Path& b);

/// Piecewise-constant control on the grid cells: v_k on [t_k, t_{k+1}).
struct ControlPath {
  TimeGrid grid;
  std::size_t dim = 1;
  std::vector<double> values;  // steps x dim

  ControlPath(TimeGrid g, std::size_t m) : grid(g), dim(m), values(g.steps() * m, 0.0) {}
  ControlPath(TimeGrid g, std::size_t m, std::vector<double> v);
  static ControlPath constant(TimeGrid g, std::size_t m, double c);

  std::span<const double> at(std::size_t k) const { return {values.data() + k * dim, dim}; }
  std::span<double> at(std::size_t k) { return {values.data() + k * dim, dim}; }

  /// (1/2) sum_k |v_k|^2 dt
  double energy() const;
};

/// Particle trajectories with their Brownian drivers. Full history is kept:
/// the dynamics are non-Markovian.
struct PathEnsemble {
  TimeGrid grid;
  std::size_t n_particles = 0;
  std::size_t dim = 1;
  std::size_t noise_dim = 1;
  std::vector<double> states;       // particle x node x dim
  std::vector<double> increments;   // particle x step x noise_dim
  std::uint64_t seed = 0;

  PathEnsemble(TimeGrid g, std::size_t n, std::size_t d, std::size_t m, std::uint64_t s);

  std::span<const double> state(std::size_t p, std::size_t i) const {
    return {states.data() + (p * grid.nodes() + i) * dim, dim};
  }
  std::span<double> state(std::size_t p, std::size_t i) {
    return {states.data() + (p * grid.nodes() + i) * dim, dim};
  }
  std::span<const double> increment(std::size_t p, std::size_t k) const {
    return {increments.data() + (p * grid.steps() + k) * noise_dim, noise_dim};
  }
  /// Empirical law of the particles at node i.
  EmpiricalMeasure marginal(std::size_t i) const;
};

/// Initial state: a common point, or i.i.d. Gaussian draws around it.
struct InitialCondition {
  std::vector<double> mean;
  std::vector<double> spread;  // empty: deterministic

  static InitialCondition point(std::vector<double> xi) { return {std::move(xi), {}}; }
  bool deterministic() const { return spread.empty(); }
};

struct SimulationOptions {
  Exec exec = Exec::parallel;
  double memory_limit_bytes = 4.0 * 1024 * 1024 * 1024;
  /// Optional driver-stream index per particle (default: the particle index).
  std::vector<std::uint64_t> particle_streams;
};

/// Bytes a particle run of this size allocates (states, drivers, histories).
double ensemble_memory_estimate(std::size_t n_particles, std::size_t n_steps, std::size_t d,
                                std::size_t m, bool controlled);

struct LimitMethod {
  enum class Kind { picard, stepping };
  Kind kind = Kind::stepping;
  std::size_t max_iter = 1000;
  double tol = 1e-13;

  static LimitMethod picard(std::size_t max_iter = 1000, double tol = 1e-13) {
    return {Kind::picard, max_iter, tol};
  }
  static LimitMethod stepping() { return {}; }
};

struct LimitSolution {
  Path path;
  std::size_t iterations = 0;
  double last_change = 0.0;
};

/// Deterministic limit x_t = xi + int_0^t K1(t, s) b(s, x_s, delta_{x_s}) ds
/// with the left-point scheme. Picard iterates the whole path; stepping
/// marches forward. Both reach the same discrete fixed point.
LimitSolution solve_deterministic_limit(const GridKernel& k1, const CoefficientSet& coeffs,
                                        std::span<const double> xi,
                                        LimitMethod method = LimitMethod::stepping());

/// Interacting particle system for the McKean-Vlasov Volterra equation.
/// Reproducible for a given (seed, N, grid) at any worker count; drivers
/// depend only on the seed, so runs at different eps share them.
PathEnsemble simulate_particles(const GridKernel& k1, const GridKernel& k2,
                                const CoefficientSet& coeffs, const InitialCondition& xi, double eps,
                                std::size_t n_particles, std::uint64_t seed,
                                const SimulationOptions& options = {});

enum class ControlForm {
  ldp,  // X-variable, noise sqrt(eps)
  mdp,  // Y = (X - X0) / (sqrt(eps) h), noise 1/h
};

/// Measure argument for the controlled schemes: the ensemble's own empirical
/// law (of the X-variable) or a Dirac at a frozen path.
struct LawMode {
  const Path* frozen = nullptr;
  static LawMode self() { return {}; }
  static LawMode frozen_at(const Path& p) { return {&p}; }
};

struct ControlledSpec {
  ControlForm form = ControlForm::ldp;
  double eps = 0.0;
  double h_eps = 1.0;         // only for the mdp form
  const Path* x0 = nullptr;   // required for the mdp form
  LawMode law = LawMode::self();
};

/// Controlled particle scheme: drift kernel K1, control kernel Kc acting on
/// sigma * v, noise kernel K2.
PathEnsemble simulate_controlled(const GridKernel& k1, const GridKernel& k2, const GridKernel& kc,
                                 const CoefficientSet& coeffs, std::span<const double> xi,
                                 const ControlPath& v, const ControlledSpec& spec,
                                 std::size_t n_particles, std::uint64_t seed,
                                 const SimulationOptions& options = {});

enum class ControlledMode { ldp, mdp_linearized };

/// Deterministic controlled equations with the law frozen at delta_{X0}:
///   ldp:            phi = xi + int K1 b(phi, delta_X0) + int Kc sigma(phi, delta_X0) v  (Picard)
///   mdp_linearized: psi = int K1 grad_b(X0, delta_X0) psi + int Kc sigma(X0, delta_X0) v
LimitSolution solve_controlled_deterministic(const GridKernel& k1, const GridKernel& kc,
                                             const CoefficientSet& coeffs,
                                             std::span<const double> xi, const ControlPath& v,
                                             const Path& x0, ControlledMode mode,
                                             std::size_t max_iter = 1000, double tol = 1e-14);

}  // namespace vmv
