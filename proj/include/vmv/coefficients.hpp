#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vmv/measure.hpp"

namespace vmv {

using ConstPoint = std::span<const double>;
using OutSpan = std::span<double>;

/// Declared Lipschitz/growth constants L1..L6. Advisory only: probes check
/// them, nothing assumes them.
struct AssumptionConstants {
  std::array<std::optional<double>, 6> values{};
  std::optional<double>& operator[](std::size_t k) { return values.at(k - 1); }
  const std::optional<double>& operator[](std::size_t k) const { return values.at(k - 1); }
};

/// Drift b, diffusion sigma and the derivatives of b.
///
/// Evaluators write into caller-provided buffers and must be pure: the
/// particle engine calls them concurrently. Layouts (row-major):
///   b       -> d
///   sigma   -> d x m
///   grad_b  -> d x d, entry (r, c) = d b_r / d x_c
///   lions_b -> d x d, D^L b(t, x, mu)(y)
struct CoefficientSet {
  using Field = std::function<void(double t, ConstPoint x, const EmpiricalMeasure& mu, OutSpan out)>;
  using LionsField = std::function<void(double t, ConstPoint x, const EmpiricalMeasure& mu,
                                        ConstPoint y, OutSpan out)>;

  std::size_t d = 1;
  std::size_t m = 1;
  Field b;
  Field sigma;
  Field grad_b;
  LionsField lions_b;
  AssumptionConstants constants;
  std::string label = "custom";

  bool has_derivatives() const { return static_cast<bool>(grad_b) && static_cast<bool>(lions_b); }
};

/// b(t, x, mu) = A x + B mean(mu);  sigma(t, x, mu) = sigma0 + sum_k x_k sigma1[k].
struct LinearMeanFieldParams {
  Eigen::MatrixXd A;       // d x d
  Eigen::MatrixXd B;       // d x d
  Eigen::MatrixXd sigma0;  // d x m
  std::vector<Eigen::MatrixXd> sigma1;  // empty, or d matrices of size d x m

  static LinearMeanFieldParams scalar(double a, double b, double s0, double s1 = 0.0);
};

/// The built-in model. grad_b = A and D^L b = B identically. Constants
/// L1 = |A| + |B| + |sigma1|, L3 = |A|, L5 = 0, L6 = |A| are declared (operator
/// norms; |sigma1| is the sum of the per-component norms).
CoefficientSet linear_mean_field(const LinearMeanFieldParams& params);

/// Spectral norm of a row-major rows x cols block.
double operator_norm(std::span<const double> a, std::size_t rows, std::size_t cols);
double euclidean_norm(std::span<const double> v);

/// Seeded generator of probe points: t in [0, t_max], x and measure atoms
/// uniform in [-box, box]^d. With `fixed_measure` every sample shares one
/// measure.
struct ProbeSampler {
  std::uint64_t seed = 0;
  std::size_t dim = 1;
  double box = 10.0;
  double t_max = 1.0;
  std::size_t atoms = 8;
  bool fixed_measure = false;
};

struct ProbeWitness {
  double t = 0.0;
  std::vector<double> x, y;
  double ratio = 0.0;
};

struct LipschitzReport {
  double l1_hat = 0.0;  // Lipschitz ratio of (b, sigma)
  double l2_hat = 0.0;  // linear-growth ratio
  double l3_hat = 0.0;  // sup |grad b|
  double lions_hat = 0.0;  // sup |D^L b(t, x, mu)|_{L^2(mu)}, reported only
  double l5_hat = 0.0;  // Lipschitz ratio of grad b
  double l6_hat = 0.0;  // |grad b(t, 0, delta_0)|
  ProbeWitness l1_witness, l2_witness;
  std::array<bool, 6> falsified{};  // by index k - 1 for L_k
  bool any_falsified() const;
};

/// Empirical maxima of the assumption ratios over sampled pairs. A declared
/// constant is falsified when its ratio exceeds it by more than 1e-9.
LipschitzReport lipschitz_probe(const CoefficientSet& coeffs, const ProbeSampler& sampler,
                                std::size_t n_samples);

struct LionsCheckReport {
  std::vector<double> analytic;   // sum_i w_i D^L b(t, x, mu)(x_i) phi(x_i)
  std::vector<double> eps;
  std::vector<double> discrepancy;  // max-component |finite difference - analytic|
  double extrapolated = 0.0;        // discrepancy of the eps -> 0 linear extrapolation
  double observed_order = 0.0;      // log-log slope over the last two eps
  bool passed = false;
};

/// Finite-difference check of lions_b along the push-forward mu o (I + eps phi)^-1.
/// `phi` holds one d-vector per atom of mu (row-major).
LionsCheckReport lions_fd_check(const CoefficientSet& coeffs, double t, ConstPoint x,
                                const EmpiricalMeasure& mu, std::span<const double> phi,
                                std::span<const double> eps_list);

}  // namespace vmv
