#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace vmv {

/// Finite weighted point cloud in R^d standing in for a law in P_2(R^d).
/// Weights are nonnegative and sum to one; the mean and second moment are
/// computed once at construction.
class EmpiricalMeasure {
public:
  /// Uniform weights over `points` (row-major, size n * dim).
  EmpiricalMeasure(std::size_t dim, std::vector<double> points);
  EmpiricalMeasure(std::size_t dim, std::vector<double> points, std::vector<double> weights);

  static EmpiricalMeasure dirac(std::span<const double> point);
  static EmpiricalMeasure dirac_origin(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  bool uniform() const { return uniform_; }

  std::span<const double> point(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> points() const { return points_; }
  std::span<const double> weights() const { return weights_; }

  std::span<const double> mean() const { return mean_; }
  /// sum_i w_i |x_i|^2
  double second_moment() const { return second_moment_; }

  /// Push-forward under x -> x + eps * phi(x), phi given per atom.
  EmpiricalMeasure shifted(std::span<const double> displacement, double eps) const;

  void write_csv(std::ostream& out) const;

private:
  void finalize();

  std::size_t dim_;
  std::vector<double> points_;
  std::vector<double> weights_;
  std::vector<double> mean_;
  double second_moment_ = 0.0;
  bool uniform_ = true;
};

struct W2Result {
  double value = 0.0;
  bool approximate = false;
};

inline constexpr std::size_t kAssignmentBudget = 512;
inline constexpr std::size_t kSlicedDirections = 64;

/// Quadratic Wasserstein distance. Exact in d = 1 (monotone rearrangement)
/// and for uniform clouds of equal size <= kAssignmentBudget in d > 1
/// (minimum-cost assignment); otherwise sliced over kSlicedDirections seeded
/// directions, rescaled by sqrt(d), and flagged approximate.
W2Result wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                      std::uint64_t seed = 0);

/// W_2(mu, delta_0) = sqrt(sum_i w_i |x_i|^2).
double distance_to_dirac0(const EmpiricalMeasure& mu);

/// Minimum-cost perfect matching on a square cost matrix (row-major, n x n).
/// Returns assignment[row] = column.
std::vector<std::size_t> min_cost_assignment(std::span<const double> cost, std::size_t n);

}  // namespace vmv
