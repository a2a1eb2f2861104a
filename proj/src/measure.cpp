#include "vmv/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "vmv/errors.hpp"
#include "vmv/rng.hpp"

namespace vmv {

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> points)
    : dim_(dim), points_(std::move(points)) {
  if (dim_ == 0) throw DimensionError("measure dimension must be positive");
  if (points_.empty() || points_.size() % dim_ != 0)
    throw DimensionError("measure points must be a nonempty multiple of the dimension");
  const std::size_t n = points_.size() / dim_;
  weights_.assign(n, 1.0 / static_cast<double>(n));
  uniform_ = true;
  finalize();
}

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> points,
                                   std::vector<double> weights)
    : dim_(dim), points_(std::move(points)), weights_(std::move(weights)) {
  if (dim_ == 0) throw DimensionError("measure dimension must be positive");
  if (points_.empty() || points_.size() != weights_.size() * dim_)
    throw DimensionError("measure needs one weight per point");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw DomainError("measure weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("measure weights must sum to 1");
  uniform_ = std::all_of(weights_.begin(), weights_.end(),
                         [&](double w) { return w == weights_.front(); });
  finalize();
}

void EmpiricalMeasure::finalize() {
  mean_.assign(dim_, 0.0);
  second_moment_ = 0.0;
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights_[i];
    double sq = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) {
      const double x = points_[i * dim_ + c];
      if (!std::isfinite(x)) throw DomainError("measure points must be finite");
      mean_[c] += w * x;
      sq += x * x;
    }
    second_moment_ += w * sq;
  }
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> point) {
  return EmpiricalMeasure(point.size(), std::vector<double>(point.begin(), point.end()));
}

EmpiricalMeasure EmpiricalMeasure::dirac_origin(std::size_t dim) {
  return EmpiricalMeasure(dim, std::vector<double>(dim, 0.0));
}

EmpiricalMeasure EmpiricalMeasure::shifted(std::span<const double> displacement, double eps) const {
  if (displacement.size() != points_.size())
    throw DimensionError("shift needs one displacement vector per atom");
  std::vector<double> moved(points_);
  for (std::size_t k = 0; k < moved.size(); ++k) moved[k] += eps * displacement[k];
  return EmpiricalMeasure(dim_, std::move(moved), weights_);
}

void EmpiricalMeasure::write_csv(std::ostream& out) const {
  out << "index";
  for (std::size_t c = 0; c < dim_; ++c) out << ",x" << (c + 1);
  out << ",weight\n";
  const auto old = out.precision(17);
  for (std::size_t i = 0; i < size(); ++i) {
    out << i;
    for (double x : point(i)) out << ',' << x;
    out << ',' << weights_[i] << '\n';
  }
  out.precision(old);
}

namespace {

struct Atom {
  double x;
  double w;
};

// Squared W2 between two weighted 1-d samples via the quantile coupling.
double w2_squared_1d(std::vector<Atom> a, std::vector<Atom> b) {
  auto by_x = [](const Atom& p, const Atom& q) { return p.x < q.x; };
  std::sort(a.begin(), a.end(), by_x);
  std::sort(b.begin(), b.end(), by_x);
  double cost = 0.0;
  std::size_t i = 0, j = 0;
  double ra = a.empty() ? 0.0 : a[0].w;
  double rb = b.empty() ? 0.0 : b[0].w;
  while (i < a.size() && j < b.size()) {
    const double m = std::min(ra, rb);
    const double d = a[i].x - b[j].x;
    cost += m * d * d;
    ra -= m;
    rb -= m;
    // Advance whichever side is exhausted; ties advance both.
    if (ra <= 1e-15) {
      if (++i < a.size()) ra = a[i].w;
    }
    if (rb <= 1e-15) {
      if (++j < b.size()) rb = b[j].w;
    }
  }
  return cost;
}

std::vector<Atom> project(const EmpiricalMeasure& mu, std::span<const double> dir) {
  std::vector<Atom> out(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    auto p = mu.point(i);
    double v = 0.0;
    for (std::size_t c = 0; c < dir.size(); ++c) v += p[c] * dir[c];
    out[i] = {v, mu.weight(i)};
  }
  return out;
}

double sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::uint64_t seed) {
  const std::size_t d = mu.dim();
  const RngStream rng(seed);
  std::vector<double> dir(d);
  double acc = 0.0;
  for (std::size_t k = 0; k < kSlicedDirections; ++k) {
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dir[c] = rng.normal(StreamTag::sliced_directions, k, 0, c);
      norm += dir[c] * dir[c];
    }
    norm = std::sqrt(norm);
    for (double& v : dir) v /= norm;
    acc += w2_squared_1d(project(mu, dir), project(nu, dir));
  }
  return std::sqrt(static_cast<double>(d) * acc / static_cast<double>(kSlicedDirections));
}

}  // namespace

std::vector<std::size_t> min_cost_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw DimensionError("assignment cost must be n x n");
  // Shortest augmenting path with row/column potentials (1-based internally).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

W2Result wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::uint64_t seed) {
  if (mu.dim() != nu.dim()) throw DimensionError("wasserstein2: dimension mismatch");
  const std::size_t d = mu.dim();
  if (d == 1) {
    std::vector<Atom> a(mu.size()), b(nu.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = {mu.point(i)[0], mu.weight(i)};
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = {nu.point(i)[0], nu.weight(i)};
    return {std::sqrt(std::max(0.0, w2_squared_1d(std::move(a), std::move(b)))), false};
  }
  // Against a single atom the only coupling moves every atom onto it.
  if (mu.size() == 1 || nu.size() == 1) {
    const auto& cloud = mu.size() == 1 ? nu : mu;
    const auto target = (mu.size() == 1 ? mu : nu).point(0);
    double total = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      double c = 0.0;
      auto x = cloud.point(i);
      for (std::size_t k = 0; k < d; ++k) c += (x[k] - target[k]) * (x[k] - target[k]);
      total += cloud.weight(i) * c;
    }
    return {std::sqrt(total), false};
  }
  const std::size_t n = mu.size();
  if (mu.uniform() && nu.uniform() && n == nu.size() && n <= kAssignmentBudget) {
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double c = 0.0;
        auto x = mu.point(i);
        auto y = nu.point(j);
        for (std::size_t k = 0; k < d; ++k) c += (x[k] - y[k]) * (x[k] - y[k]);
        cost[i * n + j] = c;
      }
    const auto match = min_cost_assignment(cost, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += cost[i * n + match[i]];
    return {std::sqrt(total / static_cast<double>(n)), false};
  }
  return {sliced(mu, nu, seed), true};
}

double distance_to_dirac0(const EmpiricalMeasure& mu) { return std::sqrt(mu.second_moment()); }

}  // namespace vmv
