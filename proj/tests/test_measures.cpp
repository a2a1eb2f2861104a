#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "vmv/errors.hpp"
#include "vmv/measure.hpp"
#include "vmv/rng.hpp"

using namespace vmv;

namespace {

// Exact W2 between two uniform clouds of equal size by enumerating every
// permutation (small n only).
double brute_force_w2(const std::vector<double>& a, const std::vector<double>& b, std::size_t d) {
  const std::size_t n = a.size() / d;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = a[i * d + c] - b[perm[i] * d + c];
        cost += diff * diff;
      }
    best = std::min(best, cost / n);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

std::vector<double> draw(const RngStream& rng, std::size_t n, std::uint64_t tag_index) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 4.0 * rng.uniform(StreamTag::sampler, tag_index, i, 0) - 2.0;
  return v;
}

}  // namespace

TEST_CASE("measure construction") {
  const EmpiricalMeasure mu(1, {1.0, 3.0});
  CHECK(mu.size() == 2);
  CHECK(mu.mean()[0] == doctest::Approx(2.0));
  CHECK(mu.second_moment() == doctest::Approx(5.0));
  CHECK_THROWS_AS(EmpiricalMeasure(1, {1.0, 2.0}, {0.7, 0.7}), DomainError);
  CHECK_THROWS_AS(EmpiricalMeasure(1, {1.0, 2.0}, {1.5, -0.5}), DomainError);
  CHECK_THROWS_AS(EmpiricalMeasure(2, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(EmpiricalMeasure(1, {std::nan("")}), DomainError);
}

TEST_CASE("wasserstein examples") {
  const EmpiricalMeasure mu(1, {0.3, -1.0, 2.5});
  CHECK(wasserstein2(mu, mu).value == 0.0);

  const std::vector<double> zero{0.0}, one{1.0};
  CHECK(wasserstein2(EmpiricalMeasure::dirac(zero), EmpiricalMeasure::dirac(one)).value ==
        doctest::Approx(1.0));

  const EmpiricalMeasure a(1, {0.0, 2.0}), b(1, {1.0, 1.0});
  CHECK(wasserstein2(a, b).value == doctest::Approx(brute_force_w2({0, 2}, {1, 1}, 1)));
  CHECK(wasserstein2(a, b).value == doctest::Approx(1.0));

  CHECK_THROWS_AS(wasserstein2(a, EmpiricalMeasure(2, {0.0, 0.0})), DimensionError);
}

TEST_CASE("weighted one-dimensional wasserstein") {
  // 1/2 at 0, 1/2 at 1 against the point 0.5: every unit of mass moves 0.5.
  const EmpiricalMeasure mu(1, {0.0, 1.0}, {0.5, 0.5});
  const std::vector<double> half{0.5};
  CHECK(wasserstein2(mu, EmpiricalMeasure::dirac(half)).value == doctest::Approx(0.5));
  // Mass 1/4 at 0 and 3/4 at 1 against 1/2 at 0 and 1/2 at 1: mass 1/4 moves
  // from 1 to 0, cost 1/4.
  const EmpiricalMeasure nu(1, {0.0, 1.0}, {0.25, 0.75});
  CHECK(wasserstein2(mu, nu).value == doctest::Approx(0.5));
}

TEST_CASE("assignment path is exact against brute force in two dimensions") {
  const RngStream rng(7);
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const auto pa = draw(rng, 12, 2 * trial);
    const auto pb = draw(rng, 12, 2 * trial + 1);
    const auto r = wasserstein2(EmpiricalMeasure(2, pa), EmpiricalMeasure(2, pb));
    CHECK_FALSE(r.approximate);
    CHECK(r.value == doctest::Approx(brute_force_w2(pa, pb, 2)).epsilon(1e-12));
  }
}

TEST_CASE("sliced path is flagged and reasonable") {
  const RngStream rng(11);
  const auto pa = draw(rng, 2 * 600, 0);
  const auto pb = draw(rng, 2 * 600, 1);
  const auto r = wasserstein2(EmpiricalMeasure(2, pa), EmpiricalMeasure(2, pb), 5);
  CHECK(r.approximate);
  CHECK(std::isfinite(r.value));
  CHECK(r.value == wasserstein2(EmpiricalMeasure(2, pa), EmpiricalMeasure(2, pb), 5).value);
}

TEST_CASE("distance to the Dirac at the origin") {
  CHECK(distance_to_dirac0(EmpiricalMeasure::dirac_origin(3)) == 0.0);
  CHECK(distance_to_dirac0(EmpiricalMeasure(1, {-1.0, 1.0})) == doctest::Approx(1.0));
  CHECK(distance_to_dirac0(EmpiricalMeasure(1, {0.0, 3.0, 4.0})) ==
        doctest::Approx(std::sqrt(25.0 / 3.0)));

  const RngStream rng(3);
  const EmpiricalMeasure mu(1, draw(rng, 40, 0));
  CHECK(std::abs(wasserstein2(mu, EmpiricalMeasure::dirac_origin(1)).value -
                 distance_to_dirac0(mu)) <= 1e-10);
  const EmpiricalMeasure mu2(2, draw(rng, 40, 1));
  CHECK(std::abs(wasserstein2(mu2, EmpiricalMeasure::dirac_origin(2)).value -
                 distance_to_dirac0(mu2)) <= 1e-10);
}

TEST_CASE("minimum cost assignment") {
  const std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto a = min_cost_assignment(cost, 3);
  double total = 0.0;
  for (std::size_t r = 0; r < 3; ++r) total += cost[r * 3 + a[r]];
  CHECK(total == doctest::Approx(5.0));
}

TEST_CASE("push-forward shift and csv dump") {
  const EmpiricalMeasure mu(1, {0.0, 1.0});
  const std::vector<double> phi{1.0, 2.0};
  const auto nu = mu.shifted(phi, 0.5);
  CHECK(nu.point(0)[0] == doctest::Approx(0.5));
  CHECK(nu.point(1)[0] == doctest::Approx(2.0));
  std::ostringstream out;
  mu.write_csv(out);
  CHECK(out.str().rfind("index,x1,weight\n", 0) == 0);
}
