// Randomized and structural properties that cut across modules.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <omp.h>

#include "doctest.h"
#include "vmv/asymptotics.hpp"
#include "vmv/deviations.hpp"
#include "vmv/regularity.hpp"

using namespace vmv;

namespace {

CoefficientSet scalar_model(double a, double b, double s0, double s1 = 0.0) {
  return linear_mean_field(LinearMeanFieldParams::scalar(a, b, s0, s1));
}

EmpiricalMeasure random_cloud(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> z;
  std::vector<double> pts(n);
  for (double& x : pts) x = z(gen);
  return EmpiricalMeasure(1, pts);
}

}  // namespace

TEST_CASE("particle ensembles do not depend on the thread count") {
  const TimeGrid g(1.0, 40);
  const auto k1 = GridKernel::from_kernel(Kernel::power(0.7), g);
  const auto k2 = GridKernel::from_kernel(Kernel::fbm(0.6), g);
  const auto cs = scalar_model(0.5, -0.4, 1.0, 0.3);
  const InitialCondition xi{{0.5}, {0.2}};
  const int saved = omp_get_max_threads();
  std::vector<PathEnsemble> runs;
  for (int threads : {1, 4, 16}) {
    omp_set_num_threads(threads);
    runs.push_back(simulate_particles(k1, k2, cs, xi, 0.3, 300, 2718));
  }
  omp_set_num_threads(saved);
  for (std::size_t r = 1; r < runs.size(); ++r) {
    CHECK(runs[r].states == runs[0].states);
    CHECK(runs[r].increments == runs[0].increments);
  }
}

TEST_CASE("one-dimensional W2 satisfies the metric axioms") {
  std::mt19937_64 gen(404);
  std::uniform_int_distribution<std::size_t> size(1, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_cloud(gen, size(gen));
    const auto b = random_cloud(gen, size(gen));
    const auto c = random_cloud(gen, size(gen));
    const double ab = wasserstein2(a, b).value;
    const double ba = wasserstein2(b, a).value;
    const double bc = wasserstein2(b, c).value;
    const double ac = wasserstein2(a, c).value;
    CHECK(ab == ba);
    CHECK(ac <= ab + bc + 1e-10);
    CHECK(wasserstein2(a, a).value <= 1e-10);
    CHECK(std::abs(wasserstein2(a, EmpiricalMeasure::dirac_origin(1)).value -
                   distance_to_dirac0(a)) <= 1e-10);
  }
}

TEST_CASE("sliced W2 stays close to the exact assignment in two dimensions") {
  // Informational: the bound is documented, so only gross failures are hard.
  std::mt19937_64 gen(77);
  std::normal_distribution<double> z;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(128), q(128);
    for (double& x : p) x = z(gen);
    for (double& x : q) x = z(gen) + 0.5;
    const EmpiricalMeasure mu(2, p), nu(2, q);
    const auto exact = wasserstein2(mu, nu);
    REQUIRE_FALSE(exact.approximate);
    // Unequal weights force the sliced path.
    std::vector<double> w(64, 1.0);
    w[0] = 1.0 + 1e-9;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    const auto sliced = wasserstein2(EmpiricalMeasure(2, p, w), nu, trial);
    CHECK(sliced.approximate);
    worst = std::max(worst, std::abs(sliced.value - exact.value) / exact.value);
  }
  MESSAGE("worst sliced relative error: " << worst);
  CHECK(worst <= 0.5);
}

TEST_CASE("fbm kernel with H = 1/2 is identically one") {
  const auto k = Kernel::fbm(0.5);
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double t = 1e-3 + 2.0 * u(gen);
    const double s = t * u(gen) * (1.0 - 1e-9);
    CHECK(std::abs(k(t, s) - 1.0) <= 1e-8);
  }
}

TEST_CASE("gronwall bound holds for random data") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const TimeGrid g(1.0, 120);
  for (int trial = 0; trial < 50; ++trial) {
    const Kernel k = trial % 2 == 0 ? Kernel::constant(2.0 * u(gen))
                                    : Kernel::power(0.2 + 0.8 * u(gen), 0.5 + u(gen));
    const auto gk = GridKernel::from_kernel(k, g);
    std::vector<double> f(g.nodes());
    const double a = 2.0 * u(gen), w = 10.0 * u(gen);
    for (std::size_t i = 0; i < g.nodes(); ++i)
      f[i] = a * (1.0 + std::sin(w * g.t(i))) + u(gen);
    const auto r = gronwall_check(gk, f);
    CAPTURE(k.name());
    CHECK(r.satisfied);
  }
}

TEST_CASE("series and direct resolvents agree and satisfy the resolvent identity") {
  const TimeGrid g(1.0, 150);
  for (const auto& k : {Kernel::constant(1.5), Kernel::power(0.3), Kernel::fbm(0.7)}) {
    CAPTURE(k.name());
    const auto gk = GridKernel::from_kernel(k, g);
    const double tol = 1e-10;
    const auto series = resolvent_series(gk, 200, tol);
    const auto direct = resolvent_direct(gk);
    CHECK(max_abs_diff(series.kernel, direct) <= 10.0 * tol * std::max(1.0, direct.max_abs()));

    // R = K + K * R holds on the grid up to rounding.
    auto rhs = convolve(gk, direct);
    for (std::size_t i = 0; i < g.nodes(); ++i)
      for (std::size_t j = 0; j < i; ++j) rhs.at(i, j) += gk(i, j);
    CHECK(max_abs_diff(rhs, direct) <= 1e-10 * std::max(1.0, direct.max_abs()));
  }
}

TEST_CASE("grid convolution is associative up to a vanishing defect") {
  auto defect = [](std::size_t n) {
    const TimeGrid g(1.0, n);
    const auto k = GridKernel::from_kernel(Kernel::power(0.8), g);
    const auto l = GridKernel::from_kernel(Kernel::constant(2.0), g);
    const auto m = GridKernel::from_kernel(Kernel::fbm(0.7), g);
    return max_abs_diff(convolve(convolve(k, l), m), convolve(k, convolve(l, m)));
  };
  const double coarse = defect(40), fine = defect(160);
  MESSAGE("associativity defect: " << coarse << " -> " << fine);
  CHECK(fine <= coarse + 1e-12);
  CHECK(fine <= 1e-10);
}

TEST_CASE("permuting driver streams permutes the particles") {
  const TimeGrid g(1.0, 25);
  const auto k1 = GridKernel::from_kernel(Kernel::constant(1.0), g);
  const auto k2 = GridKernel::from_kernel(Kernel::power(0.7), g);
  const auto cs = scalar_model(0.3, 0.6, 1.0, 0.2);
  const auto xi = InitialCondition::point({0.4});
  const std::size_t n = 40;
  std::vector<std::uint64_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  SimulationOptions shuffled;
  shuffled.particle_streams = perm;
  const auto base = simulate_particles(k1, k2, cs, xi, 0.4, n, 21);
  const auto moved = simulate_particles(k1, k2, cs, xi, 0.4, n, 21, shuffled);
  // The empirical mean is order dependent only through summation order.
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < g.nodes(); ++i)
      CHECK(moved.state(p, i)[0] ==
            doctest::Approx(base.state(perm[p], i)[0]).epsilon(1e-12));
}

TEST_CASE("a single particle without measure coupling follows the classical scheme") {
  const TimeGrid g(1.0, 60);
  const auto k1 = GridKernel::from_kernel(Kernel::power(0.8), g);
  const auto k2 = GridKernel::from_kernel(Kernel::fbm(0.7), g);
  const double a = -0.7, s0 = 0.9, s1 = 0.4, eps = 0.25, xi = 1.2;
  const auto ens = simulate_particles(k1, k2, scalar_model(a, 0.0, s0, s1),
                                      InitialCondition::point({xi}), eps, 1, 8);
  // Hand-written left-point scheme on the stored drivers.
  std::vector<double> x(g.nodes(), xi);
  for (std::size_t i = 1; i < g.nodes(); ++i) {
    double drift = 0.0, noise = 0.0;
    for (std::size_t k = 0; k < i; ++k) {
      drift += k1(i, k) * a * x[k];
      noise += k2(i, k) * (s0 + s1 * x[k]) * ens.increment(0, k)[0];
    }
    x[i] = xi + g.dt() * drift + std::sqrt(eps) * noise;
  }
  for (std::size_t i = 0; i < g.nodes(); ++i)
    CHECK(ens.state(0, i)[0] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("limit path converges at first order under refinement") {
  const auto cs = scalar_model(1.0, 0.5, 1.0);
  const std::vector<double> xi{1.0};
  const double exact = std::exp(1.5);  // x' = 1.5 x
  std::vector<double> dts, errs;
  for (std::size_t n : {50u, 100u, 200u, 400u, 800u}) {
    const TimeGrid g(1.0, n);
    const auto k = GridKernel::from_kernel(Kernel::constant(1.0), g);
    dts.push_back(g.dt());
    errs.push_back(std::abs(solve_deterministic_limit(k, cs, xi).path.at(n)[0] - exact));
  }
  CHECK(fit_log_log(dts, errs).slope >= 0.9);
}

TEST_CASE("moderate-deviation rate is quadratic and vanishes at zero") {
  const TimeGrid g(1.0, 200);
  const auto k1 = GridKernel::from_kernel(Kernel::power(0.9), g);
  const auto kc = GridKernel::from_kernel(Kernel::constant(1.0), g);
  const auto cs = scalar_model(0.6, 0.3, 1.0, 0.2);
  const std::vector<double> xi{0.5};
  const auto x0 = solve_deterministic_limit(k1, cs, xi).path;
  Path psi(g, 1);
  for (std::size_t i = 0; i < g.nodes(); ++i) psi.at(i)[0] = std::sin(2.0 * g.t(i)) + g.t(i);
  const double base = mdp_rate({RateMode::mdp, cs, k1, kc, x0, psi}).rate;
  CHECK(base > 0.0);
  for (double c : {-2.0, 0.5, 3.0}) {
    Path scaled = psi;
    for (double& v : scaled.values) v *= c;
    const double r = mdp_rate({RateMode::mdp, cs, k1, kc, x0, scaled}).rate;
    CHECK(std::abs(r - c * c * base) <= 1e-10 * std::max(1.0, c * c * base));
  }
  const Path zero(g, 1);
  CHECK(mdp_rate({RateMode::mdp, cs, k1, kc, x0, zero}).rate == 0.0);
  CHECK(ldp_rate({RateMode::ldp, cs, k1, kc, x0, x0}).rate <= 1e-20);
}

TEST_CASE("ldp rate never exceeds the energy of a generating control") {
  const TimeGrid g(1.0, 100);
  const auto k1 = GridKernel::from_kernel(Kernel::constant(1.0), g);
  const auto kc = GridKernel::from_kernel(Kernel::power(0.8), g);
  const auto cs = scalar_model(0.4, 0.2, 1.0, 0.1);
  const std::vector<double> xi{0.3};
  const auto x0 = solve_deterministic_limit(k1, cs, xi).path;
  std::mt19937_64 gen(19);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 10; ++trial) {
    ControlPath v(g, 1);
    for (double& x : v.values) x = z(gen);
    const auto phi = solve_controlled_deterministic(k1, kc, cs, xi, v, x0, ControlledMode::ldp).path;
    const auto sol = ldp_rate({RateMode::ldp, cs, k1, kc, x0, phi});
    CHECK(sol.rate >= 0.0);
    CHECK(sol.rate <= v.energy() + 1e-9);
    CHECK(sol.residual <= kRateResidualTolerance * (1.0 + phi.sup_norm()));
  }
}

TEST_CASE("enlarging the endpoint set never raises the minimal rate") {
  const TimeGrid g(1.0, 50);
  const auto k = GridKernel::from_kernel(Kernel::constant(1.0), g);
  const auto cs = scalar_model(-0.3, 0.2, 1.0);
  const std::vector<double> xi{0.0};
  const auto x0 = solve_deterministic_limit(k, cs, xi).path;
  const ControlPath init(g, 1);
  for (auto mode : {RateMode::ldp, RateMode::mdp}) {
    double previous = INFINITY;
    for (double level : {2.5, 1.5, 0.75, 0.25}) {
      const double r = minimize_rate_endpoint(cs, k, k, xi, x0, mode, {{1.0}, level}, init).rate;
      CHECK(r <= previous + 1e-9);
      previous = r;
    }
  }
}

TEST_CASE("built-in model constants survive random probing") {
  std::mt19937_64 gen(1234);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 1 + trial % 3;
    LinearMeanFieldParams p;
    p.A = Eigen::MatrixXd::NullaryExpr(d, d, [&] { return z(gen); });
    p.B = Eigen::MatrixXd::NullaryExpr(d, d, [&] { return z(gen); });
    p.sigma0 = Eigen::MatrixXd::NullaryExpr(d, 2, [&] { return z(gen); });
    for (std::size_t k = 0; k < d; ++k)
      p.sigma1.push_back(Eigen::MatrixXd::NullaryExpr(d, 2, [&] { return 0.3 * z(gen); }));
    ProbeSampler sampler;
    sampler.seed = 100 + trial;
    sampler.dim = d;
    CHECK_FALSE(lipschitz_probe(linear_mean_field(p), sampler, 200).any_falsified());
  }
}

TEST_CASE("lions derivative of the built-in model is exact on random clouds") {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> z;
  const auto cs = scalar_model(0.2, -1.1, 1.0);
  const std::vector<double> eps{1e-1, 1e-3}, x{0.7};
  for (std::size_t n : {1u, 10u, 100u, 1000u}) {
    const auto mu = random_cloud(gen, n);
    std::vector<double> phi(n);
    for (double& v : phi) v = z(gen);
    const auto r = lions_fd_check(cs, 0.0, x, mu, phi, eps);
    CHECK(r.passed);
    for (double dv : r.discrepancy) CHECK(dv <= 1e-9);
  }
}

TEST_CASE("linear drift with constant diffusion couples the fluctuations exactly") {
  const TimeGrid g(1.0, 40);
  const auto k1 = GridKernel::from_kernel(Kernel::constant(1.0), g);
  const auto k2 = GridKernel::from_kernel(Kernel::fbm(0.7), g);
  const std::vector<double> xi{1.0};
  for (double eps : {1e-1, 1e-3}) {
    const auto pair = clt_pair(k1, k2, scalar_model(1.0, 0.5, 1.0), xi, eps, 300, 4);
    const double scale = sup_moment(pair.z_lim, 2.0);
    CHECK(clt_gap(pair, 2.0, 20).value <= 1e-18 * std::max(1.0, scale) / eps);
  }
}
