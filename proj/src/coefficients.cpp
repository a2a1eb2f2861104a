#include "vmv/coefficients.hpp"

#include <algorithm>
#include <cmath>

#include "vmv/errors.hpp"
#include "vmv/rng.hpp"

namespace vmv {

LinearMeanFieldParams LinearMeanFieldParams::scalar(double a, double b, double s0, double s1) {
  LinearMeanFieldParams p;
  p.A = Eigen::MatrixXd::Constant(1, 1, a);
  p.B = Eigen::MatrixXd::Constant(1, 1, b);
  p.sigma0 = Eigen::MatrixXd::Constant(1, 1, s0);
  if (s1 != 0.0) p.sigma1 = {Eigen::MatrixXd::Constant(1, 1, s1)};
  return p;
}

double operator_norm(std::span<const double> a, std::size_t rows, std::size_t cols) {
  if (rows == 1 || cols == 1) return euclidean_norm(a);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

double euclidean_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

namespace {

double matrix_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

CoefficientSet linear_mean_field(const LinearMeanFieldParams& params) {
  const auto d = static_cast<std::size_t>(params.A.rows());
  const auto m = static_cast<std::size_t>(params.sigma0.cols());
  if (params.A.cols() != params.A.rows() || params.B.rows() != params.A.rows() ||
      params.B.cols() != params.A.cols() || static_cast<std::size_t>(params.sigma0.rows()) != d)
    throw DimensionError("linear mean-field: A, B must be d x d and sigma0 d x m");
  if (!params.sigma1.empty()) {
    if (params.sigma1.size() != d) throw DimensionError("linear mean-field: sigma1 needs d slices");
    for (const auto& s : params.sigma1)
      if (static_cast<std::size_t>(s.rows()) != d || static_cast<std::size_t>(s.cols()) != m)
        throw DimensionError("linear mean-field: sigma1 slices must be d x m");
  }

  // Row-major copies captured by value keep the evaluators self-contained.
  auto flat = [](const Eigen::MatrixXd& mat) {
    std::vector<double> v(static_cast<std::size_t>(mat.size()));
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c)
        v[static_cast<std::size_t>(r * mat.cols() + c)] = mat(r, c);
    return v;
  };
  const auto a = flat(params.A);
  const auto b = flat(params.B);
  const auto s0 = flat(params.sigma0);
  std::vector<std::vector<double>> s1;
  for (const auto& s : params.sigma1) s1.push_back(flat(s));

  CoefficientSet cs;
  cs.d = d;
  cs.m = m;
  cs.label = "linear_mean_field";
  cs.b = [a, b, d](double, ConstPoint x, const EmpiricalMeasure& mu, OutSpan out) {
    auto mean = mu.mean();
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += a[r * d + c] * x[c] + b[r * d + c] * mean[c];
      out[r] = acc;
    }
  };
  cs.sigma = [s0, s1, d, m](double, ConstPoint x, const EmpiricalMeasure&, OutSpan out) {
    std::copy(s0.begin(), s0.end(), out.begin());
    for (std::size_t k = 0; k < s1.size(); ++k)
      for (std::size_t e = 0; e < d * m; ++e) out[e] += x[k] * s1[k][e];
  };
  cs.grad_b = [a](double, ConstPoint, const EmpiricalMeasure&, OutSpan out) {
    std::copy(a.begin(), a.end(), out.begin());
  };
  cs.lions_b = [b](double, ConstPoint, const EmpiricalMeasure&, ConstPoint, OutSpan out) {
    std::copy(b.begin(), b.end(), out.begin());
  };
  const double na = matrix_norm(params.A);
  const double nb = matrix_norm(params.B);
  double ns1 = 0.0;
  for (const auto& s : params.sigma1) ns1 += matrix_norm(s);
  cs.constants[1] = na + nb + ns1;
  cs.constants[3] = na;
  cs.constants[5] = 0.0;
  cs.constants[6] = na;
  return cs;
}

bool LipschitzReport::any_falsified() const {
  return std::any_of(falsified.begin(), falsified.end(), [](bool f) { return f; });
}

namespace {

struct Sample {
  double t;
  std::vector<double> x;
  EmpiricalMeasure mu;
};

Sample draw_sample(const ProbeSampler& s, const RngStream& rng, std::size_t index,
                   const EmpiricalMeasure* shared) {
  auto unif = [&](std::uint64_t step, std::uint64_t comp) {
    return rng.uniform(StreamTag::sampler, index, step, comp);
  };
  const double t = s.t_max * unif(0, 0);
  std::vector<double> x(s.dim);
  for (std::size_t c = 0; c < s.dim; ++c) x[c] = s.box * (2.0 * unif(1, c) - 1.0);
  if (shared) return {t, std::move(x), *shared};
  std::vector<double> atoms(s.atoms * s.dim);
  for (std::size_t k = 0; k < atoms.size(); ++k) atoms[k] = s.box * (2.0 * unif(2, k) - 1.0);
  return {t, std::move(x), EmpiricalMeasure(s.dim, std::move(atoms))};
}

struct Eval {
  std::vector<double> b, sigma, grad;
};

Eval evaluate(const CoefficientSet& cs, double t, ConstPoint x, const EmpiricalMeasure& mu) {
  Eval e{std::vector<double>(cs.d), std::vector<double>(cs.d * cs.m), {}};
  cs.b(t, x, mu, e.b);
  cs.sigma(t, x, mu, e.sigma);
  if (cs.grad_b) {
    e.grad.resize(cs.d * cs.d);
    cs.grad_b(t, x, mu, e.grad);
  }
  return e;
}

double diff_norm_vec(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

double diff_norm_mat(std::span<const double> a, std::span<const double> b, std::size_t rows,
                     std::size_t cols) {
  std::vector<double> d(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
  return operator_norm(d, rows, cols);
}

}  // namespace

LipschitzReport lipschitz_probe(const CoefficientSet& coeffs, const ProbeSampler& sampler,
                                std::size_t n_samples) {
  if (n_samples < 2) throw DomainError("lipschitz_probe needs at least two samples");
  if (sampler.dim != coeffs.d) throw DimensionError("lipschitz_probe: sampler dimension mismatch");
  const RngStream rng(sampler.seed);
  std::optional<EmpiricalMeasure> shared;
  if (sampler.fixed_measure) {
    ProbeSampler inner = sampler;
    inner.fixed_measure = false;
    shared = draw_sample(inner, rng, n_samples, nullptr).mu;
  }
  std::vector<Sample> samples;
  samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    samples.push_back(draw_sample(sampler, rng, i, shared ? &*shared : nullptr));

  const std::size_t d = coeffs.d, m = coeffs.m;
  LipschitzReport rep;
  std::vector<double> lions(d * d);

  // Single-sample ratios: growth, derivative bounds.
  for (const auto& s : samples) {
    const Eval e = evaluate(coeffs, s.t, s.x, s.mu);
    const double growth = (euclidean_norm(e.b) + operator_norm(e.sigma, d, m)) /
                          (1.0 + euclidean_norm(s.x) + distance_to_dirac0(s.mu));
    if (growth > rep.l2_hat) {
      rep.l2_hat = growth;
      rep.l2_witness = {s.t, s.x, {}, growth};
    }
    if (!e.grad.empty()) rep.l3_hat = std::max(rep.l3_hat, operator_norm(e.grad, d, d));
    if (coeffs.lions_b) {
      double l2 = 0.0;
      for (std::size_t i = 0; i < s.mu.size(); ++i) {
        coeffs.lions_b(s.t, s.x, s.mu, s.mu.point(i), lions);
        const double nrm = operator_norm(lions, d, d);
        l2 += s.mu.weight(i) * nrm * nrm;
      }
      rep.lions_hat = std::max(rep.lions_hat, std::sqrt(l2));
    }
  }
  if (coeffs.grad_b) {
    const auto origin = EmpiricalMeasure::dirac_origin(d);
    const std::vector<double> zero(d, 0.0);
    std::vector<double> g(d * d);
    for (const auto& s : samples) {
      coeffs.grad_b(s.t, zero, origin, g);
      rep.l6_hat = std::max(rep.l6_hat, operator_norm(g, d, d));
    }
  }

  // Pairwise ratios at a shared time. All pairs up to a budget, then a
  // deterministic stride over the pair list.
  const std::size_t total_pairs = n_samples * (n_samples - 1) / 2;
  const std::size_t budget = 200000;
  const std::size_t stride = total_pairs > budget ? total_pairs / budget + 1 : 1;
  std::size_t counter = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (std::size_t j = i + 1; j < n_samples; ++j, ++counter) {
      if (counter % stride != 0) continue;
      const auto& p = samples[i];
      const auto& q = samples[j];
      const double t = p.t;
      const Eval ep = evaluate(coeffs, t, p.x, p.mu);
      const Eval eq = evaluate(coeffs, t, q.x, q.mu);
      const double w2 = wasserstein2(p.mu, q.mu, sampler.seed).value;
      const double denom = diff_norm_vec(p.x, q.x) + w2;
      if (!(denom > 0.0)) continue;
      const double lip =
          (diff_norm_vec(ep.b, eq.b) + diff_norm_mat(ep.sigma, eq.sigma, d, m)) / denom;
      if (lip > rep.l1_hat) {
        rep.l1_hat = lip;
        rep.l1_witness = {t, p.x, q.x, lip};
      }
      if (!ep.grad.empty())
        rep.l5_hat = std::max(rep.l5_hat, diff_norm_mat(ep.grad, eq.grad, d, d) / denom);
    }
  }

  const std::array<double, 6> hats{rep.l1_hat, rep.l2_hat, rep.l3_hat, 0.0, rep.l5_hat, rep.l6_hat};
  for (std::size_t k = 0; k < 6; ++k) {
    const auto& declared = coeffs.constants.values[k];
    if (declared && k != 3) rep.falsified[k] = hats[k] > *declared + 1e-9;
  }
  return rep;
}

LionsCheckReport lions_fd_check(const CoefficientSet& coeffs, double t, ConstPoint x,
                                const EmpiricalMeasure& mu, std::span<const double> phi,
                                std::span<const double> eps_list) {
  if (!coeffs.lions_b) throw DomainError("lions_fd_check: coefficient set has no lions_b");
  if (eps_list.empty()) throw DomainError("lions_fd_check: empty eps list");
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] > 0.0)) throw DomainError("lions_fd_check: eps must be positive");
    if (k > 0 && !(eps_list[k] < eps_list[k - 1]))
      throw DomainError("lions_fd_check: eps list must be strictly decreasing");
  }
  const std::size_t d = coeffs.d;
  if (phi.size() != mu.size() * d) throw DimensionError("lions_fd_check: phi needs one vector per atom");

  LionsCheckReport rep;
  rep.analytic.assign(d, 0.0);
  std::vector<double> jac(d * d);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    coeffs.lions_b(t, x, mu, mu.point(i), jac);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        rep.analytic[r] += mu.weight(i) * jac[r * d + c] * phi[i * d + c];
  }

  std::vector<double> base(d), pert(d);
  coeffs.b(t, x, mu, base);
  std::vector<std::vector<double>> fd;
  for (double eps : eps_list) {
    coeffs.b(t, x, mu.shifted(phi, eps), pert);
    std::vector<double> q(d);
    double worst = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      q[r] = (pert[r] - base[r]) / eps;
      if (!std::isfinite(q[r])) throw DomainError("lions_fd_check: non-finite perturbed drift");
      worst = std::max(worst, std::abs(q[r] - rep.analytic[r]));
    }
    fd.push_back(std::move(q));
    rep.eps.push_back(eps);
    rep.discrepancy.push_back(worst);
  }

  const double scale = 1.0 + euclidean_norm(rep.analytic);
  if (fd.size() >= 2) {
    const std::size_t a = fd.size() - 2, b = fd.size() - 1;
    const double ea = eps_list[a], eb = eps_list[b];
    double worst = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      const double at0 = fd[b][r] - eb * (fd[a][r] - fd[b][r]) / (ea - eb);
      worst = std::max(worst, std::abs(at0 - rep.analytic[r]));
    }
    rep.extrapolated = worst;
    const double da = rep.discrepancy[a], db = rep.discrepancy[b];
    rep.observed_order = (da > 0.0 && db > 0.0) ? std::log(da / db) / std::log(ea / eb) : 0.0;
  } else {
    rep.extrapolated = rep.discrepancy.back();
  }
  const double tol = 1e-6 * scale;
  rep.passed = rep.extrapolated <= tol || rep.discrepancy.back() <= tol ||
               (rep.observed_order >= 0.8 && rep.discrepancy.back() < rep.discrepancy.front());
  return rep;
}

}  // namespace vmv
