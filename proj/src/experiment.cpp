#include "vmv/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <unistd.h>

#include "vmv/asymptotics.hpp"
#include "vmv/csv.hpp"
#include "vmv/deviations.hpp"
#include "vmv/grid_kernel.hpp"
#include "vmv/regularity.hpp"
#include "vmv/volterra.hpp"

namespace fs = std::filesystem;

namespace vmv {

Kernel build_kernel(const KernelSpec& spec) {
  if (spec.family == "constant") return Kernel::constant(spec.c);
  if (spec.family == "power") return Kernel::power(spec.hurst, spec.scale);
  if (spec.family == "fbm") return Kernel::fbm(spec.hurst);
  if (spec.family == "tabulated") return Kernel::tabulated(read_kernel_table_file(spec.path));
  throw DomainError("unknown kernel family \"" + spec.family + "\"");
}

CoefficientSet build_model(const ModelSpec& spec) {
  if (spec.name != "linear_mean_field") throw DomainError("unknown model \"" + spec.name + "\"");
  const auto d = static_cast<Eigen::Index>(spec.d);
  const auto m = static_cast<Eigen::Index>(spec.m);
  auto mat = [](const std::vector<double>& v, Eigen::Index r, Eigen::Index c) {
    if (v.size() != static_cast<std::size_t>(r * c)) throw DimensionError("model matrix has the wrong size");
    Eigen::MatrixXd out(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) out(i, j) = v[static_cast<std::size_t>(i * c + j)];
    return out;
  };
  LinearMeanFieldParams p;
  p.A = mat(spec.A, d, d);
  p.B = mat(spec.B, d, d);
  p.sigma0 = mat(spec.sigma0, d, m);
  for (const auto& s : spec.sigma1) p.sigma1.push_back(mat(s, d, m));
  return linear_mean_field(p);
}

std::string config_hash(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.output.clear();
  c.workers = 0;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(render_config(c))));
  return buf;
}

std::string manifest_text(const ExperimentConfig& config, const std::vector<std::string>& files) {
  std::ostringstream o;
  o << render_config(config) << "\n[manifest]\n"
    << "config_hash = \"" << config_hash(config) << "\"\n"
    << "seed = " << config.seed << "\n"
    << "T = " << format_number(config.horizon) << "\n"
    << "n_steps = " << config.n_steps << "\n"
    << "version = \"" << VMV_VERSION << "\"\n"
    << "files = [";
  for (std::size_t i = 0; i < files.size(); ++i) o << (i ? ", " : "") << '"' << files[i] << '"';
  o << "]\n";
  return o.str();
}

namespace {

// Files written into a private directory, moved into place by commit().
class Bundle {
public:
  explicit Bundle(fs::path target) : target_(std::move(target)) {
    if (target_.empty()) throw DomainError("output directory is empty");
    check_replaceable();  // fail before any work is done; repeated at commit
    const fs::path parent = fs::absolute(target_).parent_path();
    fs::create_directories(parent);
    tmp_ = parent / (".vmv-tmp-" + target_.filename().string() + "-" + std::to_string(::getpid()));
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  Bundle(const Bundle&) = delete;
  Bundle& operator=(const Bundle&) = delete;
  ~Bundle() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }

  std::ofstream open(const std::string& name) {
    std::ofstream out(tmp_ / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (tmp_ / name).string());
    files_.push_back(name);
    return out;
  }
  const std::vector<std::string>& files() const { return files_; }

  void commit() {
    check_replaceable();
    if (fs::exists(target_)) fs::remove_all(target_);
    fs::rename(tmp_, target_);
    committed_ = true;
  }

private:
  void check_replaceable() const {
    if (!fs::exists(target_)) return;
    const bool ours = fs::is_directory(target_) &&
                      (fs::is_empty(target_) || fs::exists(target_ / "manifest"));
    if (!ours)
      throw Error("refusing to replace " + target_.string() +
                  ": it exists and holds no previous manifest");
  }

  fs::path target_, tmp_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

std::string p_label(double p) { return format_number(p); }

void write_kv(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

std::vector<std::string> state_columns(const std::string& prefix, std::size_t d) {
  std::vector<std::string> cols;
  for (std::size_t c = 1; c <= d; ++c) cols.push_back(prefix + std::to_string(c));
  return cols;
}

void write_path(std::ostream& out, const Path& path) {
  CsvWriter w(out);
  std::vector<std::string> head{"t"};
  for (auto& c : state_columns("x", path.dim)) head.push_back(c);
  w.header(head);
  for (std::size_t i = 0; i < path.grid.nodes(); ++i) {
    w.field(path.grid.t(i));
    for (double x : path.at(i)) w.field(x);
    w.end_row();
  }
}

void write_control(std::ostream& out, const ControlPath& v) {
  CsvWriter w(out);
  std::vector<std::string> head{"t"};
  if (v.dim == 1) head.push_back("v");
  else
    for (auto& c : state_columns("v", v.dim)) head.push_back(c);
  w.header(head);
  for (std::size_t k = 0; k < v.grid.steps(); ++k) {
    w.field(v.grid.t(k));
    for (double x : v.at(k)) w.field(x);
    w.end_row();
  }
}

std::vector<std::pair<std::string, std::string>> rate_summary(const RateSolution& s) {
  return {{"rate", format_number(s.rate)},
          {"residual", format_number(s.residual)},
          {"attained", s.attained ? "true" : "false"},
          {"regularized", s.regularized ? "true" : "false"},
          {"lambda", format_number(s.lambda_used)},
          {"diagnostic", "\"" + s.diagnostic + "\""}};
}

Path read_target_file(const std::string& file, const TimeGrid& grid, std::size_t d) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open target file " + file);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    if (cells.size() != d + 1) throw DimensionError("target file row has the wrong number of columns");
    if (row >= grid.nodes() || std::abs(cells[0] - grid.t(row)) > 1e-9 * (1.0 + grid.horizon()))
      throw GridMismatchError("target file times do not match the grid");
    values.insert(values.end(), cells.begin() + 1, cells.end());
    ++row;
  }
  if (row != grid.nodes()) throw GridMismatchError("target file has the wrong number of rows");
  return Path(grid, d, std::move(values));
}

struct Setup {
  const ExperimentConfig& cfg;
  TimeGrid grid;
  CoefficientSet coeffs;
  SimulationOptions options;

  explicit Setup(const ExperimentConfig& c)
      : cfg(c), grid(c.horizon, c.n_steps), coeffs(build_model(c.model)) {
    options.memory_limit_bytes = c.memory_limit_mb * 1024.0 * 1024.0;
  }

  GridKernel weights(const KernelSpec& spec) const {
    return GridKernel::from_kernel(build_kernel(spec), grid, Exec::parallel);
  }
  KernelSpec control_spec(bool mdp) const {
    if (cfg.kc) return *cfg.kc;
    return mdp ? cfg.k2 : cfg.k1;
  }
  void budget(std::size_t copies, bool controlled) const {
    const double bytes =
        copies * ensemble_memory_estimate(cfg.n_particles, cfg.n_steps, coeffs.d, coeffs.m, controlled);
    if (bytes > options.memory_limit_bytes)
      throw BudgetError("run needs ~" + std::to_string(static_cast<long long>(bytes / 1048576.0)) +
                        " MiB, over the budget of " +
                        std::to_string(static_cast<long long>(cfg.memory_limit_mb)) + " MiB");
  }
};

void run_simulate(const Setup& s, Bundle& out, ExperimentResult& res) {
  s.budget(1, false);
  const auto w1 = s.weights(s.cfg.k1);
  const auto w2 = s.weights(s.cfg.k2);
  const std::size_t d = s.coeffs.d;
  auto summary = out.open("summary.csv");
  CsvWriter w(summary);
  std::vector<std::string> head{"eps", "t"};
  for (auto& c : state_columns("mean_x", d)) head.push_back(c);
  for (auto& c : state_columns("var_x", d)) head.push_back(c);
  for (double p : s.cfg.p) head.push_back("moment_p" + p_label(p));
  w.header(head);
  std::optional<std::ofstream> ens_file;
  std::optional<CsvWriter> ew;
  if (s.cfg.write_ensemble) {
    ens_file = out.open("ensemble.csv");
    ew.emplace(*ens_file);
    std::vector<std::string> eh{"eps", "particle", "step", "t"};
    for (auto& c : state_columns("x", d)) eh.push_back(c);
    ew->header(eh);
  }
  const InitialCondition ic{s.cfg.xi, s.cfg.xi_spread};
  for (double eps : s.cfg.eps) {
    const auto ens = simulate_particles(w1, w2, s.coeffs, ic, eps, s.cfg.n_particles, s.cfg.seed, s.options);
    for (std::size_t i = 0; i < s.grid.nodes(); ++i) {
      w.field(eps).field(s.grid.t(i));
      std::vector<double> mean(d), var(d);
      for (std::size_t c = 0; c < d; ++c) {
        const auto shape = sample_shape(marginal_component(ens, i, c));
        mean[c] = shape.mean;
        var[c] = shape.variance;
      }
      for (double x : mean) w.field(x);
      for (double x : var) w.field(x);
      for (double p : s.cfg.p) {
        double acc = 0.0;
        for (std::size_t q = 0; q < ens.n_particles; ++q) acc += std::pow(euclidean_norm(ens.state(q, i)), p);
        w.field(acc / static_cast<double>(ens.n_particles));
      }
      w.end_row();
    }
    if (ew) {
      for (std::size_t q = 0; q < ens.n_particles; ++q)
        for (std::size_t i = 0; i < s.grid.nodes(); ++i) {
          ew->field(eps).field(static_cast<std::uint64_t>(q)).field(static_cast<std::uint64_t>(i)).field(s.grid.t(i));
          for (double x : ens.state(q, i)) ew->field(x);
          ew->end_row();
        }
    }
  }
  res.summary.push_back({"eps_cells", std::to_string(s.cfg.eps.size())});
}

void run_limit(const Setup& s, Bundle& out, ExperimentResult& res) {
  const auto w1 = s.weights(s.cfg.k1);
  const auto method = s.cfg.limit_method == "picard" ? LimitMethod::picard() : LimitMethod::stepping();
  const auto sol = solve_deterministic_limit(w1, s.coeffs, s.cfg.xi, method);
  auto f = out.open("limit.csv");
  write_path(f, sol.path);
  res.summary = {{"method", s.cfg.limit_method},
                 {"iterations", std::to_string(sol.iterations)},
                 {"last_change", format_number(sol.last_change)},
                 {"x_T", format_number(sol.path.at(s.grid.steps())[0])}};
  auto t = out.open("limit.txt");
  write_kv(t, res.summary);
}

void run_clt(const Setup& s, Bundle& out, ExperimentResult& res) {
  s.budget(3, false);
  const auto w1 = s.weights(s.cfg.k1);
  const auto w2 = s.weights(s.cfg.k2);
  const auto& ps = s.cfg.p;
  std::vector<std::vector<double>> gaps(ps.size());
  auto f = out.open("clt.csv");
  CsvWriter w(f);
  std::vector<std::string> head{"eps"};
  for (double p : ps) head.push_back("gap_p" + p_label(p));
  for (double p : ps) head.push_back("stderr_p" + p_label(p));
  w.header(head);
  for (double eps : s.cfg.eps) {
    const auto pair = clt_pair(w1, w2, s.coeffs, s.cfg.xi, eps, s.cfg.n_particles, s.cfg.seed, s.options);
    std::vector<MomentEstimate> est;
    for (std::size_t j = 0; j < ps.size(); ++j) {
      est.push_back(clt_gap(pair, ps[j]));
      gaps[j].push_back(est.back().value);
    }
    w.field(eps);
    for (const auto& e : est) w.field(e.value);
    for (const auto& e : est) w.field(e.std_error);
    w.end_row();
  }
  for (std::size_t j = 0; j < ps.size(); ++j) {
    const std::string tag = "p" + p_label(ps[j]);
    try {
      const auto fit = scaling_regression(s.cfg.eps, gaps[j], ps[j] / 2.0);
      res.summary.push_back({"slope_" + tag, format_number(fit.fit.slope)});
      res.summary.push_back({"r2_" + tag, format_number(fit.fit.r2)});
      res.summary.push_back({"expected_slope_" + tag, format_number(fit.expected_slope)});
    } catch (const DomainError& e) {
      res.summary.push_back({"slope_" + tag, "\"unavailable: " + std::string(e.what()) + "\""});
    }
  }
  auto t = out.open("clt_regression.txt");
  write_kv(t, res.summary);
}

Path build_target(const Setup& s, bool mdp, const GridKernel& w1, const GridKernel& wc, const Path& x0) {
  const auto& tg = s.cfg.target;
  const std::size_t d = s.coeffs.d;
  if (tg.type == "file") return read_target_file(tg.path, s.grid, d);
  if (tg.type == "control") {
    const auto v = ControlPath::constant(s.grid, s.coeffs.m, tg.control);
    return solve_controlled_deterministic(w1, wc, s.coeffs, s.cfg.xi, v, x0,
                                          mdp ? ControlledMode::mdp_linearized : ControlledMode::ldp)
        .path;
  }
  Path p(s.grid, d);
  for (std::size_t i = 0; i < s.grid.nodes(); ++i) {
    const double t = s.grid.t(i);
    const double shape = tg.type == "linear" ? tg.slope * t : tg.amplitude * std::expm1(tg.rate * t);
    for (std::size_t c = 0; c < d; ++c) p.at(i)[c] = (mdp ? 0.0 : s.cfg.xi[c]) + shape;
  }
  return p;
}

void run_rate(const Setup& s, Bundle& out, ExperimentResult& res, bool mdp) {
  const auto w1 = s.weights(s.cfg.k1);
  const auto wc = s.weights(s.control_spec(mdp));
  const Path x0 = solve_deterministic_limit(w1, s.coeffs, s.cfg.xi).path;
  const Path target = build_target(s, mdp, w1, wc, x0);
  const RateProblem pb{mdp ? RateMode::mdp : RateMode::ldp, s.coeffs, w1, wc, x0, target, s.cfg.lambda_reg};
  const RateSolution sol =
      mdp ? mdp_rate(pb)
          : ldp_rate(pb, s.cfg.rate_solver == "descent" ? RateSolver::descent : RateSolver::triangular,
                     DescentOptions{s.cfg.max_iter});
  auto f = out.open("control.csv");
  write_control(f, sol.v_star);
  auto tp = out.open("target.csv");
  write_path(tp, target);
  res.summary = rate_summary(sol);
  auto t = out.open("rate.txt");
  write_kv(t, res.summary);
}

RateSolution rate_min(const Setup& s, bool mdp) {
  const auto w1 = s.weights(s.cfg.k1);
  const auto wc = s.weights(s.control_spec(mdp));
  const Path x0 = solve_deterministic_limit(w1, s.coeffs, s.cfg.xi).path;
  const Halfspace event{s.cfg.event_normal, s.cfg.event_level};
  RateMinOptions opt;
  opt.max_iter = s.cfg.max_iter;
  return minimize_rate_endpoint(s.coeffs, w1, wc, s.cfg.xi, x0, mdp ? RateMode::mdp : RateMode::ldp,
                                event, ControlPath(s.grid, s.coeffs.m), opt);
}

void run_rate_min(const Setup& s, Bundle& out, ExperimentResult& res) {
  const bool mdp = s.cfg.rate_mode == "mdp";
  const RateSolution sol = rate_min(s, mdp);
  auto f = out.open("control.csv");
  write_control(f, sol.v_star);
  res.summary = rate_summary(sol);
  res.summary.push_back({"mode", s.cfg.rate_mode});
  res.summary.push_back({"event_level", format_number(s.cfg.event_level)});
  auto t = out.open("rate.txt");
  write_kv(t, res.summary);
}

void run_tail(const Setup& s, Bundle& out, ExperimentResult& res) {
  const bool mdp = s.cfg.rate_mode == "mdp";
  s.budget(1, mdp);
  const auto w1 = s.weights(s.cfg.k1);
  const auto w2 = s.weights(s.cfg.k2);
  const auto wc = s.weights(s.control_spec(mdp));
  TailProbeSpec spec;
  spec.mode = mdp ? RateMode::mdp : RateMode::ldp;
  spec.event = Halfspace{s.cfg.event_normal, s.cfg.event_level};
  spec.eps_list = s.cfg.eps;
  spec.beta = s.cfg.h_beta;
  spec.n_particles = s.cfg.n_particles;
  spec.seed = s.cfg.seed;
  const auto cells = tail_probability_probe(w1, w2, wc, s.coeffs, s.cfg.xi, spec, s.options);
  const RateSolution ref = rate_min(s, mdp);
  auto f = out.open("tail.csv");
  CsvWriter w(f);
  w.header({"eps", "h", "n", "hits", "p_hat", "std_error", "decay", "censored", "rate_min"});
  for (const auto& c : cells) {
    w.field(c.eps).field(c.h).field(static_cast<std::uint64_t>(c.n)).field(static_cast<std::uint64_t>(c.hits));
    w.field(c.p_hat).field(c.std_error).field(c.decay).field(c.censored ? "true" : "false").field(ref.rate);
    w.end_row();
  }
  std::size_t censored = 0;
  for (const auto& c : cells) censored += c.censored ? 1 : 0;
  res.summary = {{"cells", std::to_string(cells.size())},
                 {"censored_cells", std::to_string(censored)},
                 {"rate_min", format_number(ref.rate)}};
}

void run_resolvent(const Setup& s, Bundle& out, ExperimentResult& res) {
  const KernelSpec& spec = s.cfg.resolvent_kernel == "K1"   ? s.cfg.k1
                           : s.cfg.resolvent_kernel == "K2" ? s.cfg.k2
                                                            : s.control_spec(false);
  const auto w = s.weights(spec);
  ResolventOptions opt;
  opt.method = s.cfg.resolvent_method == "series" ? ResolventOptions::Method::series
                                                  : ResolventOptions::Method::direct;
  opt.n_max = s.cfg.resolvent_n_max;
  opt.tol = s.cfg.resolvent_tol;
  const GridKernel r = resolvent(w, opt, Exec::parallel);
  auto f = out.open("resolvent.csv");
  CsvWriter csv(f);
  csv.header({"t", "s", "value"});
  const std::size_t n = s.grid.steps(), stride = s.cfg.resolvent_stride;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i % stride != 0 && i != n) continue;
    for (std::size_t j = 0; j < i; j += stride) csv.field(s.grid.t(i)).field(s.grid.t(j)).field(r(i, j)).end_row();
  }
  res.summary = {{"kernel", build_kernel(spec).name()},
                 {"method", s.cfg.resolvent_method},
                 {"R_T_0", format_number(r(n, 0))}};
}

void run_kernel_probe(const Setup& s, Bundle& out, ExperimentResult& res) {
  const KernelSpec& spec = s.cfg.probe_kernel == "K1"   ? s.cfg.k1
                           : s.cfg.probe_kernel == "K2" ? s.cfg.k2
                                                        : s.control_spec(false);
  const Kernel k = build_kernel(spec);
  const auto est = regularity_probe(k, s.cfg.probe_t, s.cfg.probe_h, s.cfg.horizon);
  auto f = out.open("probe.csv");
  CsvWriter w(f);
  w.header({"h", "D"});
  for (std::size_t i = 0; i < est.h.size(); ++i) w.field(est.h[i]).field(est.d[i]).end_row();
  res.summary = {{"kernel", k.name()},
                 {"gamma", format_number(est.gamma)},
                 {"fit_residual", format_number(est.fit_residual)}};
  if (auto hint = k.holder_exponent_hint()) res.summary.push_back({"holder_hint", format_number(*hint)});
  auto t = out.open("probe.txt");
  write_kv(t, res.summary);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.kind.empty()) throw DomainError("experiment kind is not set");
  ExperimentResult res;
  res.output = config.output;
  Setup setup(config);
  Bundle bundle(config.output);
  const std::string& k = config.kind;
  if (k == "simulate") run_simulate(setup, bundle, res);
  else if (k == "limit") run_limit(setup, bundle, res);
  else if (k == "clt") run_clt(setup, bundle, res);
  else if (k == "ldp-rate") run_rate(setup, bundle, res, false);
  else if (k == "mdp-rate") run_rate(setup, bundle, res, true);
  else if (k == "rate-min") run_rate_min(setup, bundle, res);
  else if (k == "tail-probe") run_tail(setup, bundle, res);
  else if (k == "resolvent") run_resolvent(setup, bundle, res);
  else if (k == "kernel-probe") run_kernel_probe(setup, bundle, res);
  else throw DomainError("unknown experiment kind \"" + k + "\"");
  {
    std::vector<std::string> files = bundle.files();
    auto m = bundle.open("manifest");
    m << manifest_text(config, files);
  }
  res.files = bundle.files();
  bundle.commit();
  return res;
}

}  // namespace vmv
