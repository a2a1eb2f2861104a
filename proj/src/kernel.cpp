#include "vmv/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vmv/errors.hpp"
#include "vmv/quadrature.hpp"

namespace vmv {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_half(double h) { return h == 0.5; }

double fbm_value(double hurst, double c_h, double s, double lag) {
  if (is_half(hurst)) return 1.0;
  if (!(lag > 0.0)) return std::numeric_limits<double>::infinity();
  const double a = hurst - 0.5;
  const double head = c_h * std::pow(lag, a);
  if (s <= 0.0) return std::numeric_limits<double>::infinity();
  s = std::max(s, std::numeric_limits<double>::min());  // keep lag / s finite
  const double b = 0.5 - hurst;
  // Inner integral in the scaled variable r = u / s:
  //   s^(H-1/2) * int_0^{lag/s} r^(H-3/2) (1 - (1 + r)^(H-1/2)) dr.
  // The bracket vanishes like r, so it is divided by r first; values stay
  // representable even when s is tiny.
  auto integrand = [=](double r) {
    if (!(r > 0.0)) return 0.0;
    const double bracket_over_r = -std::expm1(-b * std::log1p(r)) / r;
    return std::pow(r, a) * bracket_over_r;
  };
  const double upper = lag / s;
  const double tail = std::pow(s, a) * quad::singular_at_zero(integrand, upper, std::min(1.0, upper));
  return head + c_h * b * tail;
}

}  // namespace

KernelTable::KernelTable(std::vector<Entry> entries) {
  if (entries.empty()) throw DomainError("kernel table is empty");
  std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
    return x.t < y.t || (x.t == y.t && x.s < y.s);
  });
  for (const auto& e : entries) {
    if (!std::isfinite(e.t) || !std::isfinite(e.s) || !std::isfinite(e.value))
      throw DomainError("kernel table contains a non-finite entry");
    if (!(e.s < e.t)) continue;  // only the open simplex is meaningful
    if (t_nodes_.empty() || t_nodes_.back() != e.t) {
      t_nodes_.push_back(e.t);
      rows_.emplace_back();
    }
    rows_.back().emplace_back(e.s, e.value);
  }
  if (t_nodes_.empty()) throw DomainError("kernel table has no entries with s < t");
}

double KernelTable::lookup(double t, double s) const {
  auto it = std::lower_bound(t_nodes_.begin(), t_nodes_.end(), t);
  std::size_t i = static_cast<std::size_t>(it - t_nodes_.begin());
  if (i == t_nodes_.size()) {
    i = t_nodes_.size() - 1;
  } else if (i > 0 && (t - t_nodes_[i - 1]) < (t_nodes_[i] - t)) {
    --i;
  }
  const auto& row = rows_[i];
  auto jt = std::upper_bound(row.begin(), row.end(), s,
                             [](double v, const std::pair<double, double>& p) { return v < p.first; });
  if (jt == row.begin()) return std::numeric_limits<double>::quiet_NaN();
  return std::prev(jt)->second;
}

KernelTable read_kernel_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DomainError("kernel table: missing header");
  line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
  if (line != "t,s,value") throw DomainError("kernel table: header must be `t,s,value`");
  std::vector<KernelTable::Entry> entries;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    KernelTable::Entry e{};
    char c1 = 0, c2 = 0;
    if (!(row >> e.t >> c1 >> e.s >> c2 >> e.value) || c1 != ',' || c2 != ',')
      throw DomainError("kernel table: malformed row at line " + std::to_string(lineno));
    entries.push_back(e);
  }
  return KernelTable(std::move(entries));
}

KernelTable read_kernel_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open kernel table `" + path + "`");
  return read_kernel_table(in);
}

double fbm_constant(double hurst) {
  return std::sqrt(2.0 * hurst * std::tgamma(1.5 - hurst) /
                   (std::tgamma(hurst + 0.5) * std::tgamma(2.0 - 2.0 * hurst)));
}

Kernel Kernel::constant(double c) {
  if (!std::isfinite(c)) throw DomainError("constant kernel value must be finite");
  return Kernel(Constant{c}, false, 0.5);
}

Kernel Kernel::power(double hurst, double scale) {
  // H in (-1/2, 0] is integrable but not square integrable; integrate_kernel
  // reports that case for power 2.
  if (!(hurst > -0.5) || !std::isfinite(hurst)) throw DomainError("power kernel needs H > -1/2");
  if (!std::isfinite(scale)) throw DomainError("power kernel scale must be finite");
  std::optional<double> hint;
  if (hurst > 0.0) hint = std::min(hurst, 1.0);
  return Kernel(Power{hurst, scale}, hurst < 0.5, hint);
}

Kernel Kernel::fbm(double hurst) {
  if (!(hurst > 0.0 && hurst < 1.0)) throw DomainError("fbm kernel needs H in (0, 1)");
  return Kernel(Fbm{hurst, fbm_constant(hurst)}, hurst < 0.5, hurst);
}

Kernel Kernel::tabulated(KernelTable table) {
  return Kernel(Tabulated{std::make_shared<const KernelTable>(std::move(table))}, false,
                std::nullopt);
}

Kernel Kernel::custom(std::function<double(double, double)> fn, bool singular_at_diagonal,
                      std::optional<double> holder_hint, std::string label) {
  if (!fn) throw DomainError("custom kernel needs an evaluator");
  return Kernel(Custom{std::make_shared<const std::function<double(double, double)>>(std::move(fn)),
                       std::move(label)},
                singular_at_diagonal, holder_hint);
}

Kernel::Family Kernel::family() const {
  return std::visit(overloaded{
                        [](const Constant&) { return Family::constant; },
                        [](const Power&) { return Family::power; },
                        [](const Fbm&) { return Family::fbm; },
                        [](const Tabulated&) { return Family::tabulated; },
                        [](const Custom&) { return Family::custom; },
                    },
                    impl_);
}

std::string Kernel::name() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(overloaded{
                 [&](const Constant& k) { os << "constant(" << k.c << ")"; },
                 [&](const Power& k) { os << "power(H=" << k.hurst << ", scale=" << k.scale << ")"; },
                 [&](const Fbm& k) { os << "fbm(H=" << k.hurst << ")"; },
                 [&](const Tabulated&) { os << "tabulated"; },
                 [&](const Custom& k) { os << k.label; },
             },
             impl_);
  return os.str();
}

std::optional<double> Kernel::hurst() const {
  if (auto* p = std::get_if<Power>(&impl_)) return p->hurst;
  if (auto* f = std::get_if<Fbm>(&impl_)) return f->hurst;
  return std::nullopt;
}

double Kernel::raw(double t, double s, double lag) const {
  return std::visit(overloaded{
                        [](const Constant& k) { return k.c; },
                        [&](const Power& k) { return k.scale * std::pow(lag, k.hurst - 0.5); },
                        [&](const Fbm& k) { return fbm_value(k.hurst, k.c_h, s, lag); },
                        [&](const Tabulated& k) { return k.table->lookup(t, s); },
                        [&](const Custom& k) { return (*k.fn)(t, s); },
                    },
                    impl_);
}

double Kernel::operator()(double t, double s) const {
  if (!(s >= 0.0) || !(s < t))
    throw DomainError("kernel evaluated outside the simplex 0 <= s < t");
  const double v = raw(t, s, t - s);
  if (!std::isfinite(v)) throw SingularityError(name() + " is not finite at (t, s)");
  return v;
}

double eval_kernel(const Kernel& kernel, double t, double s, double horizon) {
  if (!(t <= horizon)) throw DomainError("kernel evaluated beyond the horizon");
  return kernel(t, s);
}

namespace detail {

double kernel_quadrature(const Kernel& kernel, double t, double a, double b, int power,
                         bool interior) {
  auto pw = [power](double v) { return power == 2 ? v * v : v; };
  if (interior) {
    return quad::gauss10([&](double s) { return pw(kernel.raw(t, s, t - s)); }, a, b);
  }
  // Left half is parameterised by the offset from a (exact near s = 0), the
  // right half by the lag t - s (exact near the diagonal).
  const double mid = 0.5 * (a + b);
  const double left = quad::tanh_sinh(
      [&](double x) {
        const double s = a + x;
        return pw(kernel.raw(t, s, t - s));
      },
      0.0, mid - a);
  const double lag0 = t - b;
  const double right = quad::tanh_sinh(
      [&](double y) {
        const double lag = lag0 + y;
        return pw(kernel.raw(t, t - lag, lag));
      },
      0.0, b - mid);
  return left + right;
}

}  // namespace detail

double integrate_kernel(const Kernel& kernel, double t, double a, double b, int power) {
  if (power != 1 && power != 2) throw DomainError("integrate_kernel: power must be 1 or 2");
  if (!(a >= 0.0) || !(a <= b) || !(b <= t))
    throw DomainError("integrate_kernel needs 0 <= a <= b <= t");
  if (a == b) return 0.0;
  switch (kernel.family()) {
    case Kernel::Family::constant: {
      const double c = kernel.raw(t, a, t - a);
      return (power == 2 ? c * c : c) * (b - a);
    }
    case Kernel::Family::power: {
      const double h = *kernel.hurst();
      const double e = power * (h - 0.5);
      if (e <= -1.0)
        throw NonIntegrableError(kernel.name() + " raised to power " + std::to_string(power) +
                                 " is not integrable at the diagonal");
      const double scale = kernel.raw(t, t - 1.0, 1.0);  // scale * 1^(H-1/2)
      const double sp = power == 2 ? scale * scale : scale;
      return sp * (std::pow(t - a, e + 1.0) - std::pow(t - b, e + 1.0)) / (e + 1.0);
    }
    default:
      break;
  }
  const double v = detail::kernel_quadrature(kernel, t, a, b, power, false);
  if (!std::isfinite(v)) throw SingularityError(kernel.name() + ": kernel integral is not finite");
  return v;
}

}  // namespace vmv
