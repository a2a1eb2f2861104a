#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace vmv {

/// Point values K(t, s) read from a `t,s,value` table. Lookup takes the
/// nearest tabulated t and the last tabulated s strictly below it that does
/// not exceed the query s (piecewise constant in s).
class KernelTable {
public:
  struct Entry {
    double t;
    double s;
    double value;
  };

  explicit KernelTable(std::vector<Entry> entries);

  double lookup(double t, double s) const;
  const std::vector<double>& t_nodes() const { return t_nodes_; }

private:
  std::vector<double> t_nodes_;
  // rows_[i] holds (s, value) pairs for t_nodes_[i], sorted by s.
  std::vector<std::vector<std::pair<double, double>>> rows_;
};

/// Parse a `t,s,value` CSV (header required).
KernelTable read_kernel_table(std::istream& in);
KernelTable read_kernel_table_file(const std::string& path);

/// A Volterra kernel K(t, s) on the simplex 0 <= s < t.
///
/// Kernels are immutable values; copies share their (read-only) state, so a
/// kernel can be handed to any number of concurrent workers.
class Kernel {
public:
  enum class Family { constant, power, fbm, tabulated, custom };

  /// K(t, s) = c.
  static Kernel constant(double c);
  /// K(t, s) = scale * (t - s)^(H - 1/2), H > -1/2.
  static Kernel power(double hurst, double scale = 1.0);
  /// Molchan-Golosov representation kernel of fractional Brownian motion,
  /// H in (0, 1).
  static Kernel fbm(double hurst);
  static Kernel tabulated(KernelTable table);
  static Kernel custom(std::function<double(double, double)> fn, bool singular_at_diagonal,
                       std::optional<double> holder_hint = std::nullopt,
                       std::string label = "custom");

  Family family() const;
  std::string name() const;
  bool singular_at_diagonal() const { return singular_at_diagonal_; }
  std::optional<double> holder_exponent_hint() const { return holder_hint_; }
  /// Hurst parameter of power/fbm kernels.
  std::optional<double> hurst() const;

  /// K(t, s) without domain checks; `lag` must equal t - s and is passed
  /// separately so that quadrature near the diagonal keeps full precision.
  double raw(double t, double s, double lag) const;

  /// Checked evaluation: requires 0 <= s < t.
  double operator()(double t, double s) const;

private:
  struct Constant { double c; };
  struct Power { double hurst; double scale; };
  struct Fbm { double hurst; double c_h; };
  struct Tabulated { std::shared_ptr<const KernelTable> table; };
  struct Custom { std::shared_ptr<const std::function<double(double, double)>> fn; std::string label; };
  using Variant = std::variant<Constant, Power, Fbm, Tabulated, Custom>;

  Kernel(Variant v, bool singular, std::optional<double> hint)
      : impl_(std::move(v)), singular_at_diagonal_(singular), holder_hint_(hint) {}

  Variant impl_;
  bool singular_at_diagonal_;
  std::optional<double> holder_hint_;
};

/// Normalising constant c_H of the fBm kernel.
double fbm_constant(double hurst);

/// K(t, s) with full precondition checks: 0 <= s < t <= horizon. Throws
/// DomainError on a bad argument and SingularityError on a non-finite value.
double eval_kernel(const Kernel& kernel, double t, double s,
                   double horizon = std::numeric_limits<double>::infinity());

/// Integral of K(t, s)^power over s in [a, b], power in {1, 2}.
/// Closed form for constant and power kernels, quadrature otherwise.
double integrate_kernel(const Kernel& kernel, double t, double a, double b, int power);

namespace detail {
/// Quadrature path of integrate_kernel without argument checks. When
/// `interior` is set the caller guarantees [a, b] stays away from both the
/// diagonal and s = 0, and a fixed Gauss rule is used.
double kernel_quadrature(const Kernel& kernel, double t, double a, double b, int power,
                         bool interior);
}  // namespace detail

}  // namespace vmv
