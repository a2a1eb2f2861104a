#pragma once

#include <cstddef>

#include "vmv/errors.hpp"

namespace vmv {

/// Uniform time grid t_i = i * T / n_steps, i = 0..n_steps.
class TimeGrid {
public:
  TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0.0)) throw DomainError("grid horizon must be positive");
    if (n_steps < 1) throw DomainError("grid needs at least one step");
  }

  double horizon() const { return horizon_; }
  std::size_t steps() const { return n_steps_; }
  std::size_t nodes() const { return n_steps_ + 1; }
  double dt() const { return horizon_ / static_cast<double>(n_steps_); }
  double t(std::size_t i) const {
    return i == n_steps_ ? horizon_ : static_cast<double>(i) * dt();
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.horizon_ == b.horizon_ && a.n_steps_ == b.n_steps_;
  }

private:
  double horizon_;
  std::size_t n_steps_;
};

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what) {
  if (!(a == b)) throw GridMismatchError(std::string("grid mismatch: ") + what);
}

}  // namespace vmv
