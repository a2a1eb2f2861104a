#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace vmv {

/// SplitMix64 finalizer. Every seed and substream key passes through this
/// mix; the README documents it byte-for-byte so other implementations can
/// reproduce the same Gaussian increments.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Purpose tags separating independent families of draws under one seed.
enum class StreamTag : std::uint64_t {
  brownian = 1,
  initial_state = 2,
  sampler = 3,
  bootstrap = 4,
  sliced_directions = 5,
  tail_cell = 6,
};

/// Counter-based Gaussian stream: the value for a key depends only on
/// (root seed, tag, particle, step, component), never on call order.
class RngStream {
public:
  explicit RngStream(std::uint64_t root_seed) : seed_(root_seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t key(StreamTag tag, std::uint64_t particle, std::uint64_t step,
                    std::uint64_t component) const {
    std::uint64_t h = mix64(seed_);
    h = mix64(h ^ static_cast<std::uint64_t>(tag));
    h = mix64(h ^ particle);
    h = mix64(h ^ step);
    h = mix64(h ^ component);
    return h;
  }

  /// Uniform on (0, 1].
  double uniform(StreamTag tag, std::uint64_t particle, std::uint64_t step,
                 std::uint64_t component, std::uint64_t draw = 0) const {
    return to_unit(mix64(key(tag, particle, step, component) + draw));
  }

  /// Standard normal via the cosine branch of Box-Muller.
  double normal(StreamTag tag, std::uint64_t particle, std::uint64_t step,
                std::uint64_t component) const {
    const std::uint64_t k = key(tag, particle, step, component);
    const double u1 = to_unit(mix64(k));
    const double u2 = to_unit(mix64(k + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Derived root seed for an independent sub-experiment (e.g. one eps cell).
  std::uint64_t derive(StreamTag tag, std::uint64_t index) const {
    return key(tag, index, 0, 0);
  }

private:
  static double to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
  }

  std::uint64_t seed_;
};

}  // namespace vmv
