#pragma once

#include <cstdint>
#include <random>

namespace dmpc {

/// Deterministic random stream. Wraps std::mt19937_64 (whose integer output
/// is fully specified by the standard) and converts to doubles by hand so that
/// sequences do not depend on the standard library's distribution
/// implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Derive an independent stream for a subtask (e.g. one sample index).
  /// splitmix64 of (seed material ^ index) so results do not depend on how
  /// work is scheduled across threads.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::mt19937_64 engine_;
};

} // namespace dmpc
