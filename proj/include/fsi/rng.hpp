#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace fsi {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed of stream `stream` under master seed `seed`:
///   splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x9E3779B97F4A7C15)).
/// Episode i of a run uses stream i, so episodes can be drawn in any order.
std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Reproducible random source: std::mt19937_64 (fully specified by the
/// standard) plus distributions implemented here, since the standard library
/// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng for_stream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(derive_stream_seed(seed, stream));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Standard normal, Marsaglia polar method.
  double normal();

  /// Gamma(shape, 1), Marsaglia & Tsang with the U^(1/a) boost for a < 1.
  double gamma(double shape);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fsi
