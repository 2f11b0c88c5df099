#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace vlr {

/// Seeded generator with library-independent uniform/normal draws.
///
/// std::uniform_real_distribution and std::normal_distribution are
/// implementation-defined (and the latter caches a spare value), so draws are
/// built directly on the 64-bit Mersenne Twister output. The full state is the
/// engine state, which round-trips through save()/load().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi] (inclusive), rejection sampled.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller; consumes two uniforms, keeps no spare.
  double normal();

  std::string save() const;
  void load(const std::string& state);

  /// Derive an independent stream from (seed, tag). Used for per-purpose RNGs.
  static Rng derive(std::uint64_t seed, std::uint64_t tag);

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace vlr
