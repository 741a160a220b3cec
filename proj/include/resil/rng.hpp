#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace resil {

// SplitMix64 finalizer. Used to derive independent, reproducible seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of run `index` in a batch started from `master`.
constexpr std::uint64_t batch_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(master ^ index);
}

// Named random streams. Each consumer of randomness in a run draws from its
// own stream so that strategies sharing a seed see the same traffic, attack
// and sensor randomness regardless of how their control decisions diverge.
enum class Stream : std::uint64_t {
  attack_schedule = 0x61747461636b,  // "attack"
  traffic = 0x74726166,
  sensor_noise = 0x6e6f697365,
  injection = 0x696e6a,
  adversary = 0x616476,
};

constexpr std::uint64_t stream_seed(std::uint64_t seed, Stream s) noexcept {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(s)));
}

// Thin wrapper over mt19937_64 with distribution helpers that are written out
// explicitly, so results do not depend on the standard library's
// implementation-defined distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  // Standard normal via Box-Muller; one draw per call so the stream position
  // depends only on the number of calls.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace resil
