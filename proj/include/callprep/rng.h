// Copyright 2026 The callprep Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef CALLPREP_RNG_H_
#define CALLPREP_RNG_H_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace callprep {

// Seeded generator with hand-rolled distributions so streams are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Derives an independent stream from a base seed and a tuple of counters
  // (epoch, step, ...). Used wherever a resumed run must replay exactly.
  static Rng Derive(uint64_t seed, std::initializer_list<uint64_t> path) {
    uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
    for (uint64_t v : path) h = Mix(h ^ Mix(v + 0x632be59bd9b4e019ULL));
    return Rng(h);
  }

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n) without modulo bias.
  uint64_t UniformInt(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  double Normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1;
    do {
      u1 = Uniform();
    } while (u1 <= 0.0);
    const double u2 = Uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static uint64_t Mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace callprep

#endif  // CALLPREP_RNG_H_
