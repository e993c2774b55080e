#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace reasonlab {

// Mixes a base seed with a list of stream identifiers (stage, step, rollout
// index, ...) into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Uniform integer in [lo, hi].
  int between(int lo, int hi);
  double normal(double mean, double stddev);
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace reasonlab
