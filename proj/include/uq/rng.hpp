#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "uq/types.hpp"

namespace uq {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// All randomness flows through Rng so results are a pure function of the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  // Stream i of a master seed: seed XOR i, mixed through splitmix64.
  static Rng stream(std::uint64_t seed, std::uint64_t i) { return Rng(seed ^ i); }

  std::uint64_t next_u64() { return eng_(); }

  Scalar uniform(Scalar lo = 0.0, Scalar hi = 1.0) {
    return std::uniform_real_distribution<Scalar>(lo, hi)(eng_);
  }

  Scalar normal(Scalar mean = 0.0, Scalar stddev = 1.0) {
    return std::normal_distribution<Scalar>(mean, stddev)(eng_);
  }

  bool bernoulli(Scalar p) { return std::bernoulli_distribution(p)(eng_); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(eng_);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace uq
