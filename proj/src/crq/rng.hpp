#pragma once

#include <cstdint>
#include <cmath>

namespace crq {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stream domains keep RNG draws for unrelated purposes decorrelated even
// when they share a (seed, index) pair.
enum class RngDomain : std::uint64_t {
  MuonSampling = 1,
  Transport = 2,
  TruthEvents = 3,
  Shots = 4,
  Pulses = 5,
  Misc = 6,
  Tests = 7,
};

// xoshiro256++ with splitmix64 stream expansion.  A stream is fully
// determined by (seed, domain, index), so batches can be partitioned by
// index and regenerated in any order with identical output.
class Rng {
 public:
  Rng() : Rng(0, RngDomain::Misc, 0) {}
  Rng(std::uint64_t seed, RngDomain domain, std::uint64_t index) {
    std::uint64_t x = seed;
    (void)splitmix64(x);
    x ^= 0xd1342543de82ef95ull * (static_cast<std::uint64_t>(domain) + 1);
    (void)splitmix64(x);
    x ^= 0xaf251af3b0f025b5ull * (index + 1);
    for (auto& w : state_) w = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1)
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // true with probability p; single u64 compare, no double conversion
  bool bernoulli_u64(std::uint64_t threshold) { return next_u64() < threshold; }
  static std::uint64_t bernoulli_threshold(double p) {
    if (p <= 0.0) return 0;
    if (p >= 1.0) return ~0ull;
    return static_cast<std::uint64_t>(p * 0x1.0p64);
  }

  double exponential() { return -std::log1p(-uniform()); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // Knuth's product method, chunked so exp(-lambda) never underflows.
  std::uint64_t poisson(double lambda) {
    std::uint64_t total = 0;
    while (lambda > 500.0) {
      total += poisson_small(500.0);
      lambda -= 500.0;
    }
    return total + poisson_small(lambda);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t poisson_small(double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    std::uint64_t k = 0;
    double prod = uniform_pos();
    while (prod > limit) {
      ++k;
      prod *= uniform_pos();
    }
    return k;
  }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace crq
