#pragma once

// Deterministic pseudo-randomness for the simulators: xoshiro256++ core,
// splitmix64 seeding, and per-replica stream derivation so that results do
// not depend on how work is sliced across threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace rtrw {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t splitmix64_mix(std::uint64_t v) {
  return splitmix64_next(v);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64_next(s);
    bool all_zero = true;
    for (auto w : state_) all_zero = all_zero && w == 0;
    if (all_zero) state_[0] = 1;  // the all-zero state is a fixed point
  }

  // Independent stream for replica `stream` of a run seeded with `master`.
  // Streams with distinct indices are decorrelated by construction and do
  // not depend on the number of workers executing them.
  static Rng for_stream(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z0 = splitmix64_mix(master);
    std::uint64_t z1 = splitmix64_mix(stream + 0x9E3779B97F4A7C15ull);
    return Rng(z0 ^ z1);
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

  // Uniform on [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1]; safe as a log/pow argument.
  double uniform_pos() { return 1.0 - uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Uniform integer in [0, n); unbiased via bitmask rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
      std::uint64_t v = next_u64() & mask;
      if (v < n) return v;
    }
  }

  // Number of failures before the first success, success probability q:
  // P(G = g) = (1-q)^g q on {0,1,2,...}.
  long geometric0(double q) {
    if (!(q > 0.0) || q > 1.0) throw std::invalid_argument("Rng::geometric0: q in (0,1] required");
    if (q == 1.0) return 0;
    double g = std::floor(std::log(uniform_pos()) / std::log1p(-q));
    return static_cast<long>(g);
  }

  // Bernoulli-sum binomial; all our uses keep n small.
  long binomial(long n, double p) {
    long k = 0;
    for (long i = 0; i < n; ++i) k += bernoulli(p) ? 1 : 0;
    return k;
  }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  // Heavy-tailed waiting time with P(X >= t) = t^{-alpha} for t >= 1.
  double pareto_heavy(double alpha) { return std::pow(uniform_pos(), -1.0 / alpha); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> state_;
};

// Sampler for a finite pmf over {0,1,...,n-1} via the cumulative table.
class DiscreteSampler {
 public:
  explicit DiscreteSampler(const std::vector<double>& pmf) {
    if (pmf.empty()) throw std::invalid_argument("DiscreteSampler: empty pmf");
    double total = 0.0;
    cdf_.reserve(pmf.size());
    for (double p : pmf) {
      if (p < 0.0) throw std::invalid_argument("DiscreteSampler: negative mass");
      total += p;
      cdf_.push_back(total);
    }
    if (!(total > 0.0)) throw std::invalid_argument("DiscreteSampler: zero total mass");
    for (auto& c : cdf_) c /= total;
    cdf_.back() = 1.0;
  }

  std::size_t sample(Rng& rng) const {
    double u = rng.uniform01();
    std::size_t lo = 0, hi = cdf_.size() - 1;
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (u < cdf_[mid]) hi = mid; else lo = mid + 1;
    }
    return lo;
  }

  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

}  // namespace rtrw
