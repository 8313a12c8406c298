#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <set>

#include "rtrw/parallel.hpp"
#include "rtrw/rng.hpp"

using namespace rtrw;

// Reference sequences generated independently with scripts/gen_rng_reference.py.

TEST_CASE("splitmix64 matches reference sequence") {
  std::uint64_t s = 0;
  REQUIRE(splitmix64_next(s) == 0xE220A8397B1DCDAFull);
  REQUIRE(splitmix64_next(s) == 0x6E789E6AA1B965F4ull);
  REQUIRE(splitmix64_next(s) == 0x06C45D188009454Full);
  REQUIRE(splitmix64_next(s) == 0xF88BB8A8724C81ECull);

  std::uint64_t s2 = 0xDEADBEEFCAFEull;
  REQUIRE(splitmix64_next(s2) == 0x2237953FC2F3276Full);
  REQUIRE(splitmix64_next(s2) == 0xEA46A41C8B2B1C6Aull);
  REQUIRE(splitmix64_next(s2) == 0xB151FC8E8FDDD06Cull);
}

TEST_CASE("xoshiro256++ matches reference sequence for seed 42") {
  Rng rng(42);
  REQUIRE(rng.next_u64() == 0xD0764D4F4476689Full);
  REQUIRE(rng.next_u64() == 0x519E4174576F3791ull);
  REQUIRE(rng.next_u64() == 0xFBE07CFB0C24ED8Cull);
  REQUIRE(rng.next_u64() == 0xB37D9F600CD835B8ull);
  REQUIRE(rng.next_u64() == 0xCB231C3874846A73ull);
}

TEST_CASE("stream derivation matches reference and is reproducible") {
  Rng a = Rng::for_stream(1234, 7);
  REQUIRE(a.next_u64() == 0x43AAD2475ED95CF5ull);
  REQUIRE(a.next_u64() == 0x049D9F1D877B4C58ull);
  REQUIRE(a.next_u64() == 0xE784D0CD42867354ull);

  Rng b = Rng::for_stream(1234, 7);
  Rng c = Rng::for_stream(1234, 8);
  REQUIRE(b.next_u64() == 0x43AAD2475ED95CF5ull);
  REQUIRE(c.next_u64() != 0x43AAD2475ED95CF5ull);
}

TEST_CASE("uniform01 lies in [0,1) with the right mean") {
  Rng rng(99);
  double sum = 0.0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  double mean = sum / n;
  // 4 sigma with sigma = 1/sqrt(12 n)
  REQUIRE(std::abs(mean - 0.5) < 4.0 / std::sqrt(12.0 * n));
}

TEST_CASE("geometric0 has pmf mean (1-q)/q") {
  Rng rng(7);
  const double q = 0.4;
  const int n = 1'000'000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(rng.geometric0(q));
  double mean = sum / n;
  double sd = std::sqrt((1 - q) / (q * q));
  REQUIRE(std::abs(mean - (1 - q) / q) < 4.0 * sd / std::sqrt(double(n)));
  REQUIRE(rng.geometric0(1.0) == 0);
  REQUIRE_THROWS_AS(rng.geometric0(0.0), std::invalid_argument);
}

TEST_CASE("pareto_heavy has the advertised tail") {
  Rng rng(11);
  const double alpha = 1.5;
  const int n = 1'000'000;
  int tail = 0;
  for (int i = 0; i < n; ++i) {
    double x = rng.pareto_heavy(alpha);
    REQUIRE(x >= 1.0);
    if (x >= 2.0) ++tail;
  }
  double p = std::pow(2.0, -alpha);
  double se = std::sqrt(p * (1 - p) / n);
  REQUIRE(std::abs(double(tail) / n - p) < 4.0 * se);
}

TEST_CASE("below(n) covers the range uniformly") {
  Rng rng(5);
  const std::uint64_t n = 7;
  std::array<int, 7> counts{};
  const int draws = 700'000;
  for (int i = 0; i < draws; ++i) counts[rng.below(n)]++;
  for (auto c : counts) {
    double expect = double(draws) / n;
    REQUIRE(std::abs(c - expect) < 5.0 * std::sqrt(expect));
  }
}

TEST_CASE("binomial matches mean and range") {
  Rng rng(13);
  const int n = 200'000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    long k = rng.binomial(10, 0.3);
    REQUIRE(k >= 0);
    REQUIRE(k <= 10);
    sum += double(k);
  }
  double se = std::sqrt(10 * 0.3 * 0.7 / n);
  REQUIRE(std::abs(sum / n - 3.0) < 4.0 * se);
}

TEST_CASE("DiscreteSampler reproduces its pmf") {
  Rng rng(3);
  DiscreteSampler ds({0.5, 0.25, 0.25});
  std::array<int, 3> counts{};
  const int n = 400'000;
  for (int i = 0; i < n; ++i) counts[ds.sample(rng)]++;
  REQUIRE(std::abs(counts[0] / double(n) - 0.5) < 0.005);
  REQUIRE(std::abs(counts[1] / double(n) - 0.25) < 0.005);
  REQUIRE(std::abs(counts[2] / double(n) - 0.25) < 0.005);
  REQUIRE_THROWS_AS(DiscreteSampler({}), std::invalid_argument);
  REQUIRE_THROWS_AS(DiscreteSampler({0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("run_replicas returns the same results for any worker count") {
  auto job = [](std::size_t i) {
    Rng rng = Rng::for_stream(2024, i);
    double acc = 0.0;
    for (int k = 0; k < 1000; ++k) acc += rng.uniform01();
    return acc;
  };
  auto r1 = run_replicas<double>(16, 1, job);
  auto r4 = run_replicas<double>(16, 4, job);
  auto r9 = run_replicas<double>(16, 9, job);
  REQUIRE(r1 == r4);
  REQUIRE(r1 == r9);
  std::set<double> distinct(r1.begin(), r1.end());
  REQUIRE(distinct.size() == r1.size());
}
