#pragma once

// The trapped walk on Z: an i.i.d. heavy-tailed holding time is attached to
// every site (sampled lazily on first visit), the walk pays the site's
// holding time on each visit, and the observed process is the walk position
// read along the inverse clock. Also provides the centred clock sums over
// regeneration blocks and the Laplace-exponent estimators for the clock.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rtrw/estimators.hpp"
#include "rtrw/rng.hpp"
#include "rtrw/walk.hpp"

namespace rtrw {

// Holding-time field: kappa_x = U^{-1/alpha}, so P(kappa >= t) = t^-alpha
// for t >= 1. Each site keeps the value drawn on its first visit.
class Scenery {
 public:
  explicit Scenery(double alpha) : alpha_(alpha) {
    if (!(alpha > 0)) throw std::invalid_argument("Scenery: alpha must be positive");
  }
  double holding(long x, Rng& rng) {
    if (!seen_.at(x)) {
      seen_.at(x) = 1;
      value_.at(x) = rng.pareto_heavy(alpha_);
    }
    return value_.at(x);
  }
  double alpha() const { return alpha_; }
  double mean_holding() const {
    if (!(alpha_ > 1)) throw std::logic_error("mean_holding: no mean for alpha <= 1");
    return alpha_ / (alpha_ - 1.0);
  }

 private:
  double alpha_;
  SiteArray<char> seen_;
  SiteArray<double> value_;
};

// Asymptotic speed of the trapped walk when the holding time has a mean.
inline double trapped_speed(double beta, double mean_holding) {
  return ups_beta(beta) / mean_holding;
}

struct TrappedWalkResult {
  long position = 0;
  double clock = 0.0;  // total time paid for the first n embedded steps
};

inline TrappedWalkResult run_trapped_walk(double beta, double alpha, long n_steps, Rng& rng) {
  BiasedWalk walk(beta);
  Scenery scenery(alpha);
  double clock = 0.0;
  long y = 0;
  for (long t = 0; t < n_steps; ++t) {
    clock += scenery.holding(y, rng);
    y = walk.step(rng);
  }
  return {y, clock};
}

// Position at real time t: the walk sits at its k-th embedded site during
// [S_k, S_{k+1}), where S_k sums the first k holding times along the path.
inline long trapped_position_at_clock(double beta, double alpha, double t_clock, Rng& rng) {
  BiasedWalk walk(beta);
  Scenery scenery(alpha);
  double clock = 0.0;
  long y = 0;
  for (;;) {
    double next = clock + scenery.holding(y, rng);
    if (next > t_clock) return y;
    clock = next;
    y = walk.step(rng);
  }
}

// Centred clock increments over consecutive confirmed regenerations:
//   chi_j = nu * ((S(zeta_j) - S(zeta_{j-1})) - E[kappa] (zeta_j - zeta_{j-1})).
// The first confirmed regeneration only opens the first block; every block
// sees fresh scenery, so the chi_j are i.i.d. with mean zero.
inline std::vector<double> centred_clock_block_sums(double beta, double alpha, long n_blocks,
                                                    long buffer, Rng& rng) {
  Scenery scenery(alpha);
  BiasedWalk walk(beta);
  RegenerationScan scan(buffer);
  const double mean_k = scenery.mean_holding();
  const double nu = trapped_speed(beta, mean_k);

  std::vector<double> chi;
  chi.reserve(n_blocks);
  std::vector<double> clock_at_level;  // regeneration levels are fresh maxima >= 0
  double clock = 0.0;
  long y = 0, max_y = -1;
  bool have_prev = false;
  Regeneration prev{};
  for (long t = 0; static_cast<long>(chi.size()) < n_blocks; ++t) {
    if (y > max_y) {
      max_y = y;
      if (static_cast<std::size_t>(y) >= clock_at_level.size()) clock_at_level.resize(y + 1);
      clock_at_level[y] = clock;
    }
    scan.feed(t, y, [&](const Regeneration& r) {
      if (have_prev) {
        double dS = clock_at_level[r.level] - clock_at_level[prev.level];
        double dT = static_cast<double>(r.time - prev.time);
        chi.push_back(nu * (dS - mean_k * dT));
      }
      prev = r;
      have_prev = true;
    });
    clock += scenery.holding(y, rng);
    y = walk.step(rng);
  }
  return chi;
}

struct ExponentEstimate {
  double value = 0.0;
  double se = 0.0;
};

// Laplace-exponent estimate for the centred clock: groups of n consecutive
// block sums are aggregated and the estimate is -log mean_g exp(-lambda G_g
// / a_n) over the groups. Requires at least n block sums (one full group).
// For the heavy-tailed holding times the group sums are spectrally
// positive, so the value is nonpositive and scales like -c lambda^alpha.
inline ExponentEstimate clock_block_exponent(const std::vector<double>& chi, double lambda,
                                             long n, double a_n) {
  if (n < 1 || static_cast<long>(chi.size()) < n)
    throw std::invalid_argument("clock_block_exponent: need at least n block sums");
  if (!(a_n > 0)) throw std::invalid_argument("clock_block_exponent: a_n must be positive");
  Welford w;
  std::size_t n_groups = chi.size() / static_cast<std::size_t>(n);
  for (std::size_t g = 0; g < n_groups; ++g) {
    double sum = 0.0;
    for (long j = 0; j < n; ++j) sum += chi[g * n + j];
    w.add(std::exp(-lambda * sum / a_n));
  }
  ExponentEstimate e;
  e.value = -std::log(w.mean());
  e.se = w.se() / w.mean();
  return e;
}

// One-site annealed Laplace exponents of the holding time, used to probe
// the clock's scaling limit. For alpha in (0,1):
//   -n log E[exp(-l lambda kappa / a_n)],  a_n = n^{1/alpha}.
inline ExponentEstimate holding_exponent_raw(double alpha, long n, long m, double l,
                                             double lambda, Rng& rng) {
  if (!(alpha > 0 && alpha < 1))
    throw std::invalid_argument("holding_exponent_raw: alpha in (0,1) required");
  double s = l * lambda / std::pow(static_cast<double>(n), 1.0 / alpha);
  Welford w;
  for (long i = 0; i < m; ++i) w.add(std::exp(-s * rng.pareto_heavy(alpha)));
  ExponentEstimate e;
  e.value = -static_cast<double>(n) * std::log(w.mean());
  e.se = static_cast<double>(n) * w.se() / w.mean();
  return e;
}

// For alpha in (1,2), with the exact mean subtracted:
//   +n log E[exp(-(l lambda / a_n)(kappa - E[kappa]))],  a_n = n^{1/alpha}.
inline ExponentEstimate holding_exponent_centred(double alpha, long n, long m, double l,
                                                 double lambda, Rng& rng) {
  if (!(alpha > 1 && alpha < 2))
    throw std::invalid_argument("holding_exponent_centred: alpha in (1,2) required");
  double mean_k = alpha / (alpha - 1.0);
  double s = l * lambda / std::pow(static_cast<double>(n), 1.0 / alpha);
  Welford w;
  for (long i = 0; i < m; ++i) w.add(std::exp(-s * (rng.pareto_heavy(alpha) - mean_k)));
  ExponentEstimate e;
  e.value = static_cast<double>(n) * std::log(w.mean());
  e.se = static_cast<double>(n) * w.se() / w.mean();
  return e;
}

}  // namespace rtrw
