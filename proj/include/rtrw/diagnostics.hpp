#pragma once

// Path-level diagnostics.  Three tools live here:
//   - an oscillation modulus for cadlag step paths, minimised over
//     partitions of [0, T) whose intervals are all wider than h (dynamic
//     programming over a finite boundary grid, with a brute-force oracle
//     for small paths and a bisection solver for long ones);
//   - an experiment measuring that modulus on centred, rescaled trapped-walk
//     paths, where site-bound heavy holding times keep the expected modulus
//     bounded away from zero while a unit-clock control does not;
//   - a lattice probe that mixes an exact tree-height tail with a Monte
//     Carlo sample of per-tree mean excursion durations to expose the
//     log-periodic dependence of n P(psi_n > t) on the scale n.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rtrw/clock.hpp"
#include "rtrw/excursion.hpp"

namespace rtrw {

// Right-continuous piecewise-constant path: values[i] on [times[i],
// times[i+1]), with times[0] == 0 and the last segment extending to any
// horizon of interest.
struct StepPath {
  std::vector<double> times;
  std::vector<double> values;
};

inline void check_step_path(const StepPath& f) {
  if (f.times.empty() || f.times.size() != f.values.size())
    throw std::invalid_argument("step path needs matching nonempty times/values");
  if (f.times.front() != 0.0)
    throw std::invalid_argument("step path must start at time 0");
  for (std::size_t i = 1; i < f.times.size(); ++i)
    if (!(f.times[i] > f.times[i - 1]))
      throw std::invalid_argument("step path times must be strictly increasing");
}

struct ModulusQuery {
  StepPath path;
  double horizon = 1.0;    // T
  double min_width = 0.1;  // h; every partition interval must be wider
};

namespace detail {

// O(1) range max-min queries over a fixed array of segment values.
class RangeOsc {
 public:
  explicit RangeOsc(const std::vector<double>& y) {
    const int n = static_cast<int>(y.size());
    log2_.assign(n + 1, 0);
    for (int i = 2; i <= n; ++i) log2_[i] = log2_[i / 2] + 1;
    const int levels = log2_[n] + 1;
    mx_.assign(levels, y);
    mn_.assign(levels, y);
    for (int l = 1; l < levels; ++l) {
      const int half = 1 << (l - 1);
      for (int i = 0; i + (1 << l) <= n; ++i) {
        mx_[l][i] = std::max(mx_[l - 1][i], mx_[l - 1][i + half]);
        mn_[l][i] = std::min(mn_[l - 1][i], mn_[l - 1][i + half]);
      }
    }
  }
  // max - min of y[a..b], inclusive
  double osc(int a, int b) const {
    const int l = log2_[b - a + 1];
    const int j = b - (1 << l) + 1;
    return std::max(mx_[l][a], mx_[l][j]) - std::min(mn_[l][a], mn_[l][j]);
  }

 private:
  std::vector<int> log2_;
  std::vector<std::vector<double>> mx_, mn_;
};

}  // namespace detail

// Shared machinery for evaluating the width-constrained oscillation modulus
// of one path at several widths h.  The path is truncated to [0, horizon);
// boundary candidates for each h are the interior jump times together with
// each jump time (and the origin) offset by h + eps, where eps is a quarter
// of the smallest jump gap.  Optimal partitions of a step path can be taken
// with boundaries in this set; the brute-force oracle checks that on small
// paths.
class ModulusSolver {
 public:
  ModulusSolver(const StepPath& f, double horizon) : horizon_(horizon) {
    check_step_path(f);
    if (!(horizon > 0)) throw std::invalid_argument("modulus horizon must be positive");
    for (std::size_t i = 0; i < f.times.size(); ++i) {
      if (f.times[i] >= horizon) break;
      times_.push_back(f.times[i]);
      values_.push_back(f.values[i]);
    }
    table_.emplace(values_);
    min_gap_ = std::numeric_limits<double>::infinity();
    for (std::size_t i = 2; i < times_.size(); ++i)
      min_gap_ = std::min(min_gap_, times_[i] - times_[i - 1]);
  }

  double global_oscillation() const {
    return table_->osc(0, static_cast<int>(values_.size()) - 1);
  }

  // Boundary candidates for width h, sorted, strictly inside (0, horizon).
  std::vector<double> candidates(double h) const {
    check_width(h);
    const double eps = (std::isfinite(min_gap_) ? min_gap_ : h) / 4.0;
    std::vector<double> c;
    c.reserve(2 * times_.size());
    for (std::size_t i = 1; i < times_.size(); ++i) c.push_back(times_[i]);
    for (std::size_t i = 0; i < times_.size(); ++i) {
      const double off = times_[i] + h + eps;
      if (off < horizon_) c.push_back(off);
    }
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
  }

  double value(double h) const {
    const std::vector<double> grid = candidates(h);
    if (grid.size() <= 1600) return solve_dp(grid, h);
    return solve_bisect(grid, h);
  }

  // Consistency hooks: force one solver regardless of path size.
  double value_dp(double h) const { return solve_dp(candidates(h), h); }
  double value_bisect(double h) const { return solve_bisect(candidates(h), h); }

  // Exhaustive search over all boundary subsets of the candidate grid.
  double brute_force(double h) const {
    const std::vector<double> grid = candidates(h);
    if (grid.size() > 26)
      throw std::invalid_argument("modulus brute force limited to small paths");
    double best = std::numeric_limits<double>::infinity();
    brute_step(grid, h, 0, 0.0, 0.0, best);
    return best;
  }

 private:
  void check_width(double h) const {
    if (!(h > 0) || !(h < horizon_))
      throw std::invalid_argument("modulus width must satisfy 0 < h < horizon");
  }

  int seg_at(double v) const {  // last segment starting at or before v
    return static_cast<int>(std::upper_bound(times_.begin(), times_.end(), v) -
                            times_.begin()) -
           1;
  }
  int seg_before(double w) const {  // last segment starting strictly before w
    return static_cast<int>(std::lower_bound(times_.begin(), times_.end(), w) -
                            times_.begin()) -
           1;
  }
  double osc(double v, double w) const { return table_->osc(seg_at(v), seg_before(w)); }

  double solve_dp(const std::vector<double>& grid, double h) const {
    const double inf = std::numeric_limits<double>::infinity();
    const int k = static_cast<int>(grid.size());
    std::vector<double> pos(k + 2);
    pos[0] = 0.0;
    for (int i = 0; i < k; ++i) pos[i + 1] = grid[i];
    pos[k + 1] = horizon_;
    std::vector<double> dp(k + 2, inf);
    dp[0] = 0.0;
    for (int i = 1; i <= k + 1; ++i) {
      for (int j = 0; j < i; ++j) {
        if (!(pos[i] - pos[j] > h)) break;  // pos sorted: later j are closer
        if (dp[j] == inf) continue;
        const double cand = std::max(dp[j], osc(pos[j], pos[i]));
        if (cand < dp[i]) dp[i] = cand;
      }
    }
    return dp[k + 1];
  }

  // Feasibility of target oscillation w over the same grid, O(grid) per call
  // via two monotone pointers, then bisection on the target.
  double solve_bisect(const std::vector<double>& grid, double h) const {
    const int k = static_cast<int>(grid.size());
    std::vector<double> pos(k + 2);
    pos[0] = 0.0;
    for (int i = 0; i < k; ++i) pos[i + 1] = grid[i];
    pos[k + 1] = horizon_;
    std::vector<int> sa(k + 2), sb(k + 2);
    for (int i = 0; i <= k + 1; ++i) {
      sa[i] = seg_at(pos[i]);
      sb[i] = seg_before(pos[i]);
    }
    sb[k + 1] = seg_before(horizon_);
    auto feasible = [&](double target) {
      std::vector<int> reach_prefix(k + 3, 0);  // prefix counts of reachable
      reach_prefix[1] = 1;                      // boundary at 0 reachable
      int jmin = 0;
      bool ok = false;
      int wide = 0;  // first j with pos[i] - pos[j] <= h, tracked per i
      for (int i = 1; i <= k + 1; ++i) {
        while (wide < i && pos[i] - pos[wide] > h) ++wide;
        // the width window is [0, wide-1]; advance jmin past osc violations
        while (jmin < i && table_->osc(sa[jmin], sb[i]) > target) ++jmin;
        const int hi = wide - 1;
        bool r = false;
        if (hi >= jmin) r = reach_prefix[hi + 1] - reach_prefix[jmin] > 0;
        reach_prefix[i + 1] = reach_prefix[i] + (r ? 1 : 0);
        if (i == k + 1) ok = r;
      }
      return ok;
    };
    double lo = 0.0, hi = global_oscillation();
    if (feasible(lo)) return 0.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid))
        hi = mid;
      else
        lo = mid;
    }
    return hi;
  }

  void brute_step(const std::vector<double>& grid, double h, std::size_t next,
                  double last, double worst, double& best) const {
    if (worst >= best) return;
    if (horizon_ - last > h) {  // close the partition at the horizon
      const double cand = std::max(worst, osc(last, horizon_));
      if (cand < best) best = cand;
    }
    for (std::size_t g = next; g < grid.size(); ++g) {
      if (!(grid[g] - last > h)) continue;
      brute_step(grid, h, g + 1, grid[g],
                 std::max(worst, osc(last, grid[g])), best);
    }
  }

  double horizon_;
  std::vector<double> times_;
  std::vector<double> values_;
  std::optional<detail::RangeOsc> table_;
  double min_gap_;
};

inline double modulus_omega(const ModulusQuery& q) {
  return ModulusSolver(q.path, q.horizon).value(q.min_width);
}
inline double modulus_omega(const StepPath& f, double horizon, double min_width) {
  return ModulusSolver(f, horizon).value(min_width);
}

// ---------------------------------------------------------------------------
// Centred, rescaled position paths and the modulus experiment.
// ---------------------------------------------------------------------------

// Corner-sampled path of Z^n(t) = (X_{nt} - n t nu) / n^{1/alpha} on
// [0, horizon): one step value per embedded move, recorded at the scaled
// time the move happens, so a long holding time appears as a single jump of
// size about nu * kappa / a_n.
inline StepPath scaled_position_path(double beta, double alpha, long n, double horizon,
                                     bool unit_clock, Rng& rng) {
  check_beta(beta);
  if (!(alpha > 1.0 && alpha < 2.0))
    throw std::invalid_argument("scaled path needs alpha in (1,2)");
  if (n < 1 || !(horizon > 0)) throw std::invalid_argument("scaled path needs n >= 1, horizon > 0");
  const double mean_holding = unit_clock ? 1.0 : alpha / (alpha - 1.0);
  const double nu = trapped_speed(beta, mean_holding);
  const double a_n = std::pow(static_cast<double>(n), 1.0 / alpha);
  BiasedWalk walk(beta);
  Scenery scenery(alpha);
  StepPath f;
  f.times.push_back(0.0);
  f.values.push_back(0.0);
  double clock = 0.0;
  long y = 0;
  for (;;) {
    clock += unit_clock ? 1.0 : scenery.holding(y, rng);
    const double tau = clock / static_cast<double>(n);
    if (tau >= horizon) break;
    y = walk.step(rng);
    f.times.push_back(tau);
    f.values.push_back((static_cast<double>(y) - tau * static_cast<double>(n) * nu) / a_n);
  }
  return f;
}

// The analytic floor on limsup E[modulus ^ 1] proved for site-bound
// heavy-tailed holding times: lambda nu beta (1 - exp(-lambda^-alpha T nu /
// 2)) / (beta+1)^2.
inline double modulus_floor_heavy_scenery(double alpha, double beta, double horizon,
                                          double lambda) {
  if (!(alpha > 1.0 && alpha < 2.0))
    throw std::invalid_argument("modulus floor needs alpha in (1,2)");
  const double nu = trapped_speed(beta, alpha / (alpha - 1.0));
  return lambda * nu * beta / ((beta + 1.0) * (beta + 1.0)) *
         (1.0 - std::exp(-std::pow(lambda, -alpha) * horizon * nu / 2.0));
}

struct ModulusCell {
  long n = 0;
  double h = 0.0;
  double mean = 0.0;  // estimate of E[modulus ^ 1]
  double se = 0.0;
  long replicas = 0;
};

struct ModulusExperiment {
  std::vector<ModulusCell> cells;  // one per (n, h), n-major order
  double analytic_floor = 0.0;
  bool unit_clock_control = false;
};

// Measures E[modulus(Z^n, horizon, h) ^ 1] over replicas for every n in
// n_grid and h in h_grid.  With unit_clock_control the holding times are
// identically one (centred at its own speed) but the alpha normalisation is
// kept, so the rescaled path flattens and the modulus collapses.
inline ModulusExperiment j1_failure_experiment(double alpha, double beta, double horizon,
                                               double lambda, const std::vector<long>& n_grid,
                                               const std::vector<double>& h_grid,
                                               long n_replicas, Rng& rng,
                                               bool unit_clock_control = false) {
  if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
  if (n_replicas < 2) throw std::invalid_argument("need at least two replicas");
  if (n_grid.empty() || h_grid.empty()) throw std::invalid_argument("empty n or h grid");
  for (double h : h_grid)
    if (!(h > 0) || !(h < horizon))
      throw std::invalid_argument("every width must satisfy 0 < h < horizon");
  ModulusExperiment out;
  out.analytic_floor = modulus_floor_heavy_scenery(alpha, beta, horizon, lambda);
  out.unit_clock_control = unit_clock_control;
  for (long n : n_grid) {
    std::vector<Welford> acc(h_grid.size());
    for (long r = 0; r < n_replicas; ++r) {
      StepPath f = scaled_position_path(beta, alpha, n, horizon, unit_clock_control, rng);
      ModulusSolver solver(f, horizon);
      for (std::size_t i = 0; i < h_grid.size(); ++i)
        acc[i].add(std::min(solver.value(h_grid[i]), 1.0));
    }
    for (std::size_t i = 0; i < h_grid.size(); ++i)
      out.cells.push_back({n, h_grid[i], acc[i].mean(), acc[i].se(), n_replicas});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lattice probe: n P(psi_n > t) across the scales n_k = floor(varsigma mu^-k).
// ---------------------------------------------------------------------------

// Exact tail of the tree height, wrapped with the depth convention used by
// branch traps (depth of the deepest point = 1 + subtree height).
struct HeightTailHandle {
  std::vector<double> tail;  // tail[m] = P(height >= m), exact

  // P(1 + height >= m); negative return flags a truncated lookup.
  double depth_tail(int m) const {
    if (m <= 1) return 1.0;
    const std::size_t idx = static_cast<std::size_t>(m) - 1;
    return idx < tail.size() ? tail[idx] : -1.0;
  }
};

inline HeightTailHandle make_height_tail_handle(const OffspringLaw& law, int n_max) {
  return {height_tail_exact(law, n_max)};
}

// Per-tree mean duration of the deepest-point excursion, over independently
// sampled subtrees: the per-tree mean has finite variance, so a moderate
// number of excursions per tree estimates it well.
struct TrapMeanSample {
  std::vector<double> mean;
  std::vector<double> se;
};

inline TrapMeanSample sample_trap_excursion_means(const OffspringLaw& law, double beta,
                                                  long n_trees, long n_excursions, Rng& rng,
                                                  int gen_cap = 200) {
  check_beta(beta);
  if (n_trees < 1 || n_excursions < 2)
    throw std::invalid_argument("need at least one tree and two excursions per tree");
  TrapMeanSample out;
  out.mean.reserve(n_trees);
  out.se.reserve(n_trees);
  for (long i = 0; i < n_trees; ++i) {
    GWTree sub = sample_gw(law, rng, gen_cap);
    const int h = sub.height + 1;
    const int delta = deepest_vertex(sub, rng);
    InfiniteTrap trap(law, sub, delta);
    Welford w;
    for (long e = 0; e < n_excursions; ++e)
      w.add(static_cast<double>(sample_trap_excursion_time(beta, trap, h + 40, rng)));
    out.mean.push_back(w.mean());
    out.se.push_back(w.se());
  }
  return out;
}

struct LatticeProbe {
  double beta = 1.6;
  double mu = 0.5;       // offspring mean, sets the scale ladder mu^-k
  double lambda = 1.0;
  double t = 1.0;        // threshold
  std::vector<double> varsigma{1.0};
  int k_min = 8;
  int k_max = 16;
  HeightTailHandle heights;
  TrapMeanSample trap_means;
};

struct LatticeCell {
  double varsigma = 0.0;
  int k = 0;
  long n = 0;
  double value = 0.0;  // n P(psi_n > t)
  double se = 0.0;
};

// Evaluates n_k P(psi_{n_k} > t) where psi_n = (beta^H - beta)/(beta - 1) *
// lambda E[T|tree] / n^{1/gamma}: the event rearranges to beta^H exceeding
// an explicit threshold, so the exact height tail is averaged over the
// sampled per-tree means.
inline std::vector<LatticeCell> lattice_oscillation_probe(const LatticeProbe& p) {
  if (!(p.mu > 0 && p.mu < 1)) throw std::invalid_argument("offspring mean must be in (0,1)");
  if (!(p.beta > std::pow(p.mu, -0.5) && p.beta < 1.0 / p.mu))
    throw std::invalid_argument("probe needs mu^-1/2 < beta < mu^-1");
  if (!(p.t > 0) || !(p.lambda > 0)) throw std::invalid_argument("t and lambda must be positive");
  if (p.k_min < 1 || p.k_max < p.k_min) throw std::invalid_argument("bad k range");
  if (p.varsigma.empty() || p.trap_means.mean.empty() || p.heights.tail.empty())
    throw std::invalid_argument("probe needs scales, trap means, and a height tail");
  const double gamma = std::log(1.0 / p.mu) / std::log(p.beta);
  const double tail_floor = p.heights.tail.back();
  std::vector<LatticeCell> out;
  for (double vs : p.varsigma) {
    if (!(vs > 0)) throw std::invalid_argument("varsigma must be positive");
    for (int k = p.k_min; k <= p.k_max; ++k) {
      const double n_real = std::floor(vs * std::pow(1.0 / p.mu, k));
      if (!(n_real >= 1) || n_real > 9e18) throw std::invalid_argument("scale out of range");
      const double n = n_real;
      Welford w;
      double truncated = 0.0;
      for (double m_tree : p.trap_means.mean) {
        const double a = p.t * std::pow(n, 1.0 / gamma) * (p.beta - 1.0) /
                             (p.lambda * m_tree) +
                         p.beta;
        const int m = static_cast<int>(std::floor(std::log(a) / std::log(p.beta))) + 1;
        const double pt = p.heights.depth_tail(m);
        if (pt < 0) {
          truncated += tail_floor;
          w.add(0.0);
        } else {
          w.add(pt);
        }
      }
      const double value = n * w.mean();
      const double excess = n * truncated / static_cast<double>(p.trap_means.mean.size());
      if (excess > 1e-3 * std::max(value, 1e-300))
        throw std::runtime_error(
            "height tail truncated too early: untabulated depths would contribute more "
            "than 0.1% of the probe value");
      out.push_back({vs, k, static_cast<long>(n_real), value, n * w.se()});
    }
  }
  return out;
}

// Closed-form probe for a law with exactly geometric height tail
// P(H >= m) = c mu^m: n P(beta^H > t n^{1/gamma}) is then an exactly
// periodic function of log n / log(1/mu).
inline double toy_lattice_probe_value(double c, double mu, double beta, double t, double n) {
  if (!(mu > 0 && mu < 1) || !(beta > 1) || !(t > 0) || !(n >= 1))
    throw std::invalid_argument("toy probe needs mu in (0,1), beta > 1, t > 0, n >= 1");
  const double gamma = std::log(1.0 / mu) / std::log(beta);
  const double x = std::log(t * std::pow(n, 1.0 / gamma)) / std::log(beta);
  const int m = static_cast<int>(std::floor(x)) + 1;
  return n * c * std::pow(mu, m);
}

}  // namespace rtrw
