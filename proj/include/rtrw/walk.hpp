#pragma once

// Nearest-neighbour biased walk on Z and its path statistics: occupation
// histograms, visit counts at the origin, and the fresh-point regeneration
// scan with a confirmation buffer.

#include <algorithm>
#include <climits>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "rtrw/rng.hpp"

namespace rtrw {

inline void check_beta(double beta) {
  if (!(beta > 1.0)) throw std::invalid_argument("beta must exceed 1 (transient right drift)");
}

// Escape probability / asymptotic speed of the embedded walk.
inline double ups_beta(double beta) { return (beta - 1.0) / (beta + 1.0); }

inline double step_right_prob(double beta) { return beta / (beta + 1.0); }

// Array indexed by a site of Z, grown on demand; absent entries read as T{}.
template <class T>
class SiteArray {
 public:
  T& at(long x) {
    if (x >= 0) {
      if (static_cast<std::size_t>(x) >= pos_.size()) pos_.resize(x + 1);
      return pos_[x];
    }
    std::size_t i = static_cast<std::size_t>(-x - 1);
    if (i >= neg_.size()) neg_.resize(i + 1);
    return neg_[i];
  }
  T get(long x) const {
    if (x >= 0) return static_cast<std::size_t>(x) < pos_.size() ? pos_[x] : T{};
    std::size_t i = static_cast<std::size_t>(-x - 1);
    return i < neg_.size() ? neg_[i] : T{};
  }

 private:
  std::vector<T> pos_, neg_;
};

class BiasedWalk {
 public:
  explicit BiasedWalk(double beta) : p_right_(step_right_prob(beta)) { check_beta(beta); }
  long step(Rng& rng) {
    pos_ += rng.bernoulli(p_right_) ? 1 : -1;
    return pos_;
  }
  long position() const { return pos_; }

 private:
  long pos_ = 0;
  double p_right_;
};

// Sites carrying each local-time value after n steps. Local time of x counts
// the embedded times t in [0, n) with Y_t = x, so the weighted total
// sum_l l * count[l] equals n exactly.
struct OccupationCounts {
  std::vector<long> sites_with_local_time;  // index l; [0] unused
  long range_size = 0;
  long steps = 0;

  long weighted_total() const {
    long s = 0;
    for (std::size_t l = 1; l < sites_with_local_time.size(); ++l)
      s += static_cast<long>(l) * sites_with_local_time[l];
    return s;
  }
};

inline OccupationCounts occupation_histogram(double beta, long n_steps, Rng& rng) {
  BiasedWalk walk(beta);
  SiteArray<long> local;
  long lo = 0, hi = 0, y = 0;
  for (long t = 0; t < n_steps; ++t) {
    local.at(y)++;
    y = walk.step(rng);
    if (y < lo) lo = y;
    if (y > hi) hi = y;
  }
  OccupationCounts out;
  out.steps = n_steps;
  for (long x = lo; x <= hi; ++x) {
    long l = local.get(x);
    if (l == 0) continue;
    if (static_cast<std::size_t>(l) >= out.sites_with_local_time.size())
      out.sites_with_local_time.resize(l + 1);
    out.sites_with_local_time[l]++;
    out.range_size++;
  }
  return out;
}

// Total visits to the origin, counted until the walk first exceeds `level`.
// For level large the answer coincides with the all-time visit count except
// on an event of probability ~ beta^-level.
inline long visits_to_origin(double beta, long level, Rng& rng) {
  BiasedWalk walk(beta);
  long visits = 1;  // time 0
  while (walk.position() <= level) {
    if (walk.step(rng) == 0) ++visits;
  }
  return visits;
}

// A confirmed regeneration: at embedded time `time` (>= 1) the walk steps
// onto a strict new maximum `level` and never returns to it. A revisit of
// the level disqualifies the candidate; confirmation is certified by the
// walk reaching level + buffer first, so a false confirmation costs a
// return from level + buffer and has probability beta^-buffer.
struct Regeneration {
  long time = 0;
  long level = 0;
};

// Streaming scan for walks started at the origin (time 0 never qualifies).
class RegenerationScan {
 public:
  explicit RegenerationScan(long confirm_buffer) : buffer_(confirm_buffer) {
    if (confirm_buffer < 1) throw std::invalid_argument("confirm buffer must be >= 1");
  }

  // Feed the position at embedded time t (t = 0, 1, 2, ... in order).
  // Emits confirmed regenerations in time order.
  template <class Emit>
  void feed(long t, long y, Emit&& emit) {
    while (!pending_.empty() && y <= pending_.back().level) pending_.pop_back();
    if (y > max_) {
      max_ = y;
      pending_.push_back({t, y});
    }
    while (!pending_.empty() && max_ >= pending_.front().level + buffer_) {
      emit(pending_.front());
      pending_.pop_front();
    }
  }

 private:
  long buffer_;
  long max_ = 0;  // origin already seen at time 0
  std::deque<Regeneration> pending_;
};

// Offline variant on a stored trajectory: returns the times m >= 1 where
// the walk reaches a strict running maximum never revisited later in the
// path, censoring candidates the path does not certify by reaching
// level + buffer.
inline std::vector<Regeneration> regenerations_of_path(const std::vector<long>& path,
                                                       long buffer) {
  if (path.size() < 2) throw std::invalid_argument("regenerations_of_path: need >= 2 positions");
  if (buffer < 1) throw std::invalid_argument("regenerations_of_path: buffer must be >= 1");
  const std::size_t n = path.size();
  std::vector<long> suffix_min(n), suffix_max(n);
  suffix_min[n - 1] = suffix_max[n - 1] = path[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    suffix_min[i] = std::min(path[i], suffix_min[i + 1]);
    suffix_max[i] = std::max(path[i], suffix_max[i + 1]);
  }
  std::vector<Regeneration> out;
  long running_max = path[0];
  for (std::size_t m = 1; m < n; ++m) {
    if (path[m] <= running_max) continue;
    running_max = path[m];
    bool never_revisited = m + 1 >= n || suffix_min[m + 1] > path[m];
    bool certified = suffix_max[m] >= path[m] + buffer;
    if (never_revisited && certified) out.push_back({static_cast<long>(m), path[m]});
  }
  return out;
}

// Statistics of the inter-regeneration blocks of one long trajectory.
// Block j covers embedded times [zeta_{j-1}, zeta_j) and exactly the sites
// [x_{j-1}, x_j); its site local times therefore satisfy
// sum_l l * |I_l| = zeta_j - zeta_{j-1} identically.
struct BlockCollection {
  std::vector<long> count_by_local_time;  // summed over blocks; index l
  long n_blocks = 0;
  long total_length = 0;
  bool identities_hold = true;
  bool regen_sites_single_visit = true;  // each regeneration level is hit exactly once
};

inline BlockCollection collect_regeneration_blocks(double beta, long n_blocks, long buffer,
                                                   Rng& rng) {
  BiasedWalk walk(beta);
  SiteArray<long> local;
  RegenerationScan scan(buffer);
  std::vector<Regeneration> regs;
  regs.reserve(n_blocks + 2);
  long y = 0;
  for (long t = 0; static_cast<long>(regs.size()) < n_blocks + 1; ++t) {
    scan.feed(t, y, [&](const Regeneration& r) { regs.push_back(r); });
    local.at(y)++;
    y = walk.step(rng);
  }

  BlockCollection out;
  for (std::size_t j = 1; j + 0 < regs.size() && out.n_blocks < n_blocks; ++j) {
    if (local.get(regs[j - 1].level) != 1) out.regen_sites_single_visit = false;
    long weighted = 0;
    for (long x = regs[j - 1].level; x < regs[j].level; ++x) {
      long l = local.get(x);
      if (l == 0) continue;  // cannot happen: every block site is visited
      if (static_cast<std::size_t>(l) >= out.count_by_local_time.size())
        out.count_by_local_time.resize(l + 1);
      out.count_by_local_time[l]++;
      weighted += l;
    }
    long length = regs[j].time - regs[j - 1].time;
    if (weighted != length) out.identities_hold = false;
    out.total_length += length;
    out.n_blocks++;
  }
  return out;
}

}  // namespace rtrw
