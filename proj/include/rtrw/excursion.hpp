#pragma once

// Excursion walk on a conditioned branch: the walk starts at the branch root,
// steps to the absorbing germ with weight beta + 1 and into each subtree edge
// with weight beta (interior nodes weight the parent edge 1 and each child
// edge beta), and is absorbed at the germ.  This header records the full
// entrance/visit decomposition of the excursion duration, samples the reduced
// holding times built from lazily extended infinite traps, and provides exact
// absorbing-chain oracles (defective Laplace transforms, hitting
// probabilities, conditioned means) on fixed finite trees.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rtrw/estimators.hpp"
#include "rtrw/gw.hpp"
#include "rtrw/rng.hpp"
#include "rtrw/walk.hpp"

namespace rtrw {

struct ExcursionWalkParams {
  double beta = 2.0;
  long step_cap = 100000000;
};

// One entrance into a subtree: the walk steps from the branch root into the
// subtree, wanders, and eventually returns to the root.  If the subtree's
// deepest point was visited g >= 1 times, t_between lists the g - 1 gaps
// between consecutive visits and t_remainder is the first journey in plus the
// last journey out; with g = 0 the whole entrance duration sits in
// t_remainder.
struct EntranceRecord {
  long g = 0;
  long t_remainder = 0;
  std::vector<long> t_between;
};

struct SubtreeExcursions {
  int h = 0;  // distance from the branch root to the subtree's deepest point
  long n = 0;  // number of entrances
  long b = 0;  // entrances that reached the deepest point
  std::vector<EntranceRecord> entrances;
};

struct ExcursionRecord {
  long eta0 = 0;
  bool timed_out = false;
  std::vector<SubtreeExcursions> subtrees;

  // eta0 = 1 + sum over entrances of (t_remainder + sum of t_between),
  // the 1 being the final step from the root to the germ.  Exact integer
  // bookkeeping; a timed-out partial record never satisfies it.
  bool identity_holds() const {
    if (timed_out) return false;
    long total = 1;
    for (const auto& sub : subtrees) {
      for (const auto& e : sub.entrances) {
        total += e.t_remainder;
        for (long gap : e.t_between) total += gap;
      }
    }
    return total == eta0;
  }
};

// Probability that the walk at the deepest point of a depth-H trap escapes to
// the trap entrance before returning: q_H = (beta - 1) / (beta^H - 1).
inline double escape_probability_exact(int h, double beta) {
  check_beta(beta);
  if (h < 1) throw std::invalid_argument("escape_probability_exact: depth must be >= 1");
  return (beta - 1.0) / (std::pow(beta, h) - 1.0);
}

// Probability that one entrance into a depth-H path trap reaches the deepest
// point before backing out: beta^H (1 - 1/beta) / (beta^H - 1).
inline double reach_deepest_probability_exact(int h, double beta) {
  check_beta(beta);
  if (h < 1) throw std::invalid_argument("reach_deepest_probability_exact: depth must be >= 1");
  const double bh = std::pow(beta, h);
  return bh * (1.0 - 1.0 / beta) / (bh - 1.0);
}

// Walks the biased excursion on a fixed conditioned branch and records the
// full decomposition.  The deepest point of each subtree is chosen once at
// construction (uniformly among the deepest when tied).
class BranchExcursionSampler {
 public:
  BranchExcursionSampler(const ConditionedBranch& b, ExcursionWalkParams params, Rng& rng)
      : params_(params) {
    check_beta(params.beta);
    if (params.step_cap < 1) throw std::invalid_argument("step cap must be positive");
    const GWTree& t = b.tree;
    const int n = static_cast<int>(t.parent.size());
    parent_ = t.parent;
    kid_off_.assign(n + 1, 0);
    for (int v = 1; v < n; ++v) ++kid_off_[t.parent[v] + 1];
    for (int v = 0; v < n; ++v) kid_off_[v + 1] += kid_off_[v];
    kids_.resize(n > 0 ? kid_off_[n] : 0);
    {
      std::vector<int> cursor(kid_off_.begin(), kid_off_.end() - 1);
      for (int v = 1; v < n; ++v) kids_[cursor[t.parent[v]]++] = v;
    }
    n_sub_ = static_cast<int>(b.subtree_roots.size());
    if (kid_off_[1] - kid_off_[0] != n_sub_)
      throw std::invalid_argument("branch subtree roots must be exactly the root's children");
    sub_root_ = b.subtree_roots;
    sub_of_.assign(n, -1);
    delta_.resize(n_sub_);
    h_.resize(n_sub_);
    std::vector<int> stack;
    for (int k = 0; k < n_sub_; ++k) {
      int maxdep = 0;
      std::vector<int> deepest;
      stack.assign(1, sub_root_[k]);
      while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        sub_of_[v] = k;
        if (t.depth[v] > maxdep) {
          maxdep = t.depth[v];
          deepest.clear();
        }
        if (t.depth[v] == maxdep) deepest.push_back(v);
        for (int e = kid_off_[v]; e < kid_off_[v + 1]; ++e) stack.push_back(kids_[e]);
      }
      h_[k] = maxdep;
      delta_[k] = deepest[rng.below(deepest.size())];
    }
  }

  int n_subtrees() const { return n_sub_; }
  int subtree_depth(int k) const { return h_.at(k); }
  int deepest_node(int k) const { return delta_.at(k); }

  ExcursionRecord run(Rng& rng) const {
    ExcursionRecord rec;
    rec.subtrees.resize(n_sub_);
    for (int k = 0; k < n_sub_; ++k) rec.subtrees[k].h = h_[k];
    const double beta = params_.beta;
    const int c = n_sub_;
    const double absorb_p = (beta + 1.0) / (beta + 1.0 + c * beta);
    long t = 0;
    for (;;) {
      if (rng.bernoulli(absorb_p)) {
        rec.eta0 = ++t;
        return rec;
      }
      const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
      auto& sub = rec.subtrees[k];
      const long depart = t;
      int pos = sub_root_[k];
      ++t;
      long g = 0, first_delta = 0, last_delta = 0;
      std::vector<long> between;
      for (;;) {
        if (pos == delta_[k]) {
          ++g;
          if (g == 1)
            first_delta = t;
          else
            between.push_back(t - last_delta);
          last_delta = t;
        }
        if (pos == 0) break;
        if (t >= params_.step_cap) {
          rec.timed_out = true;
          rec.eta0 = t;
          sub.n += 1;
          if (g > 0) sub.b += 1;
          const long rem = g == 0 ? t - depart : (first_delta - depart) + (t - last_delta);
          sub.entrances.push_back(EntranceRecord{g, rem, std::move(between)});
          return rec;
        }
        const int nc = kid_off_[pos + 1] - kid_off_[pos];
        if (nc == 0 || rng.bernoulli(1.0 / (1.0 + beta * nc))) {
          pos = parent_[pos];
        } else {
          pos = kids_[kid_off_[pos] + static_cast<int>(rng.below(static_cast<std::uint64_t>(nc)))];
        }
        ++t;
      }
      const long rem = g == 0 ? t - depart : (first_delta - depart) + (t - last_delta);
      sub.n += 1;
      if (g > 0) sub.b += 1;
      sub.entrances.push_back(EntranceRecord{g, rem, std::move(between)});
    }
  }

 private:
  ExcursionWalkParams params_;
  int n_sub_ = 0;
  std::vector<int> parent_;
  std::vector<int> kid_off_;
  std::vector<int> kids_;
  std::vector<int> sub_root_;
  std::vector<int> sub_of_;
  std::vector<int> delta_;
  std::vector<int> h_;
};

inline ExcursionRecord run_excursion(const ConditionedBranch& b, const ExcursionWalkParams& params,
                                     Rng& rng) {
  return BranchExcursionSampler(b, params, rng).run(rng);
}

// Copies the subtree rooted at `root` into a standalone tree (depths shifted
// so the subtree root sits at depth 0, sibling order preserved).
inline GWTree extract_subtree(const GWTree& t, int root) {
  const int n = static_cast<int>(t.parent.size());
  if (root < 0 || root >= n) throw std::invalid_argument("extract_subtree: node out of range");
  GWTree out;
  std::vector<int> order{root};
  std::vector<int> map(n, -1);
  map[root] = 0;
  for (std::size_t head = 0; head < order.size(); ++head) {
    const int v = order[head];
    for (int w = t.first_child[v]; w != -1; w = t.next_sibling[w]) {
      map[w] = static_cast<int>(order.size());
      order.push_back(w);
    }
  }
  const int m = static_cast<int>(order.size());
  out.parent.assign(m, -1);
  out.first_child.assign(m, -1);
  out.next_sibling.assign(m, -1);
  out.depth.assign(m, 0);
  for (int nv = 1; nv < m; ++nv) {
    const int v = order[nv];
    out.parent[nv] = map[t.parent[v]];
    out.depth[nv] = t.depth[v] - t.depth[root];
  }
  for (int nv = 0; nv < m; ++nv) {
    const int v = order[nv];
    int prev = -1;
    for (int w = t.first_child[v]; w != -1; w = t.next_sibling[w]) {
      if (prev == -1)
        out.first_child[nv] = map[w];
      else
        out.next_sibling[prev] = map[w];
      prev = map[w];
    }
  }
  out.height = 0;
  for (int nv = 0; nv < m; ++nv) out.height = std::max(out.height, out.depth[nv]);
  out.gen_sizes.assign(out.height + 1, 0);
  for (int nv = 0; nv < m; ++nv) ++out.gen_sizes[out.depth[nv]];
  return out;
}

// Exact law of the walk on a fixed finite tree absorbed at a single target
// state, solved by direct elimination in tree order (the tree-structured
// specialization of a direct factorization; O(n) per solve, exact to solver
// tolerance).  Two layouts are supported:
//   - from_branch: states are the branch nodes, the target is the germ above
//     the root (edge weight beta + 1), every other edge has the biased
//     parent-1/child-beta weights;
//   - from_trap_prefix: states are the nodes of an infinite-trap extension up
//     to spine level `kill_level`, the target is the deepest point delta, and
//     the top spine node is killed (reaching it contributes nothing), which
//     is exactly the truncation-with-restart convention of the excursion
//     samplers.
class AbsorbingChainOracle {
 public:
  static AbsorbingChainOracle from_branch(const ConditionedBranch& b, double beta) {
    check_beta(beta);
    const GWTree& t = b.tree;
    const int n = static_cast<int>(t.parent.size());
    AbsorbingChainOracle o;
    o.init_size(n);
    // states keep the tree's own indices: parents precede children.
    for (int v = 0; v < n; ++v) {
      o.ext_id_[v] = v;
      o.int_id_[v] = v;
      o.par_[v] = t.parent[v];
    }
    std::vector<int> counts(n, 0);
    for (int v = 1; v < n; ++v) ++counts[t.parent[v]];
    o.build_kids(counts, [&](int v) { return t.parent[v]; });
    for (int v = 0; v < n; ++v) {
      const int nc = counts[v];
      const double tot = v == 0 ? beta + 1.0 + nc * beta : 1.0 + nc * beta;
      o.p_up_[v] = (v == 0 ? beta + 1.0 : 1.0) / tot;
      for (int e = o.kid_off_[v]; e < o.kid_off_[v + 1]; ++e) o.p_kid_[e] = beta / tot;
    }
    return o;
  }

  static AbsorbingChainOracle from_trap_prefix(const InfiniteTrap& trap, double beta,
                                               int kill_level) {
    check_beta(beta);
    if (kill_level < 2) throw std::invalid_argument("trap prefix needs kill level >= 2");
    if (trap.level() < kill_level)
      throw std::invalid_argument("trap prefix not built up to the kill level");
    const int target = trap.spine(0);
    const int kill = trap.spine(kill_level);
    // breadth-first relabeling from delta^1 so parents precede children in
    // the orientation rooted at the target.
    std::vector<int> order{trap.spine(1)};
    std::vector<int> par_orig(1, target);
    std::vector<int> map(trap.node_count(), -1);
    map[trap.spine(1)] = 0;
    for (std::size_t head = 0; head < order.size(); ++head) {
      const int v = order[head];
      if (v == kill) continue;  // killed: absorbs nothing, expands nowhere
      const int pv = par_orig[head];
      const int tp = trap.parent(v);
      if (tp != -1 && tp != pv) {
        map[tp] = static_cast<int>(order.size());
        order.push_back(tp);
        par_orig.push_back(v);
      }
      for (int w = trap.first_child(v); w != -1; w = trap.next_sibling(w)) {
        if (w == pv || w == target) continue;
        map[w] = static_cast<int>(order.size());
        order.push_back(w);
        par_orig.push_back(v);
      }
    }
    const int n = static_cast<int>(order.size());
    AbsorbingChainOracle o;
    o.init_size(n);
    o.int_id_.assign(trap.node_count(), -1);
    std::vector<int> counts(n, 0);
    for (int i = 0; i < n; ++i) {
      o.ext_id_[i] = order[i];
      o.int_id_[order[i]] = i;
      o.par_[i] = i == 0 ? -1 : map[par_orig[i]];
      if (i > 0) ++counts[o.par_[i]];
      o.killed_[i] = order[i] == kill ? 1 : 0;
    }
    o.build_kids(counts, [&](int i) { return o.par_[i]; });
    for (int i = 0; i < n; ++i) {
      if (o.killed_[i]) continue;
      const int v = order[i];
      const int nc = trap.n_children(v);
      const double tot = 1.0 + beta * nc;
      const int up = i == 0 ? target : order[o.par_[i]];
      o.p_up_[i] = (up == trap.parent(v) ? 1.0 : beta) / tot;
      for (int e = o.kid_off_[i]; e < o.kid_off_[i + 1]; ++e) {
        const int w = order[o.kids_[e]];
        o.p_kid_[e] = (w == trap.parent(v) ? 1.0 : beta) / tot;
      }
    }
    return o;
  }

  int n_states() const { return n_; }
  int start_node() const { return ext_id_.at(0); }

  // Defective Laplace transform E_start[e^{-s tau}; absorbed at the target]
  // (for layouts without killed states the absorption is a.s. and this is the
  // plain Laplace transform of the hitting time).
  double hitting_laplace(double s) const { return hitting_laplace(s, start_node()); }
  double hitting_laplace(double s, int start) const {
    if (!(s >= 0.0)) throw std::invalid_argument("hitting_laplace: s >= 0 required");
    const double f = std::exp(-s);
    std::vector<double> b(n_, 0.0), x(n_);
    b[0] = f * p_up_[0];
    solve(f, b, x);
    return x[state_of(start)];
  }

  double hitting_probability() const { return hitting_laplace(0.0); }
  double hitting_probability(int start) const { return hitting_laplace(0.0, start); }

  // First two moments of the hitting time when absorption at the target is
  // a.s. (layouts without killed states only).
  double mean_hitting_time() const { return mean_hitting_time(start_node()); }
  double mean_hitting_time(int start) const {
    require_no_kill();
    std::vector<double> b(n_, 1.0), m(n_);
    solve(1.0, b, m);
    return m[state_of(start)];
  }
  double second_moment_hitting_time() const { return second_moment_hitting_time(start_node()); }
  double second_moment_hitting_time(int start) const {
    require_no_kill();
    std::vector<double> b(n_, 1.0), m1(n_), m2(n_);
    solve(1.0, b, m1);
    for (int v = 0; v < n_; ++v) {
      double acc = v == 0 ? 0.0 : p_up_[v] * m1[par_[v]];
      for (int e = kid_off_[v]; e < kid_off_[v + 1]; ++e) acc += p_kid_[e] * m1[kids_[e]];
      b[v] = 1.0 + 2.0 * acc;
    }
    solve(1.0, b, m2);
    return m2[state_of(start)];
  }

  // E_start[tau | absorbed at the target].
  double conditional_mean() const { return conditional_mean(start_node()); }
  double conditional_mean(int start) const {
    std::vector<double> b(n_, 0.0), h(n_), m(n_);
    b[0] = p_up_[0];
    solve(1.0, b, h);
    for (int v = 0; v < n_; ++v) {
      if (killed_[v]) {
        b[v] = 0.0;
        continue;
      }
      double acc = p_up_[v] * (v == 0 ? 1.0 : h[par_[v]]);
      for (int e = kid_off_[v]; e < kid_off_[v + 1]; ++e) acc += p_kid_[e] * h[kids_[e]];
      b[v] = acc;
    }
    solve(1.0, b, m);
    const int v = state_of(start);
    if (!(h[v] > 0.0))
      throw std::runtime_error("conditional_mean: start cannot reach the target");
    return m[v] / h[v];
  }

 private:
  int n_ = 0;
  std::vector<int> ext_id_;   // state -> node id in the source structure
  std::vector<int> int_id_;   // node id -> state (-1 when absent)
  std::vector<int> par_;      // parent state toward the target (-1 for state 0)
  std::vector<int> kid_off_;
  std::vector<int> kids_;
  std::vector<double> p_up_;  // step probability toward the parent state
  std::vector<double> p_kid_;
  std::vector<char> killed_;

  void init_size(int n) {
    if (n < 1) throw std::invalid_argument("absorbing chain needs at least one state");
    if (n > 10000) throw std::invalid_argument("absorbing chain limited to 10^4 states");
    n_ = n;
    ext_id_.assign(n, 0);
    int_id_.assign(n, 0);
    par_.assign(n, -1);
    p_up_.assign(n, 0.0);
    killed_.assign(n, 0);
  }

  template <class Parent>
  void build_kids(const std::vector<int>& counts, Parent parent_of) {
    kid_off_.assign(n_ + 1, 0);
    for (int v = 0; v < n_; ++v) kid_off_[v + 1] = kid_off_[v] + counts[v];
    kids_.assign(kid_off_[n_], 0);
    p_kid_.assign(kid_off_[n_], 0.0);
    std::vector<int> cursor(kid_off_.begin(), kid_off_.end() - 1);
    for (int v = 1; v < n_; ++v) kids_[cursor[parent_of(v)]++] = v;
  }

  int state_of(int node) const {
    if (node < 0 || node >= static_cast<int>(int_id_.size()) || int_id_[node] < 0)
      throw std::invalid_argument("absorbing chain: unknown start node");
    return int_id_[node];
  }

  void require_no_kill() const {
    for (char k : killed_)
      if (k) throw std::invalid_argument("hitting moments need a.s. absorption (no killed states)");
  }

  // Solves x_v = f (p_up x_parent + sum_kids p x_kid) + b_v with x = 0 at
  // killed states, by eliminating leaves first (x_v = A_v x_parent + C_v) and
  // substituting back down.
  void solve(double f, const std::vector<double>& b, std::vector<double>& x) const {
    std::vector<double> a(n_), c(n_);
    for (int v = n_ - 1; v >= 0; --v) {
      if (killed_[v]) {
        a[v] = c[v] = 0.0;
        continue;
      }
      double sa = 0.0, sc = 0.0;
      for (int e = kid_off_[v]; e < kid_off_[v + 1]; ++e) {
        sa += p_kid_[e] * a[kids_[e]];
        sc += p_kid_[e] * c[kids_[e]];
      }
      const double denom = 1.0 - f * sa;
      if (!(denom > 1e-14)) throw std::runtime_error("absorbing chain: singular solve");
      a[v] = v == 0 ? 0.0 : f * p_up_[v] / denom;
      c[v] = (f * sc + b[v]) / denom;
    }
    x.assign(n_, 0.0);
    x[0] = c[0];
    for (int v = 1; v < n_; ++v) x[v] = killed_[v] ? 0.0 : a[v] * x[par_[v]] + c[v];
  }
};

inline double exact_hitting_laplace(const AbsorbingChainOracle& oracle, double s, int start) {
  return oracle.hitting_laplace(s, start);
}

// Laplace transform / mean of one delta-to-delta excursion on a truncated
// trap prefix, conditioned on returning before the killed top level; the
// leading factor accounts for the forced first step off the deepest point.
inline double trap_excursion_laplace(const AbsorbingChainOracle& prefix, double s) {
  return std::exp(-s) * prefix.hitting_laplace(s) / prefix.hitting_probability();
}

inline double trap_excursion_mean(const AbsorbingChainOracle& prefix) {
  return 1.0 + prefix.conditional_mean();
}

// One delta-to-delta excursion time on an infinite trap, restarted whenever
// the walk climbs to spine level `kill_level` before returning (the retained
// draw is the excursion conditioned on staying below that level).  The lazy
// extension grows at most to `kill_level` and persists across restarts.
inline long sample_trap_excursion_time(double beta, InfiniteTrap& trap, int kill_level,
                                       Rng& rng) {
  check_beta(beta);
  if (kill_level < 2) throw std::invalid_argument("excursion truncation needs kill level >= 2");
  const int delta = trap.spine(0);
  for (;;) {
    long t = 1;
    int pos = trap.ensure_level(1, rng);
    bool restart = false;
    while (pos != delta) {
      if (trap.level() >= kill_level && pos == trap.spine(kill_level)) {
        restart = true;
        break;
      }
      const int nc = trap.n_children(pos);
      if (nc == 0 || rng.bernoulli(1.0 / (1.0 + beta * nc))) {
        if (pos == trap.spine(trap.level())) trap.ensure_level(trap.level() + 1, rng);
        pos = trap.parent(pos);
      } else {
        int kid = trap.first_child(pos);
        for (auto j = rng.below(static_cast<std::uint64_t>(nc)); j > 0; --j)
          kid = trap.next_sibling(kid);
        pos = kid;
      }
      ++t;
    }
    if (!restart) return t;
  }
}

// Reduced holding time: the walk's root decisions are replayed as a sequence
// of independent picks (germ weight beta + 1 against beta per subtree);
// entrances reach the deepest point with the deep-trap probability 1 - 1/beta,
// each reach contributes a geometric number (termination q_H) of
// delta-to-delta excursion times drawn on the subtree's lazily extended
// infinite trap.  Subtrees and their extensions are sampled fresh per draw
// and shared within the draw.
class ReducedHoldingSampler {
 public:
  ReducedHoldingSampler(const OffspringLaw& law, double beta, int gen_cap = 200)
      : law_(law), beta_(beta), gen_cap_(gen_cap) {
    check_beta(beta);
    if (gen_cap < 1) throw std::invalid_argument("generation cap must be positive");
  }

  double beta() const { return beta_; }

  long sample(Rng& rng) const {
    const long xi = law_.sample_size_biased(rng);
    const int c = static_cast<int>(xi) - 1;
    if (c == 0) return 0;
    const double absorb_p = (beta_ + 1.0) / (beta_ + 1.0 + c * beta_);
    const double reach_p = 1.0 - 1.0 / beta_;
    struct Slot {
      std::optional<GWTree> sub;
      std::optional<InfiniteTrap> trap;
      int delta = -1;
      int h = 0;
    };
    std::vector<Slot> slots(c);
    long total = 0;
    for (;;) {
      if (rng.bernoulli(absorb_p)) break;
      const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
      if (!rng.bernoulli(reach_p)) continue;
      auto& sk = slots[k];
      if (!sk.sub) {
        sk.sub = sample_gw(law_, rng, gen_cap_);
        sk.delta = deepest_vertex(*sk.sub, rng);
        sk.h = sk.sub->height + 1;
      }
      const long g = rng.geometric0(escape_probability_exact(sk.h, beta_));
      if (g == 0) continue;
      if (!sk.trap) sk.trap.emplace(law_, *sk.sub, sk.delta);
      for (long i = 0; i < g; ++i)
        total += sample_trap_excursion_time(beta_, *sk.trap, sk.h + 40, rng);
    }
    return total;
  }

  // Variance-reduced draw of the same mean: conditioned on the sampled
  // skeleton (offspring count, subtrees, extensions), the expected holding
  // time is ups_beta * sum_k (beta^{H_k} - beta)/(beta - 1) * E[T-tilde],
  // with the excursion mean computed exactly on the truncated prefix.
  double sample_conditional_mean(Rng& rng) const {
    const long xi = law_.sample_size_biased(rng);
    const int c = static_cast<int>(xi) - 1;
    if (c == 0) return 0.0;
    double acc = 0.0;
    const double u = ups_beta(beta_);
    for (int k = 0; k < c; ++k) {
      GWTree sub = sample_gw(law_, rng, gen_cap_);
      if (sub.height == 0) continue;
      const int delta = deepest_vertex(sub, rng);
      const int h = sub.height + 1;
      InfiniteTrap trap(law_, sub, delta);
      trap.ensure_level(h + 40, rng);
      const auto oracle = AbsorbingChainOracle::from_trap_prefix(trap, beta_, h + 40);
      const double gh = (std::pow(beta_, h) - beta_) / (beta_ - 1.0);
      acc += u * gh * trap_excursion_mean(oracle);
    }
    return acc;
  }

 private:
  OffspringLaw law_;
  double beta_;
  int gen_cap_;
};

inline long sample_reduced_holding(const ReducedHoldingSampler& sampler, Rng& rng) {
  return sampler.sample(rng);
}

// A branch's quenched environment: one realized infinite-trap extension per
// subtree, frozen up to the truncation level, with the matching exact oracle.
// Holding-time draws on a frozen environment share these extensions, so the
// rearranged-transform identity holds exactly realization by realization.
struct FrozenTrapEnvironment {
  int h = 1;       // distance from the branch root to the subtree's deepest point
  double q = 1.0;  // escape probability at that depth
  int kill_level = 0;
  std::optional<InfiniteTrap> trap;  // absent when h == 1 (no excursions possible)
  std::optional<AbsorbingChainOracle> oracle;
};

struct FrozenBranchEnvironment {
  double beta = 2.0;
  std::vector<FrozenTrapEnvironment> traps;
};

inline FrozenBranchEnvironment freeze_branch_environment(const ConditionedBranch& b,
                                                         const OffspringLaw& law, double beta,
                                                         Rng& rng) {
  check_beta(beta);
  FrozenBranchEnvironment env;
  env.beta = beta;
  for (int r : b.subtree_roots) {
    FrozenTrapEnvironment te;
    GWTree sub = extract_subtree(b.tree, r);
    te.h = sub.height + 1;
    te.q = escape_probability_exact(te.h, beta);
    if (sub.height >= 1) {
      const int delta = deepest_vertex(sub, rng);
      te.kill_level = te.h + 40;
      te.trap.emplace(law, sub, delta);
      te.trap->ensure_level(te.kill_level, rng);
      te.oracle.emplace(AbsorbingChainOracle::from_trap_prefix(*te.trap, beta, te.kill_level));
    }
    env.traps.push_back(std::move(te));
  }
  return env;
}

inline long sample_reduced_holding_quenched(FrozenBranchEnvironment& env, Rng& rng) {
  const int c = static_cast<int>(env.traps.size());
  if (c == 0) return 0;
  const double beta = env.beta;
  const double absorb_p = (beta + 1.0) / (beta + 1.0 + c * beta);
  const double reach_p = 1.0 - 1.0 / beta;
  long total = 0;
  for (;;) {
    if (rng.bernoulli(absorb_p)) break;
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
    if (!rng.bernoulli(reach_p)) continue;
    auto& te = env.traps[k];
    const long g = rng.geometric0(te.q);
    for (long i = 0; i < g; ++i)
      total += sample_trap_excursion_time(beta, *te.trap, te.kill_level, rng);
  }
  return total;
}

struct LaplaceIdentityResult {
  double lhs = 1.0;
  double lhs_se = 0.0;
  double rhs = 1.0;
  double s = 0.0;
};

// Checks the rearranged quenched Laplace transform on one fixed branch: the
// left side is the Monte Carlo mean of exp(-s eta-tilde) over draws sharing
// the frozen extensions, the right side is
// 1 / (1 + (beta-1)/(beta+1) * sum_k (1 - theta_k)) with theta_k computed
// exactly from the oracle on the same frozen prefix via geometric mixing.
inline LaplaceIdentityResult quenched_laplace_identity_check(const ConditionedBranch& b,
                                                             const OffspringLaw& law, double beta,
                                                             double lambda, double n, double gamma,
                                                             long n_mc, Rng& rng) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(n > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("n and gamma must be positive");
  if (n_mc < 1) throw std::invalid_argument("n_mc must be positive");
  LaplaceIdentityResult out;
  out.s = lambda / std::pow(n, 1.0 / gamma);
  FrozenBranchEnvironment env = freeze_branch_environment(b, law, beta, rng);
  double defect = 0.0;
  for (const auto& te : env.traps) {
    if (!te.oracle) continue;  // depth-1 subtree: no excursions, theta = 1
    const double phi = trap_excursion_laplace(*te.oracle, out.s);
    const double theta = te.q / (1.0 - (1.0 - te.q) * phi);
    defect += 1.0 - theta;
  }
  out.rhs = 1.0 / (1.0 + ups_beta(beta) * defect);
  Welford w;
  for (long i = 0; i < n_mc; ++i)
    w.add(std::exp(-out.s * static_cast<double>(sample_reduced_holding_quenched(env, rng))));
  out.lhs = w.mean();
  out.lhs_se = w.se();
  return out;
}

// --- lean excursion durations and the centred product exponent ---------------

// Duration-only excursion walk on a branch tree (root 0, germ implicit as the
// root's parent with edge weight beta + 1): walks until germ absorption and
// returns the step count.  Returns step_cap if absorption has not happened by
// then; with the default cap this is astronomically rare and the truncation
// keeps long-run averages finite.  Same law as run_excursion's eta0, with no
// per-visit bookkeeping so it suits high-volume moment estimation.
inline long branch_excursion_duration(const GWTree& branch, double beta, long step_cap, Rng& rng) {
  check_beta(beta);
  if (step_cap < 1) throw std::invalid_argument("step cap must be positive");
  long steps = 0;
  int pos = 0;
  while (steps < step_cap) {
    ++steps;
    int nc = 0;
    for (int w = branch.first_child[pos]; w != -1; w = branch.next_sibling[w]) ++nc;
    const double up = pos == 0 ? beta + 1.0 : 1.0;
    if (nc == 0 || rng.bernoulli(up / (up + beta * static_cast<double>(nc)))) {
      if (pos == 0) return steps;  // stepped from the root to the germ
      pos = branch.parent[pos];
    } else {
      int kid = branch.first_child[pos];
      for (auto j = rng.below(static_cast<std::uint64_t>(nc)); j > 0; --j)
        kid = branch.next_sibling[kid];
      pos = kid;
    }
  }
  return step_cap;
}

struct BranchExcursionMean {
  double mean = 0.0;
  double se = 0.0;
  long n = 0;
  long truncated = 0;  // excursions cut at the step cap
};

// Mean excursion duration over fresh conditioned branches (one excursion per
// branch, so draws are independent).
inline BranchExcursionMean branch_excursion_mean(const OffspringLaw& law, long n_samples,
                                                 const ExcursionWalkParams& params, int gen_cap,
                                                 Rng& rng) {
  if (n_samples < 2) throw std::invalid_argument("need at least two samples");
  Welford w;
  BranchExcursionMean out;
  for (long i = 0; i < n_samples; ++i) {
    const ConditionedBranch b = sample_conditioned_branch(law, rng, gen_cap);
    const long d = branch_excursion_duration(b.tree, params.beta, params.step_cap, rng);
    if (d >= params.step_cap) ++out.truncated;
    w.add(static_cast<double>(d));
  }
  out.mean = w.mean();
  out.se = w.se();
  out.n = w.count();
  return out;
}

// Accumulated first and second moments of the per-trap centred products,
// mergeable across independent batches.  Sums are compensated so that tens of
// millions of near-unit terms do not lose the digits the exponent amplifies.
struct ProductMoments {
  double sum = 0.0;
  double sumsq = 0.0;
  long count = 0;
  long truncated = 0;

  void add(double x) {
    kahan(sum, carry_sum_, x);
    kahan(sumsq, carry_sq_, x * x);
    ++count;
  }
  void absorb(const ProductMoments& other) {
    kahan(sum, carry_sum_, other.sum);
    kahan(sumsq, carry_sq_, other.sumsq);
    count += other.count;
    truncated += other.truncated;
  }
  double mean() const { return sum / static_cast<double>(count); }
  double se_mean() const {
    const double n = static_cast<double>(count);
    const double var = std::max(0.0, (sumsq - sum * sum / n) / (n - 1.0));
    return std::sqrt(var / n);
  }

 private:
  static void kahan(double& total, double& carry, double x) {
    const double y = x - carry;
    const double t = total + y;
    carry = (t - total) - y;
    total = t;
  }
  double carry_sum_ = 0.0;
  double carry_sq_ = 0.0;
};

// One batch of per-trap centred products: for each trap draw a fresh
// conditioned branch, run l excursions on that same branch, and record
// exp(-s * sum_i (eta_i - mean_eta)).  Keeping the l draws on one branch is
// what makes the estimator unbiased for the annealed l-th quenched moment.
inline ProductMoments branch_excursion_product_moments(const OffspringLaw& law, double s, long l,
                                                       double mean_eta, long n_traps,
                                                       const ExcursionWalkParams& params,
                                                       int gen_cap, Rng& rng) {
  check_beta(params.beta);
  if (l < 1) throw std::invalid_argument("l must be >= 1");
  if (!(s >= 0.0)) throw std::invalid_argument("s must be >= 0");
  if (n_traps < 1) throw std::invalid_argument("n_traps must be positive");
  ProductMoments m;
  for (long i = 0; i < n_traps; ++i) {
    const ConditionedBranch b = sample_conditioned_branch(law, rng, gen_cap);
    double centred = 0.0;
    for (long j = 0; j < l; ++j) {
      const long d = branch_excursion_duration(b.tree, params.beta, params.step_cap, rng);
      if (d >= params.step_cap) ++m.truncated;
      centred += static_cast<double>(d) - mean_eta;
    }
    m.add(std::exp(-s * centred));
  }
  return m;
}

struct CentredExponentEstimate {
  double value = 0.0;       // n * log of the mean centred product
  double se = 0.0;          // delta-method s.e. at fixed centring constant
  double mean_slope = 0.0;  // d value / d mean_eta = n * l * s, exactly
  double s = 0.0;           // per-step rate lambda / n^{1/gamma}
  long n_traps = 0;
};

// Exponent n * log E[product] from accumulated moments at scale n_scale.
// The centring constant enters the value exactly linearly (slope n * l * s),
// so the uncertainty of a pre-estimated mean propagates through mean_slope.
inline CentredExponentEstimate centred_exponent_from_moments(double n_scale, double gamma, long l,
                                                             double lambda,
                                                             const ProductMoments& m) {
  if (!(n_scale > 0.0) || !(gamma > 0.0))
    throw std::invalid_argument("n_scale and gamma must be positive");
  if (l < 1) throw std::invalid_argument("l must be >= 1");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (m.count < 2) throw std::invalid_argument("need at least two traps");
  const double mean = m.mean();
  if (!(mean > 1e-300))
    throw std::runtime_error(
        "centred product average fell below 1e-300; use a smaller lambda or scale");
  CentredExponentEstimate e;
  e.s = lambda / std::pow(n_scale, 1.0 / gamma);
  e.value = n_scale * std::log(mean);
  e.se = n_scale * m.se_mean() / mean;
  e.mean_slope = n_scale * static_cast<double>(l) * e.s;
  e.n_traps = m.count;
  return e;
}

// Centred log-Laplace exponent of branch excursion durations at scale
// n_scale: n * log Ê[exp(-(lambda / n^{1/gamma}) * sum_{i<=l} (eta_i - mean_eta))]
// with the l excursions sharing each trap's branch.
inline CentredExponentEstimate branch_excursion_exponent(const OffspringLaw& law, double gamma,
                                                         double n_scale, long l, double lambda,
                                                         double mean_eta, long n_traps,
                                                         const ExcursionWalkParams& params,
                                                         int gen_cap, Rng& rng) {
  if (!(n_scale > 0.0) || !(gamma > 0.0))
    throw std::invalid_argument("n_scale and gamma must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  const double s = lambda / std::pow(n_scale, 1.0 / gamma);
  const ProductMoments m =
      branch_excursion_product_moments(law, s, l, mean_eta, n_traps, params, gen_cap, rng);
  return centred_exponent_from_moments(n_scale, gamma, l, lambda, m);
}

}  // namespace rtrw
