#pragma once

// Subcritical Galton-Watson machinery: offspring laws, tree sampling in flat
// arrays, exact height-distribution oracles, size-biased branches, and the
// lazily grown infinite trap (a tree extended level by level above its
// deepest vertex so that the subtree below the level-l spine node is a GW
// tree conditioned to have height exactly l).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rtrw/rng.hpp"

namespace rtrw {

// Thrown when a sampler exhausts its generation cap or retry budget.
class SamplingCapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Offspring distribution of a subcritical Galton-Watson process.  The pmf is
// finitely supported; named families are truncated where the tail mass drops
// below 1e-12, with the leftover folded into the top atom so the law still
// sums to one exactly.
class OffspringLaw {
 public:
  static OffspringLaw from_pmf(std::vector<double> pmf) {
    return OffspringLaw(std::move(pmf));
  }

  // p_k = (1 - p) p^k, k >= 0; subcritical iff p < 1/2.
  static OffspringLaw geometric(double p) {
    if (!(p > 0.0 && p < 0.5))
      throw std::invalid_argument("geometric offspring law requires p in (0, 1/2)");
    std::vector<double> pmf;
    double atom = 1.0 - p;
    double tail = 1.0;  // mass not yet assigned
    while (tail - atom >= 1e-12) {
      pmf.push_back(atom);
      tail -= atom;
      atom *= p;
    }
    pmf.push_back(tail);  // fold remaining tail into the top atom
    return OffspringLaw(std::move(pmf));
  }

  // Poisson(lambda) truncated at tail mass < 1e-12; subcritical iff lambda < 1.
  static OffspringLaw poisson(double lambda) {
    if (!(lambda > 0.0 && lambda < 1.0))
      throw std::invalid_argument("poisson offspring law requires lambda in (0, 1)");
    std::vector<double> pmf;
    double atom = std::exp(-lambda);
    double tail = 1.0;
    int k = 0;
    while (tail - atom >= 1e-12) {
      pmf.push_back(atom);
      tail -= atom;
      ++k;
      atom *= lambda / k;
    }
    pmf.push_back(tail);
    return OffspringLaw(std::move(pmf));
  }

  const std::vector<double>& pmf() const { return pmf_; }
  int k_max() const { return static_cast<int>(pmf_.size()) - 1; }
  double mean() const { return mean_; }
  double variance() const { return var_; }

  // Generating function f(s) = sum_k p_k s^k and its derivative.
  double pgf(double s) const {
    double acc = 0.0;
    for (int k = k_max(); k >= 0; --k) acc = acc * s + pmf_[k];
    return acc;
  }
  double pgf_prime(double s) const {
    double acc = 0.0;
    for (int k = k_max(); k >= 1; --k) acc = acc * s + k * pmf_[k];
    return acc;
  }

  long sample(Rng& rng) const { return static_cast<long>(plain_.sample(rng)); }

  // Size-biased draw: P(k) = k p_k / mean, supported on k >= 1.
  long sample_size_biased(Rng& rng) const {
    return static_cast<long>(biased_.sample(rng)) + 1;
  }

 private:
  static std::vector<double> validated(std::vector<double> pmf) {
    if (pmf.empty()) throw std::invalid_argument("offspring pmf is empty");
    double total = 0.0;
    for (double w : pmf) {
      if (w < 0.0) throw std::invalid_argument("offspring pmf has negative mass");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("offspring pmf must sum to 1");
    for (double& w : pmf) w /= total;
    double mean = 0.0;
    for (std::size_t k = 0; k < pmf.size(); ++k)
      mean += static_cast<double>(k) * pmf[k];
    if (!(mean < 1.0)) throw std::invalid_argument("subcritical mean required");
    if (pmf.size() < 3 || !(pmf[0] + pmf[1] < 1.0))
      throw std::invalid_argument("offspring pmf must put mass above one child");
    return pmf;
  }

  static std::vector<double> size_biased_weights(const std::vector<double>& pmf) {
    std::vector<double> biased(pmf.size() - 1);
    for (std::size_t k = 1; k < pmf.size(); ++k)
      biased[k - 1] = static_cast<double>(k) * pmf[k];
    return biased;
  }

  explicit OffspringLaw(std::vector<double> pmf)
      : pmf_(validated(std::move(pmf))),
        plain_(pmf_),
        biased_(size_biased_weights(pmf_)) {
    for (std::size_t k = 0; k < pmf_.size(); ++k) {
      mean_ += static_cast<double>(k) * pmf_[k];
      var_ += static_cast<double>(k) * static_cast<double>(k) * pmf_[k];
    }
    var_ -= mean_ * mean_;
  }

  std::vector<double> pmf_;
  double mean_ = 0.0;
  double var_ = 0.0;
  DiscreteSampler plain_;
  DiscreteSampler biased_;
};

// Rooted tree in flat arrays.  Node 0 is the root; children are linked
// through first_child / next_sibling, -1 marking absence.
struct GWTree {
  std::vector<int> parent;
  std::vector<int> first_child;
  std::vector<int> next_sibling;
  std::vector<int> depth;
  std::vector<long> gen_sizes;  // gen_sizes[d] = number of nodes at depth d
  int height = 0;

  int size() const { return static_cast<int>(parent.size()); }
  long deepest_count() const { return gen_sizes[height]; }

  int n_children(int v) const {
    int c = 0;
    for (int w = first_child[v]; w != -1; w = next_sibling[w]) ++c;
    return c;
  }

  std::vector<int> nodes_at_depth(int d) const {
    std::vector<int> out;
    for (int v = 0; v < size(); ++v)
      if (depth[v] == d) out.push_back(v);
    return out;
  }

  static GWTree single_node() {
    GWTree t;
    t.parent = {-1};
    t.first_child = {-1};
    t.next_sibling = {-1};
    t.depth = {0};
    t.gen_sizes = {1};
    return t;
  }

  // Appends a new leaf under `parent_node` (prepended to its child list)
  // and returns its index.
  int add_child(int parent_node) {
    int v = size();
    parent.push_back(parent_node);
    first_child.push_back(-1);
    next_sibling.push_back(first_child[parent_node]);
    first_child[parent_node] = v;
    int d = depth[parent_node] + 1;
    depth.push_back(d);
    if (static_cast<int>(gen_sizes.size()) <= d) gen_sizes.resize(d + 1, 0);
    ++gen_sizes[d];
    height = std::max(height, d);
    return v;
  }

  // Copies `sub` below `parent_node`; returns the index of the copied root.
  int graft(int parent_node, const GWTree& sub) {
    int base = size();
    int root = add_child(parent_node);
    std::vector<int> map(sub.size());
    map[0] = root;
    for (int v = 1; v < sub.size(); ++v) map[v] = base + v;
    for (int v = 1; v < sub.size(); ++v) {
      int w = add_child(map[sub.parent[v]]);
      if (w != map[v]) throw std::logic_error("graft produced unexpected layout");
    }
    return root;
  }
};

// Samples one Galton-Watson tree breadth-first, giving up (nullopt) as soon
// as a child would land below depth `gen_cap`.  The accepted trees are
// exactly those with height <= gen_cap, with the conditional GW law.
inline std::optional<GWTree> try_sample_gw(const OffspringLaw& law, Rng& rng,
                                            int gen_cap) {
  if (gen_cap < 0) throw std::invalid_argument("gen_cap must be nonnegative");
  GWTree t = GWTree::single_node();
  for (int v = 0; v < t.size(); ++v) {
    long m = law.sample(rng);
    if (m == 0) continue;
    if (t.depth[v] + 1 > gen_cap) return std::nullopt;
    // Children are appended contiguously and linked in order.
    int first = t.size();
    for (long j = 0; j < m; ++j) {
      t.parent.push_back(v);
      t.first_child.push_back(-1);
      t.next_sibling.push_back(-1);
      t.depth.push_back(t.depth[v] + 1);
    }
    for (long j = 0; j + 1 < m; ++j)
      t.next_sibling[first + j] = first + j + 1;
    t.first_child[v] = first;
    int d = t.depth[v] + 1;
    if (static_cast<int>(t.gen_sizes.size()) <= d) t.gen_sizes.resize(d + 1, 0);
    t.gen_sizes[d] += m;
    t.height = std::max(t.height, d);
  }
  return t;
}

inline GWTree sample_gw(const OffspringLaw& law, Rng& rng, int gen_cap) {
  auto t = try_sample_gw(law, rng, gen_cap);
  if (!t) throw SamplingCapError("galton-watson tree exceeded generation cap");
  return std::move(*t);
}

// GW tree conditioned on height <= h_max, by rejection with early abort.
inline GWTree sample_gw_height_at_most(const OffspringLaw& law, Rng& rng,
                                        int h_max,
                                        long retry_cap = 1000000) {
  for (long attempt = 0; attempt < retry_cap; ++attempt) {
    auto t = try_sample_gw(law, rng, h_max);
    if (t) return std::move(*t);
  }
  throw SamplingCapError("height-bounded tree sampling exhausted retries");
}

// Exact height CDF: u[n] = P(H <= n) via u_n = f(u_{n-1}), u_{-1} = 0.
inline std::vector<double> height_cdf_exact(const OffspringLaw& law, int n_max) {
  if (n_max < 0) throw std::invalid_argument("n_max must be nonnegative");
  std::vector<double> u(n_max + 1);
  double prev = 0.0;
  for (int n = 0; n <= n_max; ++n) {
    prev = law.pgf(prev);
    u[n] = prev;
  }
  return u;
}

// Exact height tail: v[n] = P(H >= n) with v_0 = 1 and the factorised
// iteration v_n = v_{n-1} * sum_k p_k sum_{j<k} (1 - v_{n-1})^j, which is
// algebraically 1 - f(1 - v_{n-1}) but stays accurate once v is tiny.
inline std::vector<double> height_tail_exact(const OffspringLaw& law, int n_max) {
  if (n_max < 0) throw std::invalid_argument("n_max must be nonnegative");
  const auto& p = law.pmf();
  std::vector<double> v(n_max + 1);
  v[0] = 1.0;
  for (int n = 1; n <= n_max; ++n) {
    double w = 1.0 - v[n - 1];
    double partial = 0.0;  // sum_{j<k} w^j, built incrementally
    double wpow = 1.0;
    double factor = 0.0;
    for (int k = 1; k < static_cast<int>(p.size()); ++k) {
      partial += wpow;
      wpow *= w;
      factor += p[k] * partial;
    }
    v[n] = v[n - 1] * factor;
  }
  return v;
}

// GW tree conditioned on height exactly l.  Primary method is rejection from
// the unconditioned law (early abort above l); if the retry budget runs out
// and l is small, falls back to exact recursive sampling through the height
// CDF: the root offspring count m is drawn with weight p_m (u_{l-1}^m -
// u_{l-2}^m), child heights are iid height-CDF draws conditioned to have
// maximum l-1, and each child is sampled recursively at its height.
inline GWTree sample_gw_height_exact_recursive(const OffspringLaw& law,
                                                Rng& rng, int l) {
  if (l < 0) throw std::invalid_argument("height must be nonnegative");
  std::vector<double> u = height_cdf_exact(law, std::max(l - 1, 0));
  auto u_at = [&](int n) { return n < 0 ? 0.0 : u[n]; };

  // weight tables reused across the recursion, indexed by target height
  struct frame_tables {
    DiscreteSampler offspring;
    DiscreteSampler child_height;  // over 0..h-1, P(H = j | H <= h-1)
  };
  std::vector<std::optional<frame_tables>> tables(l + 1);
  auto table_for = [&](int h) -> frame_tables& {
    if (!tables[h]) {
      std::vector<double> wm(law.k_max() + 1, 0.0);
      for (int m = 1; m <= law.k_max(); ++m)
        wm[m] = law.pmf()[m] *
                (std::pow(u_at(h - 1), m) - std::pow(u_at(h - 2), m));
      std::vector<double> wh(h, 0.0);
      for (int j = 0; j < h; ++j) wh[j] = u_at(j) - u_at(j - 1);
      tables[h].emplace(frame_tables{DiscreteSampler(wm), DiscreteSampler(wh)});
    }
    return *tables[h];
  };

  GWTree out = GWTree::single_node();
  // stack of (node, required subtree height)
  std::vector<std::pair<int, int>> stack{{0, l}};
  while (!stack.empty()) {
    auto [node, h] = stack.back();
    stack.pop_back();
    if (h == 0) continue;
    frame_tables& tab = table_for(h);
    int m = static_cast<int>(tab.offspring.sample(rng));
    std::vector<int> heights(m);
    for (long attempt = 0;; ++attempt) {
      if (attempt >= 1000000)
        throw SamplingCapError("child height profile sampling exhausted retries");
      int deepest = -1;
      for (int j = 0; j < m; ++j) {
        heights[j] = static_cast<int>(tab.child_height.sample(rng));
        deepest = std::max(deepest, heights[j]);
      }
      if (deepest == h - 1) break;
    }
    for (int j = 0; j < m; ++j)
      stack.emplace_back(out.add_child(node), heights[j]);
  }
  return out;
}

inline GWTree sample_gw_height_exact(const OffspringLaw& law, Rng& rng, int l,
                                      long retry_cap = 1000000) {
  if (l < 0) throw std::invalid_argument("height must be nonnegative");
  for (long attempt = 0; attempt < retry_cap; ++attempt) {
    auto t = try_sample_gw(law, rng, l);
    if (t && t->height == l) return std::move(*t);
  }
  if (l <= 12) return sample_gw_height_exact_recursive(law, rng, l);
  throw SamplingCapError("exact-height tree sampling exhausted retries");
}

// Branch hanging off a backbone vertex: the vertex itself (root, node 0)
// carries xi_star - 1 independent GW subtrees, where xi_star is a
// size-biased offspring draw.  The germ (the backbone side) is implicit;
// walk dynamics treat it as the root's parent.  height counts the root
// level: 0 when there are no subtrees, else 1 + max subtree height.
struct ConditionedBranch {
  long xi_star = 1;
  GWTree tree;
  std::vector<int> subtree_roots;

  int height() const { return tree.height; }
};

inline ConditionedBranch sample_conditioned_branch(const OffspringLaw& law,
                                                    Rng& rng, int gen_cap) {
  ConditionedBranch b;
  b.xi_star = law.sample_size_biased(rng);
  b.tree = GWTree::single_node();
  for (long i = 0; i + 1 < b.xi_star; ++i) {
    GWTree sub = sample_gw(law, rng, gen_cap);
    b.subtree_roots.push_back(b.tree.graft(0, sub));
  }
  return b;
}

// P(branch height >= h): the root has xi_star - 1 subtrees, so the branch
// reaches depth h iff some subtree has height >= h - 1, giving
// 1 - E[u_{h-2}^{xi_star - 1}] = 1 - f'(u_{h-2}) / mean.
inline double branch_height_tail_exact(const OffspringLaw& law, int h) {
  if (h <= 0) return 1.0;
  double u = h >= 2 ? height_cdf_exact(law, h - 2)[h - 2] : 0.0;
  return 1.0 - law.pgf_prime(u) / law.mean();
}

// Uniform draw among the vertices of the last generation.
inline int deepest_vertex(const GWTree& t, Rng& rng) {
  std::vector<int> deepest = t.nodes_at_depth(t.height);
  return deepest[rng.below(deepest.size())];
}

// A trap (tree plus a marked deepest vertex delta) extended upward level by
// level: spine nodes delta^0 = delta, delta^1, ... are added so that the
// descendant tree of delta^l is a GW tree conditioned to have height exactly
// l, consistently with the embedded original trap at l = trap height.  Each
// extension proposes the new spine node's offspring count M with weight
// m p_m u_{l-1}^{m-1}, fills the M - 1 off-spine slots with iid GW trees
// conditioned on height <= l-1, and accepts the configuration with
// probability d / D, where d is the deepest-vertex count of the current
// prefix and D adds the deepest counts of the proposed height-(l-1)
// siblings.  Levels are grown lazily on demand.
class InfiniteTrap {
 public:
  InfiniteTrap(const OffspringLaw& law, const GWTree& trap, int delta)
      : law_(law),
        parent_(trap.parent),
        first_child_(trap.first_child),
        next_sibling_(trap.next_sibling),
        n_children_(trap.size()) {
    if (delta < 0 || delta >= trap.size())
      throw std::invalid_argument("delta is not a vertex of the trap");
    if (trap.depth[delta] != trap.height)
      throw std::invalid_argument("delta must be a deepest vertex");
    for (int v = 0; v < trap.size(); ++v)
      n_children_[v] = trap.n_children(v);
    spine_.resize(trap.height + 1);
    int v = delta;
    for (int j = 0; j <= trap.height; ++j) {
      spine_[j] = v;
      v = trap.parent[v];
    }
    trap_height_ = trap.height;
    deepest_ = trap.deepest_count();
    u_ = {law_.pgf(0.0)};
  }

  int trap_height() const { return trap_height_; }
  int level() const { return static_cast<int>(spine_.size()) - 1; }
  int node_count() const { return static_cast<int>(parent_.size()); }
  long deepest_count_at_top() const { return deepest_; }

  int spine(int l) const { return spine_.at(l); }
  int parent(int v) const { return parent_[v]; }
  int first_child(int v) const { return first_child_[v]; }
  int next_sibling(int v) const { return next_sibling_[v]; }
  int n_children(int v) const { return n_children_[v]; }

  // Grows the spine until delta^l exists and returns its node id.
  int ensure_level(int l, Rng& rng) {
    while (level() < l) extend_one(rng);
    return spine_[l];
  }

 private:
  void extend_one(Rng& rng) {
    const int l = level() + 1;
    while (static_cast<int>(u_.size()) < l) u_.push_back(law_.pgf(u_.back()));
    const double u_below = u_[l - 1];
    std::vector<double> wm(law_.k_max() + 1, 0.0);
    for (int m = 1; m <= law_.k_max(); ++m)
      wm[m] = m * law_.pmf()[m] * std::pow(u_below, m - 1);
    DiscreteSampler propose(wm);

    for (long attempt = 0; attempt < 1000000; ++attempt) {
      int m = static_cast<int>(propose.sample(rng));
      std::vector<GWTree> siblings;
      siblings.reserve(m - 1);
      long extra_deepest = 0;
      for (int j = 0; j + 1 < m; ++j) {
        siblings.push_back(sample_gw_height_at_most(law_, rng, l - 1));
        if (siblings.back().height == l - 1)
          extra_deepest += siblings.back().deepest_count();
      }
      double accept = static_cast<double>(deepest_) /
                      static_cast<double>(deepest_ + extra_deepest);
      if (rng.uniform01() >= accept) continue;

      int top = node_count();
      parent_.push_back(-1);
      first_child_.push_back(spine_[l - 1]);
      next_sibling_.push_back(-1);
      n_children_.push_back(m);
      parent_[spine_[l - 1]] = top;
      int tail = spine_[l - 1];  // last node linked into top's child list
      for (const GWTree& sub : siblings) {
        int sub_root = attach_subtree(top, sub);
        next_sibling_[tail] = sub_root;
        tail = sub_root;
      }
      spine_.push_back(top);
      deepest_ += extra_deepest;
      return;
    }
    throw SamplingCapError("infinite trap extension exhausted retries");
  }

  // Appends a copy of `sub` with its root parented to `top`, leaving the
  // sibling link of the copied root for the caller to set.
  int attach_subtree(int top, const GWTree& sub) {
    int base = node_count();
    for (int v = 0; v < sub.size(); ++v) {
      parent_.push_back(v == 0 ? top : base + sub.parent[v]);
      first_child_.push_back(sub.first_child[v] == -1 ? -1
                                                      : base + sub.first_child[v]);
      next_sibling_.push_back(v == 0 || sub.next_sibling[v] == -1
                                  ? -1
                                  : base + sub.next_sibling[v]);
      n_children_.push_back(sub.n_children(v));
    }
    return base;
  }

  OffspringLaw law_;
  std::vector<int> parent_;
  std::vector<int> first_child_;
  std::vector<int> next_sibling_;
  std::vector<int> n_children_;
  std::vector<int> spine_;
  std::vector<double> u_;  // u_[n] = P(H <= n), extended on demand
  int trap_height_ = 0;
  long deepest_ = 1;
};

// One-shot form: extend `trap` (with marked deepest vertex `delta`) until
// the spine reaches `depth` levels above delta.
inline InfiniteTrap extend_to_infinite_trap(const OffspringLaw& law,
                                             const GWTree& trap, int delta,
                                             int depth, Rng& rng) {
  InfiniteTrap t(law, trap, delta);
  t.ensure_level(depth, rng);
  return t;
}

}  // namespace rtrw
