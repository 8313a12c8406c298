#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <utility>
#include <vector>

#include "rtrw/estimators.hpp"
#include "rtrw/gw.hpp"
#include "rtrw/rng.hpp"

using namespace rtrw;

namespace {

// Height of the subtree hanging below `root` inside an extended trap.
int trap_subtree_height(const InfiniteTrap& it, int root) {
  int best = 0;
  std::vector<std::pair<int, int>> stack{{root, 0}};
  while (!stack.empty()) {
    auto [v, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    for (int w = it.first_child(v); w != -1; w = it.next_sibling(w))
      stack.emplace_back(w, d + 1);
  }
  return best;
}

// P(root offspring = m | tree height = l) from the exact height CDF:
// p_m (u_{l-1}^m - u_{l-2}^m) / (u_l - u_{l-1}).
std::vector<double> root_offspring_given_height(const OffspringLaw& law, int l,
                                                int m_max) {
  std::vector<double> u = height_cdf_exact(law, l);
  auto u_at = [&](int n) { return n < 0 ? 0.0 : u[n]; };
  std::vector<double> probs(m_max + 1, 0.0);
  for (int m = 1; m <= std::min(m_max, law.k_max()); ++m)
    probs[m] = law.pmf()[m] *
               (std::pow(u_at(l - 1), m) - std::pow(u_at(l - 2), m)) /
               (u_at(l) - u_at(l - 1));
  return probs;
}

void check_tree_integrity(const GWTree& t) {
  REQUIRE(t.parent[0] == -1);
  REQUIRE(t.depth[0] == 0);
  std::vector<long> gen_recount(t.height + 1, 0);
  int max_depth = 0;
  long linked = 0;
  for (int v = 0; v < t.size(); ++v) {
    if (v > 0) {
      REQUIRE(t.parent[v] >= 0);
      REQUIRE(t.depth[v] == t.depth[t.parent[v]] + 1);
    }
    REQUIRE(t.depth[v] <= t.height);
    ++gen_recount[t.depth[v]];
    max_depth = std::max(max_depth, t.depth[v]);
  }
  for (int v = 0; v < t.size(); ++v)
    for (int w = t.first_child[v]; w != -1; w = t.next_sibling[w]) {
      REQUIRE(t.parent[w] == v);
      ++linked;
    }
  REQUIRE(max_depth == t.height);
  REQUIRE(linked == t.size() - 1);
  REQUIRE(gen_recount.size() == t.gen_sizes.size());
  for (std::size_t d = 0; d < gen_recount.size(); ++d)
    REQUIRE(gen_recount[d] == t.gen_sizes[d]);
}

}  // namespace

TEST_CASE("offspring law: closed forms, truncation, and validation") {
  OffspringLaw geo = OffspringLaw::geometric(1.0 / 3.0);
  REQUIRE(geo.pmf()[0] == Catch::Approx(2.0 / 3.0).epsilon(1e-14));
  REQUIRE(geo.pmf()[1] == Catch::Approx(2.0 / 9.0).epsilon(1e-14));
  REQUIRE(geo.mean() == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(geo.variance() == Catch::Approx(0.75).margin(1e-11));
  REQUIRE(geo.pgf(0.0) == Catch::Approx(2.0 / 3.0));
  REQUIRE(geo.pgf(1.0) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(geo.pgf_prime(1.0) == Catch::Approx(0.5).margin(1e-11));
  double total = 0.0;
  for (double w : geo.pmf()) total += w;
  REQUIRE(total == Catch::Approx(1.0).margin(1e-13));

  OffspringLaw poi = OffspringLaw::poisson(0.5);
  REQUIRE(poi.mean() == Catch::Approx(0.5).margin(1e-9));
  REQUIRE(poi.pmf()[0] == Catch::Approx(std::exp(-0.5)).epsilon(1e-12));

  OffspringLaw mixed = OffspringLaw::from_pmf({0.55, 0.15, 0.30});
  REQUIRE(mixed.mean() == Catch::Approx(0.75).margin(1e-12));
  REQUIRE(mixed.variance() == Catch::Approx(0.7875).margin(1e-12));

  REQUIRE_THROWS_AS(OffspringLaw::geometric(0.6), std::invalid_argument);
  REQUIRE_THROWS_AS(OffspringLaw::geometric(0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(OffspringLaw::poisson(1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(OffspringLaw::from_pmf({}), std::invalid_argument);
  REQUIRE_THROWS_AS(OffspringLaw::from_pmf({0.5, -0.1, 0.6}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(OffspringLaw::from_pmf({0.5, 0.6}), std::invalid_argument);
  // critical mean is rejected
  REQUIRE_THROWS_AS(OffspringLaw::from_pmf({0.1, 0.0, 0.9}),
                    std::invalid_argument);
  // all mass on {0, 1} cannot carry a size-biased branch point
  REQUIRE_THROWS_AS(OffspringLaw::from_pmf({0.2, 0.8}), std::invalid_argument);
}

TEST_CASE("height distribution oracle: geometric closed form") {
  OffspringLaw geo = OffspringLaw::geometric(1.0 / 3.0);
  std::vector<double> v = height_tail_exact(geo, 40);
  std::vector<double> u = height_cdf_exact(geo, 40);
  // for p_k = (2/3)(1/3)^k the tail iteration solves to exactly
  // P(H >= n) = 1 / (2^{n+1} - 1)
  for (int n = 0; n <= 20; ++n)
    REQUIRE(v[n] ==
            Catch::Approx(1.0 / (std::pow(2.0, n + 1) - 1.0)).epsilon(1e-9));
  for (int n = 0; n <= 12; ++n)
    REQUIRE(u[n] + v[n + 1] == Catch::Approx(1.0).margin(1e-12));

  // scaled tail P(H >= n) mu^{-n} decreases strictly and settles fast
  std::vector<double> w(41);
  for (int n = 0; n <= 40; ++n) w[n] = v[n] * std::pow(2.0, n);
  for (int n = 2; n <= 40; ++n) REQUIRE(w[n] < w[n - 1]);
  REQUIRE(w[39] - w[40] > 0.0);
  REQUIRE(w[39] - w[40] < 1e-6);
  REQUIRE(w[40] == Catch::Approx(0.5).margin(1e-9));

  OffspringLaw mixed = OffspringLaw::from_pmf({0.55, 0.15, 0.30});
  std::vector<double> vm = height_tail_exact(mixed, 40);
  for (int n = 2; n <= 40; ++n)
    REQUIRE(vm[n] * std::pow(0.75, -n) < vm[n - 1] * std::pow(0.75, -(n - 1)));
}

TEST_CASE("galton-watson sampling matches the height oracle and moments") {
  for (const OffspringLaw& law :
       {OffspringLaw::geometric(1.0 / 3.0),
        OffspringLaw::from_pmf({0.55, 0.15, 0.30})}) {
    Rng rng(20260301 + law.k_max());
    const int n_trees = 100000;
    std::vector<double> height_le(12, 0.0);
    Welford z3, size;
    for (int i = 0; i < n_trees; ++i) {
      GWTree t = sample_gw(law, rng, 100);
      if (i < 200) check_tree_integrity(t);
      size.add(t.size());
      z3.add(t.gen_sizes.size() > 3 ? static_cast<double>(t.gen_sizes[3]) : 0.0);
      for (int n = 0; n < 12; ++n)
        if (t.height <= n) height_le[n] += 1.0;
    }
    std::vector<double> u = height_cdf_exact(law, 11);
    for (int n = 0; n <= 10; ++n) {
      double phat = height_le[n] / n_trees;
      double se = std::sqrt(u[n] * (1.0 - u[n]) / n_trees);
      REQUIRE(std::abs(phat - u[n]) <= 3.0 * se + 1e-12);
    }
    double mu = law.mean();
    REQUIRE(z3.mean() == Catch::Approx(mu * mu * mu).margin(0.005));
    REQUIRE(size.mean() ==
            Catch::Approx(1.0 / (1.0 - mu)).margin(4.0 * size.se()));
  }
}

TEST_CASE("size-biased offspring draws") {
  OffspringLaw geo = OffspringLaw::geometric(1.0 / 3.0);
  Rng rng(77001);
  const int n = 100000;
  Welford w;
  long twos = 0;
  for (int i = 0; i < n; ++i) {
    long k = geo.sample_size_biased(rng);
    REQUIRE(k >= 1);
    w.add(static_cast<double>(k));
    if (k == 2) ++twos;
  }
  // E[xi*] = E[xi^2] / mean
  double second = 0.0;
  for (int k = 0; k <= geo.k_max(); ++k)
    second += static_cast<double>(k) * k * geo.pmf()[k];
  REQUIRE(w.mean() == Catch::Approx(second / geo.mean()).margin(3.0 * w.se()));
  double p2 = 2.0 * geo.pmf()[2] / geo.mean();
  double se2 = std::sqrt(p2 * (1.0 - p2) / n);
  REQUIRE(static_cast<double>(twos) / n ==
          Catch::Approx(p2).margin(3.0 * se2));

  // law with all size-biased mass on one atom draws it every time
  OffspringLaw two = OffspringLaw::from_pmf({0.6, 0.0, 0.4});
  for (int i = 0; i < 1000; ++i) REQUIRE(two.sample_size_biased(rng) == 2);
}

TEST_CASE("conditioned branch: structure and exact height tail") {
  OffspringLaw geo = OffspringLaw::geometric(1.0 / 3.0);
  Rng rng(88102);

  REQUIRE(branch_height_tail_exact(geo, 0) == 1.0);
  REQUIRE(branch_height_tail_exact(geo, 1) ==
          Catch::Approx(5.0 / 9.0).epsilon(1e-9));
  REQUIRE(branch_height_tail_exact(geo, 2) ==
          Catch::Approx(13.0 / 49.0).epsilon(1e-9));

  for (int i = 0; i < 50; ++i) {
    ConditionedBranch b = sample_conditioned_branch(geo, rng, 100);
    REQUIRE(b.xi_star >= 1);
    REQUIRE(static_cast<long>(b.subtree_roots.size()) == b.xi_star - 1);
    REQUIRE(b.tree.n_children(0) == b.xi_star - 1);
    REQUIRE((b.height() == 0) == (b.xi_star == 1));
    check_tree_integrity(b.tree);
  }

  const int n = 4000000;
  std::vector<long> reach(13, 0);
  for (int i = 0; i < n; ++i) {
    ConditionedBranch b = sample_conditioned_branch(geo, rng, 100);
    int h = b.height();
    for (int j = 0; j <= std::min(h, 12); ++j) ++reach[j];
  }
  std::vector<double> v = height_tail_exact(geo, 40);
  double c_mu = v[40] * std::pow(2.0, 40);
  double upper = branch_height_tail_exact(geo, 1) / geo.mean();
  for (int h = 3; h <= 12; ++h) {
    double exact = branch_height_tail_exact(geo, h);
    double phat = static_cast<double>(reach[h]) / n;
    double se = std::sqrt(exact * (1.0 - exact) / n);
    REQUIRE(std::abs(phat - exact) <= 4.0 * se);
    double ratio = phat * std::pow(geo.mean(), -h);
    REQUIRE(ratio >= 0.8 * c_mu);
    REQUIRE(ratio <= upper);
  }
}

TEST_CASE("deepest vertex: uniform over the last generation") {
  GWTree star = GWTree::single_node();
  for (int i = 0; i < 3; ++i) star.add_child(0);
  REQUIRE(star.height == 1);
  REQUIRE(star.deepest_count() == 3);

  Rng rng(31415);
  std::vector<long> counts(3, 0);
  for (int i = 0; i < 10000; ++i) ++counts[deepest_vertex(star, rng) - 1];
  double chi2 = chi_square_stat(counts, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  REQUIRE(chi2 < chi_square_crit99(2));

  OffspringLaw geo = OffspringLaw::geometric(1.0 / 3.0);
  for (int i = 0; i < 200; ++i) {
    GWTree t = sample_gw(geo, rng, 100);
    int d = deepest_vertex(t, rng);
    REQUIRE(t.depth[d] == t.height);
    REQUIRE(t.deepest_count() ==
            static_cast<long>(t.nodes_at_depth(t.height).size()));
  }
}

TEST_CASE("exact-height samplers agree with the conditioned law") {
  OffspringLaw geo = OffspringLaw::geometric(1.0 / 3.0);
  Rng rng(55203);

  for (int l : {0, 1, 2, 3}) {
    for (int i = 0; i < 300; ++i) {
      GWTree t = sample_gw_height_exact_recursive(geo, rng, l);
      REQUIRE(t.height == l);
      if (i < 20) check_tree_integrity(t);
    }
  }
  for (int i = 0; i < 50; ++i)
    REQUIRE(sample_gw_height_exact_recursive(geo, rng, 12).height == 12);
  // a tiny retry budget forces the recursive fallback
  for (int i = 0; i < 100; ++i)
    REQUIRE(sample_gw_height_exact(geo, rng, 5, 1).height == 5);

  // root offspring under H = 2, rejection vs recursive vs exact law
  std::vector<double> probs = root_offspring_given_height(geo, 2, 3);
  std::vector<double> bins = {probs[1], probs[2],
                              1.0 - probs[1] - probs[2]};
  const int n = 20000;
  for (int method = 0; method < 2; ++method) {
    std::vector<long> counts(3, 0);
    Welford sizes;
    for (int i = 0; i < n; ++i) {
      GWTree t = method == 0 ? sample_gw_height_exact(geo, rng, 2)
                             : sample_gw_height_exact_recursive(geo, rng, 2);
      REQUIRE(t.height == 2);
      sizes.add(t.size());
      int m = std::min(t.n_children(0), 3);
      ++counts[m - 1];
    }
    double chi2 = chi_square_stat(counts, bins);
    REQUIRE(chi2 < chi_square_crit99(2));
    REQUIRE(sizes.mean() > 3.0);  // root + >= 1 child + >= 1 grandchild
  }
}

TEST_CASE("infinite trap: spine kernel matches exact enumeration marginals") {
  OffspringLaw geo = OffspringLaw::geometric(1.0 / 3.0);
  GWTree seed_trap = GWTree::single_node();

  // level 1: P(children of delta^1 = m | height 1); P(m = 1) = 7/9
  {
    Rng rng(90601);
    std::vector<double> probs = root_offspring_given_height(geo, 1, 3);
    REQUIRE(1.0 - probs[1] == Catch::Approx(2.0 / 9.0).epsilon(1e-9));
    std::vector<double> bins = {probs[1], probs[2], probs[3],
                                1.0 - probs[1] - probs[2] - probs[3]};
    std::vector<long> counts(4, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      InfiniteTrap it(geo, seed_trap, 0);
      int top = it.ensure_level(1, rng);
      ++counts[std::min(it.n_children(top), 4) - 1];
      if (i < 50) REQUIRE(trap_subtree_height(it, top) == 1);
    }
    REQUIRE(chi_square_stat(counts, bins) < chi_square_crit99(3));
  }

  // level 2: root offspring of the grown prefix follows the H = 2 law, and
  // the embedded level-1 spine child is reweighted exactly as enumeration
  // predicts (values frozen from scripts/gen_tree_kernel_reference.py)
  {
    Rng rng(90602);
    std::vector<double> probs = root_offspring_given_height(geo, 2, 3);
    std::vector<double> bins = {probs[1], probs[2], probs[3],
                                1.0 - probs[1] - probs[2] - probs[3]};
    std::vector<long> counts(4, 0);
    long spine_child_single = 0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      InfiniteTrap it(geo, seed_trap, 0);
      int top = it.ensure_level(2, rng);
      ++counts[std::min(it.n_children(top), 4) - 1];
      if (it.n_children(it.spine(1)) == 1) ++spine_child_single;
      if (i < 50) {
        REQUIRE(trap_subtree_height(it, top) == 2);
        REQUIRE(trap_subtree_height(it, it.spine(1)) == 1);
        REQUIRE(it.parent(it.spine(1)) == top);
        REQUIRE(it.parent(it.spine(0)) == it.spine(1));
      }
    }
    REQUIRE(chi_square_stat(counts, bins) < chi_square_crit99(3));
    const double enum_p1 = 0.772267819379743;
    double se = std::sqrt(enum_p1 * (1.0 - enum_p1) / n);
    REQUIRE(static_cast<double>(spine_child_single) / n ==
            Catch::Approx(enum_p1).margin(4.0 * se + 1e-4));
  }

  // a real trap stays embedded unchanged while the spine grows past it
  {
    Rng rng(90603);
    GWTree trap = sample_gw_height_exact(geo, rng, 3);
    int delta = deepest_vertex(trap, rng);
    InfiniteTrap it(geo, trap, delta);
    REQUIRE(it.trap_height() == 3);
    REQUIRE(it.spine(0) == delta);
    REQUIRE(it.spine(3) == 0);
    it.ensure_level(6, rng);
    for (int v = 1; v < trap.size(); ++v) {
      REQUIRE(it.parent(v) == trap.parent[v]);
      REQUIRE(it.first_child(v) == trap.first_child[v]);
      REQUIRE(it.n_children(v) == trap.n_children(v));
    }
    for (int l = 1; l <= 6; ++l) {
      REQUIRE(it.parent(it.spine(l - 1)) == it.spine(l));
      REQUIRE(trap_subtree_height(it, it.spine(l)) == l);
    }
    for (int v = 0; v < it.node_count(); ++v) {
      int c = 0;
      for (int w = it.first_child(v); w != -1; w = it.next_sibling(w)) {
        REQUIRE(it.parent(w) == v);
        ++c;
      }
      REQUIRE(c == it.n_children(v));
    }
    REQUIRE(it.deepest_count_at_top() >= 1);
    REQUIRE(extend_to_infinite_trap(geo, trap, delta, 5, rng).level() == 5);
  }
}

TEST_CASE("generation cap frequency matches the tail bound") {
  OffspringLaw geo = OffspringLaw::geometric(1.0 / 3.0);
  Rng rng(66003);
  const int n = 100000;
  long capped = 0;
  for (int i = 0; i < n; ++i)
    if (!try_sample_gw(geo, rng, 12)) ++capped;
  std::vector<double> v = height_tail_exact(geo, 40);
  double c_mu = v[40] * std::pow(2.0, 40);
  REQUIRE(capped >= 1);
  REQUIRE(static_cast<double>(capped) <=
          2.0 * c_mu * std::pow(geo.mean(), 12) * n);

  REQUIRE_THROWS_AS(try_sample_gw(geo, rng, -1), std::invalid_argument);
  long threw = 0;
  for (int i = 0; i < 50; ++i) {
    try {
      sample_gw(geo, rng, 0);
    } catch (const SamplingCapError&) {
      ++threw;
    }
  }
  REQUIRE(threw >= 1);
}

