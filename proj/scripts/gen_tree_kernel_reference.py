#!/usr/bin/env python3
"""Exact-enumeration reference values for the spine-extension kernel tests.

Works with the geometric(1/3) offspring law p_k = (2/3)(1/3)^k in exact
rational arithmetic (children per node truncated at K_MAX; the discarded
mass is ~3^-26 and is folded into the top atom, matching the C++ law).

Two computations, compared against each other:

1. Target law: enumerate rooted trees of height exactly l (l = 1, 2)
   together with a uniformly chosen deepest vertex delta, and tabulate the
   joint law of (children of delta^1, children of delta^2).

2. Kernel law: compose the level extension kernel twice starting from the
   single-node trap:
     - propose M with q(m) proportional to m * p_m * u_{l-1}^{m-1},
     - spine slot uniform among M, siblings iid GW conditioned H <= l-1,
     - accept with probability d(prefix) / (d(prefix) + sum of deepest
       counts of siblings of height exactly l-1).
   The acceptance is handled analytically by conditioning (no Monte Carlo).

If the two agree exactly the kernel is correct; the printed decimals are
frozen into tests/test_gw.cpp.
"""

from fractions import Fraction
from functools import lru_cache

K_MAX = 12  # children per node cap; tail mass folded into top atom


def geometric_pmf(p=Fraction(1, 3)):
    pmf = [(1 - p) * p**k for k in range(K_MAX + 1)]
    pmf[K_MAX] += p ** (K_MAX + 1)  # fold tail so the law sums to 1 exactly
    assert sum(pmf) == 1
    return pmf


PMF = geometric_pmf()
MU = sum(k * w for k, w in enumerate(PMF))

# height CDF u_n = P(H <= n): u_{-1} = 0, u_n = f(u_{n-1})
def f(s):
    acc = Fraction(0)
    for k in reversed(range(K_MAX + 1)):
        acc = acc * s + PMF[k]
    return acc


U = [f(Fraction(0))]
for _ in range(4):
    U.append(f(U[-1]))


def u(n):
    return Fraction(0) if n < 0 else U[n]


# ---------------------------------------------------------------------------
# Target law by direct enumeration.
# ---------------------------------------------------------------------------

# P(M = m | H = 1): root with m children, all leaves.
def target_level1():
    weights = {m: PMF[m] * u(0) ** m for m in range(1, K_MAX + 1)}
    total = sum(weights.values())
    assert total == u(1) - u(0)
    return {m: w / total for m, w in weights.items()}


# Per-child generating quantities for height-2 enumeration.  A child of the
# root is a tree of height <= 1; if its height is exactly 1 with j leaf
# grandchildren it carries weight PMF[j] * u(0)**j and deepest count j.
CHILD_H0 = PMF[0]  # single node
CHILD_H1 = {j: PMF[j] * u(0) ** j for j in range(1, K_MAX + 1)}
assert CHILD_H0 + sum(CHILD_H1.values()) == u(1)


@lru_cache(maxsize=None)
def profile_sum(children_left, picked_done):
    """Sum over profiles of `children_left` iid children of the weight
    times the delta-selection factor, tracking whether the spine child has
    been chosen.  Returns a dict keyed by (spine_child_j or None,
    total_deepest) -> weight, where weights still need division by the
    total deepest count at the end.  To keep this finite we instead compute
    the two needed marginals directly below."""
    raise NotImplementedError


def target_level2():
    """Joint law of (a, b) = (children of delta^1, children of delta^2)
    for T ~ GW | H = 2 with delta uniform over depth-2 vertices.

    delta^2 = root with b children; delta^1 = the child containing delta.
    P(a, b) prop. to p_b * E[ #children with j=a * a / D ; profile feasible ]
    where D = sum of grandchild counts.  Enumerate profiles by dynamic
    programming over (number of children processed, D so far) split by
    whether the spine child (with a grandchildren) is among those counted.
    """
    # dp over children: state = D (total deepest so far), value = weight.
    # We need, for each b and a:
    #   S(b, a) = sum over profiles (m_1..m_b) of prod child_weight(m_i)
    #             * (#{i: m_i = a}) * a / sum_j m_j
    # Use exchangeability: #{i: m_i=a} sums -> b * [m_1 = a] so
    #   S(b, a) = b * child_weight(a) * a *
    #             E_{m_2..m_b}[ 1 / (a + sum_{i>=2} m_i) ]
    # where the remaining children are unconstrained (height <= 1) since
    # the spine child already has a >= 1 grandchildren (so H = 2 holds).
    child_weight = {0: CHILD_H0}
    child_weight.update(CHILD_H1)

    # distribution of sum of (b-1) iid child deepest counts
    def conv(dist, steps):
        for _ in range(steps):
            nxt = {}
            for d0, w0 in dist.items():
                for j, wj in child_weight.items():
                    nxt[d0 + j] = nxt.get(d0 + j, Fraction(0)) + w0 * wj
            dist = nxt
        return dist

    joint = {}
    for b in range(1, 9):
        rest = conv({0: Fraction(1)}, b - 1)
        for a in range(1, K_MAX + 1):
            s = sum(w / (a + d) for d, w in rest.items())
            joint[(a, b)] = PMF[b] * b * CHILD_H1[a] * a * s
    total = sum(joint.values())
    return {k: w / total for k, w in joint.items()}, total


# ---------------------------------------------------------------------------
# Kernel law, acceptance handled analytically.
# ---------------------------------------------------------------------------

def kernel_level1():
    """Extend single-node trap (d = 1) to level 1.  Siblings are all
    single nodes (height <= 0), each deepest, so D = M and acceptance is
    1/M.  Output law of M after accept/reject renormalisation."""
    out = {}
    for m in range(1, K_MAX + 1):
        propose = m * PMF[m] * u(0) ** (m - 1)
        out[m] = propose * Fraction(1, m)
    total = sum(out.values())
    return {m: w / total for m, w in out.items()}


def kernel_level2():
    """Extend a level-1 prefix with deepest count d1 = M1 to level 2.
    Siblings iid GW | H <= 1; a sibling of height 1 with j grandchildren
    has deepest count j (depth 1 = level-1 max), a single-node sibling has
    deepest count 0 at that depth.  Acceptance d1 / (d1 + sum j_i).
    Returns the joint law of (M1, M2) after renormalisation."""
    lvl1 = kernel_level1()
    sib = {0: CHILD_H0 / u(1)}
    for j, w in CHILD_H1.items():
        sib[j] = w / u(1)

    def conv(steps):
        dist = {0: Fraction(1)}
        for _ in range(steps):
            nxt = {}
            for d0, w0 in dist.items():
                for j, wj in sib.items():
                    nxt[d0 + j] = nxt.get(d0 + j, Fraction(0)) + w0 * wj
            dist = nxt
        return dist

    out = {}
    for m1, w1 in lvl1.items():
        if w1 == 0:
            continue
        for m2 in range(1, 9):
            propose = m2 * PMF[m2] * u(1) ** (m2 - 1)
            rest = conv(m2 - 1)
            acc = sum(w / (m1 + d) for d, w in rest.items()) * m1
            out[(m1, m2)] = w1 * propose * acc
    total = sum(out.values())
    return {k: w / total for k, w in out.items()}


def main():
    print(f"mu = {float(MU):.12f}")
    for n in range(5):
        print(f"u_{n} = {float(U[n]):.15f}")

    t1 = target_level1()
    k1 = kernel_level1()
    print("\nlevel 1: P(M = m | H = 1)   target vs kernel")
    for m in range(1, 6):
        match = "OK" if t1[m] == k1[m] else "MISMATCH"
        print(f"  m={m}: {float(t1[m]):.15f}  {float(k1[m]):.15f}  {match}")
    assert all(t1[m] == k1[m] for m in t1), "level-1 kernel mismatch"
    p_ge2 = 1 - t1[1]
    print(f"  P(M >= 2 | H = 1) = {float(p_ge2):.15f}")

    t2, mass2 = target_level2()
    k2 = kernel_level2()
    print("\nlevel 2 joint (a = children of delta^1, b = children of delta^2)")
    mism = 0
    for key in sorted(set(t2) & set(k2)):
        if t2[key] != k2[key]:
            mism += 1
    # marginal of b must equal the conditioned-tree root offspring law
    marg_b = {}
    for (a, b), w in t2.items():
        marg_b[b] = marg_b.get(b, Fraction(0)) + w
    print(f"  joint mismatches on common support: {mism}")
    print("  P(root children = b | H = 2): target-enum vs pgf formula")
    for b in range(1, 6):
        pgf_val = PMF[b] * (u(1) ** b - u(0) ** b) / (u(2) - u(1))
        print(f"  b={b}: {float(marg_b[b]):.15f}  {float(pgf_val):.15f}  "
              f"{'OK' if abs(marg_b[b] - pgf_val) < Fraction(1, 10**25) else 'DIFF ' + str(marg_b[b] - pgf_val)}")
    marg_a = {}
    for (a, b), w in k2.items():
        marg_a[a] = marg_a.get(a, Fraction(0)) + w
    print("  kernel marginal of a (children of delta^1 inside level-2 prefix):")
    for a in range(1, 6):
        print(f"  a={a}: {float(marg_a[a]):.15f}")


if __name__ == "__main__":
    main()
