"""Independent reference implementations used as test oracles.

These follow the definitions literally (loop over every candidate good,
enumerate every partition) and share no code with the package beyond the
data classes.
"""

from __future__ import annotations

import bisect
import itertools
from fractions import Fraction

ZERO = Fraction(0)


def cake_value(inst, i, intervals) -> Fraction:
    """Integrate agent i's density over a list of (l, r) pairs by elementary pieces."""
    bps = list(inst.breakpoints)
    total = ZERO
    for l, r in intervals:
        cuts = sorted({l, r} | {b for b in bps if l < b < r})
        for a, b in zip(cuts, cuts[1:]):
            k = bisect.bisect_right(bps, a) - 1
            total += inst.densities[i][k] * (b - a)
    return total


def value(inst, i, bundle) -> Fraction:
    goods = sum((inst.goods[i][g] for g in bundle.goods), ZERO)
    return goods + (cake_value(inst, i, bundle.piece.intervals) if inst.has_cake else ZERO)


def total(inst, i) -> Fraction:
    return sum(inst.goods[i], ZERO) + (cake_value(inst, i, [(ZERO, Fraction(1))]) if inst.has_cake else ZERO)


def alpha(inst, i) -> Fraction:
    t = total(inst, i)
    return sum(inst.goods[i], ZERO) / t


def ef_relaxed(inst, alloc, factor) -> bool:
    """For all i != j: u_i(A_i) >= u_i(A_j) - factor_i * u_i(o) for some o in M_j (or o absent)."""
    n = inst.n
    for i in range(n):
        mine = value(inst, i, alloc[i])
        f = factor(i)
        for j in range(n):
            if i == j:
                continue
            theirs = value(inst, i, alloc[j])
            options = [theirs] + [theirs - f * inst.goods[i][o] for o in alloc[j].goods]
            if not any(mine >= x for x in options):
                return False
    return True


def prop_relaxed(inst, alloc, factor) -> bool:
    n = inst.n
    for i in range(n):
        mine = value(inst, i, alloc[i])
        outside = [o for o in range(inst.m) if o not in alloc[i].goods]
        options = [mine] + [mine + factor(i) * inst.goods[i][o] for o in outside]
        if not any(x >= total(inst, i) / n for x in options):
            return False
    return True


def efalpha(inst, alloc, c=1) -> bool:
    return ef_relaxed(inst, alloc, lambda i: c * alpha(inst, i))


def propalpha(inst, alloc, c=1) -> bool:
    return prop_relaxed(inst, alloc, lambda i: c * alpha(inst, i))


def efm(inst, alloc) -> bool:
    for i in range(inst.n):
        mine = value(inst, i, alloc[i])
        for j in range(inst.n):
            if i == j:
                continue
            theirs = value(inst, i, alloc[j])
            if alloc[j].piece.is_empty() and alloc[j].goods:
                if not any(mine >= theirs - inst.goods[i][o] for o in alloc[j].goods):
                    return False
            elif mine < theirs:
                return False
    return True


def water_level(bases, amount) -> Fraction:
    """max over cake splits of min(base_k + c_k) = min over k of (amount + k smallest bases) / k."""
    s = sorted(bases)
    return min((amount + sum(s[:k], ZERO)) / k for k in range(1, len(s) + 1))


def mms(inst, i, n=None) -> Fraction:
    n = n or inst.n
    cake = cake_value(inst, i, [(ZERO, Fraction(1))]) if inst.has_cake else ZERO
    best = None
    for owners in itertools.product(range(n), repeat=inst.m):
        bases = [ZERO] * n
        for g, k in enumerate(owners):
            bases[k] += inst.goods[i][g]
        v = water_level(bases, cake)
        best = v if best is None else max(best, v)
    return best


def nash_grid_two_agents(v, b, steps=1000, refine=1000, width=None):
    """Best Nash product for 2 agents and up to 2 segments on a grid of agent-0 shares.

    ``v[i][s]`` is agent i's value for segment s. A coarse grid is followed by
    a fine grid around the best coarse point (resolution 1/(steps*refine)).
    Returns (product, utilities).
    """
    import numpy as np

    S = len(v[0])
    b = [float(x) for x in b]
    v = [[float(x) for x in row] for row in v]

    def scan(axes):
        grids = np.meshgrid(*axes, indexing="ij")
        u0 = b[0] + sum(g * v[0][s] for s, g in enumerate(grids))
        u1 = b[1] + sum((1 - g) * v[1][s] for s, g in enumerate(grids))
        prod = u0 * u1
        k = np.unravel_index(np.argmax(prod), prod.shape)
        return [ax[j] for ax, j in zip(axes, k)], float(prod[k]), (float(u0[k]), float(u1[k]))

    coarse = [np.linspace(0, 1, steps + 1)] * S
    point, _, _ = scan(coarse)
    h = 1.0 / steps
    fine = [np.clip(np.linspace(p - h, p + h, 2 * refine + 1), 0, 1) for p in point]
    _, prod, u = scan(fine)
    return prod, u


def random_allocation(rng, inst, denom=12):
    """Random complete allocation: uniform goods owners, cake cut at grid points."""
    from mixfair.model import make_allocation

    n = inst.n
    goods = [[] for _ in range(n)]
    for g in range(inst.m):
        goods[rng.randrange(n)].append(g)
    pieces = [[] for _ in range(n)]
    if inst.has_cake:
        cuts = sorted(Fraction(rng.randint(0, denom), denom) for _ in range(n - 1))
        bounds = [ZERO] + cuts + [Fraction(1)]
        order = list(range(n))
        rng.shuffle(order)
        for a, l, r in zip(order, bounds, bounds[1:]):
            if l < r:
                pieces[a].append((l, r))
    return make_allocation(list(zip(goods, pieces)))


def efalpha_fpo_exists(inst) -> bool:
    """Two agents: does some fractionally Pareto optimal allocation satisfy EF-alpha?

    fPO allocations are those consistent with a ratio threshold r: items with
    v0/v1 > r go to agent 0, below r to agent 1, at r split freely. For every
    goods assignment consistent with some r, each relevant r (segment ratios
    in range, plus range endpoints) gives u0 = p + lam, u1 = q + (T - lam)/r
    with lam in [0, T]; EF-alpha asks 2 u_i >= total_i - alpha_i w_i.
    """
    INF = None

    def ratio(a, b):
        return INF if b == 0 else a / b

    def gt(x, y):  # x > y with None as +infinity
        if x is INF:
            return y is not INF
        return y is not INF and x > y

    m, segs = inst.m, [(inst.segment_value(0, k), inst.segment_value(1, k)) for k in range(inst.segments)]
    tot = [total(inst, 0), total(inst, 1)]
    al = [alpha(inst, 0), alpha(inst, 1)]
    for owners in itertools.product((0, 1), repeat=m):
        g0 = [g for g in range(m) if owners[g] == 0]
        g1 = [g for g in range(m) if owners[g] == 1]
        live0 = [ratio(inst.goods[0][g], inst.goods[1][g]) for g in g0 if inst.goods[0][g] or inst.goods[1][g]]
        live1 = [ratio(inst.goods[0][g], inst.goods[1][g]) for g in g1 if inst.goods[0][g] or inst.goods[1][g]]
        # threshold range [lo, hi]: lo = max ratio held by agent 1, hi = min ratio held by agent 0
        lo = ZERO
        for x in live1:
            if x is INF:
                lo = INF
                break
            lo = max(lo, x)
        hi = INF
        for x in live0:
            if gt(hi, x):
                hi = x
        if gt(lo, hi):
            continue
        if lo is INF or (hi is not INF and hi == 0):
            continue  # a good valued only by one agent sits with the other
        need = [(tot[0] - al[0] * max((inst.goods[0][g] for g in g1), default=ZERO)) / 2,
                (tot[1] - al[1] * max((inst.goods[1][g] for g in g0), default=ZERO)) / 2]
        base = [sum((inst.goods[0][g] for g in g0), ZERO), sum((inst.goods[1][g] for g in g1), ZERO)]
        rs = {lo} | ({hi} if hi is not INF else set())
        rs |= {ratio(a, b) for a, b in segs if (a or b) and ratio(a, b) is not INF and lo <= ratio(a, b)
               and (hi is INF or ratio(a, b) <= hi)}
        if not segs:
            rs = {lo}
        for r in rs:
            p, q, T = base[0], base[1], ZERO
            for a, b in segs:
                x = ratio(a, b)
                if a == 0 and b == 0:
                    continue
                if x is INF or x > r:
                    p += a
                elif x < r or r == 0:
                    q += b  # at r = 0 the tied segments are worthless to agent 0
                else:
                    T += a
            # u0 = p + lam, u1 = q + (T - lam) / r for lam in [0, T]
            lam_lo = max(ZERO, need[0] - p)
            if r == 0:
                lam_hi = ZERO if q >= need[1] else Fraction(-1)
            else:
                lam_hi = min(T, T - r * (need[1] - q))
            if lam_lo <= lam_hi:
                return True
    return False
