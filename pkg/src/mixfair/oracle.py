"""Counterexample templates, falsifiers and allocation searches.

Templates rebuild the impossibility and tightness instances exactly.
``falsify`` looks for the best allocation under a criterion; it certifies
non-existence exactly where the structure allows it (proportional-type
criteria and maximin shares with homogeneous cake, envy-type criteria for
identical agents with a single good) and otherwise reports a grid bound.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .fairness import (
    EF_ALPHA,
    EFM,
    ENVY_KINDS,
    PROP1,
    PROP_ALPHA,
    PROP_KINDS,
    PROPMM,
    Criterion,
    FairnessReport,
    check,
    compute_mms,
    effa,
    mms,
    propfa,
    relax_factor,
)
from .model import (
    ONE,
    ZERO,
    Allocation,
    Bundle,
    Instance,
    ModelError,
    PieceSet,
    format_rational,
    make_instance,
)

__all__ = [
    "TEMPLATES",
    "FalsifierResult",
    "RelationReport",
    "Template",
    "build_template",
    "falsify",
    "find_efm_allocations",
    "find_mms_allocation",
    "gen_instance",
    "random_instance",
    "verify_relation",
]

F = Fraction


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Template:
    """A generated instance, the parameters actually used, and its named allocation."""

    name: str
    params: dict
    instance: Instance
    allocation: Optional[Allocation] = None


def _uniform(n: int, goods_row, cake) -> Instance:
    """n identical agents with a uniform cake worth ``cake``."""
    goods = [list(goods_row) for _ in range(n)]
    if cake == 0:
        return make_instance(goods)
    return make_instance(goods, [ZERO, ONE], [[F(cake)] for _ in range(n)])


def _alloc(n: int, goods: dict[int, list[int]], pieces: dict[int, list[tuple]]) -> Allocation:
    return Allocation(tuple(
        Bundle(frozenset(goods.get(i, ())), PieceSet(tuple(pieces.get(i, ())))) for i in range(n)))


def _even_pieces(agents: list[int], start=ZERO, end=ONE) -> dict[int, list[tuple]]:
    width = (end - start) / len(agents)
    return {a: [(start + k * width, start + (k + 1) * width)] for k, a in enumerate(agents)}


def _round_robin(goods: list[int], agents: list[int]) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {a: [] for a in agents}
    for k, g in enumerate(goods):
        out[agents[k % len(agents)]].append(g)
    return out


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ModelError(msg)


def _t3(n=3):
    _need(n >= 3, "t3 needs n >= 3")
    return {"n": n}, _uniform(n, [F(2, n)], F(n - 2, n)), None


def _t6(n=3, eps=F(2, 5)):
    eps = F(eps)
    _need(n >= 2, "t6 needs n >= 2")
    _need(0 < eps <= F(2, 5), "t6 needs 0 < eps <= 2/5")
    x = eps / (n - 1)
    return {"n": n, "eps": eps, "x": x}, _uniform(n, [(1 - x) / (n - 1)] * (n - 1), x), None


def _t7(x, second: bool):
    x = F(x)
    _need(0 < x < 1 and x.numerator == 1, "t7 needs x = 1/k")
    block = int((1 + x) / x)
    g1 = x - x**3 if second else x
    goods = [[g1] * (2 * block), [x] * (2 * block), [x] * (2 * block)]
    inst = make_instance(goods, [ZERO, ONE], [[ONE], [ZERO], [ZERO]])
    alloc = _alloc(3, {1: list(range(block)), 2: list(range(block, 2 * block))}, {0: [(ZERO, ONE)]})
    return {"x": x, "block": block}, inst, alloc


def _t9(n=3, eps=F(3, 10)):
    eps = F(eps)
    _need(n >= 2 and eps > 0, "t9 needs n >= 2 and eps > 0")
    if (n / eps).denominator != 1:
        eps = F(1, math.ceil(1 / eps))
    x = eps / n
    count = int(1 / x)
    inst = _uniform(n, [x] * count, (n - 1) * (1 - x))
    alloc = _alloc(n, {0: list(range(count))}, _even_pieces(list(range(1, n))))
    return {"n": n, "eps": eps, "x": x}, inst, alloc


def _t11(n=3, eps=F(1, 6)):
    eps = F(eps)
    _need(n >= 2 and eps > 0, "t11 needs n >= 2 and eps > 0")
    e = min(eps, F(1, n - 1))
    k = math.ceil(1 / ((n - 1) * e))
    eps = F(1, (n - 1) * k)
    x = F(1, k)
    inst = _uniform(n, [x] * ((n - 1) * k), 1 - x)
    alloc = _alloc(n, _round_robin(list(range((n - 1) * k)), list(range(1, n))), {0: [(ZERO, ONE)]})
    return {"n": n, "eps": eps, "x": x}, inst, alloc


def _t13a(n=3, beta=F(1, 2)):
    beta = F(beta)
    _need(n >= 2 and 0 < beta < 1, "t13a needs n >= 2 and 0 < beta < 1")
    inst = _uniform(n, [], ONE)
    pieces = {0: [(ZERO, beta / n)]}
    pieces.update(_even_pieces(list(range(1, n)), beta / n, ONE))
    return {"n": n, "beta": beta}, inst, _alloc(n, {}, pieces)


def _t13b(n=3, x=F(1, 10)):
    x = F(x)
    _need(n >= 2 and x.numerator == 1 and x.denominator >= 3, "t13b needs x = 1/k with k >= 3")
    k = x.denominator
    count = n * k
    inst = _uniform(n, [x] * count, ZERO)
    goods = {0: list(range(k - 2))}
    goods.update(_round_robin(list(range(k - 2, count)), list(range(1, n))))
    return {"n": n, "x": x, "beta": 1 - 2 * x}, inst, _alloc(n, goods, {})


def _intro():
    inst = _uniform(3, [F(1, 4), F(1, 4)], F(1, 2))
    alloc = _alloc(3, {2: [0, 1]}, {0: [(ZERO, F(1, 2))], 1: [(F(1, 2), ONE)]})
    return {}, inst, alloc


def _pm1():
    inst = _uniform(2, [F(1, 4)] * 3, F(1, 4))
    return {}, inst, _alloc(2, {1: [0, 1, 2]}, {0: [(ZERO, ONE)]})


def _pm2():
    inst = _uniform(2, [F(2, 5), F(2, 5)], F(1, 5))
    return {}, inst, _alloc(2, {0: [0], 1: [1]}, {1: [(ZERO, ONE)]})


TEMPLATES = {
    "t3": _t3,
    "t6": _t6,
    "t7a": lambda x=F(1, 2): _t7(x, False),
    "t7b": lambda x=F(1, 10): _t7(x, True),
    "t9": _t9,
    "t11": _t11,
    "t13a": _t13a,
    "t13b": _t13b,
    "intro": _intro,
    "pm1": _pm1,
    "pm2": _pm2,
}


def build_template(name: str, **params) -> Template:
    if name not in TEMPLATES:
        raise ModelError(f"unknown template {name!r}; choose from {', '.join(TEMPLATES)}")
    try:
        used, inst, alloc = TEMPLATES[name](**params)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {name}: {exc}") from None
    return Template(name, used, inst, alloc)


def gen_instance(name: str, **params) -> Instance:
    return build_template(name, **params).instance


# ---------------------------------------------------------------------------
# Relations between notions on named allocations
# ---------------------------------------------------------------------------


@dataclass
class RelationReport:
    template: Template
    positive: list[FairnessReport]
    negative: list[FairnessReport]

    @property
    def holds(self) -> bool:
        return all(r.satisfied for r in self.positive) and not any(r.satisfied for r in self.negative)

    def to_json(self) -> dict:
        return {
            "template": self.template.name,
            "params": {k: format_rational(F(v)) for k, v in self.template.params.items()},
            "allocation": self.template.allocation.to_json(),
            "holds": self.holds,
            "positive": [r.to_json() for r in self.positive],
            "negative": [r.to_json() for r in self.negative],
        }


def _relations(t: Template) -> tuple[list[Criterion], list[Criterion]]:
    p = t.params
    n = p.get("n")
    match t.name:
        case "intro":
            return [EFM], [EF_ALPHA]
        case "t9":
            return [EFM], [effa(n - p["eps"])]
        case "t11":
            return [EFM], [propfa(1 - p["eps"])]
        case "t13a":
            return [mms(p["beta"])], [PROP_ALPHA]
        case "t13b":
            return [mms(p["beta"])], [PROP1, PROP_ALPHA]
        case "pm1":
            return [PROPMM], [PROP_ALPHA]
        case "pm2":
            return [PROP_ALPHA], [PROPMM]
        case "t7a" | "t7b":
            return [PROP_ALPHA], [propfa(p.get("c", F(9, 10)))]
    raise ModelError(f"template {t.name} has no named allocation; use falsify")


def verify_relation(name: str, **params) -> RelationReport:
    """Check the template's allocation against the notions it separates.

    ``positive`` reports should be satisfied and ``negative`` ones violated.
    For t7a/t7b the optional ``c`` picks the coefficient that should fail.
    """
    c = params.pop("c", None)
    t = build_template(name, **params)
    if c is not None:
        t = Template(t.name, {**t.params, "c": F(c)}, t.instance, t.allocation)
    pos, neg = _relations(t)
    return RelationReport(t, [check(t.instance, t.allocation, k) for k in pos],
                          [check(t.instance, t.allocation, k) for k in neg])


# ---------------------------------------------------------------------------
# Falsifier
# ---------------------------------------------------------------------------


@dataclass
class FalsifierResult:
    criterion: Criterion
    family: str
    allocation: Optional[Allocation]
    slack: Fraction
    exact: bool
    searched: int = 0

    @property
    def verdict(self) -> str:
        return "satisfying-allocation-found" if self.slack >= 0 else "no-satisfying-allocation-in-family"

    @property
    def found(self) -> bool:
        return self.slack >= 0

    def to_json(self) -> dict:
        return {
            "criterion": self.criterion.token,
            "family": self.family,
            "exact": self.exact,
            "verdict": self.verdict,
            "best_slack": format_rational(self.slack),
            "searched": self.searched,
            "allocation": self.allocation.to_json() if self.allocation else None,
        }


MAX_FALSIFY_AGENTS, MAX_FALSIFY_GOODS, MAX_GRID = 4, 6, 10_000
MAX_GRID_ALLOCATIONS = 2_000_000


def _rates(inst: Instance) -> list[Fraction]:
    """Value per unit length of each agent's (homogeneous) cake."""
    if not inst.has_cake:
        return [ZERO] * inst.n
    if not inst.is_homogeneous():
        raise ModelError("falsify needs a homogeneous cake for every agent; "
                         "heterogeneous cakes only admit per-segment grid bounds")
    return [inst.cake_value(i) for i in range(inst.n)]


def _length_alloc(inst: Instance, owners, lengths) -> Allocation:
    """Goods by owner; cake cut into consecutive pieces of the given lengths."""
    pieces, cur = [], ZERO
    for ell in lengths:
        pieces.append(PieceSet(((cur, cur + ell),)) if inst.has_cake and ell > 0 else PieceSet(()))
        cur += ell
    goods = [frozenset(g for g, o in enumerate(owners) if o == i) for i in range(inst.n)]
    return Allocation(tuple(Bundle(goods[i], pieces[i]) for i in range(inst.n)))


def _best_lengths(d: list[Fraction], r: list[Fraction]) -> tuple[Fraction, list[Fraction]]:
    """Maximize t with d_i + r_i * l_i >= t for all i, sum(l) = 1, l >= 0.

    Agents with r_i = 0 cap t at d_i. The others share a water level: the
    largest t with sum over {d_i < t} of (t - d_i)/r_i <= 1, found exactly
    by walking the sorted d_i.
    """
    live = sorted((d[i], r[i], i) for i in range(len(d)) if r[i] > 0)
    cap = min((d[i] for i in range(len(d)) if r[i] == 0), default=None)
    n = len(d)
    if not live:
        lengths = [ZERO] * n
        if n:
            lengths[0] = ONE
        return cap, lengths
    # sum_{k<=j} (t - d_k) / r_k = 1  =>  t = (1 + sum d_k/r_k) / sum 1/r_k
    inv = ZERO
    acc = ZERO
    t = None
    for j, (dj, rj, _) in enumerate(live):
        inv += 1 / rj
        acc += dj / rj
        cand = (1 + acc) / inv
        nxt = live[j + 1][0] if j + 1 < len(live) else None
        if nxt is None or cand <= nxt:
            t = cand
            break
    if cap is not None and cap < t:
        t = cap
    lengths = [ZERO] * n
    for dk, rk, k in live:
        if dk < t:
            lengths[k] = (t - dk) / rk
    rest = 1 - sum(lengths)
    lengths[live[0][2]] += rest
    return t, lengths


def _separable_terms(inst: Instance, owners, criterion: Criterion, mms_values):
    """Per-agent slack offset d_i so that slack_i = d_i + r_i * length_i."""
    n = inst.n
    held = [frozenset(g for g, o in enumerate(owners) if o == i) for i in range(n)]
    out = []
    for i in range(n):
        base = sum((inst.goods[i][g] for g in held[i]), ZERO)
        if criterion.kind == "MMS":
            out.append(base - criterion.beta * mms_values[i])
            continue
        f = relax_factor(inst, i, criterion)
        outside = max((inst.goods[i][g] for g in range(inst.m) if g not in held[i]), default=ZERO)
        out.append(base + (f * outside if f else ZERO) - inst.total(i) / n)
    return out


def _falsify_separable(inst: Instance, criterion: Criterion) -> FalsifierResult:
    r = _rates(inst)
    mms_values = [compute_mms(inst, i).value for i in range(inst.n)] if criterion.kind == "MMS" else None
    best = None
    count = 0
    for owners in itertools.product(range(inst.n), repeat=inst.m):
        count += 1
        t, lengths = _best_lengths(_separable_terms(inst, owners, criterion, mms_values), r)
        if best is None or t > best[0]:
            best = (t, owners, lengths)
    t, owners, lengths = best
    alloc = _length_alloc(inst, owners, lengths)
    slack = check(inst, alloc, criterion, mms_values=mms_values).slack
    return FalsifierResult(criterion, "all goods assignments x all cake lengths (exact)", alloc, slack, True, count)


def _falsify_single_good(inst: Instance, criterion: Criterion) -> FalsifierResult:
    """Identical agents, one good: the holder's cake length is the only free
    parameter (other agents share the rest evenly), and every condition is
    linear in it, so the optimum sits at an endpoint or a crossing."""
    n = inst.n
    holder = n - 1

    def alloc_at(ell):
        rest = (1 - ell) / (n - 1)
        return _length_alloc(inst, [holder], [rest] * (n - 1) + [ell])

    def conds(ell):
        return [c.slack for c in check(inst, alloc_at(ell), criterion).conditions]

    s0, s1 = conds(ZERO), conds(ONE)
    lines = list(zip(s0, (b - a for a, b in zip(s0, s1))))
    cands = {ZERO, ONE}
    for (a1, b1), (a2, b2) in itertools.combinations(lines, 2):
        if b1 != b2:
            ell = (a2 - a1) / (b1 - b2)
            if 0 < ell < 1:
                cands.add(ell)
    best = max(sorted(cands), key=lambda ell: min((a + b * ell for a, b in lines), default=ZERO))
    alloc = alloc_at(best)
    slack = check(inst, alloc, criterion).slack
    return FalsifierResult(criterion, "single good, symmetric cake shares (exact)", alloc, slack, True, len(cands))


def _compositions(total: int, parts: int):
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, out = -1, []
        for b in bars + (total + parts - 1,):
            out.append(b - prev - 1)
            prev = b
        yield out


def _falsify_grid(inst: Instance, criterion: Criterion, K: int) -> FalsifierResult:
    n, m = inst.n, inst.m
    if n > MAX_FALSIFY_AGENTS or m > MAX_FALSIFY_GOODS or not 1 <= K <= MAX_GRID:
        raise ModelError(f"grid falsifier bounds: n <= {MAX_FALSIFY_AGENTS}, m <= {MAX_FALSIFY_GOODS}, 1 <= K <= {MAX_GRID}")
    per = math.comb(K + n - 1, n - 1) if inst.has_cake else 1
    if per * n**m > MAX_GRID_ALLOCATIONS:
        raise ModelError(f"grid would search {per * n ** m} allocations (limit {MAX_GRID_ALLOCATIONS})")
    _rates(inst)
    mms_values = [compute_mms(inst, i).value for i in range(n)] if criterion.kind == "MMS" else None
    best = None
    count = 0
    splits = list(_compositions(K, n)) if inst.has_cake else [[0] * n]
    for owners in itertools.product(range(n), repeat=m):
        for parts in splits:
            count += 1
            alloc = _length_alloc(inst, owners, [F(p, K) for p in parts])
            s = check(inst, alloc, criterion, validate=False, mms_values=mms_values).slack
            if best is None or s > best[0]:
                best = (s, alloc)
    return FalsifierResult(criterion, f"goods assignments x cake lengths in multiples of 1/{K} (bound only)",
                           best[1], best[0], False, count)


def falsify(inst: Instance, criterion: Criterion, K: int = 600, *, grid: bool = False) -> FalsifierResult:
    """Best achievable slack for ``criterion`` on ``inst``.

    A negative slack with ``exact=True`` certifies that no allocation
    satisfies the criterion. ``grid=True`` forces the grid search.
    """
    if inst.has_cake and not inst.is_homogeneous():
        raise ModelError("falsify needs a homogeneous cake for every agent; "
                         "heterogeneous cakes only admit per-segment grid bounds")
    kind = criterion.kind
    if not grid:
        if kind in PROP_KINDS or kind == "MMS":
            if inst.n ** inst.m > MAX_GRID_ALLOCATIONS:
                raise ModelError("too many goods assignments to enumerate")
            return _falsify_separable(inst, criterion)
        if kind in ENVY_KINDS and kind != "EFM" and inst.m == 1 and inst.n >= 2 and inst.is_identical():
            return _falsify_single_good(inst, criterion)
    return _falsify_grid(inst, criterion, K)


# ---------------------------------------------------------------------------
# Searches used by the implication checks
# ---------------------------------------------------------------------------


def find_efm_allocations(inst: Instance, K: int = 6, limit: Optional[int] = None) -> list[Allocation]:
    """EFM allocations among goods assignments x cake lengths in multiples of 1/K."""
    _rates(inst)
    found = []
    splits = list(_compositions(K, inst.n)) if inst.has_cake else [[0] * inst.n]
    for owners in itertools.product(range(inst.n), repeat=inst.m):
        for parts in splits:
            alloc = _length_alloc(inst, owners, [F(p, K) for p in parts])
            if check(inst, alloc, EFM, validate=False).satisfied:
                found.append(alloc)
                if limit and len(found) >= limit:
                    return found
    return found


def find_mms_allocation(inst: Instance, beta=ONE) -> Optional[Allocation]:
    """An allocation giving every agent beta * MMS_i, or None (exact, homogeneous cake)."""
    crit = mms(beta)
    res = _falsify_separable(inst, crit)
    return res.allocation if res.found else None


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def _rational(rng: random.Random, denom: int, zero_prob: float) -> Fraction:
    if rng.random() < zero_prob:
        return ZERO
    return F(rng.randint(1, denom), rng.randint(1, denom))


def random_instance(rng: random.Random, n: int, m: int, segments: int = 1, *, denom: int = 100,
                    zero_prob: float = 0.1, identical: bool = False, homogeneous: bool = False) -> Instance:
    """Random instance with rational utilities whose denominators are at most ``denom``.

    ``segments=0`` gives no cake. Every agent gets positive total value.
    """
    if m == 0 and segments == 0:
        raise ModelError("random_instance needs goods or cake")
    rows = 1 if identical else n
    if homogeneous and segments:
        segments = 1
    goods = [[_rational(rng, denom, zero_prob) for _ in range(m)] for _ in range(rows)]
    if segments:
        inner = sorted(rng.sample(range(1, denom), min(segments - 1, denom - 1)))
        bps = [ZERO] + [F(b, denom) for b in inner] + [ONE]
        dens = [[_rational(rng, denom, zero_prob) for _ in range(len(bps) - 1)] for _ in range(rows)]
    else:
        bps, dens = [], []
    for i in range(rows):
        if sum(goods[i]) == 0 and (not dens or sum(dens[i]) == 0):
            if dens:
                dens[i][0] = ONE
            else:
                goods[i][rng.randrange(m)] = ONE
    if identical:
        goods, dens = goods * n, dens * n
    return make_instance(goods, bps, dens) if segments else make_instance(goods)
