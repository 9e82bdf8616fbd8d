"""Exact fairness checkers, maximin shares and a two-agent fPO test."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .cake import piece_intersect
from .model import (
    ZERO,
    Allocation,
    Bundle,
    Instance,
    ModelError,
    PieceSet,
    bundle_value,
    format_rational,
    validate_allocation,
    value_matrix,
)
from .waterfill import water_fill, water_level

ENVY_KINDS = ("EF", "EF1", "EFfA", "EFM")
PROP_KINDS = ("PROP", "PROP1", "PROPfA")
KINDS = ENVY_KINDS + PROP_KINDS + ("MMS", "PROPmM")


@dataclass(frozen=True)
class Criterion:
    """A fairness notion.

    ``c`` scales the indivisibility ratio for EFfA/PROPfA (``f(a) = c * a``);
    ``beta`` is the MMS approximation factor. ``literal`` selects the
    own-bundle reading of PROPmM.
    """

    kind: str
    c: Fraction = Fraction(1)
    beta: Fraction = Fraction(1)
    literal: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown criterion {self.kind!r}")
        object.__setattr__(self, "c", Fraction(self.c))
        object.__setattr__(self, "beta", Fraction(self.beta))
        if self.c < 0:
            raise ModelError("criterion coefficient must be >= 0")
        if not 0 < self.beta <= 1:
            raise ModelError("MMS beta must lie in (0, 1]")

    @classmethod
    def parse(cls, token: str) -> "Criterion":
        """Parse CLI tokens such as ``efalpha``, ``propfa:2/3`` or ``mms:4/5``."""
        tok = token.strip().lower()
        name, _, arg = tok.partition(":")
        simple = {"ef": "EF", "prop": "PROP", "ef1": "EF1", "prop1": "PROP1", "efm": "EFM"}
        try:
            if name in simple and not arg:
                return cls(simple[name])
            if name == "efalpha" and not arg:
                return cls("EFfA", Fraction(1))
            if name == "propalpha" and not arg:
                return cls("PROPfA", Fraction(1))
            if name == "effa" and arg:
                return cls("EFfA", Fraction(arg))
            if name == "propfa" and arg:
                return cls("PROPfA", Fraction(arg))
            if name == "mms":
                return cls("MMS", beta=Fraction(arg) if arg else Fraction(1))
            if name == "propmm" and not arg:
                return cls("PROPmM")
            if name == "propmm-literal" and not arg:
                return cls("PROPmM", literal=True)
        except (ValueError, ZeroDivisionError):
            pass
        raise ModelError(f"unknown criterion token {token!r}")

    @property
    def token(self) -> str:
        if self.kind == "EFfA":
            return "efalpha" if self.c == 1 else f"effa:{format_rational(self.c)}"
        if self.kind == "PROPfA":
            return "propalpha" if self.c == 1 else f"propfa:{format_rational(self.c)}"
        if self.kind == "MMS":
            return "mms" if self.beta == 1 else f"mms:{format_rational(self.beta)}"
        if self.kind == "PROPmM":
            return "propmm-literal" if self.literal else "propmm"
        return self.kind.lower()


EF = Criterion("EF")
PROP = Criterion("PROP")
EF1 = Criterion("EF1")
PROP1 = Criterion("PROP1")
EFM = Criterion("EFM")
EF_ALPHA = Criterion("EFfA")
PROP_ALPHA = Criterion("PROPfA")
PROPMM = Criterion("PROPmM")


def effa(c) -> Criterion:
    return Criterion("EFfA", Fraction(c))


def propfa(c) -> Criterion:
    return Criterion("PROPfA", Fraction(c))


def mms(beta=1) -> Criterion:
    return Criterion("MMS", beta=Fraction(beta))


@dataclass(frozen=True)
class Condition:
    """One inequality ``lhs >= rhs`` for an agent (and compared agent).

    ``good`` is the good used to relax the inequality, or None when no good
    applies. For a failing condition the recorded good is the most favourable
    candidate, so every other candidate fails too.
    """

    agent: int
    other: Optional[int]
    good: Optional[int]
    lhs: Fraction
    rhs: Fraction

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs

    @property
    def slack(self) -> Fraction:
        return self.lhs - self.rhs

    def to_json(self) -> dict:
        return {
            "agent": self.agent,
            "other": self.other,
            "good": self.good,
            "lhs": format_rational(self.lhs),
            "rhs": format_rational(self.rhs),
            "holds": self.holds,
        }


@dataclass(frozen=True)
class FairnessReport:
    criterion: Criterion
    conditions: tuple[Condition, ...]
    mms_values: tuple[Fraction, ...] = ()

    @property
    def satisfied(self) -> bool:
        return all(c.holds for c in self.conditions)

    @property
    def verdict(self) -> str:
        return "satisfied" if self.satisfied else "violated"

    @property
    def violations(self) -> list[Condition]:
        return [c for c in self.conditions if not c.holds]

    @property
    def witnesses(self) -> list[Condition]:
        return [c for c in self.conditions if c.holds]

    @property
    def slack(self) -> Fraction:
        return min((c.slack for c in self.conditions), default=ZERO)

    def to_json(self) -> dict:
        data = {
            "criterion": self.criterion.token,
            "verdict": self.verdict,
            "slack": format_rational(self.slack),
            "violations": [c.to_json() for c in self.violations],
            "witnesses": [c.to_json() for c in self.witnesses],
        }
        if self.mms_values:
            data["mms"] = [format_rational(v) for v in self.mms_values]
        return data


# ---------------------------------------------------------------------------


def _alpha(inst: Instance, i: int) -> Fraction:
    t = inst.total(i)
    return inst.goods_value(i) / t if t > 0 else ZERO


def relax_factor(inst: Instance, i: int, criterion: Criterion) -> Fraction:
    """The fraction of a good an agent may add or remove: f(alpha_i)."""
    kind = criterion.kind
    if kind in ("EF", "PROP"):
        return ZERO
    if kind in ("EF1", "PROP1"):
        return Fraction(1)
    return criterion.c * _alpha(inst, i)


def _best_good(row, goods) -> Optional[int]:
    best = None
    for g in sorted(goods):
        if best is None or row[g] > row[best]:
            best = g
    return best


def _worst_good(row, goods) -> Optional[int]:
    worst = None
    for g in sorted(goods):
        if worst is None or row[g] < row[worst]:
            worst = g
    return worst


def check(inst: Instance, alloc: Allocation, criterion: Criterion, *, validate: bool = True,
          mms_values: Optional[list[Fraction]] = None) -> FairnessReport:
    """Evaluate ``criterion`` on ``alloc`` exactly.

    Thresholds use ``u_i(everything) / n`` so un-normalized instances work.
    """
    if validate:
        problems = validate_allocation(inst, alloc)
        if problems:
            raise ModelError("invalid allocation: " + "; ".join(p.detail for p in problems))
    n, kind = inst.n, criterion.kind
    V = value_matrix(inst, alloc)
    conds: list[Condition] = []
    all_goods = frozenset(range(inst.m))

    if kind in ENVY_KINDS:
        for i in range(n):
            row = inst.goods[i]
            f = relax_factor(inst, i, criterion) if kind != "EFM" else None
            for j in range(n):
                if i == j:
                    continue
                Mj = alloc[j].goods
                if kind == "EFM":
                    f = Fraction(1) if (alloc[j].piece.is_empty() and Mj) else ZERO
                o = _best_good(row, Mj) if f else None
                rhs = V[i][j] - (f * row[o] if o is not None else ZERO)
                conds.append(Condition(i, j, o, V[i][i], rhs))
    elif kind in PROP_KINDS:
        for i in range(n):
            row = inst.goods[i]
            f = relax_factor(inst, i, criterion)
            o = _best_good(row, all_goods - alloc[i].goods) if f else None
            lhs = V[i][i] + (f * row[o] if o is not None else ZERO)
            conds.append(Condition(i, None, o, lhs, inst.total(i) / n))
    elif kind == "MMS":
        if mms_values is None:
            mms_values = [compute_mms(inst, i).value for i in range(n)]
        for i in range(n):
            conds.append(Condition(i, None, None, V[i][i], criterion.beta * mms_values[i]))
    elif kind == "PROPmM":
        for i in range(n):
            row = inst.goods[i]
            best_term, best_j, best_g = ZERO, None, None
            for j in range(n):
                if j == i or not alloc[j].piece.is_empty():
                    continue
                pool = alloc[i].goods if criterion.literal else alloc[j].goods
                g = _worst_good(row, pool)
                term = row[g] if g is not None else ZERO
                if best_j is None or term > best_term:
                    best_term, best_j, best_g = term, j, g
            conds.append(Condition(i, best_j, best_g, V[i][i] + best_term, inst.total(i) / n))
    return FairnessReport(criterion, tuple(conds), tuple(mms_values or ()))


def slack(inst: Instance, alloc: Allocation, criterion: Criterion, **kw) -> Fraction:
    """min over conditions of lhs - rhs; non-negative iff the criterion holds."""
    return check(inst, alloc, criterion, **kw).slack


def reverify(inst: Instance, alloc: Allocation, report: FairnessReport) -> bool:
    """Independently re-evaluate every witness and violation in ``report``.

    Witnesses must hold with their stated good; violations must fail for
    every candidate good.
    """
    n, kind, crit = inst.n, report.criterion.kind, report.criterion
    for cond in report.conditions:
        i, j = cond.agent, cond.other
        own = alloc[i]
        u_own = bundle_value(inst, i, own)
        if kind in ENVY_KINDS:
            other = alloc[j]
            u_other = bundle_value(inst, i, other)
            if kind == "EFM":
                f = Fraction(1) if (other.piece.is_empty() and other.goods) else ZERO
            else:
                f = relax_factor(inst, i, crit)
            cands = sorted(other.goods) if f else []
            rhs_of = lambda o: u_other - (f * inst.goods[i][o] if o is not None else ZERO)
            if cond.holds:
                if u_own < rhs_of(cond.good) or cond.lhs != u_own or cond.rhs != rhs_of(cond.good):
                    return False
            elif any(u_own >= rhs_of(o) for o in cands + [None]):
                return False
        elif kind in PROP_KINDS:
            f = relax_factor(inst, i, crit)
            thr = inst.total(i) / n
            cands = sorted(set(range(inst.m)) - own.goods) if f else []
            lhs_of = lambda o: u_own + (f * inst.goods[i][o] if o is not None else ZERO)
            if cond.holds:
                if lhs_of(cond.good) < thr or cond.lhs != lhs_of(cond.good):
                    return False
            elif any(lhs_of(o) >= thr for o in cands + [None]):
                return False
        elif kind == "MMS":
            if (u_own >= cond.rhs) != cond.holds or cond.lhs != u_own:
                return False
        elif kind == "PROPmM":
            thr = inst.total(i) / n
            terms = [ZERO]
            for jj in range(n):
                if jj == i or not alloc[jj].piece.is_empty():
                    continue
                pool = own.goods if crit.literal else alloc[jj].goods
                terms.append(min((inst.goods[i][g] for g in pool), default=ZERO))
            if (u_own + max(terms) >= thr) != cond.holds:
                return False
    return True


# ---------------------------------------------------------------------------
# Maximin share
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MmsCertificate:
    agent: int
    value: Fraction
    partition: tuple[frozenset[int], ...]
    cake_shares: tuple[Fraction, ...]

    def bundle_values(self, inst: Instance) -> list[Fraction]:
        row = inst.goods[self.agent]
        return [sum((row[g] for g in part), ZERO) + s for part, s in zip(self.partition, self.cake_shares)]

    def to_json(self) -> dict:
        return {
            "agent": self.agent,
            "value": format_rational(self.value),
            "partition": [sorted(p) for p in self.partition],
            "cake_shares": [format_rational(s) for s in self.cake_shares],
        }


MMS_STATE_BUDGET = 2_000_000


def compute_mms(inst: Instance, i: int, n: Optional[int] = None, budget: int = MMS_STATE_BUDGET) -> MmsCertificate:
    """Exact maximin share of agent ``i`` by exhaustive partition search.

    Goods are placed largest first; states with the same multiset of bundle
    values are explored once, and branches whose water-filled optimistic
    bound cannot beat the incumbent are cut. The cake only matters through its
    total value, which is water-filled into the finished partition.
    """
    n = inst.n if n is None else n
    if n > 6:
        raise ModelError(f"MMS enumeration supports at most 6 bundles, got {n}")
    row = inst.goods[i]
    cake = inst.cake_value(i)
    order = sorted(range(inst.m), key=lambda g: (-row[g], g))
    suffix = [ZERO] * (len(order) + 1)
    for k in range(len(order) - 1, -1, -1):
        suffix[k] = suffix[k + 1] + row[order[k]]

    values = [ZERO] * n
    members: list[list[int]] = [[] for _ in range(n)]
    best = {"value": Fraction(-1), "partition": None, "shares": None}
    seen: set = set()

    def dfs(k: int) -> None:
        if k == len(order):
            shares = water_fill(values, cake)
            level = min(v + s for v, s in zip(values, shares))
            if level > best["value"]:
                best.update(value=level, partition=tuple(frozenset(p) for p in members), shares=tuple(shares))
            return
        if water_level(values, suffix[k] + cake) <= best["value"]:
            return
        key = (k, tuple(sorted(values)))
        if key in seen:
            return
        seen.add(key)
        if len(seen) > budget:
            raise ModelError(f"MMS search exceeded {budget} states (m={inst.m}, n={n})")
        g = order[k]
        tried = set()
        for b in sorted(range(n), key=lambda b: (values[b], b)):
            if values[b] in tried:
                continue
            tried.add(values[b])
            values[b] += row[g]
            members[b].append(g)
            dfs(k + 1)
            members[b].pop()
            values[b] -= row[g]

    dfs(0)
    return MmsCertificate(i, best["value"], best["partition"], best["shares"])


# ---------------------------------------------------------------------------
# Two-agent fractional Pareto optimality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FpoExchange:
    """Fractions of items moved between the two agents.

    Items are ``("good", j)`` or ``("segment", k)``; fractions are of the
    whole item. ``gain`` holds each agent's exact utility change.
    """

    to_agent0: tuple[tuple[tuple[str, int], Fraction], ...]
    to_agent1: tuple[tuple[tuple[str, int], Fraction], ...]
    gain: tuple[Fraction, Fraction]

    def recompute_gain(self, inst: Instance) -> tuple[Fraction, Fraction]:
        def val(a, item):
            kind, idx = item
            return inst.goods[a][idx] if kind == "good" else inst.segment_value(a, idx)

        g0 = sum((q * val(0, it) for it, q in self.to_agent0), ZERO) - sum((q * val(0, it) for it, q in self.to_agent1), ZERO)
        g1 = sum((q * val(1, it) for it, q in self.to_agent1), ZERO) - sum((q * val(1, it) for it, q in self.to_agent0), ZERO)
        return g0, g1

    def is_improvement(self, inst: Instance) -> bool:
        g = self.recompute_gain(inst)
        return g == self.gain and min(g) >= 0 and max(g) > 0

    def to_json(self) -> dict:
        enc = lambda moves: [{"item": list(it), "fraction": format_rational(q)} for it, q in moves]
        return {"to_agent0": enc(self.to_agent0), "to_agent1": enc(self.to_agent1),
                "gain": [format_rational(g) for g in self.gain]}


@dataclass(frozen=True)
class FpoResult:
    satisfied: bool
    exchange: Optional[FpoExchange] = None


def item_shares(inst: Instance, alloc: Allocation):
    """``[(item, v0, v1, share_of_agent0)]`` for goods then cake segments."""
    items = []
    for g in range(inst.m):
        items.append((("good", g), inst.goods[0][g], inst.goods[1][g],
                      Fraction(1) if g in alloc[0].goods else ZERO))
    for k in range(inst.segments):
        l, r = inst.segment(k)
        inside = piece_intersect(alloc[0].piece, PieceSet(((l, r),))).measure
        items.append((("segment", k), inst.segment_value(0, k), inst.segment_value(1, k), inside / (r - l)))
    return items


def check_fpo_two_agents(inst: Instance, alloc: Allocation) -> FpoResult:
    """Fractional Pareto optimality for two additive agents.

    Holds iff no item with a higher value ratio v0/v1 sits (partly) with
    agent 1 while a lower-ratio item sits (partly) with agent 0, and no
    item sits with an agent who values it at zero while the other values it.
    """
    if inst.n != 2:
        raise ModelError(f"check_fpo_two_agents needs n = 2, got {inst.n}")
    items = item_shares(inst, alloc)
    held0 = [(it, a, b, s) for it, a, b, s in items if s > 0]
    held1 = [(it, a, b, 1 - s) for it, a, b, s in items if s < 1]
    for it, a, b, s in held1:
        if a > 0 and b == 0:
            return FpoResult(False, FpoExchange(((it, s),), (), (s * a, ZERO)))
    for it, a, b, s in held0:
        if b > 0 and a == 0:
            return FpoResult(False, FpoExchange((), ((it, s),), (ZERO, s * b)))
    for ita, a1, a2, sa in held1:  # item agent 0 would like more
        for itb, b1, b2, sb in held0:
            if ita == itb or a1 * b2 <= b1 * a2:
                continue
            # trade sa' of ita to agent 0 for lam * sa' of itb to agent 1
            lo = a2 / b2
            if b1 > 0:
                lam = (lo + a1 / b1) / 2
            else:
                lam = lo + 1
            qa = sa if lam * sa <= sb else sb / lam
            qb = lam * qa
            gain = (qa * a1 - qb * b1, qb * b2 - qa * a2)
            return FpoResult(False, FpoExchange(((ita, qa),), ((itb, qb),), gain))
    return FpoResult(True)


# ---------------------------------------------------------------------------
# Two-agent Pareto optimality with whole goods
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoResult:
    """``dominating`` is ``(goods of agent 0, (u0, u1))`` of a better allocation."""

    satisfied: bool
    dominating: Optional[tuple[frozenset, tuple[Fraction, Fraction]]] = None


def _cake_plan(segs, need):
    """Cheapest way to hand the first agent ``need`` of cake value.

    ``segs`` is ``[(value to first, value to other)]``. Returns the fraction
    of each segment given to the first agent and the other agent's loss, or
    None when ``need`` is unreachable.
    """
    shares = [ZERO] * len(segs)
    if need <= 0:
        return shares, ZERO
    cost = ZERO
    for k, (a, b) in sorted(enumerate(segs), key=lambda ks: _cost(ks[1])):
        if a == 0:
            continue
        take = min(a, need)
        shares[k] = take / a
        cost += b * take / a
        need -= take
        if need == 0:
            return shares, cost
    return None


def _best_other(segs, base_other, need):
    """Max value the other agent keeps while the first gets ``need`` of cake."""
    plan = _cake_plan(segs, need)
    if plan is None:
        return None
    return base_other + sum((b for _, b in segs), ZERO) - plan[1]


def _cost(seg):
    # other's loss per unit of the first agent's gain; unusable segments last
    a, b = seg
    return (0, b / a) if a else (1, ZERO)


def check_po_two_agents(inst: Instance, alloc: Allocation) -> PoResult:
    """Pareto optimality for two agents when goods must stay whole.

    Enumerates the 2^m goods assignments; for each, the best cake division
    against a utility floor is a fractional knapsack, so the check is exact.
    """
    if inst.n != 2:
        raise ModelError(f"check_po_two_agents needs n = 2, got {inst.n}")
    if inst.m > 16:
        raise ModelError(f"check_po_two_agents enumerates 2^m assignments; m={inst.m} > 16")
    u0, u1 = bundle_value(inst, 0, alloc[0]), bundle_value(inst, 1, alloc[1])
    segs = [(inst.segment_value(0, k), inst.segment_value(1, k)) for k in range(inst.segments)]
    swapped = [(b, a) for a, b in segs]
    goods = range(inst.m)
    for mask in range(1 << inst.m):
        own0 = frozenset(g for g in goods if mask >> g & 1)
        b0 = sum((inst.goods[0][g] for g in own0), ZERO)
        b1 = sum((inst.goods[1][g] for g in goods if g not in own0), ZERO)
        best1 = _best_other(segs, b1, u0 - b0)
        if best1 is None or best1 < u1:
            continue
        if best1 > u1:
            return PoResult(False, (own0, (u0, best1)))
        best0 = _best_other(swapped, b0, u1 - b1)
        if best0 is not None and best0 > u0:
            return PoResult(False, (own0, (best0, u1)))
    return PoResult(True)


def _goods_split(inst: Instance, mask: int):
    own0 = frozenset(g for g in range(inst.m) if mask >> g & 1)
    b0 = sum((inst.goods[0][g] for g in own0), ZERO)
    b1 = sum((inst.goods[1][g] for g in range(inst.m) if g not in own0), ZERO)
    return own0, b0, b1


def pareto_improve_two_agents(inst: Instance, alloc: Allocation) -> Allocation:
    """A Pareto optimal allocation (goods whole) that weakly dominates ``alloc``.

    Lexicographic: first the largest u0 keeping u1 at its current level, then
    the largest u1 at that u0. Nothing can dominate the result, since it
    would need u0 above the first maximum or u1 above the second.
    """
    if inst.n != 2:
        raise ModelError(f"pareto_improve_two_agents needs n = 2, got {inst.n}")
    if inst.m > 16:
        raise ModelError(f"pareto_improve_two_agents enumerates 2^m assignments; m={inst.m} > 16")
    u1 = bundle_value(inst, 1, alloc[1])
    segs = [(inst.segment_value(0, k), inst.segment_value(1, k)) for k in range(inst.segments)]
    swapped = [(b, a) for a, b in segs]
    top0 = None
    for mask in range(1 << inst.m):
        _, b0, b1 = _goods_split(inst, mask)
        v = _best_other(swapped, b0, u1 - b1)
        if v is not None and (top0 is None or v > top0):
            top0 = v
    best = None
    for mask in range(1 << inst.m):
        own0, b0, b1 = _goods_split(inst, mask)
        plan = _cake_plan(segs, top0 - b0)
        if plan is None:
            continue
        v = b1 + sum((b for _, b in segs), ZERO) - plan[1]
        if best is None or v > best[0]:
            best = (v, own0, plan[0])
    _, own0, shares = best
    pieces0, pieces1 = [], []
    for k, q in enumerate(shares):
        l, r = inst.segment(k)
        cut = l + (r - l) * q
        if cut > l:
            pieces0.append((l, cut))
        if cut < r:
            pieces1.append((cut, r))
    return Allocation((Bundle(own0, PieceSet(tuple(pieces0))),
                       Bundle(frozenset(range(inst.m)) - own0, PieceSet(tuple(pieces1)))))
