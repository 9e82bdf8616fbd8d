"""Constructive allocation procedures.

* :func:`alg1_propalpha` - bag filling combined with a moving knife; always
  PROP-alpha.
* :func:`two_agent_efalpha` and :func:`two_agent_efalpha_po` - two-agent
  EF-alpha (and EF-alpha with fractional Pareto optimality).
* :func:`identical_greedy` - greedy EF1 plus water-filling for identical agents.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .cake import QueryLog, cut_query, cut_sequence, eval_query, interval
from .fairness import (
    EF_ALPHA,
    PROP_ALPHA,
    check,
    check_fpo_two_agents,
    check_po_two_agents,
    effa,
    pareto_improve_two_agents,
)
from .model import (
    EMPTY_PIECE,
    FULL_CAKE,
    ONE,
    ZERO,
    Allocation,
    Bundle,
    Instance,
    ModelError,
    PieceSet,
    bundle_value,
    format_rational,
    piece_value_of,
)
from .waterfill import water_fill, water_level

__all__ = [
    "AlgorithmError",
    "AlgTrace",
    "RoundRecord",
    "alg1_propalpha",
    "alg1_query_bound",
    "identical_greedy",
    "identical_greedy_coefficient",
    "two_agent_efalpha",
    "two_agent_efalpha_po",
    "water_fill",
    "water_level",
]


class AlgorithmError(RuntimeError):
    """An internal guarantee of an allocation procedure failed."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


def _alpha(inst: Instance, i: int) -> Fraction:
    t = inst.total(i)
    return inst.goods_value(i) / t if t > 0 else ZERO


# ---------------------------------------------------------------------------
# Bag filling with a moving knife
# ---------------------------------------------------------------------------


@dataclass
class RoundRecord:
    round: int
    bag: tuple[int, ...]
    trigger: Optional[int]
    case: int
    agent: int
    cake_start: Fraction
    cake_end: Fraction
    cuts: dict[int, Fraction]
    remaining_goods: tuple[int, ...]
    remaining_value: dict[int, Fraction]

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "bag": list(self.bag),
            "trigger": self.trigger,
            "case": self.case,
            "agent": self.agent,
            "piece": [format_rational(self.cake_start), format_rational(self.cake_end)],
            "cuts": {str(i): format_rational(x) for i, x in sorted(self.cuts.items())},
            "remaining_goods": list(self.remaining_goods),
            "remaining_value": {str(i): format_rational(v) for i, v in sorted(self.remaining_value.items())},
        }


@dataclass
class AlgTrace:
    rounds: list[RoundRecord] = field(default_factory=list)
    last_agent: Optional[int] = None
    queries: QueryLog = field(default_factory=QueryLog)

    def to_json(self) -> dict:
        return {
            "rounds": [r.to_json() for r in self.rounds],
            "last_agent": self.last_agent,
            "queries": {"eval": self.queries.count("eval"), "cut": self.queries.count("cut")},
        }

    def replay(self, inst: Instance) -> Allocation:
        """Rebuild the allocation from the recorded rounds."""
        bundles: list[Optional[Bundle]] = [None] * inst.n
        given: set[int] = set()
        cake_end = ZERO
        for r in self.rounds:
            goods = set(r.bag) | ({r.trigger} if r.case == 1 else set())
            piece = interval(r.cake_start, r.cake_end) if inst.has_cake else EMPTY_PIECE
            bundles[r.agent] = Bundle(frozenset(goods), piece)
            given |= goods
            cake_end = r.cake_end
        rest = frozenset(range(inst.m)) - given
        piece = interval(cake_end, ONE) if inst.has_cake else EMPTY_PIECE
        bundles[self.last_agent] = Bundle(rest, piece)
        return Allocation(tuple(bundles))


def alg1_query_bound(inst: Instance) -> tuple[int, int]:
    """(max evaluation queries, max cut queries) issued by alg1_propalpha."""
    per_run = inst.n * (inst.n - 1)
    return per_run, per_run


def alg1_propalpha(inst: Instance, *, verify: bool = True) -> tuple[Allocation, AlgTrace]:
    """Compute a PROP-alpha allocation in n - 1 rounds.

    Each round fills a bag with the remaining goods in index order, stopping
    before the good that would satisfy some agent. If the remaining cake
    cannot satisfy anyone on top of the bag, the bag plus that good goes to
    the lowest-index agent it satisfies. Otherwise every agent names the
    leftmost knife position that would satisfy her, and the smallest wins.
    The last agent takes everything left.

    Agent i is satisfied by value ``u_i(A)/n - alpha_i * w`` where ``w`` is
    her most valuable good outside the bag (0 if none).
    """
    n, m = inst.n, inst.m
    trace = AlgTrace()
    log = trace.queries
    thr = [inst.total(i) / n for i in range(n)]
    alpha = [_alpha(inst, i) for i in range(n)]
    order = [sorted(range(m), key=lambda g, r=inst.goods[i]: (-r[g], g)) for i in range(n)]

    def best_outside(i: int, held) -> Fraction:
        for g in order[i]:
            if g not in held:
                return inst.goods[i][g]
        return ZERO

    def target(i: int, held) -> Fraction:
        return thr[i] - alpha[i] * best_outside(i, held)

    agents = list(range(n))
    remaining = list(range(m))
    a = ZERO
    bundles: list[Optional[Bundle]] = [None] * n

    for rnd in range(1, n):
        rem_set = set(remaining)
        rem_value = {
            i: sum((inst.goods[i][g] for g in remaining), ZERO)
            + (piece_value_of(inst, i, interval(a, ONE)) if inst.has_cake else ZERO)
            for i in agents
        }
        bag: list[int] = []
        bag_set: set[int] = set()
        bag_val = {i: ZERO for i in agents}
        trigger = None
        for o in remaining:
            with_o = bag_set | {o}
            if len(with_o) == m or any(
                bag_val[j] + inst.goods[j][o] >= target(j, with_o) for j in agents
            ):
                trigger = o
                break
            bag.append(o)
            bag_set.add(o)
            for j in agents:
                bag_val[j] += inst.goods[j][o]

        cake_left = {i: eval_query(inst, i, a, ONE, log) if inst.has_cake else ZERO for i in agents}
        case1 = all(bag_val[i] + cake_left[i] < target(i, bag_set) for i in agents)
        cuts: dict[int, Fraction] = {}
        if case1:
            if trigger is None:
                raise AlgorithmError("no good left to complete a bag and the cake satisfies nobody", trace)
            with_o = bag_set | {trigger}
            slacks = {j: bag_val[j] + inst.goods[j][trigger] - target(j, with_o) for j in agents}
            happy = [j for j in agents if slacks[j] >= 0]
            winner = happy[0] if happy else max(agents, key=lambda j: (slacks[j], -j))
            goods = with_o
            start = end = a
        else:
            keys = {}
            for i in agents:
                need = target(i, bag_set) - bag_val[i]
                if bag_val[i] + cake_left[i] >= target(i, bag_set):
                    x = a if need <= 0 else cut_query(inst, i, a, need, log)
                    keys[i] = (x, 0, i)
                else:
                    x = ONE
                    keys[i] = (x, 1, i)
                cuts[i] = x
            winner = min(agents, key=lambda i: keys[i])
            goods = bag_set
            start, end = a, cuts[winner]
        piece = interval(start, end) if inst.has_cake else EMPTY_PIECE
        bundles[winner] = Bundle(frozenset(goods), piece)
        trace.rounds.append(RoundRecord(rnd, tuple(bag), trigger, 1 if case1 else 2, winner, start, end, cuts,
                                        tuple(remaining), rem_value))
        agents.remove(winner)
        remaining = [g for g in remaining if g not in goods]
        a = end

    last = agents[0]
    trace.last_agent = last
    bundles[last] = Bundle(frozenset(remaining), interval(a, ONE) if inst.has_cake else EMPTY_PIECE)
    alloc = Allocation(tuple(bundles))

    if verify:
        _check_remaining_value(inst, alloc, trace, thr, alpha)
        report = check(inst, alloc, PROP_ALPHA)
        if not report.satisfied:
            raise AlgorithmError(f"output is not PROP-alpha: {report.violations}", trace)
        evals, cuts_bound = alg1_query_bound(inst)
        if log.count("eval") > evals or log.count("cut") > cuts_bound:
            raise AlgorithmError("query budget exceeded", trace)
    return alloc, trace


def _check_remaining_value(inst, alloc, trace, thr, alpha) -> None:
    """Before round j the agent served in round j values what is left at
    least (n - j + 1) * (u_i(A)/n - alpha_i * u_i(g)), where g is her best
    good outside her final bundle or the round's trigger good."""
    n = inst.n
    served = [(r.round, r.agent, r.trigger, r.remaining_value[r.agent]) for r in trace.rounds]
    if trace.rounds:
        last = trace.last_agent
        left = alloc[last]
        served.append((n, last, None, bundle_value(inst, last, left)))
    for j, agent, trigger, rem in served:
        pool = set(range(inst.m)) - alloc[agent].goods
        if trigger is not None:
            pool.add(trigger)
        w = max((inst.goods[agent][g] for g in pool), default=ZERO)
        need = (n - j + 1) * (thr[agent] - alpha[agent] * w)
        if rem < need:
            raise AlgorithmError(
                f"round {j}: agent {agent} sees remaining value {rem} < {need}", trace
            )


# ---------------------------------------------------------------------------
# Two agents
# ---------------------------------------------------------------------------


def _require_two(inst: Instance) -> None:
    if inst.n != 2:
        raise ModelError(f"procedure needs exactly 2 agents, got {inst.n}")


def _choose(inst: Instance, first: Bundle, second: Bundle) -> Allocation:
    """Agent 1 takes the bundle she prefers (ties: ``first``); agent 0 the other."""
    if bundle_value(inst, 1, first) >= bundle_value(inst, 1, second):
        return Allocation((second, first))
    return Allocation((first, second))


def two_agent_efalpha(inst: Instance, *, verify: bool = True) -> Allocation:
    """Greedy EF1 split for agent 0, cake to balance, agent 1 chooses."""
    _require_two(inst)
    row = inst.goods[0]
    halves: list[list[int]] = [[], []]
    val = [ZERO, ZERO]
    for g in sorted(range(inst.m), key=lambda g: (-row[g], g)):
        b = 0 if val[0] <= val[1] else 1
        halves[b].append(g)
        val[b] += row[g]
    heavy, light = (0, 1) if val[0] >= val[1] else (1, 0)
    cake = inst.cake_value(0)
    if not inst.has_cake:
        pieces = (EMPTY_PIECE, EMPTY_PIECE)
    elif val[heavy] > val[light] + cake:
        pieces = (EMPTY_PIECE, FULL_CAKE)
    else:
        y = cut_query(inst, 0, ZERO, (val[light] + cake - val[heavy]) / 2)
        pieces = (interval(ZERO, y), interval(y, ONE))
    first = Bundle(frozenset(halves[heavy]), pieces[0])
    second = Bundle(frozenset(halves[light]), pieces[1])
    alloc = _choose(inst, first, second)
    if verify:
        report = check(inst, alloc, EF_ALPHA)
        if not report.satisfied:
            raise AlgorithmError(f"two-agent output is not EF-alpha: {report.violations}")
    return alloc


MAX_PO_GOODS = 16


def _balanced_options(inst: Instance, mask_goods: frozenset[int], rest: frozenset[int]):
    """Ways agent 0 can add cake to two goods bundles to make them as equal as possible.

    Yields ``(difference, bundle_a, bundle_b)``.
    """
    p = sum((inst.goods[0][g] for g in mask_goods), ZERO)
    q = sum((inst.goods[0][g] for g in rest), ZERO)
    c = inst.cake_value(0)
    if not inst.has_cake:
        yield abs(p - q), Bundle(mask_goods), Bundle(rest)
        return
    (hg, hv), (lg, lv) = ((mask_goods, p), (rest, q)) if p >= q else ((rest, q), (mask_goods, p))
    if hv - lv >= c:
        yield hv - lv - c, Bundle(hg), Bundle(lg, FULL_CAKE)
        return
    share = (hv - lv + c) / 2
    y = cut_query(inst, 0, ZERO, share)
    yield ZERO, Bundle(hg, interval(y, ONE)), Bundle(lg, interval(ZERO, y))
    z = cut_query(inst, 0, ZERO, c - share)
    yield ZERO, Bundle(hg, interval(ZERO, z)), Bundle(lg, interval(z, ONE))


def _cut_and_choose(inst: Instance) -> Allocation:
    best_key, best = None, None
    goods = range(inst.m)
    for mask in range(1 << inst.m):
        side = frozenset(g for g in goods if mask >> g & 1)
        rest = frozenset(goods) - side
        for diff, b1, b2 in _balanced_options(inst, side, rest):
            v1, v2 = bundle_value(inst, 0, b1), bundle_value(inst, 0, b2)
            if v1 < v2 or (v1 == v2 and bundle_value(inst, 1, b2) > bundle_value(inst, 1, b1)):
                b1, b2 = b2, b1
            key = (diff, -bundle_value(inst, 1, b1))
            if best_key is None or key < best_key:
                best_key, best = key, (b2, b1)
    low, high = best
    return _choose(inst, low, high)


def _efalpha_fpo_candidates(inst: Instance):
    """Enumerate allocations consistent with a value-ratio threshold.

    Every such allocation is fractionally Pareto optimal. Items are ordered by
    v0/v1; the class at the threshold may be split (goods whole, cake
    fractionally), everything above goes to agent 0 and below to agent 1.
    Yields ``(goods_of_agent0, class_cake_segments, ratio, base0, base1,
    lam_hi, split_goods)`` descriptors consumed by
    :func:`two_agent_efalpha_po`.
    """
    fixed0_goods, fixed1_goods = set(), set()
    fixed0_segs, fixed1_segs = set(), set()
    classes: dict[Fraction, tuple[list[int], list[int]]] = {}
    for g in range(inst.m):
        a, b = inst.goods[0][g], inst.goods[1][g]
        if b == 0:
            fixed0_goods.add(g)
        elif a == 0:
            fixed1_goods.add(g)
        else:
            classes.setdefault(a / b, ([], []))[0].append(g)
    for k in range(inst.segments):
        a, b = inst.segment_value(0, k), inst.segment_value(1, k)
        if b == 0:
            fixed0_segs.add(k)
        elif a == 0:
            fixed1_segs.add(k)
        else:
            classes.setdefault(a / b, ([], []))[1].append(k)
    ratios = sorted(classes, reverse=True)
    if not ratios:
        yield fixed0_goods, fixed0_segs, set(), None, ()
        return
    for idx, r in enumerate(ratios):
        above_g = set(fixed0_goods).union(*[classes[s][0] for s in ratios[:idx]])
        above_s = set(fixed0_segs).union(*[classes[s][1] for s in ratios[:idx]])
        cls_goods, cls_segs = classes[r]
        for take in itertools.product((True, False), repeat=len(cls_goods)):
            chosen = {g for g, t in zip(cls_goods, take) if t}
            yield above_g | chosen, above_s, set(cls_segs), r, tuple(cls_goods)


def _materialize_threshold(inst: Instance, goods0: set[int], segs0: set[int], split: set[int],
                           fraction: Fraction) -> Allocation:
    pieces0, pieces1 = [], []
    for k in range(inst.segments):
        l, r = inst.segment(k)
        if k in split:
            cut = l + (r - l) * fraction
            pieces0.append((l, cut))
            pieces1.append((cut, r))
        elif k in segs0:
            pieces0.append((l, r))
        else:
            pieces1.append((l, r))
    goods1 = frozenset(range(inst.m)) - goods0
    return Allocation((Bundle(frozenset(goods0), PieceSet(tuple(pieces0))),
                       Bundle(goods1, PieceSet(tuple(pieces1)))))


def _fpo_repair(inst: Instance, reference: Allocation) -> Optional[Allocation]:
    """Find a threshold (hence fPO) allocation that is EF-alpha.

    Prefers one that weakly Pareto-dominates ``reference``.
    """
    U = [inst.total(0), inst.total(1)]
    f = [_alpha(inst, 0), _alpha(inst, 1)]
    ref = [bundle_value(inst, 0, reference[0]), bundle_value(inst, 1, reference[1])]
    cands = list(_efalpha_fpo_candidates(inst))
    for dominate in (True, False):
        for goods0, segs0, split, r, _ in cands:
            goods1 = set(range(inst.m)) - goods0
            base0 = sum((inst.goods[0][g] for g in goods0), ZERO) + sum(
                (inst.segment_value(0, k) for k in segs0), ZERO)
            base1 = sum((inst.goods[1][g] for g in goods1), ZERO) + sum(
                (inst.segment_value(1, k) for k in range(inst.segments) if k not in segs0 and k not in split), ZERO)
            lam_max = sum((inst.segment_value(0, k) for k in split), ZERO)
            w0 = max((inst.goods[0][g] for g in goods1), default=ZERO)
            w1 = max((inst.goods[1][g] for g in goods0), default=ZERO)
            # u0 = base0 + lam, u1 = base1 + (lam_max - lam) / r
            lo, hi = ZERO, lam_max
            lo = max(lo, (U[0] - f[0] * w0) / 2 - base0)
            if r is not None:
                hi = min(hi, lam_max - r * ((U[1] - f[1] * w1) / 2 - base1))
            elif 2 * base1 < U[1] - f[1] * w1:
                continue
            if dominate:
                lo = max(lo, ref[0] - base0)
                if r is not None:
                    hi = min(hi, lam_max - r * (ref[1] - base1))
                elif base1 < ref[1]:
                    continue
            if lo > hi:
                continue
            fraction = lo / lam_max if lam_max else ZERO
            alloc = _materialize_threshold(inst, goods0, segs0, split, fraction)
            if check(inst, alloc, EF_ALPHA).satisfied and check_fpo_two_agents(inst, alloc).satisfied:
                return alloc
    return None


def two_agent_efalpha_po(inst: Instance) -> Allocation:
    """EF-alpha allocation for two agents that is fractionally Pareto optimal.

    Agent 0 splits everything as evenly as she can (ties: the split whose
    richer side agent 1 likes most) and agent 1 chooses. If that outcome is
    not fPO it is replaced by an EF-alpha allocation consistent with a value
    ratio threshold, preferring one that Pareto-dominates it. Some instances
    have no such allocation; then the result is the outcome or a Pareto
    improvement of it that is Pareto optimal among allocations keeping goods
    whole, and it is re-checked for EF-alpha.
    """
    _require_two(inst)
    if inst.m > MAX_PO_GOODS:
        raise ModelError(f"two_agent_efalpha_po enumerates 2^m splits; m={inst.m} > {MAX_PO_GOODS}")
    alloc = _cut_and_choose(inst)
    if not check(inst, alloc, EF_ALPHA).satisfied:
        raise AlgorithmError("cut-and-choose outcome is not EF-alpha")
    fpo = check_fpo_two_agents(inst, alloc)
    if fpo.satisfied:
        return alloc
    repaired = _fpo_repair(inst, alloc)
    if repaired is not None:
        return repaired
    # No threshold allocation is EF-alpha; settle for Pareto optimality with whole goods.
    if check_po_two_agents(inst, alloc).satisfied:
        return alloc
    better = pareto_improve_two_agents(inst, alloc)
    if not check(inst, better, EF_ALPHA).satisfied:
        raise AlgorithmError("Pareto improvement of the cut-and-choose outcome is not EF-alpha")
    return better


# ---------------------------------------------------------------------------
# Identical agents
# ---------------------------------------------------------------------------


def identical_greedy_coefficient(n: int) -> Fraction:
    """n^2 / (4(n - 1)): the EF f(alpha) coefficient guaranteed for identical agents."""
    return Fraction(n * n, 4 * (n - 1)) if n > 1 else Fraction(1)


def identical_greedy(inst: Instance, *, verify: bool = True) -> Allocation:
    """Largest good to the poorest bundle, then water-fill the cake left to right."""
    if not inst.is_identical():
        raise ModelError("identical_greedy needs identical utility rows")
    n, row = inst.n, inst.goods[0]
    goods: list[set[int]] = [set() for _ in range(n)]
    val = [ZERO] * n
    for g in sorted(range(inst.m), key=lambda g: (-row[g], g)):
        b = min(range(n), key=lambda b: (val[b], b))
        goods[b].add(g)
        val[b] += row[g]
    pieces = [EMPTY_PIECE] * n
    if inst.has_cake:
        adds = water_fill(val, inst.cake_value(0))
        takers = [b for b in range(n) if adds[b] > 0]
        if not takers:
            takers = [min(range(n), key=lambda b: (val[b], b))]
        cut = cut_sequence(inst, [(0, adds[b]) for b in takers])
        for b, p in zip(takers, cut):
            pieces[b] = p
    alloc = Allocation(tuple(Bundle(frozenset(goods[b]), pieces[b]) for b in range(n)))
    if verify and n > 1:
        report = check(inst, alloc, effa(identical_greedy_coefficient(n)))
        if not report.satisfied:
            raise AlgorithmError(f"identical greedy output misses EF f(alpha): {report.violations}")
    return alloc
