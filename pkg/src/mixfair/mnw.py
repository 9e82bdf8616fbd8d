"""Maximum Nash welfare for mixed goods, plus its local-optimality verifiers.

Indivisible goods are enumerated (with interchangeable goods grouped into
classes); for each assignment the cake is divided by an Eisenberg-Gale
solver. The solver runs in floating point and then recovers an exact
rational optimum from the support it found, certified by exact KKT checks.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .fairness import PROP_ALPHA, FairnessReport, check
from .model import (
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
from .waterfill import water_level

__all__ = [
    "CakeShares",
    "MnwOptimum",
    "MnwPropReport",
    "MnwSolution",
    "SolverError",
    "TransferReport",
    "check_mnw_propalpha",
    "eg_cake_solver",
    "ef_reduction",
    "materialize",
    "random_subset_transfers",
    "solve_mnw",
    "transfer_gain",
    "verify_mnw_transfer",
]

KKT_TOL = 1e-12
RATIONAL_DENOMINATOR = 10**9
TIE_TOL = 1e-10
MAX_SWEEPS = 20_000
MAX_AGENTS, MAX_SEGMENTS = 6, 8
MAX_ASSIGNMENTS = 2_000_000


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Cake division for a fixed goods assignment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CakeShares:
    """``shares[i][s]`` is agent i's fraction of segment s."""

    shares: tuple[tuple[Fraction, ...], ...]
    utilities: tuple[Fraction, ...]
    exact: bool
    residual: float


def _float_solve(b: list[float], v: list[list[float]], P: list[int], segs: list[int]):
    n, S = len(b), len(v[0]) if v else 0
    x = [[0.0] * S for _ in range(n)]
    for s in segs:
        fans = [i for i in P if v[i][s] > 0]
        for i in fans:
            x[i][s] = 1.0 / len(fans)
    u = [b[i] + sum(x[i][s] * v[i][s] for s in range(S)) for i in range(n)]

    def ratio(i, s):
        if v[i][s] == 0:
            return 0.0
        return math.inf if u[i] <= 0 else v[i][s] / u[i]

    residual = math.inf
    for _ in range(MAX_SWEEPS):
        residual = 0.0
        for s in segs:
            hi = max(P, key=lambda i: ratio(i, s))
            holders = [j for j in P if x[j][s] > 0 and j != hi]
            if not holders:
                continue
            lo = min(holders, key=lambda j: ratio(j, s))
            top, bot = ratio(hi, s), ratio(lo, s)
            gap = 1.0 if math.isinf(top) else (top - bot) / top
            residual = max(residual, gap)
            if gap <= KKT_TOL:
                continue
            vi, vj = v[hi][s], v[lo][s]
            if vj == 0:
                step = x[lo][s]
            else:
                step = min(x[lo][s], max(0.0, (u[lo] * vi - u[hi] * vj) / (2 * vi * vj)))
            x[lo][s] -= step
            x[hi][s] += step
            u[lo] -= step * vj
            u[hi] += step * vi
        if residual <= KKT_TOL:
            break
    return x, residual


def _solve_linear(rows: list[list[Fraction]], rhs: list[Fraction], guess: list[Fraction]) -> Optional[list[Fraction]]:
    """Exact Gauss-Jordan; free variables take their value from ``guess``."""
    A = [r[:] + [c] for r, c in zip(rows, rhs)]
    ncol = len(guess)
    pivots, r = [], 0
    for c in range(ncol):
        p = next((k for k in range(r, len(A)) if A[k][c] != 0), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        inv = 1 / A[r][c]
        A[r] = [e * inv for e in A[r]]
        for k in range(len(A)):
            if k != r and A[k][c] != 0:
                f = A[k][c]
                A[k] = [a - f * e for a, e in zip(A[k], A[r])]
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    if any(all(e == 0 for e in row[:-1]) and row[-1] != 0 for row in A):
        return None
    sol = list(guess)
    free = [c for c in range(ncol) if c not in pivots]
    for k, c in enumerate(pivots):
        sol[c] = A[k][-1] - sum((A[k][f] * sol[f] for f in free), ZERO)
    return sol


def _kkt_exact(b, V, P, X) -> bool:
    n, S = len(b), len(V[0]) if V else 0
    u = [b[i] + sum((X[i][s] * V[i][s] for s in range(S)), ZERO) for i in range(n)]
    if any(u[i] <= 0 for i in P):
        return False
    for s in range(S):
        if any(X[i][s] < 0 for i in range(n)) or sum(X[i][s] for i in range(n)) != 1:
            return False
        for i in P:
            if X[i][s] > 0 and any(V[i][s] * u[k] < V[k][s] * u[i] for k in P):
                return False
    return True


def _kkt_residual(b, V, P, X) -> float:
    S = len(V[0]) if V else 0
    u = [float(b[i] + sum((X[i][s] * V[i][s] for s in range(S)), ZERO)) for i in range(len(b))]
    worst = 0.0
    for s in range(S):
        top = max((float(V[k][s]) / u[k] for k in P if u[k] > 0), default=0.0)
        for i in P:
            if X[i][s] > 0 and top > 0 and u[i] > 0:
                worst = max(worst, (top - float(V[i][s]) / u[i]) / top)
    return worst


def eg_cake_solver(inst: Instance, base: Sequence[Fraction]) -> CakeShares:
    """Divide the cake to maximize the sum of log(base_i + cake value_i).

    ``base`` holds each agent's fixed value from indivisible goods. Agents
    with zero base who value no cake are left out of the objective. Cake
    nobody in the objective values goes to the lowest-index agent that is.
    """
    n, S = inst.n, inst.segments
    if n > MAX_AGENTS or S > MAX_SEGMENTS:
        raise ModelError(f"eg_cake_solver bounds: n <= {MAX_AGENTS}, segments <= {MAX_SEGMENTS}")
    b = [Fraction(x) for x in base]
    V = [[inst.segment_value(i, s) for s in range(S)] for i in range(n)]
    P = [i for i in range(n) if b[i] > 0 or any(V[i])]
    owner = P[0] if P else 0
    X = [[ZERO] * S for _ in range(n)]
    valued = [s for s in range(S) if any(V[i][s] > 0 for i in P)]
    for s in range(S):
        if s not in valued:
            X[owner][s] = ONE
    residual = 0.0
    exact = True
    if valued:
        xf, residual = _float_solve([float(q) for q in b], [[float(q) for q in r] for r in V], P, valued)
        X = _refine(b, V, P, valued, xf, X)
        if X is None:
            X = _rationalize(xf, valued, n, S, owner)
            exact = False
            residual = _kkt_residual(b, V, P, X)
            if residual > 1e-9:
                raise SolverError(f"Eisenberg-Gale solver did not converge: KKT residual {residual:.3e}")
        else:
            residual = 0.0
    u = tuple(b[i] + sum((X[i][s] * V[i][s] for s in range(S)), ZERO) for i in range(n))
    return CakeShares(tuple(tuple(r) for r in X), u, exact, residual)


def _refine(b, V, P, valued, xf, X0):
    """Exact optimum on the float solution's support, or None."""
    for cutoff in (1e-9, 1e-6):
        support = [(i, s) for s in valued for i in P if xf[i][s] > cutoff]
        col = {key: k for k, key in enumerate(support)}
        rows, rhs = [], []
        for s in valued:
            row = [ZERO] * len(support)
            for i in P:
                if (i, s) in col:
                    row[col[i, s]] = ONE
            rows.append(row)
            rhs.append(ONE)
            holders = [i for i in P if (i, s) in col]
            for i, j in zip(holders, holders[1:]):
                # V[i][s] * u_j - V[j][s] * u_i = V[j][s] * b_i - V[i][s] * b_j
                row = [ZERO] * len(support)
                for (a, t), k in col.items():
                    if a == j:
                        row[k] += V[i][s] * V[j][t]
                    if a == i:
                        row[k] -= V[j][s] * V[i][t]
                rows.append(row)
                rhs.append(V[j][s] * b[i] - V[i][s] * b[j])
        guess = [Fraction(xf[i][s]).limit_denominator(RATIONAL_DENOMINATOR) for i, s in support]
        sol = _solve_linear(rows, rhs, guess)
        if sol is None:
            continue
        X = [r[:] for r in X0]
        for (i, s), q in zip(support, sol):
            X[i][s] = q
        if _kkt_exact(b, V, P, X):
            return X
    return None


def _rationalize(xf, valued, n, S, owner):
    X = [[ZERO] * S for _ in range(n)]
    for s in range(S):
        if s not in valued:
            X[owner][s] = ONE
            continue
        holders = [i for i in range(n) if xf[i][s] > 0]
        for i in holders[:-1]:
            X[i][s] = Fraction(xf[i][s]).limit_denominator(RATIONAL_DENOMINATOR)
        X[holders[-1]][s] = ONE - sum((X[i][s] for i in holders[:-1]), ZERO)
    return X


# ---------------------------------------------------------------------------
# Enumeration over goods assignments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MnwOptimum:
    owners: tuple[int, ...]
    shares: tuple[tuple[Fraction, ...], ...]
    utilities: tuple[Fraction, ...]
    exact: bool
    allocation: Allocation

    @property
    def positive_count(self) -> int:
        return sum(1 for u in self.utilities if u > 0)

    @property
    def nash_log(self) -> float:
        return sum(math.log(u) for u in self.utilities if u > 0)

    def to_json(self) -> dict:
        return {
            "owners": list(self.owners),
            "utilities": [format_rational(u) for u in self.utilities],
            "exact": self.exact,
            "allocation": self.allocation.to_json(),
        }


@dataclass
class MnwSolution:
    """Optimal tie set; ``optima[0]`` is the lexicographically smallest assignment."""

    optima: list[MnwOptimum]
    assignments_searched: int = 0

    @property
    def best(self) -> MnwOptimum:
        return self.optima[0]

    @property
    def allocation(self) -> Allocation:
        return self.best.allocation

    @property
    def utilities(self) -> tuple[Fraction, ...]:
        return self.best.utilities

    @property
    def positive_count(self) -> int:
        return self.best.positive_count

    @property
    def nash_log(self) -> float:
        return self.best.nash_log

    def to_json(self) -> dict:
        return {
            "positive_count": self.positive_count,
            "nash_log": repr(self.nash_log),
            "optima": [o.to_json() for o in self.optima],
        }


def materialize(inst: Instance, owners: Sequence[int], shares) -> Allocation:
    """Goods by owner; each segment cut left to right in agent order."""
    pieces: list[list[tuple[Fraction, Fraction]]] = [[] for _ in range(inst.n)]
    for s in range(inst.segments):
        l, r = inst.segment(s)
        cum = ZERO
        for i in range(inst.n):
            q = shares[i][s]
            if q > 0:
                pieces[i].append((l + cum * (r - l), l + (cum + q) * (r - l)))
                cum += q
    goods = [frozenset(g for g, o in enumerate(owners) if o == i) for i in range(inst.n)]
    return Allocation(tuple(Bundle(goods[i], PieceSet(tuple(pieces[i]))) for i in range(inst.n)))


def _good_classes(inst: Instance):
    """Groups of interchangeable goods with the agents allowed to hold them.

    A good is only given to agents who value it, when anyone does: handing
    it to someone else is never Nash optimal. Goods nobody values go to
    agent 0.
    """
    groups: dict[tuple, list[int]] = {}
    for g in range(inst.m):
        groups.setdefault(tuple(inst.goods[i][g] for i in range(inst.n)), []).append(g)
    out = []
    for col, goods in groups.items():
        fans = tuple(i for i in range(inst.n) if col[i] > 0) or (0,)
        out.append((goods, fans))
    return out


def _splits(count: int, k: int):
    """Compositions of ``count`` into ``k`` ordered non-negative parts."""
    for bars in itertools.combinations(range(count + k - 1), k - 1):
        prev, parts = -1, []
        for b in bars + (count + k - 1,):
            parts.append(b - prev - 1)
            prev = b
        yield tuple(parts)


def _assignment_count(classes) -> int:
    total = 1
    for goods, fans in classes:
        total *= math.comb(len(goods) + len(fans) - 1, len(fans) - 1)
    return total


def _upper_bound(base: list[float], dens: list[float]) -> float:
    """log Nash product if every agent could take cake at her top density."""
    lift = [i for i in range(len(base)) if dens[i] > 0]
    fixed = sum(math.log(base[i]) for i in range(len(base)) if dens[i] == 0 and base[i] > 0)
    if not lift:
        return fixed
    offsets = [Fraction(base[i] / dens[i]) for i in lift]
    level = float(water_level(offsets, ONE))
    return fixed + sum(math.log(dens[i] * max(level, base[i] / dens[i])) for i in lift)


def solve_mnw(inst: Instance) -> MnwSolution:
    """Maximize the number of agents with positive utility, then their product.

    Optima whose log Nash welfare is within 1e-10 of the best form the tie
    set. Interchangeable goods are treated as one class, so tie set members
    that differ only by swapping identical goods are reported once.
    """
    if inst.n > MAX_AGENTS or inst.segments > MAX_SEGMENTS:
        raise ModelError(f"solve_mnw bounds: n <= {MAX_AGENTS}, segments <= {MAX_SEGMENTS}")
    classes = _good_classes(inst)
    total = _assignment_count(classes)
    if total > MAX_ASSIGNMENTS:
        raise ModelError(f"solve_mnw would enumerate {total} goods assignments (limit {MAX_ASSIGNMENTS})")
    n = inst.n
    cake_fans = [any(inst.segment_value(i, s) > 0 for s in range(inst.segments)) for i in range(n)]
    dens = [float(max((inst.densities[i][s] for s in range(inst.segments)), default=ZERO)) for i in range(n)]

    candidates = []
    for combo in itertools.product(*[_splits(len(g), len(f)) for g, f in classes]):
        owners = [0] * inst.m
        base = [ZERO] * n
        for (goods, fans), parts in zip(classes, combo):
            it = iter(goods)
            for agent, cnt in zip(fans, parts):
                for _ in range(cnt):
                    g = next(it)
                    owners[g] = agent
                    base[agent] += inst.goods[agent][g]
        positive = sum(1 for i in range(n) if base[i] > 0 or cake_fans[i])
        fb = [float(q) for q in base]
        candidates.append((positive, _upper_bound(fb, dens), tuple(owners), base))

    top = max(c[0] for c in candidates)
    pool = sorted((c for c in candidates if c[0] == top), key=lambda c: (-c[1], c[2]))
    solved: list[tuple[float, MnwOptimum]] = []
    best_log = -math.inf
    for positive, bound, owners, base in pool:
        if bound < best_log - TIE_TOL:
            break
        cake = eg_cake_solver(inst, base)
        opt = MnwOptimum(owners, cake.shares, cake.utilities, cake.exact,
                         materialize(inst, owners, cake.shares))
        value = opt.nash_log
        best_log = max(best_log, value)
        solved.append((value, opt))
    optima = _tie_set(solved, best_log)
    return MnwSolution(optima, len(candidates))


def _tie_set(solved, best_log) -> list[MnwOptimum]:
    return sorted((opt for value, opt in solved if value >= best_log - TIE_TOL), key=lambda o: o.owners)


# ---------------------------------------------------------------------------
# Local optimality conditions
# ---------------------------------------------------------------------------


def transfer_gain(inst: Instance, alloc: Allocation, giver: int, receiver: int,
                  goods: Iterable[int] = (), piece: PieceSet = PieceSet(())) -> Fraction:
    """Change in the giver-receiver utility product when ``goods``/``piece`` move."""
    goods = frozenset(goods)
    ug = bundle_value(inst, giver, alloc[giver])
    ur = bundle_value(inst, receiver, alloc[receiver])
    dg = sum((inst.goods[giver][g] for g in goods), ZERO) + piece_value_of(inst, giver, piece)
    dr = sum((inst.goods[receiver][g] for g in goods), ZERO) + piece_value_of(inst, receiver, piece)
    return (ug - dg) * (ur + dr) - ug * ur


@dataclass(frozen=True)
class TransferReport:
    satisfied: bool
    kind: Optional[str] = None  # "bundle" or "single-good"
    agent: Optional[int] = None
    other: Optional[int] = None
    good: Optional[int] = None
    lhs: Optional[Fraction] = None
    rhs: Optional[Fraction] = None

    def to_json(self) -> dict:
        if self.satisfied:
            return {"satisfied": True}
        return {"satisfied": False, "kind": self.kind, "agent": self.agent, "other": self.other,
                "good": self.good, "lhs": format_rational(self.lhs), "rhs": format_rational(self.rhs)}


def verify_mnw_transfer(inst: Instance, alloc: Allocation, tol=0, agents: Optional[Iterable[int]] = None) -> TransferReport:
    """Necessary conditions of Nash optimality, evaluated exactly.

    * bundle condition, for every i, j:
      u_i(C_j)/u_i(A_i) + sum_{g in M_j} u_i(g)/(u_i(A_i)+u_i(g)) <= 1
    * single good moves: moving g from j to i does not raise u_i * u_j
      (compared relative to u_i(A_i) u_j(A_j)).

    ``tol`` is an absolute slack on both dimensionless forms.
    """
    tol = Fraction(tol)
    agents = list(range(inst.n)) if agents is None else list(agents)
    u = {i: bundle_value(inst, i, alloc[i]) for i in agents}
    zero = [i for i in agents if u[i] == 0]
    if zero:
        raise ModelError(f"agent {zero[0]} has zero utility; handle zero-utility agents separately "
                         "(they hold nothing and must see a single good worth u_i(A)/n) and pass the rest via agents=")
    for i in agents:
        for j in agents:
            lhs = piece_value_of(inst, i, alloc[j].piece) / u[i] + sum(
                (inst.goods[i][g] / (u[i] + inst.goods[i][g]) for g in alloc[j].goods), ZERO)
            if lhs > 1 + tol:
                return TransferReport(False, "bundle", i, j, None, lhs, ONE)
    for i in agents:
        for j in agents:
            if i == j:
                continue
            for g in sorted(alloc[j].goods):
                f = transfer_gain(inst, alloc, j, i, (g,))
                if f / (u[i] * u[j]) > tol:
                    return TransferReport(False, "single-good", i, j, g, f, ZERO)
    return TransferReport(True)


def random_subset_transfers(inst: Instance, alloc: Allocation, giver: int, receiver: int,
                            rng: random.Random, count: int = 100) -> Fraction:
    """Largest product gain over ``count`` random subsets of the giver's goods."""
    goods = sorted(alloc[giver].goods)
    best = None
    for _ in range(count):
        subset = [g for g in goods if rng.random() < 0.5]
        f = transfer_gain(inst, alloc, giver, receiver, subset)
        best = f if best is None else max(best, f)
    return best if best is not None else ZERO


def ef_reduction(inst: Instance, alloc: Allocation, i: int) -> tuple[bool, bool]:
    """Restricted and full proportional conditions for agent ``i``.

    The restriction keeps agent i and the agents she envies. Returns
    ``(restricted holds, full holds)``; the first should imply the second.
    """
    vals = [bundle_value(inst, i, alloc[j]) for j in range(inst.n)]
    K = [i] + [j for j in range(inst.n) if j != i and vals[j] > vals[i]]
    if len(K) == 1:
        restricted = True
    else:
        tot_k = sum(vals[j] for j in K)
        goods_k = sum((inst.goods[i][g] for j in K for g in alloc[j].goods), ZERO)
        pool = [g for j in K[1:] for g in alloc[j].goods]
        restricted = any(vals[i] + goods_k / tot_k * inst.goods[i][g] >= tot_k / len(K) for g in pool)
    total = inst.total(i)
    alpha = inst.goods_value(i) / total
    others = [g for j in range(inst.n) if j != i for g in alloc[j].goods]
    best = max((inst.goods[i][g] for g in others), default=ZERO)
    full = vals[i] + alpha * best >= total / inst.n
    return restricted, full


@dataclass
class MnwPropReport:
    solution: MnwSolution
    reports: list[FairnessReport]
    zero_agents: list[list[int]]
    satisfied: bool
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "solution": self.solution.to_json(),
            "reports": [r.to_json() for r in self.reports],
            "zero_agents": self.zero_agents,
            "notes": self.notes,
        }


def check_mnw_propalpha(inst: Instance, solution: Optional[MnwSolution] = None) -> MnwPropReport:
    """Solve for MNW and check PROP-alpha on every optimum in the tie set.

    Agents with zero utility are checked against their own argument: they
    hold no positively valued item, value no cake, and see a single good
    worth at least u_i(A)/n. For the others, the two cake/goods bounds that
    combine into PROP-alpha are re-derived as sanity checks.
    """
    solution = solution or solve_mnw(inst)
    reports, zeros, notes = [], [], []
    ok = True
    n = inst.n
    for opt in solution.optima:
        alloc = opt.allocation
        report = check(inst, alloc, PROP_ALPHA)
        reports.append(report)
        ok &= report.satisfied
        zero = [i for i in range(n) if opt.utilities[i] == 0]
        zeros.append(zero)
        for i in zero:
            total = inst.total(i)
            outside = max((inst.goods[i][g] for g in range(inst.m) if g not in alloc[i].goods), default=ZERO)
            if inst.cake_value(i) != 0 or outside * n < total:
                ok = False
                notes.append(f"zero-utility agent {i} lacks a good worth u_i(A)/n")
        live = [i for i in range(n) if i not in zero]
        tol = 0 if opt.exact else Fraction(1, 10**9)
        for i in live:
            u = opt.utilities[i]
            w = max((inst.goods[i][g] for g in range(inst.m) if g not in alloc[i].goods), default=ZERO)
            gm, gc = inst.goods_value(i), inst.cake_value(i)
            if gc / u > n - gm / (u + w) + tol:
                ok = False
                notes.append(f"agent {i}: cake bound fails")
            if gm / (u + w) > n + tol:
                ok = False
                notes.append(f"agent {i}: goods bound fails")
    return MnwPropReport(solution, reports, zeros, ok, notes)
