"""Exact data model for mixed divisible/indivisible fair division.

Every quantity is a :class:`fractions.Fraction`. Agents and goods are
0-indexed. The cake is the unit interval with a piecewise-constant value
density per agent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

Rational = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


class ModelError(ValueError):
    """Raised for malformed instances, allocations or arguments.

    ``path`` names the offending field (for example ``goods[1][0]``).
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def as_rational(value, path: str = "") -> Fraction:
    """Convert an int, Fraction or ``"p/q"`` / decimal string to a Fraction.

    Floats are refused: they are not exact.
    """
    if isinstance(value, bool):
        raise ModelError(f"malformed rational {value!r}", path)
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ModelError(f"malformed rational {value!r}", path) from None
    raise ModelError(f"malformed rational {value!r}", path)


def format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


# ---------------------------------------------------------------------------
# Pieces of cake
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PieceSet:
    """A finite union of half-open intervals ``[l, r)`` inside ``[0, 1]``.

    Stored canonically: sorted, pairwise disjoint, adjacent intervals merged,
    zero-length intervals dropped.
    """

    intervals: tuple[tuple[Fraction, Fraction], ...] = ()

    def __post_init__(self):
        cleaned = []
        for k, (l, r) in enumerate(self.intervals):
            l = as_rational(l, f"piece[{k}][0]")
            r = as_rational(r, f"piece[{k}][1]")
            if not (ZERO <= l <= r <= ONE):
                raise ModelError(f"interval [{l}, {r}) not inside [0, 1]", f"piece[{k}]")
            if l < r:
                cleaned.append((l, r))
        cleaned.sort()
        merged: list[tuple[Fraction, Fraction]] = []
        for l, r in cleaned:
            if merged and l < merged[-1][1]:
                raise ModelError(f"overlapping intervals at [{l}, {merged[-1][1]})", "piece")
            if merged and l == merged[-1][1]:
                merged[-1] = (merged[-1][0], r)
            else:
                merged.append((l, r))
        object.__setattr__(self, "intervals", tuple(merged))

    @classmethod
    def of(cls, *intervals: tuple) -> "PieceSet":
        return cls(tuple(intervals))

    @property
    def measure(self) -> Fraction:
        return sum((r - l for l, r in self.intervals), ZERO)

    def is_empty(self) -> bool:
        return not self.intervals

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def to_json(self) -> list[list[str]]:
        return [[format_rational(l), format_rational(r)] for l, r in self.intervals]


EMPTY_PIECE = PieceSet()
FULL_CAKE = PieceSet(((ZERO, ONE),))


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


def _matrix(rows, n_rows: int, n_cols: int | None, name: str) -> tuple[tuple[Fraction, ...], ...]:
    if not isinstance(rows, (list, tuple)) or len(rows) != n_rows:
        raise ModelError(f"expected {n_rows} rows", name)
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, (list, tuple)):
            raise ModelError("expected a list", f"{name}[{i}]")
        if n_cols is not None and len(row) != n_cols:
            raise ModelError(f"expected {n_cols} entries, got {len(row)}", f"{name}[{i}]")
        vals = []
        for j, v in enumerate(row):
            q = as_rational(v, f"{name}[{i}][{j}]")
            if q < 0:
                raise ModelError("negative utility", f"{name}[{i}][{j}]")
            vals.append(q)
        out.append(tuple(vals))
    return tuple(out)


@dataclass(frozen=True)
class Instance:
    """n agents, m indivisible goods and an optional cake.

    ``goods[i][j]`` is agent i's value for good j. The cake is cut into
    segments by ``breakpoints`` (``0 = b_0 < ... < b_s = 1``);
    ``densities[i][k]`` is agent i's constant density on segment k. An
    instance without cake has ``breakpoints == ()``.
    """

    n: int
    goods: tuple[tuple[Fraction, ...], ...]
    breakpoints: tuple[Fraction, ...] = ()
    densities: tuple[tuple[Fraction, ...], ...] = ()
    degenerate: bool = False
    m: int = field(init=False)

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ModelError("agent count must be a positive integer", "agents")
        goods = _matrix(self.goods, self.n, None, "goods")
        widths = {len(row) for row in goods}
        if len(widths) > 1:
            raise ModelError("rows have different lengths (matrix shape mismatch)", "goods")
        object.__setattr__(self, "goods", goods)
        object.__setattr__(self, "m", widths.pop() if widths else 0)

        bps = tuple(as_rational(b, f"cake.breakpoints[{k}]") for k, b in enumerate(self.breakpoints))
        if bps:
            if bps[0] != 0 or bps[-1] != 1 or len(bps) < 2:
                raise ModelError("breakpoints must start at 0 and end at 1", "cake.breakpoints")
            for k in range(len(bps) - 1):
                if bps[k] >= bps[k + 1]:
                    raise ModelError("non-monotone breakpoints", f"cake.breakpoints[{k + 1}]")
            dens = _matrix(self.densities, self.n, len(bps) - 1, "cake.densities")
        else:
            if any(len(r) for r in self.densities):
                raise ModelError("densities given without breakpoints", "cake.densities")
            dens = tuple(() for _ in range(self.n))
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "densities", dens)

        if not self.degenerate:
            for i in range(self.n):
                if self.total(i) <= 0:
                    raise ModelError(
                        f"agent {i} has zero total utility (flag the instance degenerate to allow)",
                        f"goods[{i}]",
                    )

    # -- basic quantities --------------------------------------------------
    @property
    def has_cake(self) -> bool:
        return bool(self.breakpoints)

    @property
    def segments(self) -> int:
        return max(len(self.breakpoints) - 1, 0)

    def segment(self, k: int) -> tuple[Fraction, Fraction]:
        return self.breakpoints[k], self.breakpoints[k + 1]

    def segment_value(self, i: int, k: int) -> Fraction:
        l, r = self.segment(k)
        return self.densities[i][k] * (r - l)

    def goods_value(self, i: int) -> Fraction:
        return sum(self.goods[i], ZERO)

    def cake_value(self, i: int) -> Fraction:
        return sum((self.segment_value(i, k) for k in range(self.segments)), ZERO)

    def total(self, i: int) -> Fraction:
        return self.goods_value(i) + self.cake_value(i)

    def is_homogeneous(self) -> bool:
        """True when each agent's density is constant over the whole cake."""
        return all(len(set(row)) <= 1 for row in self.densities)

    def is_identical(self) -> bool:
        return all(
            self.goods[i] == self.goods[0] and self.densities[i] == self.densities[0]
            for i in range(self.n)
        )

    def to_json(self) -> dict:
        data: dict = {
            "agents": self.n,
            "goods": [[format_rational(v) for v in row] for row in self.goods],
        }
        if self.has_cake:
            data["cake"] = {
                "breakpoints": [format_rational(b) for b in self.breakpoints],
                "densities": [[format_rational(d) for d in row] for row in self.densities],
            }
        if self.degenerate:
            data["degenerate"] = True
        return data


def make_instance(goods: Sequence[Sequence], breakpoints: Sequence = (), densities: Sequence[Sequence] = (),
                  degenerate: bool = False) -> Instance:
    """Convenience constructor that infers ``n`` from the goods matrix."""
    n = len(goods) if goods else len(densities)
    if not densities and breakpoints:
        raise ModelError("breakpoints given without densities", "cake.densities")
    return Instance(n, tuple(tuple(r) for r in goods) if goods else tuple(() for _ in range(n)),
                    tuple(breakpoints), tuple(tuple(r) for r in densities), degenerate)


def parse_instance(text: str) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc}") from None
    return instance_from_json(data)


def instance_from_json(data) -> Instance:
    if not isinstance(data, dict):
        raise ModelError("instance must be a JSON object")
    n = data.get("agents")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ModelError("agent count must be a positive integer", "agents")
    goods = data.get("goods", [[] for _ in range(n)])
    cake = data.get("cake")
    bps: Sequence = ()
    dens: Sequence = ()
    if cake is not None:
        if not isinstance(cake, dict):
            raise ModelError("expected an object", "cake")
        bps = cake.get("breakpoints", [])
        dens = cake.get("densities", [])
        if not isinstance(bps, list):
            raise ModelError("expected a list", "cake.breakpoints")
    return Instance(n, goods, tuple(bps), dens if bps else (), bool(data.get("degenerate", False)))


def serialize_instance(inst: Instance) -> str:
    return json.dumps(inst.to_json(), indent=2)


# ---------------------------------------------------------------------------
# Allocations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bundle:
    goods: frozenset[int] = frozenset()
    piece: PieceSet = EMPTY_PIECE

    def __post_init__(self):
        object.__setattr__(self, "goods", frozenset(self.goods))


@dataclass(frozen=True)
class Allocation:
    bundles: tuple[Bundle, ...]

    def __post_init__(self):
        object.__setattr__(self, "bundles", tuple(self.bundles))

    @property
    def n(self) -> int:
        return len(self.bundles)

    def __getitem__(self, i: int) -> Bundle:
        return self.bundles[i]

    def to_json(self) -> dict:
        return {
            "bundles": [
                {"goods": sorted(b.goods), "piece": b.piece.to_json()} for b in self.bundles
            ]
        }


def make_allocation(bundles: Iterable[tuple[Iterable[int], Iterable[tuple]]]) -> Allocation:
    """Build from ``[(goods, [(l, r), ...]), ...]``."""
    return Allocation(tuple(Bundle(frozenset(g), PieceSet(tuple(p))) for g, p in bundles))


def allocation_from_json(data) -> Allocation:
    if not isinstance(data, dict) or not isinstance(data.get("bundles"), list):
        raise ModelError("allocation must be an object with a 'bundles' list")
    bundles = []
    for i, entry in enumerate(data["bundles"]):
        goods = entry.get("goods", [])
        if not all(isinstance(g, int) and not isinstance(g, bool) for g in goods):
            raise ModelError("good indices must be integers", f"bundles[{i}].goods")
        if len(set(goods)) != len(goods):
            raise ModelError("good listed twice in one bundle", f"bundles[{i}].goods")
        try:
            piece = PieceSet(tuple(tuple(iv) for iv in entry.get("piece", [])))
        except ModelError as exc:
            raise ModelError(str(exc), f"bundles[{i}]") from None
        bundles.append(Bundle(frozenset(goods), piece))
    return Allocation(tuple(bundles))


def parse_allocation(text: str) -> Allocation:
    try:
        return allocation_from_json(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc}") from None


def serialize_allocation(alloc: Allocation) -> str:
    return json.dumps(alloc.to_json(), indent=2)


# ---------------------------------------------------------------------------
# Utilities
# ---------------------------------------------------------------------------


def normalize(inst: Instance) -> Instance:
    """Scale each agent so that her value for everything is exactly 1."""
    goods, dens = [], []
    for i in range(inst.n):
        t = inst.total(i)
        if t <= 0:
            raise ModelError(f"agent {i} has zero total utility; cannot normalize", f"goods[{i}]")
        goods.append(tuple(v / t for v in inst.goods[i]))
        dens.append(tuple(d / t for d in inst.densities[i]))
    return Instance(inst.n, tuple(goods), inst.breakpoints, tuple(dens))


def indivisibility_ratio(inst: Instance, i: int) -> Fraction:
    """alpha_i = u_i(M) / (u_i(M) + u_i(C))."""
    t = inst.total(i)
    if t <= 0:
        raise ModelError(f"agent {i} has zero total utility; ratio undefined")
    return inst.goods_value(i) / t


def piece_value_of(inst: Instance, i: int, piece: PieceSet) -> Fraction:
    # Plain integration; the logged query interface lives in ``cake``.
    if not piece or not inst.has_cake:
        return ZERO
    total = ZERO
    bps, dens = inst.breakpoints, inst.densities[i]
    k = 0
    for l, r in piece.intervals:
        while k < len(dens) and bps[k + 1] <= l:
            k += 1
        j = k
        while j < len(dens) and bps[j] < r:
            lo, hi = max(l, bps[j]), min(r, bps[j + 1])
            if hi > lo:
                total += dens[j] * (hi - lo)
            j += 1
    return total


def utility(inst: Instance, i: int, goods: Iterable[int] = (), piece: PieceSet = EMPTY_PIECE) -> Fraction:
    row = inst.goods[i]
    total = ZERO
    for g in goods:
        if not 0 <= g < inst.m:
            raise ModelError(f"good index {g} out of range 0..{inst.m - 1}")
        total += row[g]
    return total + piece_value_of(inst, i, piece)


def bundle_value(inst: Instance, i: int, bundle: Bundle) -> Fraction:
    return utility(inst, i, bundle.goods, bundle.piece)


def value_matrix(inst: Instance, alloc: Allocation) -> list[list[Fraction]]:
    """``V[i][j] = u_i(A_j)``."""
    return [[bundle_value(inst, i, b) for b in alloc.bundles] for i in range(inst.n)]


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    goods: tuple[int, ...] = ()
    interval: tuple[Fraction, Fraction] | None = None
    bundles: tuple[int, ...] = ()


def validate_allocation(inst: Instance, alloc: Allocation) -> list[Violation]:
    """Return every way ``alloc`` fails to partition the instance's goods.

    An empty list means the allocation is valid.
    """
    out: list[Violation] = []
    if alloc.n != inst.n:
        out.append(Violation("agent-count", f"{alloc.n} bundles for {inst.n} agents"))
    owner: dict[int, int] = {}
    for b, bundle in enumerate(alloc.bundles):
        for g in sorted(bundle.goods):
            if not 0 <= g < inst.m:
                out.append(Violation("bad-good", f"good {g} out of range", (g,), bundles=(b,)))
            elif g in owner:
                out.append(Violation("duplicate-good", f"good {g} in bundles {owner[g]} and {b}",
                                     (g,), bundles=(owner[g], b)))
            else:
                owner[g] = b
    missing = tuple(g for g in range(inst.m) if g not in owner)
    if missing:
        out.append(Violation("missing-good", f"goods {list(missing)} unassigned", missing))

    events = sorted((l, r, b) for b, bundle in enumerate(alloc.bundles) for l, r in bundle.piece.intervals)
    if not inst.has_cake:
        for l, r, b in events:
            out.append(Violation("cake-without-cake", f"bundle {b} holds [{l}, {r}) but the instance has no cake",
                                 interval=(l, r), bundles=(b,)))
        return out
    reach, reach_owner = ZERO, None
    for l, r, b in events:
        if l > reach:
            out.append(Violation("gap", f"[{reach}, {l}) is not allocated", interval=(reach, l)))
        elif l < reach:
            hi = min(r, reach)
            out.append(Violation("overlap", f"[{l}, {hi}) held by bundles {reach_owner} and {b}",
                                 interval=(l, hi), bundles=(reach_owner, b)))
        if r > reach:
            reach, reach_owner = r, b
    if reach < ONE:
        out.append(Violation("gap", f"[{reach}, 1) is not allocated", interval=(reach, ONE)))
    return out


def is_valid(inst: Instance, alloc: Allocation) -> bool:
    return not validate_allocation(inst, alloc)
