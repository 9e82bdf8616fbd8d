"""Robertson-Webb queries over piecewise-constant cake valuations."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .model import ONE, ZERO, Instance, ModelError, PieceSet, piece_value_of


@dataclass(frozen=True)
class QueryRecord:
    agent: int
    kind: str  # "eval" or "cut"
    args: tuple[Fraction, Fraction]
    result: Optional[Fraction]


@dataclass
class QueryLog:
    """Append-only record of the RW queries issued during one run."""

    entries: list[QueryRecord] = field(default_factory=list)

    def record(self, agent: int, kind: str, args: tuple, result) -> None:
        self.entries.append(QueryRecord(agent, kind, tuple(args), result))

    def count(self, kind: str | None = None) -> int:
        if kind is None:
            return len(self.entries)
        return sum(1 for e in self.entries if e.kind == kind)

    def replay(self, inst: Instance) -> bool:
        """Re-issue every logged query and compare results."""
        for e in self.entries:
            if e.kind == "eval":
                got = eval_query(inst, e.agent, *e.args)
            else:
                got = cut_query(inst, e.agent, *e.args)
            if got != e.result:
                return False
        return True


def eval_query(inst: Instance, i: int, x: Fraction, y: Fraction, log: QueryLog | None = None) -> Fraction:
    """u_i([x, y])."""
    x, y = Fraction(x), Fraction(y)
    if not (ZERO <= x <= y <= ONE):
        raise ModelError(f"eval query needs 0 <= x <= y <= 1, got x={x}, y={y}")
    value = ZERO
    if inst.has_cake:
        bps, dens = inst.breakpoints, inst.densities[i]
        for k in range(len(dens)):
            lo, hi = max(x, bps[k]), min(y, bps[k + 1])
            if hi > lo:
                value += dens[k] * (hi - lo)
    if log is not None:
        log.record(i, "eval", (x, y), value)
    return value


def cut_query(inst: Instance, i: int, x: Fraction, beta: Fraction, log: QueryLog | None = None) -> Optional[Fraction]:
    """Leftmost y >= x with u_i([x, y]) = beta, or None if u_i([x, 1]) < beta."""
    x, beta = Fraction(x), Fraction(beta)
    if not ZERO <= x <= ONE:
        raise ModelError(f"cut query start {x} outside [0, 1]")
    if beta < 0:
        raise ModelError(f"cut query needs beta >= 0, got {beta}")
    result: Optional[Fraction] = None
    if beta == 0:
        result = x
    elif inst.has_cake:
        bps, dens = inst.breakpoints, inst.densities[i]
        acc = ZERO
        for k in range(len(dens)):
            lo, hi = max(x, bps[k]), bps[k + 1]
            if hi <= lo or dens[k] == 0:
                continue
            seg = dens[k] * (hi - lo)
            if acc + seg >= beta:
                result = lo + (beta - acc) / dens[k]
                break
            acc += seg
    if log is not None:
        log.record(i, "cut", (x, beta), result)
    return result


def piece_value(inst: Instance, i: int, piece: PieceSet, log: QueryLog | None = None) -> Fraction:
    if log is None:
        return piece_value_of(inst, i, piece)
    return sum((eval_query(inst, i, l, r, log) for l, r in piece.intervals), ZERO)


def piece_union(a: PieceSet, b: PieceSet) -> PieceSet:
    """Union of two disjoint piece sets."""
    if not piece_intersect(a, b).is_empty():
        raise ModelError("piece_union arguments overlap")
    return PieceSet(a.intervals + b.intervals)


def piece_intersect(a: PieceSet, b: PieceSet) -> PieceSet:
    out = []
    for l1, r1 in a.intervals:
        for l2, r2 in b.intervals:
            lo, hi = max(l1, l2), min(r1, r2)
            if hi > lo:
                out.append((lo, hi))
    return PieceSet(tuple(out))


def piece_subtract(a: PieceSet, b: PieceSet) -> PieceSet:
    """a minus b."""
    out = []
    for l, r in a.intervals:
        cur = l
        for l2, r2 in b.intervals:
            if r2 <= cur or l2 >= r:
                continue
            if l2 > cur:
                out.append((cur, l2))
            cur = max(cur, r2)
            if cur >= r:
                break
        if cur < r:
            out.append((cur, r))
    return PieceSet(tuple(out))


def interval(l, r) -> PieceSet:
    return PieceSet(((Fraction(l), Fraction(r)),))


def cut_sequence(inst: Instance, shares: list[tuple[int, Fraction]], start: Fraction = ZERO,
                 log: QueryLog | None = None) -> list[PieceSet]:
    """Cut consecutive pieces left to right.

    ``shares`` lists ``(agent, value)``: each piece starts where the last one
    ended and is worth ``value`` to ``agent``. The last piece runs to 1.
    Returns one PieceSet per entry.
    """
    pieces = []
    cur = Fraction(start)
    for k, (agent, value) in enumerate(shares):
        if k == len(shares) - 1:
            pieces.append(interval(cur, ONE))
            break
        y = cut_query(inst, agent, cur, value, log)
        if y is None:
            raise ModelError(f"agent {agent} cannot get value {value} from [{cur}, 1]")
        pieces.append(interval(cur, y))
        cur = y
    return pieces
