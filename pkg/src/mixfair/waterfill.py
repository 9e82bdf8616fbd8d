from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .model import ModelError, ZERO


def water_level(values: Sequence[Fraction], amount: Fraction) -> Fraction:
    """Level reached when ``amount`` is poured onto the lowest ``values``."""
    if amount < 0:
        raise ModelError(f"cannot pour a negative amount ({amount})")
    if not values:
        raise ModelError("water_fill needs at least one bundle")
    ordered = sorted(values)
    prefix = ZERO
    for k, v in enumerate(ordered, start=1):
        prefix += v
        level = (amount + prefix) / k
        if k == len(ordered) or level <= ordered[k]:
            return level
    raise AssertionError("unreachable")


def water_fill(values: Sequence[Fraction], amount: Fraction) -> list[Fraction]:
    """Split ``amount`` so that the minimum of ``values + additions`` is maximal.

    Bundles above the final level receive nothing; additions sum to ``amount``.
    """
    level = water_level(values, Fraction(amount))
    return [max(ZERO, level - v) for v in values]
