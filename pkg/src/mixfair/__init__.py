"""Exact fair division of mixed divisible and indivisible goods."""

from .model import (
    Allocation,
    Bundle,
    Instance,
    ModelError,
    PieceSet,
    make_allocation,
    make_instance,
    parse_allocation,
    parse_instance,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "Bundle",
    "Instance",
    "ModelError",
    "PieceSet",
    "make_allocation",
    "make_instance",
    "parse_allocation",
    "parse_instance",
]
