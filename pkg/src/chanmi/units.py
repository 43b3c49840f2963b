"""Global information unit: bits (default) or nats.

Every estimator in this package computes in log base 2 and rescales by a
single constant, so switching the unit rescales all reported quantities
uniformly and leaves ratios (uncertainty coefficients) untouched. Files on
disk always store bits; the unit only affects computed reports.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

BITS = "bits"
NATS = "nats"
_VALID = (BITS, NATS)

_LN2 = math.log(2.0)

_current = BITS


def set_unit(unit: str) -> None:
    global _current
    if unit not in _VALID:
        raise ValueError(f"unknown unit {unit!r}; expected one of {_VALID}")
    _current = unit


def current_unit() -> str:
    return _current


def scale_from_bits() -> float:
    """Multiplier taking a quantity in bits to the current unit."""
    return 1.0 if _current == BITS else _LN2


@contextmanager
def using_unit(unit: str):
    """Temporarily switch the global unit (restores on exit)."""
    previous = _current
    set_unit(unit)
    try:
        yield
    finally:
        set_unit(previous)
