"""Working-precision selection for the order-statistic recursions.

Two modes exist. ``double`` runs everything in float64 and is the default
for ``m <= 200``. ``bigfloat`` runs the recursions with mpmath at a chosen
mantissa width and is mandatory above that size.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import mpmath

from .exceptions import DomainError

__all__ = [
    "PrecisionConfig",
    "DOUBLE",
    "MAX_DOUBLE_M",
    "bigfloat",
    "resolve_precision",
    "parse_precision",
]

MAX_DOUBLE_M = 200

_DEFAULT_TOL = {"double": 1e-9, "bigfloat": 1e-30}


@dataclass(frozen=True)
class PrecisionConfig:
    """Arithmetic used by the recursions.

    Parameters
    ----------
    mode : {"double", "bigfloat"}
    mantissa_bits : int
        Only used in bigfloat mode; must be at least 64.
    sum_tolerance : float, optional
        Allowed deviation of a probability vector's total from one, and the
        budget for accumulated cancellation error. Defaults to 1e-9 in
        double mode and 1e-30 in bigfloat mode.
    """

    mode: str = "double"
    mantissa_bits: int = 128
    sum_tolerance: float = field(default=None)

    def __post_init__(self):
        if self.mode not in _DEFAULT_TOL:
            raise DomainError(f"precision mode must be 'double' or 'bigfloat', got {self.mode!r}")
        if self.mode == "bigfloat" and self.mantissa_bits < 64:
            raise DomainError(f"mantissa_bits must be >= 64 in bigfloat mode, got {self.mantissa_bits}")
        if self.sum_tolerance is None:
            object.__setattr__(self, "sum_tolerance", _DEFAULT_TOL[self.mode])
        elif not self.sum_tolerance > 0:
            raise DomainError("sum_tolerance must be positive")

    @property
    def is_double(self) -> bool:
        return self.mode == "double"

    @property
    def unit_roundoff(self) -> float:
        bits = 53 if self.is_double else self.mantissa_bits
        return 2.0 ** (-bits)

    def workprec(self):
        """Context manager setting mpmath's precision (no-op in double mode)."""
        if self.is_double:
            return contextlib.nullcontext()
        return mpmath.workprec(self.mantissa_bits)

    def __str__(self):
        if self.is_double:
            return "double"
        return f"bigfloat:{self.mantissa_bits}"


DOUBLE = PrecisionConfig()


def bigfloat(mantissa_bits: int = 128, sum_tolerance: float | None = None) -> PrecisionConfig:
    return PrecisionConfig("bigfloat", mantissa_bits, sum_tolerance)


def resolve_precision(prec: PrecisionConfig | None, m: int) -> PrecisionConfig:
    """Return the config to use for a size-``m`` computation.

    Raises
    ------
    DomainError
        If ``m`` exceeds ``MAX_DOUBLE_M`` and double precision was requested
        (explicitly or by default).
    """
    if prec is None:
        prec = DOUBLE
    if prec.is_double and m > MAX_DOUBLE_M:
        raise DomainError(
            f"m={m} exceeds {MAX_DOUBLE_M}; pass a bigfloat PrecisionConfig "
            "(e.g. fdpexact.precision.bigfloat(128))"
        )
    return prec


def parse_precision(text: str) -> PrecisionConfig:
    """Parse ``double`` or ``bigfloat[:bits]``."""
    text = text.strip().lower()
    if text == "double":
        return DOUBLE
    if text.startswith("bigfloat"):
        _, _, bits = text.partition(":")
        return bigfloat(int(bits) if bits else 128)
    raise DomainError(f"precision: expected 'double' or 'bigfloat[:bits]', got {text!r}")
