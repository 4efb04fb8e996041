"""Hahnfeldt tumour growth field under angiogenic control.

The state is ``X = (x, theta)``: tumour size and angiogenic capacity, both
measured in cells.  The field is

    g1(x, theta) = a * x * ln(theta / x)
    g2(x, theta) = c * x - d * theta * x**(2/3)

and it has a single stable equilibrium ``X* = (b, b)`` with
``b = (c / d)**1.5``.  All functions here accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError


class PhasePoint(NamedTuple):
    x: float
    theta: float


@dataclass(frozen=True)
class GrowthParams:
    """Growth speed ``a``, stimulation rate ``c`` and inhibition rate ``d``."""

    a: float = 0.5
    c: float = 2.0
    d: float = 1.0

    def __post_init__(self):
        for name in ("a", "c", "d"):
            value = getattr(self, name)
            try:
                finite = math.isfinite(float(value))
            except (TypeError, ValueError):
                finite = False
            if not finite:
                raise ConfigError(f"growth parameter {name}={value!r} must be a finite number")
            if value <= 0:
                raise ConfigError(f"growth parameter {name}={value} must be > 0")
        if self.c <= self.d:
            raise ConfigError(
                f"c={self.c} <= d={self.d} gives b=(c/d)^1.5 <= 1 and an empty domain (1,b)^2; "
                "increase c or decrease d"
            )

    @property
    def b(self) -> float:
        """Carrying-capacity bound, also the side length offset of the square (1, b)^2."""
        return (self.c / self.d) ** 1.5

    @property
    def equilibrium(self) -> PhasePoint:
        return PhasePoint(self.b, self.b)


def _checked(p):
    x, theta = p
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(theta))):
        raise DomainError("non-finite phase point")
    if np.any(x <= 0) or np.any(theta <= 0):
        raise DomainError("phase point must have x > 0 and theta > 0")
    return x, theta


def velocity(p, params: GrowthParams):
    """Return ``(g1, g2)`` at ``p = (x, theta)``."""
    x, theta = _checked(p)
    g1 = params.a * x * np.log(theta / x)
    g2 = params.c * x - params.d * theta * np.cbrt(x) ** 2
    if g1.ndim == 0:
        return float(g1), float(g2)
    return g1, g2


def divergence(p, params: GrowthParams):
    """``dg1/dx + dg2/dtheta = a (ln(theta/x) - 1) - d x^(2/3)``."""
    x, theta = _checked(p)
    div = params.a * (np.log(theta / x) - 1.0) - params.d * np.cbrt(x) ** 2
    return float(div) if div.ndim == 0 else div


def birth_rate(x, m: float, alpha: float):
    """Metastatic emission rate ``beta(x, theta) = m x^alpha``.

    ``alpha = 0`` gives the constant rate used by the analytic oracles.
    """
    x = np.asarray(x, dtype=float)
    out = m * x**alpha
    return float(out) if out.ndim == 0 else out
