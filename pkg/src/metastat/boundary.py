"""Geometry of the boundary of the square (1, b)^2 and the emission profile N.

The boundary is split into four open sides, each parametrised by unit-speed
arc length ``s`` in ``(0, b - 1)``, traversed clockwise from (1, 1):

    G1: (1, 1 + s)      x = 1,     outward normal (-1, 0)
    G2: (1 + s, b)      theta = b, outward normal ( 0, 1)
    G3: (b, b - s)      x = b,     outward normal ( 1, 0)
    G4: (b - s, 1)      theta = 1, outward normal ( 0,-1)

The field points strictly inward on every open side, so ``G.nu < 0`` there.
Corners are excluded from every node set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, NumericalError
from .growth import GrowthParams, PhasePoint, velocity


class Side(IntEnum):
    G1 = 1
    G2 = 2
    G3 = 3
    G4 = 4


SIDES = (Side.G1, Side.G2, Side.G3, Side.G4)

# outward unit normals indexed by side value
_NORMALS = np.array([[np.nan, np.nan], [-1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]])


def side_length(b: float) -> float:
    return b - 1.0


def chart(side, s, b: float):
    """Map ``(side, s)`` to ``(x, theta)``; vectorised over both arguments."""
    side = np.asarray(side, dtype=int)
    s = np.asarray(s, dtype=float)
    side, s = np.broadcast_arrays(side, s)
    if np.any((side < 1) | (side > 4)):
        raise DomainError("side must be one of 1..4")
    one = np.ones_like(s)
    x = np.select([side == 1, side == 2, side == 3], [one, 1.0 + s, b * one], default=b - s)
    theta = np.select([side == 1, side == 2, side == 3], [1.0 + s, b * one, b - s], default=one)
    if x.ndim == 0:
        return PhasePoint(float(x), float(theta))
    return x, theta


def outward_normal(side):
    return _NORMALS[np.asarray(side, dtype=int)]


def g_dot_nu(side, s, params: GrowthParams):
    """Normal component of the field against the outward normal (negative = entering)."""
    x, theta = chart(side, s, params.b)
    g1, g2 = velocity((x, theta), params)
    nu = outward_normal(side)
    out = np.asarray(g1) * nu[..., 0] + np.asarray(g2) * nu[..., 1]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoundaryPoint:
    side: Side
    s: float
    x: float
    theta: float
    g_dot_nu: float

    @property
    def position(self) -> PhasePoint:
        return PhasePoint(self.x, self.theta)

    @property
    def inward_normal(self):
        return -outward_normal(int(self.side))


def boundary_point(side, s: float, params: GrowthParams) -> BoundaryPoint:
    length = side_length(params.b)
    if not np.isfinite(s) or not (0.0 < s < length):
        raise DomainError(f"arc length s={s} outside the open side (0, {length})")
    x, theta = chart(side, s, params.b)
    return BoundaryPoint(Side(int(side)), float(s), x, theta, g_dot_nu(side, s, params))


def unchart(p, params: GrowthParams, snap: float | None = None) -> BoundaryPoint:
    """Inverse of :func:`chart` for a point lying on one open side.

    ``snap`` (default ``1e-12 * b``) is the distance within which a coordinate
    is considered to sit on a side.
    """
    b = params.b
    snap = 1e-12 * b if snap is None else snap
    x, theta = float(p[0]), float(p[1])
    if not (np.isfinite(x) and np.isfinite(theta)):
        raise DomainError("non-finite point")
    on = {
        Side.G1: abs(x - 1.0) <= snap,
        Side.G2: abs(theta - b) <= snap,
        Side.G3: abs(x - b) <= snap,
        Side.G4: abs(theta - 1.0) <= snap,
    }
    hits = [side for side, hit in on.items() if hit]
    if len(hits) > 1:
        raise DomainError(f"({x}, {theta}) is a corner of the domain")
    if not hits:
        raise DomainError(f"({x}, {theta}) is not on the boundary")
    side = hits[0]
    s = {Side.G1: theta - 1.0, Side.G2: x - 1.0, Side.G3: b - theta, Side.G4: b - x}[side]
    if not (0.0 < s < side_length(b)):
        raise DomainError(f"({x}, {theta}) lies outside the closed square")
    return boundary_point(side, s, params)


def boundary_nodes(b: float, per_side: int, rule: str = "midpoint"):
    """Quadrature nodes on the whole boundary.

    Returns ``(sides, s, weights)`` as flat arrays ordered G1, G2, G3, G4.
    ``rule="trapezoid"`` includes both side endpoints (one-sided corner values),
    ``rule="midpoint"`` uses cell centres and never touches a corner.
    """
    if per_side < 2:
        raise DomainError("need at least 2 cells per side")
    h = side_length(b) / per_side
    if rule == "trapezoid":
        s1 = np.arange(per_side + 1) * h
        w1 = np.full(per_side + 1, h)
        w1[[0, -1]] = 0.5 * h
    elif rule == "midpoint":
        s1 = (np.arange(per_side) + 0.5) * h
        w1 = np.full(per_side, h)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    sides = np.repeat(np.array([int(sd) for sd in SIDES]), s1.size)
    return sides, np.tile(s1, 4), np.tile(w1, 4)


def boundary_quadrature(f, b: float, resolution: int, rule: str = "trapezoid") -> float:
    """Integrate ``f(side, s)`` over the boundary with respect to arc length.

    ``f`` must accept integer side arrays and arc-length arrays.  The default
    composite trapezoid rule is exact for integrands that are linear between
    nodes on each side.
    """
    sides, s, w = boundary_nodes(b, resolution, rule)
    values = np.broadcast_to(np.asarray(f(sides, s), dtype=float), s.shape)
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite integrand sample on the boundary")
    return float(np.dot(w, values))


@dataclass(frozen=True)
class EmissionProfile:
    """Lipschitz, compactly supported emission density N on the boundary.

    Values returned by :meth:`value` are already normalised to unit integral.
    """

    shape: str
    b: float
    side: Side = Side.G1
    center: float = 0.0
    width: float = 0.0
    table: tuple = field(default=(), repr=False)
    scale: float = 1.0

    @classmethod
    def hat(cls, b: float, center: float | None = None, width: float | None = None,
            side: Side = Side.G1) -> "EmissionProfile":
        """Triangular hat of unit area; defaults to the middle half of the side."""
        length = side_length(b)
        center = 0.5 * length if center is None else float(center)
        width = 0.5 * length if width is None else float(width)
        if width <= 0:
            raise ConfigError("hat width must be positive")
        if center - 0.5 * width < 0 or center + 0.5 * width > length:
            raise ConfigError("hat support must lie inside one side")
        return cls("triangular_hat", b, Side(int(side)), center, width)

    @classmethod
    def from_table(cls, b: float, rows) -> "EmissionProfile":
        """Piecewise-linear profile from ``(side, s, value)`` rows, renormalised."""
        per_side = {}
        for side, s, value in rows:
            per_side.setdefault(int(side), []).append((float(s), float(value)))
        length = side_length(b)
        table = []
        total = 0.0
        for side in sorted(per_side):
            if side not in (1, 2, 3, 4):
                raise ConfigError(f"unknown side {side} in emission table")
            pts = sorted(per_side[side])
            s = np.array([p[0] for p in pts])
            v = np.array([p[1] for p in pts])
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ConfigError("emission values must be finite and non-negative")
            if s[0] < 0 or s[-1] > length or np.any(np.diff(s) <= 0):
                raise ConfigError("emission table arc lengths must be distinct and inside the side")
            if v[0] != 0 or v[-1] != 0:
                raise ConfigError("emission table must vanish at both ends of its support on each side")
            total += float(np.trapezoid(v, s))
            table.append((side, tuple(s), tuple(v)))
        if total <= 0:
            raise ConfigError("emission table has zero integral")
        return cls("custom_table", b, table=tuple(table), scale=1.0 / total)

    @classmethod
    def load_csv(cls, b: float, path) -> "EmissionProfile":
        with open(Path(path), newline="") as fh:
            reader = csv.DictReader(fh)
            rows = [(r["side"], r["s"], r["value"]) for r in reader]
        return cls.from_table(b, rows)

    def value(self, side, s):
        side = np.asarray(side, dtype=int)
        s = np.asarray(s, dtype=float)
        side, s = np.broadcast_arrays(side, s)
        out = np.zeros(s.shape)
        if self.shape == "triangular_hat":
            peak = 2.0 / self.width
            hat = peak * np.clip(1.0 - np.abs(s - self.center) / (0.5 * self.width), 0.0, None)
            out = np.where(side == int(self.side), hat, 0.0)
        else:
            for sd, ts, tv in self.table:
                mask = side == sd
                out[mask] = self.scale * np.interp(s[mask], ts, tv, left=0.0, right=0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def lipschitz(self) -> float:
        if self.shape == "triangular_hat":
            return 4.0 / self.width**2
        slopes = [np.max(np.abs(np.diff(tv) / np.diff(ts))) for _, ts, tv in self.table]
        return self.scale * float(max(slopes))

    def to_rows(self, resolution: int = 64):
        """Sampled ``(side, s, value)`` rows, suitable for the CSV table format."""
        if self.shape == "custom_table":
            return [(sd, s, self.scale * v) for sd, ts, tv in self.table for s, v in zip(ts, tv)]
        s = np.linspace(self.center - 0.5 * self.width, self.center + 0.5 * self.width, resolution + 1)
        return [(int(self.side), float(si), float(self.value(int(self.side), si))) for si in s]


def emission_N(sigma: BoundaryPoint, profile: EmissionProfile) -> float:
    return profile.value(int(sigma.side), sigma.s)
