"""Turn a :class:`RunConfig` into lattices, initial data and sources."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .config import RunConfig
from .errors import ConfigError
from .renewal import (CharacteristicLattice, SourceTerm, build_lattice, rho0_from_physical,
                      time_grid)


def make_lattice(cfg: RunConfig, **overrides) -> CharacteristicLattice:
    g = cfg.grid
    kw = dict(I=g.I, J=g.J, tau_max=g.tau_max, m=cfg.emission.m, alpha=cfg.emission.alpha,
              tol=cfg.tolerances.ode_tol)
    kw.update(overrides)
    return build_lattice(cfg.growth, cfg.profile(), **kw)


def gaussian(center, width, amplitude=1.0):
    cx, cth = center

    def rho(x, theta):
        return amplitude * np.exp(-((x - cx) ** 2 + (theta - cth) ** 2) / (2.0 * width**2))

    return rho


def _read_csv(path):
    try:
        with open(Path(path), newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def load_lattice_csv(lattice: CharacteristicLattice, path) -> np.ndarray:
    """Lattice values from a CSV with columns ``side, s, tau, rho_tilde``.

    A snapshot file is accepted too; only its earliest time is used.
    """
    rows = _read_csv(path)
    if not rows:
        raise ConfigError(f"{path} is empty")
    try:
        if "t" in rows[0]:
            t0 = min(float(r["t"]) for r in rows)
            rows = [r for r in rows if float(r["t"]) == t0]
        side = np.array([int(r["side"]) for r in rows])
        s = np.array([float(r["s"]) for r in rows])
        tau = np.array([float(r["tau"]) for r in rows])
        val = np.array([float(r["rho_tilde"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: needs numeric columns side, s, tau, rho_tilde ({exc})") from exc
    out = np.full((lattice.I + 1, lattice.n_sigma), np.nan)
    i = np.rint(tau / lattice.dtau).astype(int)
    tol = 1e-9 * max(lattice.tau_max, lattice.params.b)
    for k in range(len(rows)):
        cols = np.nonzero((lattice.sides == side[k]) & (np.abs(lattice.s - s[k]) <= tol))[0]
        if cols.size != 1 or not 0 <= i[k] <= lattice.I or abs(lattice.tau[i[k]] - tau[k]) > tol:
            raise ConfigError(f"{path}: row {k + 2} is not a node of this lattice")
        out[i[k], cols[0]] = val[k]
    if np.isnan(out).any():
        raise ConfigError(f"{path} does not cover every lattice node")
    return out


def initial_data(cfg: RunConfig, lattice: CharacteristicLattice) -> np.ndarray:
    ini = cfg.initial
    if ini.kind == "zero":
        return np.zeros((lattice.I + 1, lattice.n_sigma))
    if ini.kind == "gaussian":
        return rho0_from_physical(lattice, gaussian(ini.center, ini.width, ini.amplitude))
    return load_lattice_csv(lattice, ini.path)


def load_source_table(path, lattice: CharacteristicLattice, t) -> np.ndarray:
    """Source samples from a CSV ``t, side, s, value`` on a (t x s) grid per side.

    Bilinear interpolation onto the run grid; zero on sides without rows and
    outside the tabulated range.
    """
    rows = _read_csv(path)
    try:
        data = np.array([[float(r["t"]), int(r["side"]), float(r["s"]), float(r["value"])] for r in rows])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: needs numeric columns t, side, s, value ({exc})") from exc
    out = np.zeros((np.size(t), lattice.n_sigma))
    if data.size == 0:
        return out
    for side in np.unique(data[:, 1]).astype(int):
        block = data[data[:, 1] == side]
        ts = np.unique(block[:, 0])
        ss = np.unique(block[:, 2])
        if ts.size * ss.size != len(block) or ts.size < 2 or ss.size < 2:
            raise ConfigError(f"{path}: side {side} rows must form a full (t, s) grid of size >= 2x2")
        grid = np.full((ts.size, ss.size), np.nan)
        grid[np.searchsorted(ts, block[:, 0]), np.searchsorted(ss, block[:, 2])] = block[:, 3]
        interp = RegularGridInterpolator((ts, ss), grid, bounds_error=False, fill_value=0.0)
        cols = np.nonzero(lattice.sides == side)[0]
        tt, sv = np.meshgrid(t, lattice.s[cols], indexing="ij")
        out[:, cols] = interp(np.stack([tt, sv], axis=-1))
    return out


def source_term(cfg: RunConfig, lattice: CharacteristicLattice) -> SourceTerm:
    src = cfg.source
    if src.mode == "none":
        return SourceTerm()
    if src.mode == "primary_tumor":
        return SourceTerm("primary_tumor", tuple(src.x_p0))
    t = time_grid(lattice, cfg.grid.horizon)
    return SourceTerm("table", samples=load_source_table(src.path, lattice, t))
