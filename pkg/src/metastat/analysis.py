"""Psi-weighted observables of a simulated field and checks of the dynamical identities.

All integrals over Omega are taken in lattice coordinates, where
``int_Omega rho w dx dtheta = int int rho_tilde w(Phi_tau(sigma)) dtau dsigma``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .renewal import CharacteristicLattice, DensityField, SourceTerm, simulate, weighted_mass
from .spectral import SpectralSolution

log = logging.getLogger(__name__)


def _cumtrapz(y, h):
    out = np.zeros_like(y, dtype=float)
    if y.size > 1:
        out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]))
    return out


def _source_flux(field: DensityField, weight=None, absolute=False) -> np.ndarray:
    """``int_Gamma f(t_n, sigma) weight(sigma) dsigma`` for every grid time."""
    if field.f is None:
        return np.zeros(field.n_t)
    f = np.abs(field.f) if absolute else field.f
    w = field.lattice.weights if weight is None else field.lattice.weights * weight
    return f @ w


def psi_norm(field: DensityField, n: int, spectral: SpectralSolution) -> float:
    """``||rho(t_n)||_{L1_Psi} = int |rho| Psi``."""
    Psi = spectral.Psi
    return field.quadrature(n, lambda rows, v: np.abs(v) * Psi[rows])


def psi_mass(field: DensityField, n: int, spectral: SpectralSolution) -> float:
    """Signed ``int rho(t_n) Psi``."""
    Psi = spectral.Psi
    return field.quadrature(n, lambda rows, v: v * Psi[rows])


def mean_value_closed_form(t: float, rho0_tilde, f, spectral: SpectralSolution, t_grid=None) -> float:
    """``m(t) = e^{lam0 t} (int rho0 Psi + int_0^t int_Gamma Psi(sigma) e^{-lam0 s} f(s, sigma))``.

    ``f`` holds source samples on ``t_grid`` (or is ``None``); the time
    integral is a trapezoid on that grid, interpolated when ``t`` is off-grid.
    """
    lat = spectral.lattice
    lam = spectral.lambda0
    base = lat.integrate(np.asarray(rho0_tilde, dtype=float) * spectral.Psi)
    if f is None:
        return float(np.exp(lam * t) * base)
    t_grid = np.asarray(t_grid, dtype=float)
    h = float(t_grid[1] - t_grid[0])
    flux = (np.asarray(f) @ (lat.weights * spectral.Psi_boundary)) * np.exp(-lam * t_grid)
    cum = _cumtrapz(flux, h)
    k = np.searchsorted(t_grid, t)
    if k >= t_grid.size or not np.isclose(t_grid[k], t, rtol=0, atol=1e-12 * max(1.0, abs(t))):
        log.warning("t=%g is off the time grid; source integral interpolated", t)
    return float(np.exp(lam * t) * (base + np.interp(t, t_grid, cum)))


def mean_value_series(field: DensityField, spectral: SpectralSolution, absolute: bool = False) -> np.ndarray:
    """Closed-form ``m(t_n)`` on the whole grid (with ``|rho0|``, ``|f|`` if ``absolute``)."""
    lat = field.lattice
    lam = spectral.lambda0
    rho0 = np.abs(field.rho0) if absolute else field.rho0
    base = lat.integrate(rho0 * spectral.Psi)
    flux = _source_flux(field, spectral.Psi_boundary, absolute) * np.exp(-lam * field.t)
    return np.exp(lam * field.t) * (base + _cumtrapz(flux, lat.dtau))


def _relative(err, denom, scale):
    return np.abs(err) / np.maximum(np.abs(denom), 1e-12 * scale)


def _scale(field: DensityField, fallback) -> float:
    scale = field.lattice.integrate(np.abs(field.rho0))
    return scale if scale > 0 else float(np.max(np.abs(fallback), initial=1.0))


def check_mean_value(field: DensityField, spectral: SpectralSolution) -> np.ndarray:
    """Relative error between simulated ``int rho Psi`` and the closed form, per grid time."""
    sim = np.array([psi_mass(field, n, spectral) for n in range(field.n_t)])
    closed = mean_value_series(field, spectral)
    return _relative(sim - closed, closed, _scale(field, closed))


def check_contraction(field: DensityField, spectral: SpectralSolution, rtol: float = 1e-3):
    """Verify ``int |rho(t)| Psi <= e^{lam0 t}(int |rho0| Psi + int int Psi e^{-lam0 s} |f|)``.

    Returns ``(ok, margins)`` where ``margin = rhs - lhs``; ``ok`` allows a
    relative quadrature slack ``rtol``.
    """
    lhs = np.array([psi_norm(field, n, spectral) for n in range(field.n_t)])
    rhs = mean_value_series(field, spectral, absolute=True)
    margins = rhs - lhs
    slack = rtol * np.maximum(rhs, 1e-12 * _scale(field, rhs))
    return bool(np.all(margins >= -slack)), margins


@dataclass
class ComparisonResult:
    ok: bool
    violations: int
    first: tuple | None = None
    field_a: DensityField | None = field(default=None, repr=False)
    field_b: DensityField | None = field(default=None, repr=False)


def check_comparison(lattice: CharacteristicLattice, rho0_a, rho0_b, horizon: float,
                     source: SourceTerm | None = None) -> ComparisonResult:
    """Run both initial data and check ``rho_a <= rho_b`` at every node and time.

    ``first`` is ``(n, i, j)`` of the first offending node, if any.
    """
    rho0_a = np.asarray(rho0_a, dtype=float)
    rho0_b = np.asarray(rho0_b, dtype=float)
    if np.any(rho0_a > rho0_b):
        raise DomainError("comparison needs rho0_a <= rho0_b nodewise")
    fa = simulate(lattice, horizon, rho0_a, source)
    if fa.f is not None and np.any(fa.f < 0):
        raise DomainError("comparison needs a non-negative source")
    fb = simulate(lattice, horizon, rho0_b, source)
    violations = 0
    first = None
    for n in range(fa.n_t):
        bad = fa.snapshot(n) > fb.snapshot(n)
        if bad.any():
            violations += int(bad.sum())
            if first is None:
                i, j = np.argwhere(bad)[0]
                first = (n, int(i), int(j))
    return ComparisonResult(violations == 0, violations, first, fa, fb)


def mass_series(field: DensityField) -> np.ndarray:
    return np.array([weighted_mass(field, n) for n in range(field.n_t)])


def balance_residual(field: DensityField) -> np.ndarray:
    """``|dM/dt - (B + int_Gamma f - outflow at tau_max)|`` at interior grid times.

    ``dM/dt`` is a centred difference of the total mass.
    """
    lat = field.lattice
    h = lat.dtau
    M = mass_series(field)
    inflow = field.B + _source_flux(field)
    outflow = np.array([lat.boundary_integral(field.snapshot(n)[-1]) for n in range(field.n_t)])
    if field.n_t > lat.I:
        # the exit row jumps from rho0 to the first inflow at t = tau_max; a centred
        # difference of the kinked mass sees the mean of the two one-sided fluxes
        outflow[lat.I] = 0.5 * lat.boundary_integral(field.rho0[0] + field.inflow(0))
    dM = (M[2:] - M[:-2]) / (2.0 * h)
    return np.abs(dM - (inflow[1:-1] - outflow[1:-1]))


def gronwall_bound(field: DensityField) -> np.ndarray:
    """``e^{t max beta} (M0 + int_0^t e^{-max beta s} int_Gamma |f|)``."""
    lat = field.lattice
    bmax = max(float(lat.beta.max()), lat.beta_star)
    M0 = lat.integrate(np.abs(field.rho0))
    flux = _source_flux(field, absolute=True) * np.exp(-bmax * field.t)
    return np.exp(bmax * field.t) * (M0 + _cumtrapz(flux, lat.dtau))


@dataclass
class ConvergenceReport:
    times: np.ndarray
    deviation: np.ndarray
    fitted_rate: float | None
    mu_bound: float
    mean_value_error: np.ndarray
    bound_rhs: np.ndarray
    mass: np.ndarray
    psi_mass: np.ndarray
    m_closed_form: np.ndarray
    mu: float

    @property
    def converged(self) -> bool:
        return self.fitted_rate is None

    def monotone(self, atol: float = 1e-10) -> bool:
        return bool(np.all(np.diff(self.deviation) <= atol))

    def summary(self) -> dict:
        return {
            "fitted_rate": self.fitted_rate,
            "mu_bound": self.mu_bound,
            "mu": self.mu,
            "deviation_initial": float(self.deviation[0]),
            "deviation_final": float(self.deviation[-1]),
            "deviation_monotone": self.monotone(),
            "bound_holds": bool(np.all(self.deviation <= self.bound_rhs * (1 + 1e-9) + 1e-14)),
            "max_mean_value_error": float(np.max(self.mean_value_error)),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def rows(self):
        """Per-time diagnostics ``(t, mass, psi_mass, m_closed_form, deviation, bound_rhs)``."""
        return zip(self.times, self.mass, self.psi_mass, self.m_closed_form, self.deviation, self.bound_rhs)


def fit_rate(times, deviation, window: float = 0.5, floor: float = 0.0) -> float | None:
    """Decay rate from a log-linear least-squares fit over the last ``window`` of the horizon."""
    times = np.asarray(times)
    deviation = np.asarray(deviation)
    sel = (times >= times[-1] * (1.0 - window)) & (deviation > floor)
    if sel.sum() < 3:
        return None
    slope = np.polyfit(times[sel], np.log(deviation[sel]), 1)[0]
    return float(-slope)


def convergence_report(field: DensityField, spectral: SpectralSolution, mu: float | None = None,
                       window: float = 0.5) -> ConvergenceReport:
    """Distance of the rescaled solution to the stable distribution ``m(t) V``."""
    lam = spectral.lambda0
    Psi = spectral.Psi
    V = spectral.V_tilde
    m_closed = mean_value_series(field, spectral)
    m_rescaled = m_closed * np.exp(-lam * field.t)
    deviation = np.empty(field.n_t)
    for n, t in enumerate(field.t):
        scale = np.exp(-lam * t)
        mn = m_rescaled[n]
        deviation[n] = field.quadrature(n, lambda rows, v: np.abs(v * scale - mn * V[rows]) * Psi[rows])
    mu_bound = spectral.mu_bound()
    mu = mu_bound if mu is None else mu
    src = _source_flux(field, spectral.Psi_boundary, absolute=True) * np.exp(-(lam - mu) * field.t)
    bound = np.exp(-mu * field.t) * (deviation[0] + 2.0 * _cumtrapz(src, field.lattice.dtau))
    floor = 1e-13 * max(float(deviation[0]), _scale(field, m_closed))
    rate = fit_rate(field.t, deviation, window, floor)
    if rate is None:
        log.info("deviation below the noise floor; rate fit skipped")
    return ConvergenceReport(
        times=field.t, deviation=deviation, fitted_rate=rate, mu_bound=mu_bound,
        mean_value_error=check_mean_value(field, spectral), bound_rhs=bound,
        mass=mass_series(field),
        psi_mass=np.array([psi_mass(field, n, spectral) for n in range(field.n_t)]),
        m_closed_form=m_closed, mu=mu,
    )
