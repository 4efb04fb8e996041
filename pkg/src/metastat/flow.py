"""Characteristics of the growth field.

``Phi_tau(sigma)`` is the solution of dX/dt = G(X) at time ``tau`` started
from the boundary point ``sigma``.  Its Jacobian with respect to
``(tau, arc length)`` is carried along by integrating

    d log|J| / d tau = div G(Phi_tau(sigma)),   |J|(0) = |G.nu(sigma)|

next to the position, so ``|J| = |G.nu| exp(int_0^tau div G)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .boundary import BoundaryPoint, unchart
from .errors import DomainError, NumericalError, SingularityError
from .growth import GrowthParams, PhasePoint

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
CLAMP_FRACTION = 1e-12
GUARD_FRACTION = 1e-6


@dataclass(frozen=True)
class FlowResult:
    position: PhasePoint
    jacobian: float
    div_integral: float


def _field(params: GrowthParams, sign: float = 1.0, with_div: bool = True):
    a, c, d = params.a, params.c, params.d

    def rhs(t, y):
        n = y.size // (3 if with_div else 2)
        x, th = y[:n], y[n:2 * n]
        x23 = np.cbrt(x) ** 2
        lg = np.log(th / x)
        parts = [a * x * lg, c * x - d * th * x23]
        if with_div:
            parts.append(a * (lg - 1.0) - d * x23)
        return sign * np.concatenate(parts)

    return rhs


def _max_step(params: GrowthParams) -> float:
    # keeps h * |fast eigenvalue| small near X*, so the discrete approach to X*
    # stays monotone and never overshoots the square
    return 1.0 / (params.a + params.c)


def _clamp(x, th, params: GrowthParams):
    b = params.b
    over = max(float(np.max(1.0 - x, initial=0.0)), float(np.max(x - b, initial=0.0)),
               float(np.max(1.0 - th, initial=0.0)), float(np.max(th - b, initial=0.0)))
    if over > CLAMP_FRACTION * b:
        raise NumericalError(f"trajectory left the square by {over:.3e}; tighten the tolerance")
    return np.clip(x, 1.0, b), np.clip(th, 1.0, b)


def flow_batch(x0, theta0, taus, params: GrowthParams, tol: float = DEFAULT_TOL):
    """Integrate many characteristics on a common increasing time grid.

    Returns ``(x, theta, div_integral)`` each of shape ``(len(taus), n)``.
    The characteristics are independent; they share one adaptive step
    sequence, which is controlled by the most demanding one.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    th0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus < 0):
        raise DomainError("flow time must be >= 0")
    if np.any(np.diff(taus) < 0):
        raise DomainError("flow times must be sorted")
    n = x0.size
    y0 = np.concatenate([x0, th0, np.zeros(n)])
    t_end = float(taus[-1])
    if t_end == 0.0:
        return (np.tile(x0, (taus.size, 1)), np.tile(th0, (taus.size, 1)), np.zeros((taus.size, n)))
    sol = solve_ivp(_field(params), (0.0, t_end), y0, method="DOP853", t_eval=taus,
                    rtol=tol, atol=tol * 1e-2, max_step=_max_step(params))
    if not sol.success:
        last = sol.y[:, -1] if sol.y.size else y0
        raise NumericalError(f"characteristic integration failed: {sol.message}", state=last)
    y = sol.y.T
    x, th = _clamp(y[:, :n], y[:, n:2 * n], params)
    return x, th, y[:, 2 * n:]


def flow(sigma: BoundaryPoint, tau: float, params: GrowthParams, tol: float = DEFAULT_TOL) -> FlowResult:
    """Position and Jacobian of the characteristic from ``sigma`` at time ``tau``."""
    if not np.isfinite(tau) or tau < 0:
        raise DomainError(f"flow time tau={tau} must be finite and >= 0")
    x, th, L = flow_batch([sigma.x], [sigma.theta], [tau], params, tol)
    div_integral = float(L[-1, 0])
    jac = abs(sigma.g_dot_nu) * np.exp(div_integral)
    return FlowResult(PhasePoint(float(x[-1, 0]), float(th[-1, 0])), float(jac), div_integral)


def guard_radius(params: GrowthParams, fraction: float = GUARD_FRACTION) -> float:
    return fraction * params.b


def in_guard(x, theta, params: GrowthParams, fraction: float = GUARD_FRACTION):
    b = params.b
    return np.hypot(np.asarray(x) - b, np.asarray(theta) - b) < guard_radius(params, fraction)


def _exit_events(params: GrowthParams):
    b = params.b
    events = [
        lambda t, y: y[0] - 1.0,   # G1
        lambda t, y: b - y[1],     # G2
        lambda t, y: b - y[0],     # G3
        lambda t, y: y[1] - 1.0,   # G4
    ]
    for ev in events:
        ev.terminal = True
        ev.direction = -1
    return events


def inverse_flow(p, params: GrowthParams, tol: float = DEFAULT_TOL,
                 guard_fraction: float = GUARD_FRACTION):
    """Entry time ``tau`` and entry point ``sigma`` of the characteristic through ``p``.

    The ODE is integrated backward until the trajectory leaves the open
    square; the crossing is located by root finding on the dense output.
    Points on the boundary return ``(0, p)``.
    """
    x, th = float(p[0]), float(p[1])
    b = params.b
    if not (np.isfinite(x) and np.isfinite(th)):
        raise DomainError("non-finite point")
    snap = CLAMP_FRACTION * b
    if x < 1.0 - snap or x > b + snap or th < 1.0 - snap or th > b + snap:
        raise DomainError(f"({x}, {th}) is outside the closed square [1, {b}]^2")
    if min(x - 1.0, b - x, th - 1.0, b - th) <= snap:
        return 0.0, unchart((x, th), params, snap=snap)
    if in_guard(x, th, params, guard_fraction):
        raise SingularityError(
            f"({x}, {th}) lies within {guard_fraction:g} b of X*; entry time is unbounded there"
        )
    events = _exit_events(params)
    # the slowest decay rate near X* bounds the backward escape time
    horizon = 1e4 / min(params.a, params.c)
    sol = solve_ivp(_field(params, -1.0, with_div=False), (0.0, horizon), [x, th], method="DOP853",
                    events=events, rtol=tol, atol=tol * 1e-2, max_step=_max_step(params))
    for k, t_ev in enumerate(sol.t_events):
        if t_ev.size:
            tau = float(t_ev[0])
            ex, eth = sol.y_events[k][0]
            if k == 0:
                ex = 1.0
            elif k == 1:
                eth = b
            elif k == 2:
                ex = b
            else:
                eth = 1.0
            length = b - 1.0
            ex = min(max(ex, 1.0), b)
            eth = min(max(eth, 1.0), b)
            try:
                sigma = unchart((ex, eth), params, snap=snap)
            except DomainError:
                # crossing numerically at a corner: nudge along the side
                eps = 1e-9 * length
                if k in (0, 2):
                    eth = min(max(eth, 1.0 + eps), b - eps)
                else:
                    ex = min(max(ex, 1.0 + eps), b - eps)
                sigma = unchart((ex, eth), params, snap=snap)
            return tau, sigma
    raise NumericalError("backward characteristic did not reach the boundary", state=sol.y[:, -1])


def primary_tumor(x0, t_grid, params: GrowthParams, tol: float = DEFAULT_TOL):
    """Primary tumour trajectory ``X_p(t)`` sampled on ``t_grid`` (shape ``(n, 2)``)."""
    x, th = float(x0[0]), float(x0[1])
    b = params.b
    snap = CLAMP_FRACTION * b
    if not (1.0 - snap <= x <= b + snap and 1.0 - snap <= th <= b + snap):
        raise DomainError("primary tumour must start in the closed square")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < 0:
        raise DomainError("time grid must be sorted and non-negative")
    if x == b and th == b:
        return np.tile([b, b], (t_grid.size, 1))
    t0 = float(t_grid[0])
    if t_grid[-1] == t0:
        return np.tile([x, th], (t_grid.size, 1))
    sol = solve_ivp(_field(params, with_div=False), (t0, float(t_grid[-1])), [x, th],
                    method="DOP853", t_eval=t_grid, rtol=tol, atol=tol * 1e-2,
                    max_step=_max_step(params))
    if not sol.success:
        raise NumericalError(f"primary tumour integration failed: {sol.message}", state=sol.y[:, -1])
    px, pth = _clamp(sol.y[0], sol.y[1], params)
    return np.column_stack([px, pth])


def select_tau_max(params: GrowthParams, x0, theta0, threshold: float = 1e-3,
                   safety: float = 2.0, tol: float = DEFAULT_TOL) -> float:
    """Twice the first time at which every characteristic from the seeds is
    within ``threshold * (b - 1)`` of X*."""
    b = params.b
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    th0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    radius = threshold * (b - 1.0)
    horizon = 10.0 / min(params.a, params.c)
    for _ in range(12):
        taus = np.linspace(0.0, horizon, 2001)
        x, th, _ = flow_batch(x0, th0, taus, params, tol)
        dist = np.max(np.hypot(x - b, th - b), axis=1)
        hit = np.nonzero(dist < radius)[0]
        if hit.size:
            return safety * float(taus[hit[0]])
        horizon *= 2.0
    raise NumericalError("characteristics did not approach X* within the search horizon")
