"""Renewal equation solved along characteristics.

In lattice coordinates ``rho_tilde(t, tau, sigma) = rho(Phi_tau(sigma)) |J_Phi|``
the transport is a pure shift, ``d_t rho_tilde + d_tau rho_tilde = 0``, so

    rho_tilde(t, tau, sigma) = H(t - tau, sigma)        for tau < t
                             = rho0_tilde(tau - t, sigma) for tau > t

with the entering flux ``H(t, sigma) = N(sigma) B(t) + f(t, sigma)``.  The
total birth rate ``B(t) = int beta rho`` closes into a scalar Volterra
equation of the second kind,

    B(t) = int_0^t K(tau) B(t - tau) dtau + G(t),
    K(tau) = int_Gamma N(sigma) beta(Phi_tau(sigma)) dsigma,

which is marched with the trapezoid rule.  With ``dt == dtau`` the lattice
is aligned with the characteristics and reconstruction is an index shift.

Everything older than ``tau_max`` is truncated: it stops emitting and is
dropped from the field.  Pick ``tau_max`` (or the horizon) so that nothing
of interest reaches it; :meth:`DensityField.truncated_mass` reports what did.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .boundary import EmissionProfile, boundary_nodes, boundary_point, chart
from .errors import ConfigError, DomainError, NumericalError, StepSizeError
from .flow import (DEFAULT_TOL, GUARD_FRACTION, flow, flow_batch, in_guard, inverse_flow,
                   primary_tumor, select_tau_max)
from .growth import GrowthParams, birth_rate

log = logging.getLogger(__name__)


def trapezoid_weights(n_nodes: int, h: float) -> np.ndarray:
    """Composite trapezoid weights on ``n_nodes`` equispaced nodes (zero length if 1 node)."""
    w = np.full(n_nodes, h)
    if n_nodes == 1:
        return np.zeros(1)
    w[[0, -1]] = 0.5 * h
    return w


@dataclass(eq=False)
class CharacteristicLattice:
    """Boundary nodes x entry-time grid with the flow precomputed at every node.

    Per-node arrays have shape ``(I + 1, n_sigma)``: row ``i`` is entry time
    ``tau[i]``, column ``j`` is boundary node ``j``.
    """

    params: GrowthParams
    profile: EmissionProfile
    m: float
    alpha: float
    per_side: int
    sides: np.ndarray
    s: np.ndarray
    weights: np.ndarray
    N: np.ndarray
    g_dot_nu: np.ndarray
    tau: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    div_integral: np.ndarray
    jacobian: np.ndarray
    beta: np.ndarray
    beta_star: float
    tol: float = DEFAULT_TOL

    @property
    def I(self) -> int:
        return self.tau.size - 1

    @property
    def n_sigma(self) -> int:
        return self.s.size

    @property
    def dtau(self) -> float:
        return float(self.tau[1] - self.tau[0])

    @property
    def tau_max(self) -> float:
        return float(self.tau[-1])

    @property
    def tau_weights(self) -> np.ndarray:
        return trapezoid_weights(self.tau.size, self.dtau)

    def integrate(self, values) -> float:
        """Trapezoid in tau, boundary rule in sigma, over the whole lattice."""
        values = np.asarray(values, dtype=float)
        return float(self.tau_weights @ values @ self.weights)

    def boundary_integral(self, values) -> float:
        return float(np.dot(self.weights, values))

    def beta_at(self, x, theta=None):
        return birth_rate(x, self.m, self.alpha)


def build_lattice(params: GrowthParams, profile: EmissionProfile | None = None, I: int = 128,
                  J: int = 128, tau_max: float | None = None, m: float = 0.1,
                  alpha: float = 2.0 / 3.0, tol: float = DEFAULT_TOL,
                  threshold: float = 1e-3) -> CharacteristicLattice:
    """Precompute the flow, Jacobian and birth rate on ``I+1`` entry times x ``4J`` boundary nodes.

    Boundary nodes are cell midpoints, ``J`` per side.  The discrete emission
    profile is renormalised so that the lattice quadrature of ``N`` is 1.
    Without ``tau_max`` the horizon is twice the time the characteristics of
    the support of ``N`` need to come within ``threshold (b-1)`` of X*.
    """
    if I < 2 or J < 2:
        raise DomainError("lattice needs I >= 2 and J >= 2")
    if m < 0 or not np.isfinite(m) or not np.isfinite(alpha):
        raise ConfigError("birth rate needs finite m >= 0 and finite alpha")
    b = params.b
    profile = EmissionProfile.hat(b) if profile is None else profile
    sides, s, weights = boundary_nodes(b, J, "midpoint")
    N = np.asarray(profile.value(sides, s), dtype=float)
    total = float(np.dot(weights, N))
    if total <= 0:
        raise ConfigError("emission profile vanishes on every lattice node; refine J")
    N = N / total
    gnu = np.asarray([boundary_point(sd, si, params).g_dot_nu for sd, si in zip(sides, s)])
    x0, th0 = chart(sides, s, b)
    if tau_max is None:
        support = N > 0
        tau_max = select_tau_max(params, x0[support], th0[support], threshold=threshold, tol=tol)
    if not np.isfinite(tau_max) or tau_max <= 0:
        raise DomainError("tau_max must be positive")
    tau = np.linspace(0.0, float(tau_max), I + 1)
    try:
        x, th, L = flow_batch(x0, th0, tau, params, tol)
    except NumericalError as exc:
        for j in range(s.size):
            try:
                flow_batch(x0[j:j + 1], th0[j:j + 1], tau, params, tol)
            except NumericalError as inner:
                raise NumericalError(
                    f"characteristic from side {sides[j]}, s={s[j]:.6g}: {inner}", state=inner.state
                ) from exc
        raise
    jac = np.abs(gnu)[None, :] * np.exp(L)
    beta = birth_rate(x, m, alpha)
    return CharacteristicLattice(
        params=params, profile=profile, m=float(m), alpha=float(alpha), per_side=J,
        sides=sides, s=s, weights=weights, N=N, g_dot_nu=gnu, tau=tau, x=x, theta=th,
        div_integral=L, jacobian=jac, beta=beta, beta_star=float(birth_rate(b, m, alpha)), tol=tol,
    )


def kernel(lattice: CharacteristicLattice) -> np.ndarray:
    """``K(tau_i) = int_Gamma N(sigma) beta(Phi_{tau_i}(sigma)) dsigma``."""
    return lattice.beta @ (lattice.weights * lattice.N)


def initial_tail(lattice: CharacteristicLattice, rho0_tilde, n: int) -> float:
    """Births at ``t_n`` from individuals already present at t = 0.

    ``int_{t_n}^{tau_max} int_Gamma beta_tilde(tau, sigma) rho0_tilde(tau - t_n, sigma)``,
    a trapezoid over the shifted rows (exact shift since dt == dtau).
    """
    rho0 = np.asarray(rho0_tilde, dtype=float)
    I = lattice.I
    if n >= I:
        if n > I and np.any(rho0 != 0):
            log.warning("t=%g is beyond tau_max=%g: initial data has left the lattice, tail set to 0",
                        n * lattice.dtau, lattice.tau_max)
        return 0.0
    rows = lattice.beta[n:] * rho0[: I + 1 - n]
    return float(trapezoid_weights(I + 1 - n, lattice.dtau) @ rows @ lattice.weights)


def source_forcing(lattice: CharacteristicLattice, f: np.ndarray) -> np.ndarray:
    """``G_f(t_n) = int_0^{t_n} int_Gamma beta_tilde(tau, sigma) f(t_n - tau, sigma)``."""
    f = np.asarray(f, dtype=float)
    n_t = f.shape[0]
    h = lattice.dtau
    out = np.zeros(n_t)
    bw = lattice.beta * lattice.weights[None, :]
    for n in range(1, n_t):
        m = min(n, lattice.I)
        w = trapezoid_weights(m + 1, h)
        vals = np.einsum("ij,ij->i", bw[: m + 1], f[n - np.arange(m + 1)])
        out[n] = float(w @ vals)
    return out


def solve_birth_rate(K, G, dt: float) -> np.ndarray:
    """March ``B(t) = int_0^t K(tau) B(t - tau) dtau + G(t)`` with the trapezoid rule.

    ``K`` is sampled on ``tau_k = k dt``; beyond its last sample the kernel is
    zero (lattice truncation).  The implicit diagonal term ``dt/2 K(0) B(t_n)``
    is moved to the left-hand side, which needs ``dt/2 K(0) < 1``.
    """
    K = np.asarray(K, dtype=float)
    G = np.asarray(G, dtype=float)
    diag = 0.5 * dt * K[0]
    if diag >= 1.0:
        raise StepSizeError(
            f"dt/2*K(0) = {diag:.3g} >= 1: the trapezoid march is singular; halve dt (increase I)"
        )
    B = np.empty_like(G)
    B[0] = G[0]
    kmax = K.size - 1
    for n in range(1, G.size):
        m = min(n, kmax)
        wk = K[1: m + 1].copy()
        wk[-1] *= 0.5
        hist = B[n - 1:n - m - 1 if n - m - 1 >= 0 else None:-1]
        B[n] = (G[n] + dt * float(wk @ hist)) / (1.0 - diag)
    return B


@dataclass
class SourceTerm:
    """Boundary source ``f(t, sigma)``.

    ``mode`` is ``"none"``, ``"primary_tumor"`` (``f = N(sigma) beta(X_p(t))``
    with ``X_p(0) = x_p0``) or ``"table"`` (``samples`` of shape
    ``(n_t, n_sigma)`` on the run's time grid).
    """

    mode: str = "none"
    x_p0: tuple | None = None
    samples: np.ndarray | None = field(default=None, repr=False)

    def realize(self, lattice: CharacteristicLattice, t) -> np.ndarray | None:
        t = np.asarray(t, dtype=float)
        if self.mode == "none":
            return None
        if self.mode == "primary_tumor":
            if self.x_p0 is None:
                raise ConfigError("primary_tumor source needs x_p0")
            xp = primary_tumor(self.x_p0, t, lattice.params, lattice.tol)
            return lattice.N[None, :] * lattice.beta_at(xp[:, 0])[:, None]
        if self.mode == "table":
            f = np.asarray(self.samples, dtype=float)
            if f.shape != (t.size, lattice.n_sigma):
                raise DomainError(f"source table shape {f.shape} != {(t.size, lattice.n_sigma)}")
            if np.any(f < 0):
                log.warning("source table has negative entries; positivity results do not apply")
            return f
        raise ConfigError(f"unknown source mode {self.mode!r}")


@dataclass(eq=False)
class DensityField:
    """Transported density on the lattice, stored as its generating data.

    ``snapshot(n)`` rebuilds ``rho_tilde(t_n, ., .)`` by index shifts; the
    full ``(n_t, I+1, n_sigma)`` array is only materialised by ``rho_tilde``.
    On the interface row ``tau = t_n`` the snapshot holds the entering
    (boundary) value; quadratures split there and use each side's value.
    """

    lattice: CharacteristicLattice
    t: np.ndarray
    B: np.ndarray
    rho0: np.ndarray
    f: np.ndarray | None = None

    @property
    def n_t(self) -> int:
        return self.t.size

    def inflow(self, k: int) -> np.ndarray:
        """Entering flux ``H(t_k, .) = N B(t_k) + f(t_k, .)``."""
        h = self.lattice.N * self.B[k]
        return h + self.f[k] if self.f is not None else h

    def _history(self, n: int, m: int) -> np.ndarray:
        k = n - np.arange(m + 1)
        h = self.lattice.N[None, :] * self.B[k][:, None]
        if self.f is not None:
            h = h + self.f[k]
        return h

    def snapshot(self, n: int) -> np.ndarray:
        if n == 0:
            return self.rho0.copy()
        I = self.lattice.I
        m = min(n, I)
        out = np.empty_like(self.rho0)
        out[: m + 1] = self._history(n, m)
        if n < I:
            out[n + 1:] = self.rho0[1: I - n + 1]
        return out

    @property
    def rho_tilde(self) -> np.ndarray:
        return np.stack([self.snapshot(n) for n in range(self.n_t)])

    def pieces(self, n: int):
        """``[(rows, values, tau_weights), ...]`` covering [0, tau_max] at time ``t_n``."""
        I = self.lattice.I
        h = self.lattice.dtau
        if n == 0:
            return [(np.arange(I + 1), self.rho0, trapezoid_weights(I + 1, h))]
        m = min(n, I)
        out = [(np.arange(m + 1), self._history(n, m), trapezoid_weights(m + 1, h))]
        if n < I:
            out.append((np.arange(n, I + 1), self.rho0[: I + 1 - n], trapezoid_weights(I + 1 - n, h)))
        return out

    def quadrature(self, n: int, integrand) -> float:
        """``sum`` of ``integrand(rows, values)`` over the split lattice quadrature."""
        total = 0.0
        for rows, values, wt in self.pieces(n):
            total += float(wt @ np.asarray(integrand(rows, values)) @ self.lattice.weights)
        return total

    def truncated_mass(self, n: int) -> float:
        """Mass that has aged past ``tau_max`` by ``t_n`` (dropped from the field)."""
        I = self.lattice.I
        h = self.lattice.dtau
        lost = 0.0
        if n > I:
            flux = np.array([self.lattice.boundary_integral(self.inflow(k)) for k in range(n - I + 1)])
            lost += float(trapezoid_weights(flux.size, h) @ flux)
        shift = min(n, I)
        if shift > 0:
            tail = self.rho0[I - shift:] @ self.lattice.weights
            lost += float(trapezoid_weights(tail.size, h) @ tail)
        return lost


def reconstruct(lattice: CharacteristicLattice, t, B, rho0_tilde=None, f=None) -> DensityField:
    t = np.asarray(t, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.shape != t.shape:
        raise DomainError("B must be sampled on the time grid")
    if t.size > 1 and not np.isclose(t[1] - t[0], lattice.dtau, rtol=1e-12, atol=0):
        raise DomainError("time step must equal the lattice tau step")
    shape = (lattice.I + 1, lattice.n_sigma)
    rho0 = np.zeros(shape) if rho0_tilde is None else np.asarray(rho0_tilde, dtype=float)
    if rho0.shape != shape:
        raise DomainError(f"initial data shape {rho0.shape} != lattice shape {shape}")
    if f is not None and np.asarray(f).shape != (t.size, lattice.n_sigma):
        raise DomainError("source samples must have shape (n_t, n_sigma)")
    return DensityField(lattice, t, B, rho0, None if f is None else np.asarray(f, dtype=float))


def time_grid(lattice: CharacteristicLattice, horizon: float) -> np.ndarray:
    """Grid ``0, dtau, ...`` covering ``[0, horizon]`` (last point >= horizon)."""
    n = int(np.ceil(horizon / lattice.dtau - 1e-9))
    return lattice.dtau * np.arange(n + 1)


def simulate(lattice: CharacteristicLattice, horizon: float, rho0_tilde=None,
             source: SourceTerm | None = None) -> DensityField:
    """Solve the full problem on ``[0, horizon]`` and return the density field."""
    t = time_grid(lattice, horizon)
    shape = (lattice.I + 1, lattice.n_sigma)
    rho0 = np.zeros(shape) if rho0_tilde is None else np.asarray(rho0_tilde, dtype=float)
    if rho0.shape != shape:
        raise DomainError(f"initial data shape {rho0.shape} != lattice shape {shape}")
    f = (source or SourceTerm()).realize(lattice, t)
    G = np.zeros(t.size)
    covered = min(t.size, lattice.I + 1)
    G[:covered] = [initial_tail(lattice, rho0, n) for n in range(covered)]
    if t.size > covered and np.any(rho0 != 0):
        log.warning("horizon %g exceeds tau_max=%g: initial data leaves the lattice", t[-1], lattice.tau_max)
    if f is not None:
        G = G + source_forcing(lattice, f)
    B = solve_birth_rate(kernel(lattice), G, lattice.dtau)
    out = reconstruct(lattice, t, B, rho0, f)
    lost = out.truncated_mass(t.size - 1)
    if lost > 0:
        log.info("mass aged past tau_max by t=%g: %.3e", t[-1], lost)
    return out


def weighted_mass(field: DensityField, n: int, w=None) -> float:
    """``int_Omega rho(t_n) w``, computed as ``sum rho_tilde w(Phi_tau(sigma))`` on the lattice.

    ``w`` may be ``None`` (total mass), an array on the lattice, or a callable
    ``w(x, theta)``.
    """
    lat = field.lattice
    if w is None:
        return field.quadrature(n, lambda rows, v: v)
    if callable(w):
        w = w(lat.x, lat.theta)
    w = np.broadcast_to(np.asarray(w, dtype=float), lat.x.shape)
    return field.quadrature(n, lambda rows, v: v * w[rows])


def rho0_from_physical(lattice: CharacteristicLattice, func, guard_fraction: float = GUARD_FRACTION):
    """Convert a physical initial density ``func(x, theta)`` to lattice form.

    Nodes inside the guard disc around X* are zeroed (with a warning when
    that drops mass).
    """
    rho = np.asarray(func(lattice.x, lattice.theta), dtype=float) * lattice.jacobian
    guard = in_guard(lattice.x, lattice.theta, lattice.params, guard_fraction)
    if np.any(guard):
        dropped = lattice.integrate(np.where(guard, rho, 0.0))
        if abs(dropped) > 1e-12 * lattice.integrate(np.abs(rho)):
            log.warning("dropped initial mass %.3e inside the X* guard region", dropped)
        rho = np.where(guard, 0.0, rho)
    return rho


def to_physical(field: DensityField, n: int, p, guard_fraction: float = GUARD_FRACTION) -> float:
    """Physical density ``rho(t_n, p)`` by bilinear interpolation in ``(tau, s)``.

    Raises :class:`SingularityError` inside the guard disc around X*.
    """
    lat = field.lattice
    tau, sigma = inverse_flow(p, lat.params, lat.tol, guard_fraction)
    if tau > lat.tau_max:
        raise DomainError(f"entry time {tau:.4g} exceeds tau_max={lat.tau_max:.4g}")
    cols = np.nonzero(lat.sides == int(sigma.side))[0]
    snap = field.snapshot(n)[:, cols]
    s_nodes = lat.s[cols]
    # linear in s on every row, then linear in tau
    i = min(int(tau // lat.dtau), lat.I - 1)
    frac = (tau - lat.tau[i]) / lat.dtau
    lo = np.interp(sigma.s, s_nodes, snap[i])
    hi = np.interp(sigma.s, s_nodes, snap[i + 1])
    rho_tilde = (1.0 - frac) * lo + frac * hi
    jac = flow(sigma, tau, lat.params, lat.tol).jacobian
    return float(rho_tilde / jac)
