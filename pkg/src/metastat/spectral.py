"""Malthus parameter and eigenvectors of the renewal operator.

The growth rate ``lambda0`` is the root of

    F(lambda) = int_0^inf K(tau) exp(-lambda tau) dtau = 1,

the Laplace transform of the kernel ``K``.  Integrals against
``exp(-lambda tau)`` use product integration: the lattice samples are
interpolated linearly on each tau cell and multiplied by the exact
exponential, so constant integrands are integrated exactly.  Beyond
``tau_max`` every characteristic sits at X*, where ``beta = beta(X*)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, SubcriticalError
from .renewal import CharacteristicLattice, kernel


def exp_linear_weights(lam: float, h: float):
    """Weights ``(w0, w1)`` with ``int_0^h (w0-hat, w1-hat) exp(-lam u) du``.

    ``w0`` multiplies the left sample, ``w1`` the right one.
    """
    if lam <= 0:
        raise DomainError("decay rate must be positive")
    z = lam * h
    if z < 1e-4:
        # series of the two moments, accurate to O(z^4)
        total = h * (1.0 - z / 2.0 + z * z / 6.0 - z**3 / 24.0)
        w1 = h * (0.5 - z / 3.0 + z * z / 8.0 - z**3 / 30.0)
    else:
        e = math.exp(-z)
        total = -math.expm1(-z) / lam
        w1 = (-math.expm1(-z) - z * e) / (lam * z)
    return total - w1, w1


def _exp_moments(lam: float, h: float):
    """``int_0^h u^k exp(-lam u) du`` for ``k = 0, 1, 2``."""
    z = lam * h
    if z < 0.5:
        # alternating series, 25 terms reach machine precision for z < 0.5
        n = np.arange(25)
        coef = (-z) ** n / np.cumprod(np.concatenate([[1.0], np.arange(1.0, 25.0)]))
        return tuple(h ** (k + 1) * float(np.sum(coef / (n + k + 1))) for k in range(3))
    e = math.exp(-z)
    return (
        -math.expm1(-z) / lam,
        (1.0 - e * (1.0 + z)) / lam**2,
        (2.0 - e * (2.0 + 2.0 * z + z * z)) / lam**3,
    )


def laplace_rows(values, lam: float, tau: np.ndarray, tail_value) -> np.ndarray:
    """``int_0^inf v(tau) exp(-lam tau) dtau`` per column of ``values``.

    ``v`` is linear between rows and equal to ``tail_value`` beyond the last row.
    """
    values = np.asarray(values, dtype=float)
    h = float(tau[1] - tau[0])
    w0, w1 = exp_linear_weights(lam, h)
    decay = np.exp(-lam * tau[:-1])
    body = decay @ (w0 * values[:-1] + w1 * values[1:])
    return body + np.asarray(tail_value) * math.exp(-lam * tau[-1]) / lam


def laplace_F(lam: float, lattice: CharacteristicLattice, K=None) -> float:
    """Laplace transform of the kernel, with the analytic tail ``beta* e^{-lam tau_max} / lam``."""
    if not np.isfinite(lam) or lam <= 0:
        raise DomainError(f"F(lambda) needs lambda > 0, got {lam}")
    K = kernel(lattice) if K is None else K
    return float(laplace_rows(K, lam, lattice.tau, lattice.beta_star))


def laplace_F_prime(lam: float, lattice: CharacteristicLattice, K=None) -> float:
    """Exact derivative of :func:`laplace_F`: ``-int tau K_lin(tau) exp(-lam tau)`` plus the tail term."""
    K = kernel(lattice) if K is None else K
    tau = lattice.tau
    h = lattice.dtau
    E0, E1, E2 = _exp_moments(lam, h)
    w0, w1 = E0 - E1 / h, E1 / h
    m0, m1 = E1 - E2 / h, E2 / h
    decay = np.exp(-lam * tau[:-1])
    body = decay @ (tau[:-1] * (w0 * K[:-1] + w1 * K[1:]) + m0 * K[:-1] + m1 * K[1:])
    T = tau[-1]
    tail = lattice.beta_star * math.exp(-lam * T) * (T / lam + 1.0 / lam**2)
    return -float(body + tail)


def probe_lambda(lattice: CharacteristicLattice) -> float:
    p = lattice.params
    return 1e-3 * (p.a + p.c)


def solve_malthus(lattice: CharacteristicLattice, tol: float = 1e-12, K=None) -> float:
    """Root of ``F(lambda) = 1``: bisection to a 1e-3 relative bracket, then safeguarded Newton."""
    K = kernel(lattice) if K is None else K
    lo = probe_lambda(lattice)
    f_lo = laplace_F(lo, lattice, K)
    if not f_lo > 1.0:
        raise SubcriticalError(
            f"spectral condition violated: F({lo:.3g}) = {f_lo:.6g} <= 1", f_probe=f_lo
        )
    # F(lambda) <= max(K, beta*) / lambda
    hi = 2.0 * max(float(K.max()), lattice.beta_star)
    if hi <= lo:
        hi = 2.0 * lo
    while laplace_F(hi, lattice, K) > 1.0:
        hi *= 2.0
    while hi - lo > 1e-3 * hi:
        mid = 0.5 * (lo + hi)
        if laplace_F(mid, lattice, K) > 1.0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    for _ in range(200):
        r = laplace_F(lam, lattice, K) - 1.0
        if abs(r) <= tol:
            return lam
        if r > 0:
            lo = lam
        else:
            hi = lam
        step = lam - r / laplace_F_prime(lam, lattice, K)
        lam = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    r = laplace_F(lam, lattice, K) - 1.0
    if abs(r) > tol:
        raise NumericalError(f"Malthus root finder stalled with |F - 1| = {abs(r):.3e}")
    return lam


def is_strictly_decreasing(lattice: CharacteristicLattice, lams) -> bool:
    K = kernel(lattice)
    vals = np.array([laplace_F(l, lattice, K) for l in np.sort(np.asarray(lams, dtype=float))])
    return bool(np.all(np.diff(vals) < 0))


def direct_eigenvector(lam: float, lattice: CharacteristicLattice, C: float = 1.0) -> np.ndarray:
    """``V_tilde(tau, sigma) = C N(sigma) exp(-lam tau)``; divide by the Jacobian for physical V."""
    return C * lattice.N[None, :] * np.exp(-lam * lattice.tau)[:, None]


def adjoint_eigenvector(lam: float, lattice: CharacteristicLattice) -> np.ndarray:
    """``Psi(Phi_tau(sigma)) = int_0^inf beta(Phi_{tau+u}(sigma)) exp(-lam u) du``.

    Written in the shifted variable so no ``exp(+lam tau)`` factor appears;
    computed by a backward recursion over the rows.
    """
    w0, w1 = exp_linear_weights(lam, lattice.dtau)
    decay = math.exp(-lam * lattice.dtau)
    beta = lattice.beta
    psi = np.empty_like(beta)
    psi[-1] = lattice.beta_star / lam
    for i in range(lattice.I - 1, -1, -1):
        psi[i] = w0 * beta[i] + w1 * beta[i + 1] + decay * psi[i + 1]
    return psi


def normalize(lam: float, lattice: CharacteristicLattice, Psi: np.ndarray,
              quad_tol: float = 1e-8) -> float:
    """Constant ``C`` making ``int V Psi = 1``.

    Also checks ``int_Gamma N Psi(sigma) = 1``, which follows from the
    spectral equation; a failure there means the lattice is under-resolved.
    """
    inner = laplace_rows(Psi, lam, lattice.tau, lattice.beta_star / lam)
    P = float(np.dot(lattice.weights * lattice.N, inner))
    if not P > 0:
        raise NumericalError("non-positive eigenvector pairing")
    boundary_mass = float(np.dot(lattice.weights * lattice.N, Psi[0]))
    if abs(boundary_mass - 1.0) > 10 * quad_tol:
        raise NumericalError(
            f"int N Psi = {boundary_mass:.12g} differs from 1 by more than {10 * quad_tol:g}; "
            "refine the lattice"
        )
    return 1.0 / P


def adjoint_residual(Psi: np.ndarray, lam: float, lattice: CharacteristicLattice) -> float:
    """Max defect of ``d_tau Psi = lam Psi - beta int N Psi`` with centred differences."""
    boundary_mass = float(np.dot(lattice.weights * lattice.N, Psi[0]))
    dpsi = (Psi[2:] - Psi[:-2]) / (2.0 * lattice.dtau)
    rhs = lam * Psi[1:-1] - lattice.beta[1:-1] * boundary_mass
    return float(np.max(np.abs(dpsi - rhs)))


@dataclass(eq=False)
class SpectralSolution:
    lattice: CharacteristicLattice
    lambda0: float
    C: float
    V_tilde: np.ndarray
    Psi: np.ndarray
    residual: float

    @property
    def Psi_boundary(self) -> np.ndarray:
        return self.Psi[0]

    def psi_bounds(self):
        """``(lower, upper)`` from the lattice range of beta (X* included)."""
        beta = self.lattice.beta
        lo = min(float(beta.min()), self.lattice.beta_star)
        hi = max(float(beta.max()), self.lattice.beta_star)
        return lo / self.lambda0, hi / self.lambda0

    def bounds_ok(self, rel: float = 1e-12) -> bool:
        lo, hi = self.psi_bounds()
        return bool(self.Psi.min() >= lo * (1 - rel) and self.Psi.max() <= hi * (1 + rel))

    def boundary_mass(self) -> float:
        """``int_Gamma N Psi``; 1 for a resolved lattice."""
        return float(np.dot(self.lattice.weights * self.lattice.N, self.Psi_boundary))

    def pairing(self) -> float:
        """``int V Psi`` with the same product quadrature as :func:`normalize` (1 by construction)."""
        inner = laplace_rows(self.Psi, self.lambda0, self.lattice.tau,
                             self.lattice.beta_star / self.lambda0)
        return self.C * float(np.dot(self.lattice.weights * self.lattice.N, inner))

    def pairing_trapezoid(self) -> float:
        """``int V Psi`` by the plain lattice trapezoid used for simulated fields."""
        return self.lattice.integrate(self.V_tilde * self.Psi)

    def boundary_identity_residual(self) -> float:
        """Max over sigma of ``|V_tilde(0, sigma) - N(sigma) int beta V|``."""
        lat = self.lattice
        inner = laplace_rows(lat.beta, self.lambda0, lat.tau, lat.beta_star)
        births = self.C * float(np.dot(lat.weights * lat.N, inner))
        return float(np.max(np.abs(self.V_tilde[0] - lat.N * births)))

    def mu_bound(self) -> float:
        """Largest ``mu`` with ``beta - mu Psi >= 0`` on the lattice."""
        return float(np.min(self.lattice.beta / self.Psi))

    def summary(self) -> dict:
        lo, hi = self.psi_bounds()
        return {
            "lambda0": self.lambda0,
            "C": self.C,
            "residual": self.residual,
            "psi_min": float(self.Psi.min()),
            "psi_max": float(self.Psi.max()),
            "psi_lower_bound": lo,
            "psi_upper_bound": hi,
            "bounds_check": self.bounds_ok(),
            "boundary_mass": self.boundary_mass(),
            "adjoint_residual": adjoint_residual(self.Psi, self.lambda0, self.lattice),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def solve_spectral(lattice: CharacteristicLattice, tol: float = 1e-12,
                   quad_tol: float = 1e-8) -> SpectralSolution:
    K = kernel(lattice)
    lam = solve_malthus(lattice, tol, K)
    residual = abs(laplace_F(lam, lattice, K) - 1.0)
    Psi = adjoint_eigenvector(lam, lattice)
    C = normalize(lam, lattice, Psi, quad_tol)
    return SpectralSolution(lattice, lam, C, direct_eigenvector(lam, lattice, C), Psi, residual)
