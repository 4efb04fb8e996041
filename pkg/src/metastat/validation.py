"""Invariant battery behind ``metastat validate``.

Each check returns a :class:`CheckResult`; checks that need the spectral
solution are skipped, not failed, when the configuration is subcritical.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import (check_comparison, check_contraction, check_mean_value, convergence_report,
                       gronwall_bound, balance_residual, mass_series)
from .boundary import boundary_point
from .config import RunConfig
from .errors import MetastatError, NumericalError, SubcriticalError
from .flow import flow, in_guard, inverse_flow
from .renewal import SourceTerm, simulate
from .runs import initial_data, make_lattice, source_term
from .spectral import solve_spectral

log = logging.getLogger(__name__)

PASS, FAIL, SKIP, ERROR = "pass", "fail", "skipped", "error"


@dataclass
class CheckResult:
    name: str
    status: str
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, **self.detail}


def worker_count() -> int:
    """Thread cap from ``METASTAT_THREADS`` (default: CPU count, at most 8)."""
    raw = os.environ.get("METASTAT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = min(8, os.cpu_count() or 1)
    return max(1, n)


def random_interior_points(params, n: int, rng, guard_fraction: float = 1e-6) -> np.ndarray:
    """``n`` uniform points of the open square outside the guard disc around X*."""
    b = params.b
    pts = []
    while len(pts) < n:
        p = 1.0 + (b - 1.0) * rng.random(2)
        if 1.0 < p[0] < b and 1.0 < p[1] < b and not in_guard(p[0], p[1], params, guard_fraction):
            pts.append(p)
    return np.array(pts)


def roundtrip_errors(params, points, tol: float) -> np.ndarray:
    """``|Phi(tau(X), sigma(X)) - X|`` for every point."""
    errs = []
    for p in points:
        tau, sigma = inverse_flow(p, params, tol)
        q = flow(sigma, tau, params, tol).position
        errs.append(np.hypot(q[0] - p[0], q[1] - p[1]))
    return np.array(errs)


def jacobian_fd_errors(params, samples, tol: float, h: float = 1e-4) -> np.ndarray:
    """Relative gap between the integrated Jacobian and the central-difference determinant.

    ``samples`` holds ``(tau, side, s)`` triples.
    """
    errs = []
    for tau, side, s in samples:
        sig = boundary_point(side, s, params)
        jac = flow(sig, tau, params, tol).jacobian

        def pos(t, ss):
            return np.array(flow(boundary_point(side, ss, params), t, params, tol).position)

        d_tau = (pos(tau + h, s) - pos(tau - h, s)) / (2 * h)
        d_s = (pos(tau, s + h) - pos(tau, s - h)) / (2 * h)
        det = abs(d_tau[0] * d_s[1] - d_tau[1] * d_s[0])
        errs.append(abs(jac - det) / det)
    return np.array(errs)


def random_flow_samples(params, n: int, rng, tau_range=(0.05, 4.0)):
    length = params.b - 1.0
    taus = rng.uniform(*tau_range, n)
    sides = rng.integers(1, 5, n)
    s = rng.uniform(0.05 * length, 0.95 * length, n)
    return list(zip(taus, sides, s))


class Battery:
    """Shared state (lattice, spectral solution, base run) for the checks."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.rng_seed = cfg.run.seed
        self.lattice = make_lattice(cfg)
        self.rho0 = initial_data(cfg, self.lattice)
        self.source = source_term(cfg, self.lattice)
        self.field = simulate(self.lattice, cfg.grid.horizon, self.rho0, self.source)
        self.spectral = None
        self.subcritical = None
        try:
            self.spectral = solve_spectral(self.lattice, cfg.tolerances.root_tol, cfg.tolerances.quad_tol)
        except SubcriticalError as exc:
            self.subcritical = str(exc)

    def rng(self, salt: int):
        return np.random.default_rng([self.rng_seed, salt])

    def _need_spectral(self, name):
        if self.spectral is None:
            return CheckResult(name, SKIP, {"reason": self.subcritical})
        return None

    def flow_roundtrip(self):
        p = self.cfg.growth
        pts = random_interior_points(p, self.cfg.run.flow_samples, self.rng(1))
        err = roundtrip_errors(p, pts, self.cfg.tolerances.ode_tol)
        limit = 1e-6 * (p.b - 1.0)
        return CheckResult("flow_roundtrip", PASS if err.max() <= limit else FAIL,
                           {"max_error": float(err.max()), "limit": limit, "samples": int(err.size)})

    def jacobian_fd(self):
        p = self.cfg.growth
        n = max(1, self.cfg.run.flow_samples // 5)
        err = jacobian_fd_errors(p, random_flow_samples(p, n, self.rng(2)), min(self.cfg.tolerances.ode_tol, 1e-11))
        return CheckResult("jacobian_fd", PASS if err.max() <= 1e-4 else FAIL,
                           {"max_relative_error": float(err.max()), "limit": 1e-4, "samples": n})

    def constant_beta_oracle(self):
        beta_c = 0.7
        lat = make_lattice(self.cfg, m=beta_c, alpha=0.0)
        sol = solve_spectral(lat, self.cfg.tolerances.root_tol, self.cfg.tolerances.quad_tol)
        detail = {
            "lambda0_rel_error": abs(sol.lambda0 / beta_c - 1.0),
            "psi_max_deviation": float(np.max(np.abs(sol.Psi - 1.0))),
            "C_rel_error": abs(sol.C / sol.lambda0 - 1.0),
        }
        ok = detail["lambda0_rel_error"] <= 1e-8 and detail["psi_max_deviation"] <= 1e-6 and detail["C_rel_error"] <= 1e-6
        return CheckResult("constant_beta_oracle", PASS if ok else FAIL, detail)

    def spectral_check(self):
        skip = self._need_spectral("spectral")
        if skip:
            return skip
        sol = self.spectral
        tol = self.cfg.tolerances
        detail = sol.summary()
        detail["pairing"] = sol.pairing()
        ok = (sol.residual <= tol.root_tol and sol.bounds_ok()
              and abs(detail["boundary_mass"] - 1.0) <= 10 * tol.quad_tol
              and abs(detail["pairing"] - 1.0) <= 10 * tol.quad_tol)
        return CheckResult("spectral", PASS if ok else FAIL, detail)

    def mean_value(self):
        skip = self._need_spectral("mean_value")
        if skip:
            return skip
        err = check_mean_value(self.field, self.spectral)
        limit = self.cfg.tolerances.mean_value_tol
        return CheckResult("mean_value", PASS if err.max() <= limit else FAIL,
                           {"max_relative_error": float(err.max()), "limit": limit})

    def contraction(self):
        skip = self._need_spectral("contraction")
        if skip:
            return skip
        lat = self.lattice
        signed = self.rho0 * np.cos(3.0 * np.pi * lat.tau / lat.tau_max)[:, None]
        run = simulate(lat, self.cfg.grid.horizon, signed, self.source)
        ok, margins = check_contraction(run, self.spectral)
        return CheckResult("contraction", PASS if ok else FAIL,
                           {"min_margin": float(margins.min()), "max_margin": float(margins.max())})

    def comparison(self):
        rng = self.rng(3)
        lat = self.lattice
        base = np.abs(self.rho0) if np.any(self.rho0) else lat.N[None, :] * np.exp(-lat.tau)[:, None]
        source = self.source if self.source.mode != "table" or np.all(self.source.samples >= 0) else SourceTerm()
        total, first = 0, None
        for _ in range(self.cfg.run.comparison_pairs):
            rho_b = base * rng.uniform(0.5, 1.5, base.shape)
            rho_a = rho_b * rng.random(base.shape)
            res = check_comparison(lat, rho_a, rho_b, self.cfg.grid.horizon, source)
            total += res.violations
            first = first or res.first
        return CheckResult("comparison", PASS if total == 0 else FAIL,
                           {"pairs": self.cfg.run.comparison_pairs, "violations": total,
                            "first_violation": list(first) if first else None})

    def balance(self):
        res = balance_residual(self.field)
        if res.size == 0:
            return CheckResult("balance", SKIP, {"reason": "horizon shorter than three grid times"})
        scale = max(float(np.max(np.abs(self.field.B))), 1e-300)
        rel = float(res.max()) / scale if np.any(self.field.B) else float(res.max())
        limit = 1e-2
        return CheckResult("balance", PASS if rel <= limit else FAIL,
                           {"max_residual_relative_to_births": rel, "limit": limit})

    def gronwall(self):
        run = simulate(self.lattice, self.cfg.grid.horizon, self.rho0)
        mass = mass_series(run)
        bound = gronwall_bound(run)
        ok = bool(np.all(mass <= bound * (1 + 1e-6)))
        return CheckResult("gronwall", PASS if ok else FAIL,
                           {"max_ratio": float(np.max(mass / np.maximum(bound, 1e-300)))})

    def convergence(self):
        skip = self._need_spectral("convergence")
        if skip:
            return skip
        lat, sol, T = self.lattice, self.spectral, self.cfg.grid.horizon
        homog = convergence_report(simulate(lat, T, self.rho0), sol)
        eig = convergence_report(simulate(lat, T, sol.V_tilde), sol)
        d0 = float(eig.deviation[0])
        steady_ratio = float(eig.deviation.max() / d0) if d0 > 0 else 0.0
        detail = {
            "monotone": homog.monotone(),
            "fitted_rate": homog.fitted_rate,
            "mu_bound": homog.mu_bound,
            "eigen_steadiness_ratio": steady_ratio,
        }
        ok = homog.monotone() and steady_ratio <= 10.0
        if homog.fitted_rate is not None:
            ok = ok and homog.fitted_rate >= 0.5 * homog.mu_bound
        if self.field.f is not None:
            mu = min(homog.mu_bound, 0.5 * sol.lambda0)
            forced = convergence_report(self.field, sol, mu=mu)
            holds = bool(np.all(forced.deviation <= forced.bound_rhs * (1 + 1e-9) + 1e-14))
            detail["forced_bound_holds"] = holds
            ok = ok and holds
        return CheckResult("convergence", PASS if ok else FAIL, detail)

    CHECKS = ("flow_roundtrip", "jacobian_fd", "constant_beta_oracle", "spectral_check", "mean_value",
              "contraction", "comparison", "balance", "gronwall", "convergence")

    def _run_one(self, name):
        try:
            return getattr(self, name)()
        except (MetastatError, ValueError) as exc:
            label = name.replace("_check", "")
            kind = ERROR if isinstance(exc, NumericalError) else FAIL
            return CheckResult(label, kind, {"reason": f"{type(exc).__name__}: {exc}"})

    def run(self, workers: int | None = None) -> list[CheckResult]:
        workers = worker_count() if workers is None else workers
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self._run_one, self.CHECKS))


def overall_status(results) -> str:
    statuses = {r.status for r in results}
    if ERROR in statuses:
        return ERROR
    if FAIL in statuses:
        return FAIL
    return SKIP if SKIP in statuses else PASS
