"""Command line entry point: ``metastat <phase|spectral|simulate|validate>``.

Exit codes: 0 success, 1 failed check or subcritical configuration,
2 configuration or I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import balance_residual, convergence_report, gronwall_bound, mass_series
from .boundary import chart
from .config import RunConfig
from .errors import ConfigError, NumericalError, SubcriticalError
from .flow import GUARD_FRACTION, in_guard, primary_tumor
from .renewal import simulate
from .runs import initial_data, make_lattice, source_term
from .spectral import laplace_F, solve_spectral
from .validation import PASS, Battery, overall_status

log = logging.getLogger("metastat")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj)}")


def boundary_seeds(params, n: int):
    """``n`` points evenly spaced in arc length along the whole boundary, never at a corner."""
    length = params.b - 1.0
    arc = (np.arange(n) + 0.5) * 4.0 * length / n
    side = (arc // length).astype(int) + 1
    s = arc - (side - 1) * length
    return chart(side, s, params.b)


def phase_rows(params, seeds, t_grid, tol):
    """``(seed_id, t, x, theta)`` rows; a seed at X* gives one stationary row."""
    b = params.b
    for k, (x0, th0) in enumerate(seeds):
        if x0 == b and th0 == b:
            yield (k, float(t_grid[0]), b, b)
            continue
        traj = primary_tumor((x0, th0), t_grid, params, tol)
        for t, (x, th) in zip(t_grid, traj):
            yield (k, t, x, th)


def cmd_phase(cfg: RunConfig, out: Path) -> int:
    r = cfg.run
    xs, ths = boundary_seeds(cfg.growth, r.n_trajectories)
    t = np.linspace(0.0, r.phase_horizon, r.phase_samples)
    write_csv(out / "phase.csv", ("seed_id", "t", "x", "theta"),
              phase_rows(cfg.growth, zip(xs, ths), t, cfg.tolerances.ode_tol))
    return EXIT_OK


def _eigen_rows(lat, sol):
    for i, tau in enumerate(lat.tau):
        for j in range(lat.n_sigma):
            yield (lat.sides[j], lat.s[j], tau, lat.x[i, j], lat.theta[i, j], sol.V_tilde[i, j], sol.Psi[i, j])


def cmd_spectral(cfg: RunConfig, out: Path) -> int:
    r = cfg.run
    lat = make_lattice(cfg)
    lams = list(np.linspace(r.lambda_min, r.lambda_max, r.n_lambda))
    summary = {"status": PASS}
    code = EXIT_OK
    try:
        sol = solve_spectral(lat, cfg.tolerances.root_tol, cfg.tolerances.quad_tol)
    except SubcriticalError as exc:
        sol = None
        summary = {"status": "subcritical", "reason": str(exc), "F_probe": exc.f_probe}
        code = EXIT_FAIL
    if sol is not None:
        lams.append(sol.lambda0)
        summary.update(sol.summary())
        summary["pairing"] = sol.pairing()
        write_csv(out / "eigenvectors.csv", ("side", "s", "tau", "x", "theta", "V_tilde", "Psi"),
                  _eigen_rows(lat, sol))
    lams = sorted(lams)
    F = [laplace_F(l, lat) for l in lams]
    summary["scan_strictly_decreasing"] = bool(np.all(np.diff(F) < 0))
    write_csv(out / "spectral_scan.csv", ("lambda", "F"), zip(lams, F))
    write_json(out / "spectral.json", summary)
    return code


def snapshot_indices(times, field):
    idx = sorted({int(np.clip(np.rint(t / field.lattice.dtau), 0, field.n_t - 1)) for t in times})
    return idx


def _snapshot_rows(field, indices):
    lat = field.lattice
    guard = in_guard(lat.x, lat.theta, lat.params, GUARD_FRACTION)
    for n in indices:
        rho = field.snapshot(n)
        phys = np.where(guard, np.nan, rho / lat.jacobian)
        for i, tau in enumerate(lat.tau):
            for j in range(lat.n_sigma):
                yield (field.t[n], lat.sides[j], lat.s[j], tau, lat.x[i, j], lat.theta[i, j],
                       rho[i, j], lat.jacobian[i, j], phys[i, j])


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    lat = make_lattice(cfg)
    rho0 = initial_data(cfg, lat)
    field = simulate(lat, cfg.grid.horizon, rho0, source_term(cfg, lat))
    write_csv(out / "snapshots.csv",
              ("t", "side", "s", "tau", "x", "theta", "rho_tilde", "jacobian", "rho_physical"),
              _snapshot_rows(field, snapshot_indices(cfg.run.snapshots, field)))
    write_csv(out / "birth_rate.csv", ("t", "B"), zip(field.t, field.B))
    mass = mass_series(field)
    res = balance_residual(field)
    report = {
        "status": PASS,
        "tau_max": lat.tau_max,
        "dtau": lat.dtau,
        "truncated_mass": field.truncated_mass(field.n_t - 1),
        "final_mass": float(mass[-1]),
        "balance_residual_max": float(res.max()) if res.size else 0.0,
        "gronwall_holds": bool(np.all(mass <= gronwall_bound(field) * (1 + 1e-6))),
    }
    code = EXIT_OK
    try:
        sol = solve_spectral(lat, cfg.tolerances.root_tol, cfg.tolerances.quad_tol)
    except SubcriticalError as exc:
        report.update(status="subcritical", reason=str(exc))
        write_csv(out / "mass.csv", ("t", "mass"), zip(field.t, mass))
        code = EXIT_FAIL
    else:
        rep = convergence_report(field, sol)
        report["spectral"] = sol.summary()
        report["convergence"] = rep.summary()
        write_csv(out / "mass.csv", ("t", "mass", "psi_mass", "m_closed_form", "deviation", "bound_rhs"),
                  rep.rows())
    write_json(out / "report.json", report)
    return code


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    battery = Battery(cfg)
    results = battery.run()
    status = overall_status(results)
    report = {"status": status, "checks": [r.to_dict() for r in results]}
    write_json(out / "validate.json", report)
    for r in results:
        print(f"{r.name:22s} {r.status}")
    print(f"overall: {status}")
    return {PASS: EXIT_OK, "error": EXIT_NUMERICAL}.get(status, EXIT_FAIL)


COMMANDS = {"phase": cmd_phase, "spectral": cmd_spectral, "simulate": cmd_simulate, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metastat", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="INI run configuration")
    ap.add_argument("--out", default=".", help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, help="override run.seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
