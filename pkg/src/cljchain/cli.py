"""Batch front end.

Subcommands: validate, continuum, discrete, cell, gamma-scan, decay.
A single JSON config describes the model, the chain (L and force), the
sweep of N values and the cell window, e.g.::

    {
      "model": {"builtin": "default"},
      "chain": {"N": 64, "L": 1.1, "force": {"kind": "zero"}},
      "sweep": [32, 64, 128],
      "cell_window": 64,
      "tol": 1e-12
    }

Exit codes: 0 success, 1 assumption/criterion failure, 2 input error,
3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import discrete as disc
from .cell import decay_check, minimize_cell, _cell_gradient
from .continuum import solve_continuum
from .discrete import ChainConfig, force_from_json
from .potentials import PotentialSet, StrainGrid, model_from_json, shifted_potentials, validate_assumptions
from .solver import SolveOptions, minimize_discrete

EXIT_OK = 0
EXIT_CRITERION = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3

NOISE_FLOOR = 1e-9


class SpecError(Exception):
    pass


@dataclass
class ExperimentSpec:
    model: PotentialSet
    model_doc: dict
    N: int
    L: float
    force_doc: dict
    sweep: list
    cell_window: int
    tol: float

    @property
    def force(self):
        return force_from_json(self.force_doc)

    def chain(self, N=None) -> ChainConfig:
        return ChainConfig(self.model, N if N is not None else self.N,
                           self.L, self.force)


def load_spec(path, tol_override=None) -> ExperimentSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read config {path}: {exc}") from exc
    try:
        model_doc = doc["model"]
        model = model_from_json(model_doc)
        chain = doc.get("chain", {})
        N = int(chain.get("N", 64))
        L = float(chain.get("L", 1.1))
        force_doc = chain.get("force", {"kind": "zero"})
        force_from_json(force_doc)  # validate early
        sweep = [int(v) for v in doc.get("sweep", [])]
        cell_window = int(doc.get("cell_window", 64))
        tol = float(doc.get("tol", 1e-12))
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"bad config {path}: {exc}") from exc
    if tol_override is not None:
        tol = tol_override
    if sweep and any(b <= a for a, b in zip(sweep, sweep[1:])):
        raise SpecError("sweep N values must be strictly increasing")
    if cell_window < 8:
        raise SpecError("cell_window must be at least 8")
    return ExperimentSpec(model=model, model_doc=model_doc, N=N, L=L,
                          force_doc=force_doc, sweep=sweep,
                          cell_window=cell_window, tol=tol)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else f"{v:.17g}" for v in row])


def cmd_validate(spec: ExperimentSpec, out: Path) -> int:
    report = validate_assumptions(spec.model, StrainGrid())
    (out / "validation.json").write_text(json.dumps(report.to_json(), indent=2))
    for c in report.checks:
        status = "pass" if c.passed else f"FAIL (witness t={c.witness_t})"
        print(f"assumption {c.assumption}: {status}")
    return EXIT_OK if report.passed else EXIT_CRITERION


def cmd_continuum(spec: ExperimentSpec, out: Path) -> int:
    cfg = spec.chain()
    cont = solve_continuum(cfg, tol=spec.tol)
    _write_csv(out / "continuum.csv", ["x", "sigma", "Dybar", "ybar"],
               zip(cont.x_samples, cont.sigma_samples,
                   cont.Dybar_samples, cont.ybar_samples))
    (out / "continuum.json").write_text(json.dumps(cont.summary(), indent=2))
    print(f"Sigma = {cont.Sigma:.12g}, F0 = {cont.F0_value:.12g}, "
          f"residual = {cont.residual:.3g}")
    return EXIT_OK


def cmd_discrete(spec: ExperimentSpec, out: Path) -> int:
    cfg = spec.chain()
    cont = solve_continuum(cfg, tol=spec.tol)
    res = minimize_discrete(cfg, SolveOptions(tol=spec.tol), cont=cont)
    disc.deformation_to_csv(res.y, out / "deformation.csv")
    (out / "discrete.json").write_text(json.dumps(res.to_json(cfg, cont), indent=2))
    print(f"N={cfg.N}: converged in {res.iterations} iterations, "
          f"residual {res.residual:.3g}")
    return EXIT_OK


def _solve_cell(spec: ExperimentSpec):
    cfg = spec.chain()
    cont = solve_continuum(cfg, tol=spec.tol)
    sol = minimize_cell(spec.model, cont.F0_strain, R=spec.cell_window, tol=spec.tol)
    return cont, sol


def _cell_rows(spec: ExperimentSpec, sol):
    shifted = shifted_potentials(spec.model, sol.F0_strain)
    resid = np.abs(_cell_gradient(shifted, sol.R, sol.r))
    return [(i - sol.R, sol.r[i], resid[i]) for i in range(2 * sol.R + 1)]


def cmd_cell(spec: ExperimentSpec, out: Path) -> int:
    cont, sol = _solve_cell(spec)
    report = decay_check(sol, spec.model)
    _write_csv(out / "cell.csv", ["i", "r_i", "el_residual_i"], _cell_rows(spec, sol))
    summary = dict(sol.summary(), tail_ratio=report.right.tail_ratio)
    (out / "cell.json").write_text(json.dumps(summary, indent=2))
    print(f"R={sol.R}: energy {sol.energy:.12g}, residual {sol.el_residual:.3g}")
    return EXIT_OK


def run_gamma_scan(spec: ExperimentSpec):
    """One row per sweep entry; the cell problem is solved once (its data do
    not depend on N)."""
    rows = []
    cell_sol = None
    for N in spec.sweep:
        cfg = spec.chain(N)
        cont = solve_continuum(cfg, tol=spec.tol)
        if cell_sol is None:
            cell_sol = minimize_cell(spec.model, cont.F0_strain,
                                     R=spec.cell_window, tol=spec.tol)
        res = minimize_discrete(cfg, SolveOptions(tol=spec.tol), cont=cont)
        f_min = disc.F_eps(cfg, res.y)
        first = (f_min - cont.F0_value) / cfg.eps
        rows.append({
            "N": N, "eps": cfg.eps, "F_eps_min": f_min, "F0": cont.F0_value,
            "first_order_est": first, "cell_energy": cell_sol.energy,
            "gap0": abs(f_min - cont.F0_value),
            "gap1": abs(first - cell_sol.energy),
        })
    return rows


def cmd_gamma_scan(spec: ExperimentSpec, out: Path) -> int:
    if len(spec.sweep) < 2:
        raise SpecError("gamma-scan needs a sweep with at least two N values")
    rows = run_gamma_scan(spec)
    header = ["N", "eps", "F_eps_min", "F0", "first_order_est",
              "cell_energy", "gap0", "gap1"]
    _write_csv(out / "gamma_scan.csv", header,
               [[row[k] for k in header] for row in rows])
    ok = True
    for col in ("gap0", "gap1"):
        for a, b in zip(rows, rows[1:]):
            if b[col] > a[col] + NOISE_FLOOR:
                print(f"{col} increases from N={a['N']} to N={b['N']}: "
                      f"{a[col]:.3e} -> {b[col]:.3e}")
                ok = False
    print(f"gamma scan over N={spec.sweep}: gaps "
          f"{'decrease monotonically' if ok else 'NOT monotone'}")
    return EXIT_OK if ok else EXIT_CRITERION


def cmd_decay(spec: ExperimentSpec, out: Path) -> int:
    cont, sol = _solve_cell(spec)
    report = decay_check(sol, spec.model)
    _write_csv(out / "decay.csv", ["i", "r_i", "el_residual_i"], _cell_rows(spec, sol))
    summary = {
        "R": sol.R, "energy": sol.energy, "el_residual": sol.el_residual,
        "tail_ratio": report.right.tail_ratio,
        "fitted_ratio": report.right.fitted_ratio,
        "lambda_bound": report.lambda_bound,
        "lambda_linear": report.lambda_linear,
        "report": report.to_json(),
    }
    (out / "decay.json").write_text(json.dumps(summary, indent=2))
    print(f"tail ratio {report.right.tail_ratio:.6g} <= lambda_bound "
          f"{report.lambda_bound:.6g} (linearised {report.lambda_linear:.6g})")
    return EXIT_OK if report.passed else EXIT_CRITERION


_COMMANDS = {
    "validate": cmd_validate,
    "continuum": cmd_continuum,
    "discrete": cmd_discrete,
    "cell": cmd_cell,
    "gamma-scan": cmd_gamma_scan,
    "decay": cmd_decay,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cljchain",
        description="Confined Lennard-Jones chain: validation, solvers and scaling scans")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--tol", type=float, default=None,
                        help="override the config tolerance")
    args = parser.parse_args(argv)

    try:
        spec = load_spec(args.config, tol_override=args.tol)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.command](spec, out)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
