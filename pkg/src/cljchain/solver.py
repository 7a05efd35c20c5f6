"""Constrained Newton minimiser for the discrete chain energy.

Minimises F_eps over gap vectors subject to the single linear constraint
eps*sum(g) = L, via the bordered KKT system (tridiagonal-plus-wrap Hessian
with one border row/column).  The Hessian of a validated model is positive
definite on the whole admissible set, so plain damped Newton converges;
admissibility (g > 0) is preserved by a fraction-to-the-boundary rule and
+inf energies reject bad trial steps in the line search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import discrete
from .discrete import ChainConfig, Deformation

__all__ = ["SolveOptions", "SolveResult", "minimize_discrete", "kkt_residual"]


@dataclass(frozen=True)
class SolveOptions:
    """Options for minimize_discrete.

    init selects the starting point: "uniform" (gaps = L),
    "continuum-interpolant" (cell averages of the continuum strain, the
    default: within the Newton basin for all tested models) or "recovery"
    (continuum plus the cell-problem boundary layer).
    """
    tol: float = 1e-12
    max_iter: int = 100
    init: str = "continuum-interpolant"

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.init not in ("uniform", "continuum-interpolant", "recovery"):
            raise ValueError(f"unknown init strategy {self.init!r}")


@dataclass
class SolveResult:
    y: Deformation
    multiplier: float
    residual: float
    iterations: int
    converged: bool

    def to_json(self, cfg: ChainConfig, cont=None) -> dict:
        out = {"converged": self.converged, "iterations": self.iterations,
               "residual": self.residual, "multiplier": self.multiplier,
               "energy": discrete.F_eps(cfg, self.y)}
        if cont is not None:
            out["F1"] = discrete.F1_eps(cfg, self.y, cont)
        return out


def _initial_gaps(cfg: ChainConfig, opts: SolveOptions, cont, cell_sol) -> np.ndarray:
    if opts.init == "uniform":
        return np.full(2 * cfg.N, cfg.L)
    if cont is None:
        from .continuum import solve_continuum
        cont = solve_continuum(cfg)
    if opts.init == "continuum-interpolant":
        return cont.cell_average_strains()
    from .cell import build_recovery, minimize_cell
    if cell_sol is None:
        cell_sol = minimize_cell(cfg.model, cont.F0_strain, R=max(8, min(64, cfg.N // 2)))
    return build_recovery(cfg, cont, cell_sol).gaps


def kkt_residual(cfg: ChainConfig, y: Deformation, multiplier: float) -> float:
    """Sup-norm of grad F_eps - mu*eps*1 plus the constraint violation; an
    independent certificate for solver output."""
    if not y.admissible:
        raise ValueError("KKT residual requested at non-admissible deformation")
    g = discrete.gradient(cfg, y) - multiplier * cfg.eps
    return float(np.max(np.abs(g)) + abs(y.constraint_violation()))


def minimize_discrete(cfg: ChainConfig, opts: SolveOptions = SolveOptions(),
                      cont=None, cell_sol=None) -> SolveResult:
    """Find the admissible minimiser of F_eps under the length constraint.

    Deterministic given (cfg, opts).  Raises on non-convergence rather than
    returning a silently bad state.
    """
    n = 2 * cfg.N
    gaps = _initial_gaps(cfg, opts, cont, cell_sol)
    y = Deformation(cfg, gaps)
    if not y.admissible:
        raise ValueError("initial guess is not admissible")

    grad = discrete.gradient(cfg, y)
    mu = float(np.sum(grad) / (cfg.eps * n))
    energy = discrete.F_eps(cfg, y)
    ones = np.full(n, cfg.eps)
    polished = False

    it = 0
    for it in range(1, opts.max_iter + 1):
        res = kkt_residual(cfg, y, mu)
        if res <= opts.tol and polished:
            break
        H = discrete.hessian(cfg, y)
        kkt = sp.bmat([[H, ones[:, None]], [ones[None, :], None]], format="csc")
        rhs = np.concatenate([-(grad - mu * ones), [-(y.constraint_violation())]])
        sol = spla.splu(kkt).solve(rhs)
        step, dmu = sol[:n], -float(sol[n])

        neg = step < 0.0
        t_max = 1.0
        if np.any(neg):
            t_max = min(1.0, float(0.95 * np.min(y.gaps[neg] / -step[neg])))
        if res <= opts.tol:
            y = Deformation(cfg, y.gaps + t_max * step)
            mu += dmu
            grad = discrete.gradient(cfg, y)
            energy = discrete.F_eps(cfg, y)
            polished = True
            continue
        t = t_max
        g_dot_step = float(np.dot(grad - mu * ones, step))
        slack = 1e-14 * (1.0 + abs(energy))
        for _ in range(50):
            e_trial = discrete.F_eps(cfg, Deformation(cfg, y.gaps + t * step))
            if e_trial <= energy + 1e-4 * t * g_dot_step + slack:
                break
            t *= 0.5
        y = Deformation(cfg, y.gaps + t * step)
        mu += t * dmu
        grad = discrete.gradient(cfg, y)
        energy = discrete.F_eps(cfg, y)
    else:
        raise RuntimeError(
            f"discrete Newton did not converge in {opts.max_iter} iterations "
            f"(residual {kkt_residual(cfg, y, mu):.3g})")

    res = kkt_residual(cfg, y, mu)
    return SolveResult(y=y, multiplier=mu, residual=res, iterations=it,
                       converged=res <= opts.tol)
