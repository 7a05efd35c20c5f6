"""Zeroth-order continuum limit.

The limit energy F0(y) = int W(Dy) + f*(y - L(x+1/2)) dx has a unique
minimiser ybar built explicitly from the inverse of W': Dybar(x) =
(W')^{-1}(sigma(x) + Sigma), where sigma(x) = int_{-1/2}^x f and the
constant stress Sigma solves int (W')^{-1}(sigma + Sigma) = L.  W' is
strictly increasing (W'' >= l > 0) so the root is unique and the map
Sigma -> int (W')^{-1} is strictly increasing.

The baseline of sigma is a convention: shifting sigma by a constant and
re-solving moves Sigma by the opposite amount and leaves ybar unchanged
(exposed via ``sigma_offset`` and covered by tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .discrete import ChainConfig
from .potentials import PotentialSet
from .quadrature import _rule, panel_integrals

__all__ = ["ContinuumSolution", "w_prime_inverse", "solve_continuum",
           "F0_sampled", "F0_functional"]


def w_prime_inverse(model: PotentialSet, s, tol: float = 1e-12):
    """Strain t > 0 with W'(t) = s, vectorised.

    Bracket by geometric expansion, then bisection plus safeguarded Newton
    (W'' >= l keeps Newton well conditioned).  For the built-in family the
    range of W' is all of R; user families must share that property or the
    bracket expansion fails with an error.
    """
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    lo = np.ones_like(s)
    hi = np.ones_like(s)
    for _ in range(700):
        mask = model.W_prime(lo) > s
        if not np.any(mask):
            break
        lo[mask] *= 0.5
    else:
        raise RuntimeError("w_prime_inverse: failed to bracket from below")
    for _ in range(700):
        mask = model.W_prime(hi) < s
        if not np.any(mask):
            break
        hi[mask] *= 2.0
    else:
        raise RuntimeError("w_prime_inverse: failed to bracket from above")
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        below = model.W_prime(mid) < s
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    t = 0.5 * (lo + hi)
    for _ in range(6):
        r = model.W_prime(t) - s
        if np.max(np.abs(r)) <= 0.01 * tol:
            break
        t = np.clip(t - r / model.W_second(t), lo, hi)
    return float(t[0]) if scalar else t


class ContinuumSolution:
    """Solved zeroth-order minimiser with callables and cached samples.

    Immutable after construction; all callables are pure.  Samples are
    cached at M = 4N+1 uniform points; ``ybar`` at arbitrary points adds a
    partial-panel Gauss rule on top of the cached cumulative integral.
    """

    def __init__(self, cfg: ChainConfig, Sigma: float, sigma_offset: float = 0.0):
        self.cfg = cfg
        self.model = cfg.model
        self.Sigma = float(Sigma)
        self.sigma_offset = float(sigma_offset)

        n_panels = 4 * cfg.N
        self._edges = np.linspace(-0.5, 0.5, n_panels + 1)
        cell = panel_integrals(self.Dybar, self._edges, n=16)
        cum = np.empty(n_panels + 1)
        cum[0] = 0.0
        np.cumsum(cell, out=cum[1:])
        self._cum = cum

        self.x_samples = self._edges
        self.sigma_samples = self.sigma(self._edges)
        self.Dybar_samples = self.Dybar(self._edges)
        self.ybar_samples = cum.copy()
        self.residual = abs(float(cum[-1]) - cfg.L)

        w_vals = panel_integrals(
            lambda x: self.model.W(self.Dybar(x)) - self.sigma(x) * (self.Dybar(x) - cfg.L),
            self._edges, n=32)
        self.F0_value = float(np.sum(w_vals))
        self.F0_strain = float(self.Dybar(0.0))

    def sigma(self, x):
        return self.cfg.force.antiderivative(x) + self.sigma_offset

    def Dybar(self, x):
        return w_prime_inverse(self.model, self.sigma(x) + self.Sigma)

    def ybar(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        k = np.clip(np.searchsorted(self._edges, x, side="right") - 1,
                    0, len(self._edges) - 2)
        a = self._edges[k]
        gx, gw = _rule(16)
        half = 0.5 * (x - a)
        nodes = (0.5 * (x + a))[:, None] + half[:, None] * gx[None, :]
        vals = self.Dybar(nodes.ravel()).reshape(nodes.shape)
        out = self._cum[k] + half * (vals @ gw)
        return float(out[0]) if scalar else out

    def cell_average_strains(self) -> np.ndarray:
        """Exact cell averages of Dybar over the chain cells (x_i, x_{i+1})."""
        yb = self.ybar(self.cfg.x)
        return np.diff(yb) / self.cfg.eps

    def summary(self) -> dict:
        return {"Sigma": self.Sigma, "F0_value": self.F0_value,
                "F0_strain": self.F0_strain, "residual": self.residual}


def solve_continuum(cfg: ChainConfig, tol: float = 1e-12,
                    sigma_offset: float = 0.0) -> ContinuumSolution:
    """Solve the implicit equation for Sigma by monotone bracketing plus
    safeguarded Newton and assemble the minimiser."""
    model = cfg.model
    force = cfg.force

    xs = np.linspace(-0.5, 0.5, 4097)
    sig = force.antiderivative(xs) + sigma_offset
    sig_sup = float(np.max(np.abs(sig)))
    wL = float(model.W_prime(cfg.L))
    lo, hi = wL - sig_sup - 1.0, wL + sig_sup + 1.0

    edges = np.linspace(-0.5, 0.5, 257)

    def total_strain(Sigma):
        return float(np.sum(panel_integrals(
            lambda x: w_prime_inverse(model, force.antiderivative(x) + sigma_offset + Sigma),
            edges, n=20)))

    def G(Sigma):
        return total_strain(Sigma) - cfg.L

    glo, ghi = G(lo), G(hi)
    if not (glo <= 0.0 <= ghi):
        raise RuntimeError(
            f"failed to bracket Sigma in [{lo:.6g}, {hi:.6g}]: G = ({glo:.3g}, {ghi:.3g})")
    Sigma = brentq(G, lo, hi, xtol=1e-13, rtol=8.9e-16)

    def Gprime(Sigma):
        return float(np.sum(panel_integrals(
            lambda x: 1.0 / model.W_second(
                w_prime_inverse(model, force.antiderivative(x) + sigma_offset + Sigma)),
            edges, n=20)))

    for _ in range(3):
        g = G(Sigma)
        if abs(g) <= 0.01 * tol:
            break
        Sigma -= g / Gprime(Sigma)

    sol = ContinuumSolution(cfg, Sigma, sigma_offset=sigma_offset)
    if sol.residual > 100.0 * tol:
        raise RuntimeError(f"continuum solve residual {sol.residual:.3g} exceeds tolerance")
    return sol


def F0_sampled(cfg: ChainConfig, strains: np.ndarray, n: int = 8) -> float:
    """F0 for a piecewise-constant strain field on a uniform grid with
    y(-1/2) = 0.

    The elastic part is exact (W is constant per cell); the force part uses
    an n-point Gauss rule per cell.  Non-positive strain samples give +inf.
    """
    strains = np.asarray(strains, dtype=float)
    if np.any(strains <= 0.0):
        return math.inf
    M = len(strains)
    h = 1.0 / M
    w_part = h * float(np.sum(cfg.model.W(strains)))
    if cfg.force.kind == "zero":
        return w_part
    edges = np.linspace(-0.5, 0.5, M + 1)
    y_edges = np.concatenate(([0.0], np.cumsum(h * strains)))
    gx, gw = _rule(n)
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = mids[:, None] + 0.5 * h * gx[None, :]
    u = (y_edges[:-1, None] + strains[:, None] * (nodes - edges[:-1, None])
         - cfg.L * (nodes + 0.5))
    fu = np.asarray(cfg.force(nodes.ravel())).reshape(nodes.shape) * u
    return w_part + float(0.5 * h * np.sum(fu @ gw))


def F0_functional(cfg: ChainConfig, Dy: Callable, panels: int) -> float:
    """F0 for a smooth strain field by a composite two-point Gauss rule on
    ``panels`` uniform panels (used for both the elastic term and the
    displacement reconstruction)."""
    edges = np.linspace(-0.5, 0.5, panels + 1)
    h = 1.0 / panels
    gx, gw = _rule(2)
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = mids[:, None] + 0.5 * h * gx[None, :]
    dvals = np.asarray(Dy(nodes.ravel())).reshape(nodes.shape)
    if np.any(dvals <= 0.0):
        return math.inf
    cell = 0.5 * h * (dvals @ gw)
    y_edges = np.concatenate(([0.0], np.cumsum(cell)))
    w_part = float(0.5 * h * np.sum(cfg.model.W(dvals) @ gw))
    if cfg.force.kind == "zero":
        return w_part
    # y at interior nodes: cumulative to the panel edge plus a partial rule
    half = 0.5 * (nodes - edges[:-1, None])
    sub = (0.5 * (nodes + edges[:-1, None]))[:, :, None] + half[:, :, None] * gx[None, None, :]
    dsub = np.asarray(Dy(sub.ravel())).reshape(sub.shape)
    y_nodes = y_edges[:-1, None] + half * (dsub @ gw)
    u = y_nodes - cfg.L * (nodes + 0.5)
    fu = np.asarray(cfg.force(nodes.ravel())).reshape(nodes.shape) * u
    return w_part + float(0.5 * h * np.sum(fu @ gw))
