"""Periodic atomistic chain with a single point defect.

A chain of 2N atoms on the torus carries reference sites x_i = i*eps,
i = -N..N-1, with eps = 1/(2N).  The state variable is the gap vector
g_i = (y_{i+1}-y_i)/eps; positions and displacements are reconstructed on
demand.  The defect sits at atom 0 and swaps the four bond potentials
touching it (nearest-neighbour bonds -1 and 0, second-neighbour bonds -2
and 0) from phi to psi.

Energies return +inf (never raise) on non-admissible gap vectors so line
searches can reject steps naturally; derivative evaluations there raise.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .potentials import PotentialSet, model_from_json
from .quadrature import adaptive_panel_integrals

__all__ = [
    "ForceField",
    "force_from_json",
    "ChainConfig",
    "chain_config_from_json",
    "Deformation",
    "SigmaField",
    "energy_pure",
    "energy_defect",
    "energy_force",
    "energy_total",
    "F_eps",
    "sigma_field",
    "gradient",
    "hessian",
    "F1_eps",
    "s_terms",
    "random_admissible",
    "deformation_to_csv",
    "deformation_from_csv",
]


@dataclass(frozen=True)
class ForceField:
    """Closed-form dead-load field with two derivatives and an antiderivative.

    ``antiderivative(x)`` is the integral from -1/2 to x, so it vanishes at
    the left end of the domain.
    """
    kind: str
    amplitude: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "const":
            return np.full_like(x, self.amplitude)
        if self.kind == "sin":
            return self.amplitude * np.sin(2.0 * np.pi * x)
        raise ValueError(f"unknown force kind {self.kind!r}")

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind in ("zero", "const"):
            return np.zeros_like(x)
        return self.amplitude * 2.0 * np.pi * np.cos(2.0 * np.pi * x)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind in ("zero", "const"):
            return np.zeros_like(x)
        return -self.amplitude * (2.0 * np.pi) ** 2 * np.sin(2.0 * np.pi * x)

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "const":
            return self.amplitude * (x + 0.5)
        if self.kind == "sin":
            return self.amplitude * (-np.cos(2.0 * np.pi * x) - 1.0) / (2.0 * np.pi)
        raise ValueError(f"unknown force kind {self.kind!r}")

    @property
    def d1_sup(self) -> float:
        if self.kind in ("zero", "const"):
            return 0.0
        return abs(self.amplitude) * 2.0 * np.pi

    @property
    def d2_sup(self) -> float:
        if self.kind in ("zero", "const"):
            return 0.0
        return abs(self.amplitude) * (2.0 * np.pi) ** 2


def force_from_json(doc) -> ForceField:
    if isinstance(doc, str):
        doc = json.loads(doc)
    kind = doc.get("kind", "zero")
    if kind not in ("zero", "const", "sin"):
        raise ValueError(f"unknown force kind {kind!r}")
    return ForceField(kind=kind, amplitude=float(doc.get("amplitude", 0.0)))


class ChainConfig:
    """Problem parameters: model, half atom count N, length L and force field.

    Derived quantities are cached: eps = 1/(2N), sites ``x`` for i = -N..N
    (2N+1 entries), force samples ``f`` for i = -N..N-1 and the recursive
    stress field sigma_eps for i = -N..N.
    """

    def __init__(self, model: PotentialSet, N: int, L: float,
                 force: Optional[ForceField] = None):
        if N < 2:
            raise ValueError("N must be at least 2")
        if L <= 0.0:
            raise ValueError("L must be positive")
        self.model = model
        self.N = int(N)
        self.L = float(L)
        self.force = force if force is not None else ForceField("zero")
        self.eps = 1.0 / (2 * self.N)
        self.x = np.arange(-self.N, self.N + 1, dtype=float) * self.eps
        self.f = np.asarray(self.force(self.x[:-1]), dtype=float)
        # sigma_eps_{-N} = -eps f_{-N}/2, sigma_eps_i = sigma_eps_{i-1} + eps f_{i-1},
        # built by the literal recursion so the defining identity holds bit-exactly
        sig = np.empty(2 * self.N + 1)
        sig[0] = -0.5 * self.eps * self.f[0]
        for j in range(1, 2 * self.N + 1):
            sig[j] = sig[j - 1] + self.eps * self.f[j - 1]
        self._sigma_eps = sig

    def f_periodic(self, i: int) -> float:
        """Force sample at arbitrary integer index via 2N-periodic extension."""
        return float(self.f[(i + self.N) % (2 * self.N)])

    def same_problem(self, other: "ChainConfig") -> bool:
        return (self.model is other.model and self.N == other.N
                and self.L == other.L and self.force == other.force)

    def __repr__(self):
        return f"ChainConfig(N={self.N}, L={self.L}, force={self.force.kind})"


def chain_config_from_json(doc, model: Optional[PotentialSet] = None) -> ChainConfig:
    """Chain from ``{"N":.., "L":.., "force":{...}}``; model supplied separately
    or embedded under a "model" key."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    if model is None:
        model = model_from_json(doc["model"])
    return ChainConfig(model=model, N=int(doc["N"]), L=float(doc["L"]),
                       force=force_from_json(doc.get("force", {"kind": "zero"})))


@dataclass(frozen=True)
class SigmaField:
    """Recursive stress field sigma_eps_i, i = -N..N (2N+1 values)."""
    values: np.ndarray

    def at(self, i: int, N: int) -> float:
        return float(self.values[i + N])


def sigma_field(cfg: ChainConfig) -> SigmaField:
    return SigmaField(values=cfg._sigma_eps.copy())


class Deformation:
    """Chain state stored as gaps g_i = D1 y_i, i = -N..N-1.

    Positions y (with y_{-N} = 0) and displacements u = y - L(x+1/2) are
    derived.  Admissible means all gaps positive; the length constraint
    eps*sum(g) = L is the caller's responsibility and is checked by
    ``constraint_violation``.
    """

    def __init__(self, cfg: ChainConfig, gaps: np.ndarray):
        gaps = np.asarray(gaps, dtype=float)
        if gaps.shape != (2 * cfg.N,):
            raise ValueError(f"expected {2*cfg.N} gaps, got {gaps.shape}")
        self.cfg = cfg
        self.gaps = gaps
        y = np.empty(2 * cfg.N + 1)
        y[0] = 0.0
        np.cumsum(cfg.eps * gaps, out=y[1:])
        self.y = y
        self.u = y - cfg.L * (cfg.x + 0.5)

    @property
    def admissible(self) -> bool:
        return bool(np.all(self.gaps > 0.0))

    def midpoints(self) -> np.ndarray:
        """Second-neighbour strains D2 y_i = (g_i + g_{i+1})/2, periodic wrap."""
        g = self.gaps
        return 0.5 * (g + np.roll(g, -1))

    def constraint_violation(self) -> float:
        return float(self.cfg.eps * np.sum(self.gaps) - self.cfg.L)

    def d1u(self) -> np.ndarray:
        return self.gaps - self.cfg.L


def uniform_deformation(cfg: ChainConfig) -> Deformation:
    return Deformation(cfg, np.full(2 * cfg.N, cfg.L))


def random_admissible(cfg: ChainConfig, rng: np.random.Generator,
                      spread: float = 0.3) -> Deformation:
    """Random positive gap vector rescaled to satisfy the length constraint."""
    g = cfg.L * (1.0 + spread * rng.uniform(-1.0, 1.0, size=2 * cfg.N))
    g *= cfg.L / (cfg.eps * np.sum(g))
    return Deformation(cfg, g)


# bond index helpers (0-based j = i + N): the defect at atom 0 modifies
# nearest-neighbour bonds i in {-1, 0} and second-neighbour bonds i in {-2, 0}
def _defect_nn(cfg):
    return (cfg.N - 1, cfg.N)


def _defect_snn(cfg):
    return (cfg.N - 2, cfg.N)


def energy_pure(cfg: ChainConfig, y: Deformation) -> float:
    """Internal energy with pure potentials only: sum phi1(D1 y) + phi2(D2 y)."""
    if not y.admissible:
        return math.inf
    p = cfg.model
    return float(np.sum(p.phi1(y.gaps)) + np.sum(p.phi2(y.midpoints())))


def energy_defect(cfg: ChainConfig, y: Deformation) -> float:
    """Defect correction: the psi - phi differences at the four bonds touching
    atom 0, exactly the printed eight-term expression."""
    p = cfg.model
    g, m = y.gaps, y.midpoints()
    j1a, j1b = _defect_nn(cfg)
    j2a, j2b = _defect_snn(cfg)
    if g[j1a] <= 0.0 or g[j1b] <= 0.0:
        return math.inf
    return float(
        p.psi2(m[j2a]) - p.phi2(m[j2a])
        + p.psi1(g[j1a]) - p.phi1(g[j1a])
        + p.psi1(g[j1b]) - p.phi1(g[j1b])
        + p.psi2(m[j2b]) - p.phi2(m[j2b])
    )


def _internal_energy(cfg: ChainConfig, y: Deformation) -> float:
    """E_pure + E_defect computed as one bond sum with swapped potentials,
    avoiding inf - inf on inadmissible input."""
    if not y.admissible:
        return math.inf
    p = cfg.model
    g, m = y.gaps, y.midpoints()
    e1 = np.sum(p.phi1(g))
    e2 = np.sum(p.phi2(m))
    j1a, j1b = _defect_nn(cfg)
    j2a, j2b = _defect_snn(cfg)
    e1 += (p.psi1(g[j1a]) - p.phi1(g[j1a])) + (p.psi1(g[j1b]) - p.phi1(g[j1b]))
    e2 += (p.psi2(m[j2a]) - p.phi2(m[j2a])) + (p.psi2(m[j2b]) - p.phi2(m[j2b]))
    return float(e1 + e2)


def energy_force(cfg: ChainConfig, y: Deformation) -> float:
    """Work of the dead loads: sum f_i u_i over i = -N..N-1."""
    return float(np.dot(cfg.f, y.u[:-1]))


def energy_total(cfg: ChainConfig, y: Deformation) -> float:
    e = _internal_energy(cfg, y)
    if not math.isfinite(e):
        return math.inf
    return e + energy_force(cfg, y)


def F_eps(cfg: ChainConfig, y: Deformation) -> float:
    """Mean energy per atom eps*E_eps; +inf off the admissible set."""
    e = energy_total(cfg, y)
    return cfg.eps * e if math.isfinite(e) else math.inf


def _bond_derivatives(cfg: ChainConfig, y: Deformation, order: int):
    """Per-bond derivative arrays (nearest, second-neighbour) with the defect
    swaps applied."""
    p = cfg.model
    g, m = y.gaps, y.midpoints()
    if order == 1:
        b1 = np.asarray(p.phi1.d1(g)).copy()
        b2 = np.asarray(p.phi2.d1(m)).copy()
        f1, f2 = p.psi1.d1, p.psi2.d1
    else:
        b1 = np.asarray(p.phi1.d2(g)).copy()
        b2 = np.asarray(p.phi2.d2(m)).copy()
        f1, f2 = p.psi1.d2, p.psi2.d2
    j1a, j1b = _defect_nn(cfg)
    j2a, j2b = _defect_snn(cfg)
    b1[j1a], b1[j1b] = f1(g[j1a]), f1(g[j1b])
    b2[j2a], b2[j2b] = f2(m[j2a]), f2(m[j2b])
    return b1, b2


def _force_suffix(cfg: ChainConfig) -> np.ndarray:
    """S_j = sum_{i>j} f_i for j = -N..N-1: dE_f/dg_j = eps*S_j."""
    suffix_incl = np.cumsum(cfg.f[::-1])[::-1]
    return suffix_incl - cfg.f


def gradient(cfg: ChainConfig, y: Deformation) -> np.ndarray:
    """Gradient of F_eps with respect to the gaps (length constraint handled
    externally by the solver)."""
    if not y.admissible:
        raise ValueError("gradient requested at non-admissible deformation")
    b1, b2 = _bond_derivatives(cfg, y, order=1)
    b2_prev = np.roll(b2, 1)
    return cfg.eps * (b1 + 0.5 * (b2_prev + b2) + cfg.eps * _force_suffix(cfg))


def hessian(cfg: ChainConfig, y: Deformation) -> sp.csc_matrix:
    """Hessian of F_eps in gap coordinates: symmetric tridiagonal plus the
    periodic corner entries (the force term is linear in the gaps)."""
    if not y.admissible:
        raise ValueError("hessian requested at non-admissible deformation")
    n = 2 * cfg.N
    b1, b2 = _bond_derivatives(cfg, y, order=2)
    b2_prev = np.roll(b2, 1)
    diag = cfg.eps * (b1 + 0.25 * (b2_prev + b2))
    off = cfg.eps * 0.25 * b2[:-1]
    corner = cfg.eps * 0.25 * b2[-1]
    H = sp.diags([diag, off, off], [0, 1, -1], format="lil")
    H[0, n - 1] += corner
    H[n - 1, 0] += corner
    return H.tocsc()


def F1_eps(cfg: ChainConfig, y: Deformation, cont) -> float:
    """First-order energy (F_eps(y) - F0(ybar)) / eps for the solved continuum
    minimiser of the same problem."""
    if not cfg.same_problem(cont.cfg):
        raise ValueError("continuum solution was computed for a different config")
    fe = F_eps(cfg, y)
    return (fe - cont.F0_value) / cfg.eps if math.isfinite(fe) else math.inf


def s_terms(cfg: ChainConfig, y: Deformation, cont, tol: float = 1e-12) -> np.ndarray:
    """Per-site first-order contributions s_i, i = -N..N-1.

    Each term combines the bond energies on the window (x_i, x_{i+2}) with
    the window averages of W(D ybar), sigma*D ubar and Sigma*(Dy - D ybar),
    the latter computed by adaptive quadrature to ``tol`` absolute.  Indices
    in the last window wrap periodically (sigma_eps index N+1 -> -N+1, and
    the continuum integrands extend 1-periodically); with that convention
    sum(s_i) + E_d_tilde(D1 y - F0) reproduces F1_eps exactly.
    """
    if not cfg.same_problem(cont.cfg):
        raise ValueError("continuum solution was computed for a different config")
    if not y.admissible:
        raise ValueError("s_terms requested at non-admissible deformation")
    p = cfg.model
    n = 2 * cfg.N
    g, m = y.gaps, y.midpoints()
    d1u = y.d1u()
    sig = cfg._sigma_eps

    edges = cfg.x
    I_W = adaptive_panel_integrals(lambda x: p.W(cont.Dybar(x)), edges, tol=tol)
    I_su = adaptive_panel_integrals(
        lambda x: cont.sigma(x) * (cont.Dybar(x) - cfg.L), edges, tol=tol)
    ybar_edges = cont.ybar(edges)
    I_Dy = np.diff(ybar_edges)

    phi1_g = p.phi1(g)
    phi2_m = p.phi2(m)
    nxt = np.roll(np.arange(n), -1)

    sig_i1 = sig[1:n + 1]                     # sigma_eps_{i+1}
    sig_i2 = np.empty(n)                      # sigma_eps_{i+2}, wrapped
    sig_i2[:n - 1] = sig[2:n + 1]
    sig_i2[n - 1] = sig[1]

    win = lambda a: a + a[nxt]
    s = (phi2_m + 0.5 * phi1_g + 0.5 * phi1_g[nxt]
         - 0.5 * sig_i1 * d1u - 0.5 * sig_i2 * d1u[nxt]
         - (win(I_W) - win(I_su)
            + cont.Sigma * (cfg.eps * win(g) - win(I_Dy))) / (2.0 * cfg.eps))
    return s


def deformation_to_csv(y: Deformation, path) -> None:
    cfg = y.cfg
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "x_i", "gap", "y", "u"])
        for j in range(2 * cfg.N):
            w.writerow([j - cfg.N] + [f"{v:.17g}" for v in
                                      (cfg.x[j], y.gaps[j], y.y[j], y.u[j])])


def deformation_from_csv(cfg: ChainConfig, path) -> Deformation:
    gaps = np.empty(2 * cfg.N)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 2 * cfg.N:
        raise ValueError(f"expected {2*cfg.N} rows, found {len(rows)}")
    for row in rows:
        gaps[int(row["i"]) + cfg.N] = float(row["gap"])
    return Deformation(cfg, gaps)
