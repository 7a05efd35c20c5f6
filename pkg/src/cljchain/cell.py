"""First-order infinite-cell problem on a truncated window.

The first-order limit energy is the infimum of

    E_cell(r) = sum_i Phi1(r_i) + Phi2((r_i + r_{i+1})/2) + E_d_tilde(r)

over square-summable strain perturbations r.  Minimisers decay
exponentially away from the defect, so the problem is solved on a window
|i| <= R with r = 0 imposed outside (Dirichlet truncation); an
under-truncated window is detected through the Euler-Lagrange residual at
the first frozen index.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .discrete import ChainConfig, Deformation
from .potentials import PotentialSet, ShiftedSet, shifted_potentials

__all__ = [
    "CellSolution",
    "DecayReport",
    "LinearRate",
    "E_d_tilde",
    "cell_energy",
    "cell_lower_bound_constants",
    "minimize_cell",
    "decay_check",
    "linear_rate",
    "build_recovery",
]


def E_d_tilde(p: PotentialSet, F0: float, r_m2: float, r_m1: float,
              r_0: float, r_1: float) -> float:
    """Defect correction of the cell energy, the printed eight-term form:
    psi - phi differences at strains F0 + r near the defect."""
    if F0 + r_m1 <= 0.0 or F0 + r_0 <= 0.0:
        return math.inf
    a = F0 + 0.5 * (r_m2 + r_m1)
    b = F0 + 0.5 * (r_0 + r_1)
    return float(
        p.psi2(a) - p.phi2(a)
        + p.psi1(F0 + r_m1) - p.phi1(F0 + r_m1)
        + p.psi1(F0 + r_0) - p.phi1(F0 + r_0)
        + p.psi2(b) - p.phi2(b)
    )


def _window_midpoints(r: np.ndarray) -> np.ndarray:
    """Bond midpoints (r_i + r_{i+1})/2 for i = -R-1..R with r = 0 outside."""
    padded = np.concatenate(([0.0], r, [0.0]))
    return 0.5 * (padded[:-1] + padded[1:])


def cell_energy(shifted: ShiftedSet, p: PotentialSet, F0: float,
                r: np.ndarray) -> float:
    """Truncated cell energy: shifted pure bonds over the window plus the
    defect correction.  Terms outside the window vanish (Phi(0) = 0)."""
    r = np.asarray(r, dtype=float)
    R = (len(r) - 1) // 2
    if np.any(F0 + r <= 0.0):
        return math.inf
    m = _window_midpoints(r)
    bulk = float(np.sum(shifted.Phi1(r)) + np.sum(shifted.Phi2(m)))
    return bulk + E_d_tilde(p, F0, r[R - 2], r[R - 1], r[R], r[R + 1])


def _site_bond_derivatives(shifted: ShiftedSet, R: int, r: np.ndarray, order: int):
    """Per-site and per-bond derivative arrays with the defect swaps applied:
    Psi1 at sites i in {-1, 0}, Psi2 at bonds i in {-2, 0}."""
    m = _window_midpoints(r)
    if order == 1:
        b1 = np.asarray(shifted.Phi1.d1(r)).copy()
        b2 = np.asarray(shifted.Phi2.d1(m)).copy()
        f1, f2 = shifted.Psi1.d1, shifted.Psi2.d1
    else:
        b1 = np.asarray(shifted.Phi1.d2(r)).copy()
        b2 = np.asarray(shifted.Phi2.d2(m)).copy()
        f1, f2 = shifted.Psi1.d2, shifted.Psi2.d2
    b1[R - 1], b1[R] = f1(r[R - 1]), f1(r[R])
    # bond index i maps to array position i + R + 1
    b2[R - 1], b2[R + 1] = f2(m[R - 1]), f2(m[R + 1])
    return b1, b2


def _cell_gradient(shifted: ShiftedSet, R: int, r: np.ndarray) -> np.ndarray:
    b1, b2 = _site_bond_derivatives(shifted, R, r, order=1)
    return b1 + 0.5 * (b2[:-1] + b2[1:])


def _cell_hessian(shifted: ShiftedSet, R: int, r: np.ndarray):
    b1, b2 = _site_bond_derivatives(shifted, R, r, order=2)
    diag = b1 + 0.25 * (b2[:-1] + b2[1:])
    off = 0.25 * b2[1:-1]
    return diag, off


def cell_lower_bound_constants(p: PotentialSet, F0: float,
                               n_grid: int = 4000) -> tuple:
    """Certified constants (l_half, C) with E_cell(r) >= l_half*||r||^2 + C.

    Splitting each second-neighbour bond by concavity,
    X2((s+t)/2) >= X2(s)/2 + X2(t)/2, charges every site i with a 1-d
    function: W(F0+t) - W(F0) - W'(F0) t >= (l/2) t^2 at pure sites, and at
    the four defect sites the combinations
    (phi1 + (psi2+phi2)/2) resp. (psi1 + (psi2+phi2)/2) minus the same
    affine part.  The defect-site minorant offsets are scanned on a grid
    over the certified strain range with the usual safety margin.
    """
    if p.constants is None:
        raise ValueError("model has no certified constants; run validate_assumptions")
    cc = p.constants
    l_half = 0.5 * cc.l_coercivity
    t = np.linspace(cc.t_min, cc.t_max, n_grid)
    affine = p.W(F0) + p.W_prime(F0) * (t - F0)
    mixed = 0.5 * (p.psi2(t) + p.phi2(t))
    h_outer = p.phi1(t) + mixed - affine
    h_inner = p.psi1(t) + mixed - affine
    quad = l_half * (t - F0) ** 2

    def certified_inf(vals):
        m = float(np.min(vals))
        return m - 0.01 * abs(m) - 1e-9

    c_outer = certified_inf(h_outer - quad)
    c_inner = certified_inf(h_inner - quad)
    C = 2.0 * (min(c_outer, 0.0) + min(c_inner, 0.0))
    return l_half, C


class LinearRate(NamedTuple):
    lam_minus: float
    lam_plus: float
    degenerate: bool


def linear_rate(p: PotentialSet, F0: float) -> LinearRate:
    """Decay rate of the linearised Euler-Lagrange system with the ansatz
    r_i proportional to lam^i.

    Linearising the bulk equation
    Phi2'((r_{i-1}+r_i)/2)/2 + Phi1'(r_i) + Phi2'((r_i+r_{i+1})/2)/2 = 0
    at r = 0 gives phi2''(F0)/4 * (r_{i-1}+r_i) + phi1''(F0) r_i
    + phi2''(F0)/4 * (r_i+r_{i+1}) = 0, so lam solves

        (phi2''/4) lam^2 + (phi1'' + phi2''/2) lam + phi2''/4 = 0.

    For concave phi2 and W'' > 0 both roots are real, positive and multiply
    to one; the smaller is the rate of the decaying mode.  phi2'' = 0 is
    degenerate (perturbations vanish instantly): returns (0, inf).
    """
    c = float(p.phi2.d2(F0))
    w2 = float(p.W_second(F0))
    if c > 0.0:
        raise ValueError("phi2 must be concave at F0")
    if c == 0.0:
        return LinearRate(0.0, math.inf, True)
    if w2 <= 0.0:
        raise ValueError(f"no real decay rate: W''={w2:.6g} <= 0 at F0={F0}")
    # phi1'' = W'' - phi2'': q = (phi1'' + c/2)/(|c|/2) = 2 W''/|c| + 1
    q = -2.0 * w2 / c + 1.0
    root = math.sqrt(q * q - 1.0)
    return LinearRate(q - root, q + root, False)


@dataclass
class CellSolution:
    """Solved (or hand-built) truncated window state."""
    R: int
    F0_strain: float
    r: np.ndarray
    energy: float = math.nan
    el_residual: float = math.nan
    boundary_residual: float = math.nan
    lambda_bound: float = math.nan
    lambda_linear: float = math.nan
    converged: bool = False
    iterations: int = 0
    grow_window_recommended: bool = False
    min_hessian_eig: float = math.nan

    def r_at(self, i: int) -> float:
        if abs(i) > self.R:
            return 0.0
        return float(self.r[i + self.R])

    def summary(self) -> dict:
        return {"R": self.R, "energy": self.energy, "el_residual": self.el_residual,
                "lambda_bound": self.lambda_bound, "lambda_linear": self.lambda_linear}


def _lambda_bound(p: PotentialSet, F0: float, r1_abs: float) -> float:
    """Decay constant C/(l+C) with C = sup |Phi2''| on the padded interval
    [-1.1*|r1|, 1.1*|r1|], scanned at 1e-3 resolution."""
    a = 1.1 * r1_abs
    if a == 0.0:
        pts = np.array([0.0])
    else:
        pts = np.arange(-a, a + 1e-3, min(1e-3, a / 8.0))
        pts = np.append(pts, a)
    C = float(np.max(np.abs(p.phi2.d2(F0 + pts))))
    l = p.l_convexity
    return C / (l + C)


def minimize_cell(p: PotentialSet, F0: float, R: int, tol: float = 1e-12,
                  max_iter: int = 100, init: Optional[np.ndarray] = None) -> CellSolution:
    """Damped Newton on the truncated window.

    The Hessian is tridiagonal (bulk rows) with the four defect rows
    modified; steps are damped by a fraction-to-the-boundary rule keeping
    F0 + r_i > 0.  Convergence is sup-norm of the Euler-Lagrange residual
    below ``tol``, followed by one polishing step.
    """
    if R < 8:
        raise ValueError("window half-width R must be at least 8")
    if F0 <= 0.0:
        raise ValueError("F0 must be positive")
    shifted = shifted_potentials(p, F0)
    n = 2 * R + 1
    r = np.zeros(n) if init is None else np.asarray(init, dtype=float).copy()
    if r.shape != (n,):
        raise ValueError(f"initial guess must have length {n}")

    energy = cell_energy(shifted, p, F0, r)
    polished = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = _cell_gradient(shifted, R, r)
        res = float(np.max(np.abs(grad)))
        if res <= tol and polished:
            break
        diag, off = _cell_hessian(shifted, R, r)
        ab = np.zeros((3, n))
        ab[0, 1:] = off
        ab[1] = diag
        ab[2, :-1] = off
        step = solve_banded((1, 1), ab, -grad)
        # fraction-to-the-boundary: keep F0 + r strictly positive
        neg = step < 0.0
        t_max = 1.0
        if np.any(neg):
            t_max = min(1.0, float(0.95 * np.min((F0 + r[neg]) / -step[neg])))
        if res <= tol:
            # one full polishing step to land well inside the tolerance
            r = r + t_max * step
            energy = cell_energy(shifted, p, F0, r)
            polished = True
            continue
        t = t_max
        g_dot_step = float(np.dot(grad, step))
        slack = 1e-14 * (1.0 + abs(energy))
        for _ in range(50):
            e_trial = cell_energy(shifted, p, F0, r + t * step)
            if e_trial <= energy + 1e-4 * t * g_dot_step + slack:
                break
            t *= 0.5
        r = r + t * step
        energy = cell_energy(shifted, p, F0, r)
    else:
        raise RuntimeError(f"cell Newton did not converge in {max_iter} iterations")

    grad = _cell_gradient(shifted, R, r)
    el_residual = float(np.max(np.abs(grad)))
    diag, off = _cell_hessian(shifted, R, r)
    min_eig = float(eigh_tridiagonal(diag, off, select="i",
                                     select_range=(0, 0), eigvals_only=True)[0])
    # Euler-Lagrange residual at the first frozen indices +-(R+1); only the
    # half-bond into the window survives since Phi'(0) = 0
    boundary_residual = 0.5 * max(abs(float(shifted.Phi2.d1(0.5 * r[0]))),
                                  abs(float(shifted.Phi2.d1(0.5 * r[-1]))))
    grow = boundary_residual > 10.0 * tol
    if grow:
        warnings.warn(f"cell window R={R} looks too small: boundary residual "
                      f"{boundary_residual:.3g} > 10*tol; consider growing the window")
    r1 = abs(float(r[R + 1]))
    sol = CellSolution(
        R=R, F0_strain=float(F0), r=r,
        energy=cell_energy(shifted, p, F0, r),
        el_residual=el_residual,
        boundary_residual=boundary_residual,
        lambda_bound=_lambda_bound(p, F0, r1),
        lambda_linear=linear_rate(p, F0).lam_minus,
        converged=el_residual <= tol,
        iterations=it,
        grow_window_recommended=grow,
        min_hessian_eig=min_eig,
    )
    return sol


@dataclass
class TailCheck:
    """Decay diagnostics for one tail of the window."""
    anchor_index: int
    sign: int
    monotone_ok: bool
    sign_ok: bool
    bound_ok: bool
    tail_ratio: float
    fitted_ratio: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.monotone_ok and self.sign_ok and self.bound_ok


@dataclass
class DecayReport:
    """Monotonicity and exponential-decay checks on a solved window.

    The right tail (i >= 1) carries the proven statements; the left tail
    (i <= -2, anchored at r_{-2}) is the mirrored check, reported but not
    a theorem of the analysis.
    """
    lambda_bound: float
    lambda_linear: float
    slack: float
    right: TailCheck
    left: TailCheck

    @property
    def passed(self) -> bool:
        return self.right.ok

    def to_json(self) -> dict:
        def tail(t: TailCheck) -> dict:
            return {"anchor_index": t.anchor_index, "sign": t.sign,
                    "monotone_ok": t.monotone_ok, "sign_ok": t.sign_ok,
                    "bound_ok": t.bound_ok, "tail_ratio": t.tail_ratio,
                    "fitted_ratio": t.fitted_ratio, "violations": t.violations}
        return {"lambda_bound": self.lambda_bound, "lambda_linear": self.lambda_linear,
                "slack": self.slack, "right": tail(self.right),
                "left": {**tail(self.left), "asserted": False}}


def _check_tail(seq: np.ndarray, anchor_index: int, lam: float, slack: float,
                ratio_floor: float) -> TailCheck:
    """seq[0] is the anchor entry, seq[k] the entry k sites further out."""
    violations = []
    a = seq[0]
    sign = 0
    if a > slack:
        sign = 1
    elif a < -slack:
        sign = -1
    s = seq if sign >= 0 else -seq
    sign_ok = True
    monotone_ok = True
    if sign == 0:
        sign_ok = bool(np.all(np.abs(seq) <= slack))
        if not sign_ok:
            k = int(np.argmax(np.abs(seq) > slack))
            violations.append(("sign", anchor_index_offset(anchor_index, k),
                               float(seq[k])))
    else:
        for k in range(len(s)):
            if s[k] < -slack:
                sign_ok = False
                violations.append(("sign", anchor_index_offset(anchor_index, k),
                                   float(seq[k])))
                break
        for k in range(len(s) - 1):
            if s[k + 1] > s[k] + slack:
                monotone_ok = False
                violations.append(("monotone", anchor_index_offset(anchor_index, k + 1),
                                   float(seq[k + 1])))
                break
    bound_ok = True
    bound = abs(a)
    for k in range(1, len(s)):
        bound *= lam
        if abs(seq[k]) > bound + slack:
            bound_ok = False
            violations.append(("bound", anchor_index_offset(anchor_index, k),
                               float(seq[k])))
            break
    mags = np.abs(seq)
    ratios = [mags[k + 1] / mags[k] for k in range(len(seq) - 1)
              if min(mags[k], mags[k + 1]) >= ratio_floor]
    tail_ratio = float(max(ratios)) if ratios else 0.0
    # geometric fit over the clean entries one site past the anchor
    clean = [k for k in range(1, len(seq)) if mags[k] >= ratio_floor]
    if len(clean) >= 2:
        ks = np.array(clean, dtype=float)
        slope = np.polyfit(ks, np.log(mags[clean]), 1)[0]
        fitted = float(np.exp(slope))
    else:
        fitted = tail_ratio
    return TailCheck(anchor_index=anchor_index, sign=sign, monotone_ok=monotone_ok,
                     sign_ok=sign_ok, bound_ok=bound_ok, tail_ratio=tail_ratio,
                     fitted_ratio=fitted, violations=violations)


def anchor_index_offset(anchor_index: int, k: int) -> int:
    """Window index k sites outward from the anchor (sign depends on the tail)."""
    return anchor_index + k if anchor_index >= 0 else anchor_index - k


def decay_check(sol: CellSolution, p: PotentialSet, slack: float = 1e-12,
                ratio_floor: float = 1e-9) -> DecayReport:
    """Check sign-uniform monotone decay and the geometric bound
    |r_i| <= lambda^{i-1} |r_1| on both tails of a solved window."""
    R = sol.R
    lam = sol.lambda_bound
    if math.isnan(lam):
        lam = _lambda_bound(p, sol.F0_strain, abs(sol.r_at(1)))
    right = _check_tail(sol.r[R + 1:], 1, lam, slack, ratio_floor)
    left = _check_tail(sol.r[R - 2::-1], -2, lam, slack, ratio_floor)
    lam_lin = sol.lambda_linear
    if math.isnan(lam_lin):
        lam_lin = linear_rate(p, sol.F0_strain).lam_minus
    return DecayReport(lambda_bound=lam, lambda_linear=lam_lin, slack=slack,
                       right=right, left=left)


def build_recovery(cfg: ChainConfig, cont, sol: CellSolution) -> Deformation:
    """Recovery deformation: cell averages of Dybar, perturbed on the window
    |i| < K = floor(sqrt(N)) by r_i minus its window mean, so the length
    constraint telescopes exactly."""
    N = cfg.N
    K = math.isqrt(N)
    if K > N:
        raise ValueError("recovery window exceeds the chain")
    delta = 1.0 / (2 * K)
    r_win = np.array([sol.r_at(i) for i in range(-K, K)])
    rbar = delta * float(np.sum(r_win))
    gaps = cont.cell_average_strains().copy()
    gaps[N - K:N + K] += r_win - rbar
    if np.any(gaps <= 0.0):
        raise ValueError("recovery deformation is not admissible for this model/strain")
    return Deformation(cfg, gaps)
