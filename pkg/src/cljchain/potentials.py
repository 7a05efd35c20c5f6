"""Confined Lennard-Jones potential sets.

A model consists of four pair potentials: convex nearest-neighbour
potentials ``phi1`` (pure bonds) and ``psi1`` (defect bonds), and concave
second-neighbour potentials ``phi2`` and ``psi2``.  The continuum elastic
density is ``W = phi1 + phi2``.  Model assumptions (hard core, uniform
convexity, concavity, domination of second-neighbour bonds) are certified
numerically on a strain grid by :func:`validate_assumptions`, which also
produces the constants used by the coercivity and decay checks elsewhere
in the package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

__all__ = [
    "PairPotential",
    "PotentialSet",
    "ShiftedSet",
    "StrainGrid",
    "AssumptionCheck",
    "CertifiedConstants",
    "ValidationReport",
    "default_model",
    "poly_log_sqrt_model",
    "model_from_json",
    "model_to_json",
    "shifted_potentials",
]


class PairPotential:
    """Scalar pair potential with two derivatives, numpy-vectorised.

    ``hard_core=True`` marks a nearest-neighbour potential: the value is
    ``+inf`` for arguments <= 0 and derivative queries there raise (silent
    infinities in derivatives would corrupt Newton steps).
    """

    def __init__(self, value: Callable, d1: Callable, d2: Callable,
                 hard_core: bool = False, name: str = ""):
        self._value = value
        self._d1 = d1
        self._d2 = d2
        self.hard_core = hard_core
        self.name = name

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.hard_core:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(t > 0.0, self._value(np.where(t > 0.0, t, 1.0)), np.inf)
        else:
            out = np.asarray(self._value(t))
        return out if out.ndim else float(out)

    def _check_domain(self, t):
        if self.hard_core and np.any(np.asarray(t) <= 0.0):
            raise ValueError(f"derivative of {self.name or 'potential'} requested at t <= 0")

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        self._check_domain(t)
        out = np.asarray(self._d1(t))
        return out if out.ndim else float(out)

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        self._check_domain(t)
        out = np.asarray(self._d2(t))
        return out if out.ndim else float(out)

    def __repr__(self):
        return f"PairPotential({self.name or 'anonymous'})"


def poly_log(scale: float) -> PairPotential:
    """Nearest-neighbour family scale*(t^2 - 2*ln t): hard core, uniformly convex."""
    return PairPotential(
        value=lambda t: scale * (t * t - 2.0 * np.log(t)),
        d1=lambda t: scale * (2.0 * t - 2.0 / t),
        d2=lambda t: scale * (2.0 + 2.0 / (t * t)),
        hard_core=True,
        name=f"{scale}*(t^2-2ln t)",
    )


def neg_sqrt(kappa: float) -> PairPotential:
    """Second-neighbour family -kappa*sqrt(1+t^2): globally concave, defined on all reals."""
    return PairPotential(
        value=lambda t: -kappa * np.sqrt(1.0 + t * t),
        d1=lambda t: -kappa * t / np.sqrt(1.0 + t * t),
        d2=lambda t: -kappa * (1.0 + t * t) ** -1.5,
        hard_core=False,
        name=f"-{kappa}*sqrt(1+t^2)",
    )


@dataclass(frozen=True)
class CertifiedConstants:
    """Constants certified by a grid scan, with a safety margin already applied.

    ``l_convexity`` bounds phi1'', psi1'' and W'' below; ``l_coercivity`` is
    the reduced constant (1-alpha)*l_convexity/2 entering the defect-block
    lower bound.  ``C_sandwich`` and ``C_coercivity`` are the additive
    constants for the four-strain defect inequality and the mean-energy
    coercivity bound; ``c_w4``, ``c_phi4``, ``c_psi4`` are the quadratic
    minorant offsets inf(chi(t) - (l/4) t^2) they are assembled from.
    """
    l_convexity: float
    l_coercivity: float
    alpha: float
    C: float
    kappa: float
    c_w4: float
    c_phi4: float
    c_psi4: float
    C_sandwich: float
    C_coercivity: float
    t_min: float
    t_max: float


@dataclass(frozen=True)
class PotentialSet:
    """The four pair potentials of a Confined Lennard-Jones model."""
    phi1: PairPotential
    phi2: PairPotential
    psi1: PairPotential
    psi2: PairPotential
    constants: Optional[CertifiedConstants] = None
    params: dict = field(default_factory=dict)

    def W(self, t):
        """Continuum elastic density phi1(t) + phi2(t); +inf for t <= 0."""
        t = np.asarray(t, dtype=float)
        out = self.phi1(t) + np.where(t > 0.0, self.phi2(t), np.inf)
        return out if np.ndim(out) else float(out)

    def W_prime(self, t):
        return _maybe_scalar(self.phi1.d1(t) + self.phi2.d1(t))

    def W_second(self, t):
        return _maybe_scalar(self.phi1.d2(t) + self.phi2.d2(t))

    def with_constants(self, constants: CertifiedConstants) -> "PotentialSet":
        return PotentialSet(self.phi1, self.phi2, self.psi1, self.psi2,
                            constants=constants, params=dict(self.params))

    @property
    def l_convexity(self) -> float:
        if self.constants is None:
            raise ValueError("model has no certified constants; run validate_assumptions")
        return self.constants.l_convexity


def _maybe_scalar(x):
    x = np.asarray(x)
    return x if x.ndim else float(x)


def poly_log_sqrt_model(kappa: float = 0.8, kappa2: float = 0.4,
                        beta1: float = 1.5, certify: bool = True) -> PotentialSet:
    """Model with phi1 = t^2 - 2 ln t, phi2 = -kappa sqrt(1+t^2), psi1 = beta1*phi1,
    psi2 = -kappa2 sqrt(1+t^2)."""
    p = PotentialSet(
        phi1=poly_log(1.0),
        phi2=neg_sqrt(kappa),
        psi1=poly_log(beta1),
        psi2=neg_sqrt(kappa2),
        params={"family": "poly-log-sqrt", "kappa": kappa, "kappa2": kappa2, "beta1": beta1},
    )
    if certify:
        report = validate_assumptions(p, StrainGrid())
        if not report.passed:
            raise ValueError(f"model fails assumptions: {report.failures()}")
        p = p.with_constants(report.constants)
    return p


_DEFAULT_CACHE: dict = {}


def default_model(defect_strength: float = 1.0) -> PotentialSet:
    """Reference model (kappa=0.8, kappa2=0.4, beta1=1.5), certified.

    ``defect_strength`` linearly interpolates the defect potentials between
    the pure ones (0.0) and the full mismatch (1.0); the family is linear in
    (beta1, kappa2) so parameter interpolation is exact.
    """
    key = float(defect_strength)
    if key not in _DEFAULT_CACHE:
        s = key
        _DEFAULT_CACHE[key] = poly_log_sqrt_model(
            kappa=0.8,
            kappa2=0.8 + s * (0.4 - 0.8),
            beta1=1.0 + s * (1.5 - 1.0),
        )
    return _DEFAULT_CACHE[key]


def model_from_json(doc) -> PotentialSet:
    """Build a model from a JSON document (dict or string).

    Accepted forms: ``{"builtin": "default"}`` or
    ``{"family": "poly-log-sqrt", "kappa": ..., "kappa2": ..., "beta1": ...}``.
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    if "builtin" in doc:
        if doc["builtin"] != "default":
            raise ValueError(f"unknown builtin model {doc['builtin']!r}")
        return default_model()
    if doc.get("family") == "poly-log-sqrt":
        return poly_log_sqrt_model(
            kappa=float(doc.get("kappa", 0.8)),
            kappa2=float(doc.get("kappa2", 0.4)),
            beta1=float(doc.get("beta1", 1.5)),
        )
    raise ValueError(f"unrecognised model description: {doc!r}")


def model_to_json(p: PotentialSet) -> dict:
    if not p.params:
        raise ValueError("model has no serialisable parameters")
    return dict(p.params)


@dataclass(frozen=True)
class StrainGrid:
    """Strain grid for assumption checks; log-spaced by default."""
    t_min: float = 1e-3
    t_max: float = 1e2
    n: int = 1000
    log: bool = True

    def points(self) -> np.ndarray:
        if self.t_min <= 0.0:
            raise ValueError("strain grid requires t_min > 0")
        if self.log:
            return np.geomspace(self.t_min, self.t_max, self.n)
        return np.linspace(self.t_min, self.t_max, self.n)


@dataclass
class AssumptionCheck:
    assumption: str
    passed: bool
    witness_t: Optional[float] = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list
    constants: Optional[CertifiedConstants]
    grid: StrainGrid

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c.assumption for c in self.checks if not c.passed]

    def to_json(self) -> dict:
        out = {
            "assumptions": [
                {"assumption": c.assumption, "pass": c.passed, "witness_t": c.witness_t,
                 "detail": c.detail}
                for c in self.checks
            ],
            "pass": self.passed,
        }
        if self.constants is not None:
            cc = self.constants
            out["constants"] = {"l": cc.l_convexity, "alpha": cc.alpha,
                                "C": cc.C, "kappa": cc.kappa}
            out["derived_constants"] = asdict(cc)
        else:
            out["constants"] = None
        return out


# Safety margins applied to grid-scanned constants: the grid infimum
# overestimates the true infimum, so certified lower bounds shrink by a
# relative margin plus an absolute floor.
_REL_MARGIN = 0.01
_ABS_MARGIN = 1e-9


def _certified_min(values: np.ndarray) -> float:
    m = float(np.min(values))
    return m - _REL_MARGIN * abs(m) - _ABS_MARGIN


def _diverges_at_edge(g: np.ndarray) -> Optional[int]:
    """Index of a grid edge where g trends downward into the edge minimum, else None."""
    k = int(np.argmin(g))
    if k == 0 and g[0] < g[1] < g[2]:
        return 0
    if k == len(g) - 1 and g[-1] < g[-2] < g[-3]:
        return len(g) - 1
    return None


_ALPHA_CANDIDATES = (0.25, 0.5, 0.75, 0.9)


def validate_assumptions(p: PotentialSet, grid: StrainGrid) -> ValidationReport:
    """Check the six model assumptions on a strain grid and certify constants.

    The hard-core blow-up is checked by monotone growth on a geometric
    sequence approaching zero; convexity/concavity by sign of second
    derivatives on the grid; domination by searching a small list of alpha
    candidates for one whose deficit second(t) + alpha*first(t) is bounded
    below without diverging into a grid edge.
    """
    t = grid.points()
    checks = []

    # (1) blow-up of nearest-neighbour potentials at 0+, +inf for t <= 0
    tail = grid.t_min * 0.5 ** np.arange(50, dtype=float)
    ok1, wit1 = True, None
    for pot in (p.phi1, p.psi1):
        vals = pot(tail)
        increments = np.diff(vals)
        if not (np.all(increments > 0.0) and np.mean(increments[-10:]) > 0.0):
            ok1, wit1 = False, float(tail[int(np.argmin(increments))])
        if not (np.isinf(pot(0.0)) and np.isinf(pot(-1.0))):
            ok1, wit1 = False, 0.0
    checks.append(AssumptionCheck("1: hard core blow-up", ok1, wit1))

    # (2) l-convexity of nearest-neighbour potentials
    d2_phi1 = p.phi1.d2(t)
    d2_psi1 = p.psi1.d2(t)
    nn_inf = min(float(np.min(d2_phi1)), float(np.min(d2_psi1)))
    ok2 = nn_inf > 0.0
    wit2 = None if ok2 else float(t[int(np.argmin(np.minimum(d2_phi1, d2_psi1)))])
    checks.append(AssumptionCheck("2: nearest-neighbour l-convexity", ok2, wit2,
                                  detail=f"inf second derivative {nn_inf:.6g}"))

    # (3) concavity of second-neighbour potentials
    d2_phi2 = p.phi2.d2(t)
    d2_psi2 = p.psi2.d2(t)
    sup2 = max(float(np.max(d2_phi2)), float(np.max(d2_psi2)))
    ok3 = sup2 <= 0.0
    wit3 = None if ok3 else float(t[int(np.argmax(np.maximum(d2_phi2, d2_psi2)))])
    checks.append(AssumptionCheck("3: second-neighbour concavity", ok3, wit3,
                                  detail=f"sup second derivative {sup2:.6g}"))

    # (4) domination: second >= -alpha*first + C for the four pairs
    phi1_v, psi1_v = p.phi1(t), p.psi1(t)
    phi2_v, psi2_v = p.phi2(t), p.psi2(t)
    alpha_found, C_found, wit4 = None, None, None
    for alpha in _ALPHA_CANDIDATES:
        feasible = True
        C_alpha = math.inf
        for second in (phi2_v, psi2_v):
            for first in (phi1_v, psi1_v):
                g = second + alpha * first
                edge = _diverges_at_edge(g)
                if edge is not None:
                    feasible = False
                    wit4 = float(t[edge])
                    break
                C_alpha = min(C_alpha, _certified_min(g))
            if not feasible:
                break
        if feasible:
            alpha_found, C_found = alpha, C_alpha
            break
    ok4 = alpha_found is not None
    checks.append(AssumptionCheck("4: nearest-neighbour domination", ok4,
                                  None if ok4 else wit4,
                                  detail=f"alpha={alpha_found}, C={C_found}"))

    # (5) l-convexity of W
    w2 = p.W_second(t)
    w_inf = float(np.min(w2))
    ok5 = w_inf > 0.0
    wit5 = None if ok5 else float(t[int(np.argmin(w2))])
    checks.append(AssumptionCheck("5: W l-convexity", ok5, wit5,
                                  detail=f"inf W'' {w_inf:.6g}"))

    # (6) external force regularity: force fields in this package are
    # closed-form with two derivatives, so this holds by construction.
    checks.append(AssumptionCheck("6: force field C^2", True, None,
                                  detail="closed-form force families"))

    constants = None
    if ok2 and ok3 and ok4 and ok5:
        l_conv = (1.0 - _REL_MARGIN) * min(nn_inf, w_inf)
        alpha = float(alpha_found)
        l_coer = (1.0 - alpha) * l_conv / 2.0
        kappa = float(np.max(np.abs(d2_phi2)))
        W_v = phi1_v + phi2_v
        c_w4 = _certified_min(W_v - 0.25 * l_conv * t * t)
        c_phi4 = _certified_min(phi1_v - 0.25 * l_conv * t * t)
        c_psi4 = _certified_min(psi1_v - 0.25 * l_conv * t * t)
        C_sandwich = C_found + (1.0 - alpha) * (c_phi4 + 2.0 * c_psi4) / 3.0
        # mean-energy coercivity constant: combines the per-gap minorants
        # W(t) >= l_coer*t^2 + c1 far from the defect with the sandwich
        # block; see decay/coercivity tests for the exact inequality used.
        c1 = _certified_min(W_v - l_coer * t * t)
        c2 = _certified_min(0.5 * (W_v + (1.0 - alpha) * phi1_v) - l_coer * t * t)
        c3 = _certified_min((1.0 - alpha) * psi1_v - l_coer * t * t)
        C_coercivity = min(c1, 0.0) + min(2.0 * (c2 + c3) + 3.0 * C_found, 0.0)
        constants = CertifiedConstants(
            l_convexity=l_conv, l_coercivity=l_coer, alpha=alpha, C=float(C_found),
            kappa=kappa, c_w4=c_w4, c_phi4=c_phi4, c_psi4=c_psi4,
            C_sandwich=C_sandwich, C_coercivity=C_coercivity,
            t_min=grid.t_min, t_max=grid.t_max,
        )
    return ValidationReport(checks=checks, constants=constants, grid=grid)


@dataclass(frozen=True)
class ShiftedSet:
    """Potentials re-centred at the continuum strain F0.

    Phi1(t) = phi1(F0+t) - phi1(F0) - phi1'(F0) t and companions; the Psi
    potentials subtract the same phi-based affine part, so Psi1(0) and
    Psi2(0) are in general nonzero.
    """
    F0: float
    Phi1: PairPotential
    Psi1: PairPotential
    Phi2: PairPotential
    Psi2: PairPotential


def _shift(base: PairPotential, affine: PairPotential, F0: float, name: str) -> PairPotential:
    a0 = affine(F0)
    a1 = affine.d1(F0)
    return PairPotential(
        value=lambda t: base(F0 + t) - a0 - a1 * t,
        d1=lambda t: base.d1(F0 + t) - a1,
        d2=lambda t: base.d2(F0 + t),
        hard_core=False,  # domain handled by base returning +inf / raising
        name=name,
    )


def shifted_potentials(p: PotentialSet, F0: float) -> ShiftedSet:
    """Shifted potential quadruple at strain F0 > 0."""
    if not F0 > 0.0:
        raise ValueError("shifted potentials require F0 > 0")
    return ShiftedSet(
        F0=float(F0),
        Phi1=_shift(p.phi1, p.phi1, F0, "Phi1"),
        Psi1=_shift(p.psi1, p.phi1, F0, "Psi1"),
        Phi2=_shift(p.phi2, p.phi2, F0, "Phi2"),
        Psi2=_shift(p.psi2, p.phi2, F0, "Psi2"),
    )
