import json
import math
import time

import numpy as np
import pytest

from cljchain.potentials import (
    PairPotential,
    StrainGrid,
    default_model,
    model_from_json,
    model_to_json,
    poly_log_sqrt_model,
    shifted_potentials,
    validate_assumptions,
)

GRID = StrainGrid()


@pytest.fixture(scope="module")
def model():
    return default_model()


@pytest.fixture(scope="module")
def report(model):
    return validate_assumptions(model, GRID)


def test_default_values(model):
    assert model.phi1(1.0) == pytest.approx(1.0, abs=1e-15)
    assert model.phi2(0.0) == pytest.approx(-0.8, abs=1e-15)
    assert model.W(1.0) == pytest.approx(1.0 - 0.8 * math.sqrt(2.0), abs=1e-14)


def test_default_certification_and_runtime(model):
    t0 = time.time()
    rep = validate_assumptions(model, GRID)
    elapsed = time.time() - t0
    assert rep.passed
    assert elapsed < 1.0
    cc = rep.constants
    assert cc.l_convexity >= 1.1
    assert cc.alpha <= 0.9
    # W'' = 2 + 2/t^2 - kappa (1+t^2)^{-3/2} stays above 2 - kappa = 1.2
    t = GRID.points()
    assert np.min(model.W_second(t)) >= 1.2
    # phi1 alone is 2-convex
    assert np.min(model.phi1.d2(t)) >= 2.0


def test_convex_second_neighbour_fails():
    bad = poly_log_sqrt_model(certify=False)
    bad = type(bad)(
        phi1=bad.phi1,
        phi2=PairPotential(lambda t: t * t, lambda t: 2 * t, lambda t: 2.0 + 0 * t,
                           name="t^2"),
        psi1=bad.psi1,
        psi2=bad.psi2,
    )
    rep = validate_assumptions(bad, GRID)
    assert not rep.passed
    assert "3: second-neighbour concavity" in rep.failures()


def test_antidominated_second_neighbour_fails():
    base = poly_log_sqrt_model(certify=False)
    neg_phi1 = PairPotential(
        lambda t: -(t * t - 2.0 * np.log(t)),
        lambda t: -(2.0 * t - 2.0 / t),
        lambda t: -(2.0 + 2.0 / (t * t)),
        name="-phi1",
    )
    bad = type(base)(phi1=base.phi1, phi2=neg_phi1, psi1=base.psi1, psi2=base.psi2)
    rep = validate_assumptions(bad, GRID)
    assert not rep.passed
    # phi2 = -phi1 violates domination for every alpha < 1: the deficit
    # diverges to -inf as t -> 0 and t -> inf
    assert "4: nearest-neighbour domination" in rep.failures()


def test_grid_rejects_nonpositive_points():
    with pytest.raises(ValueError):
        StrainGrid(t_min=0.0).points()
    with pytest.raises(ValueError):
        StrainGrid(t_min=-1.0).points()


def test_W_is_sum_and_hard_core(model):
    t = GRID.points()
    assert np.allclose(model.W(t), model.phi1(t) + model.phi2(t), rtol=0, atol=0)
    assert math.isinf(model.W(0.0))
    assert math.isinf(model.W(-2.0))
    with pytest.raises(ValueError):
        model.W_prime(-1.0)
    with pytest.raises(ValueError):
        model.phi1.d1(0.0)


def test_blowup_near_zero(model):
    tail = 1e-3 * 0.5 ** np.arange(40)
    for pot in (model.phi1, model.psi1):
        vals = pot(tail)
        assert np.all(np.diff(vals) > 0.0)
        assert math.isinf(pot(0.0)) and math.isinf(pot(-1.0))


def test_shifted_affine_normalisation(model):
    sh = shifted_potentials(model, 1.3)
    assert sh.Phi1(0.0) == pytest.approx(0.0, abs=1e-15)
    assert sh.Phi2(0.0) == pytest.approx(0.0, abs=1e-15)
    assert sh.Phi1.d1(0.0) == pytest.approx(0.0, abs=1e-15)
    assert sh.Phi2.d1(0.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        shifted_potentials(model, 0.0)


def test_shifted_value_at_F0_one(model):
    # Phi1(0.1) = phi1(1.1) - phi1(1) - phi1'(1)*0.1 with phi1'(1) = 0
    sh = shifted_potentials(model, 1.0)
    expected = 1.21 - 2.0 * math.log(1.1) - 1.0
    assert sh.Phi1(0.1) == pytest.approx(expected, abs=1e-14)


def test_psi_equals_phi_collapses_shifted():
    m = poly_log_sqrt_model(kappa=0.8, kappa2=0.8, beta1=1.0)
    sh = shifted_potentials(m, 1.1)
    t = np.linspace(-0.9, 3.0, 101)
    assert np.allclose(sh.Psi1(t), sh.Phi1(t), rtol=0, atol=1e-14)
    assert np.allclose(sh.Psi2(t), sh.Phi2(t), rtol=0, atol=1e-14)


def test_concavity_midpoint_inequality(model):
    # phi1(a)/2 + phi1(b)/2 + phi2((a+b)/2) >= W(a)/2 + W(b)/2
    rng = np.random.default_rng(7)
    a = np.exp(rng.uniform(np.log(1e-2), np.log(10.0), 500))
    b = np.exp(rng.uniform(np.log(1e-2), np.log(10.0), 500))
    lhs = 0.5 * model.phi1(a) + 0.5 * model.phi1(b) + model.phi2(0.5 * (a + b))
    rhs = 0.5 * model.W(a) + 0.5 * model.W(b)
    assert np.all(lhs - rhs >= -1e-12)


def test_defect_sandwich_inequality(model, report):
    cc = report.constants
    rng = np.random.default_rng(11)
    for _ in range(500):
        a, b, c, d = np.exp(rng.uniform(np.log(2e-3), np.log(50.0), 4))
        lhs = (0.5 * model.phi1(a) + model.psi2(0.5 * (a + b)) + model.psi1(b)
               + model.phi2(0.5 * (b + c)) + model.psi1(c)
               + model.psi2(0.5 * (c + d)) + 0.5 * model.phi1(d))
        rhs = (0.5 * cc.l_coercivity * (0.5 * a * a + b * b + c * c + 0.5 * d * d)
               + 3.0 * cc.C_sandwich)
        assert lhs >= rhs - 1e-10


@pytest.mark.parametrize("name", ["phi1", "phi2", "psi1", "psi2"])
def test_first_derivatives_match_fd(model, name):
    pot = getattr(model, name)
    t = np.geomspace(0.05, 50.0, 200)
    h = 1e-6
    fd = (pot(t + h) - pot(t - h)) / (2.0 * h)
    assert np.allclose(pot.d1(t), fd, rtol=1e-6, atol=1e-9)


def test_shifted_sum_quadratic_lower_bound(model):
    # Phi1 + Phi2 >= (l/2) t^2 wherever F0 + t > 0
    F0 = 1.1
    sh = shifted_potentials(model, F0)
    l = model.constants.l_convexity
    t = np.linspace(-F0 + 1e-3, 20.0, 2000)
    assert np.all(sh.Phi1(t) + sh.Phi2(t) >= 0.5 * l * t * t - 1e-12)


def test_model_json_round_trip(model):
    assert model_from_json({"builtin": "default"}).params == model.params
    doc = model_to_json(model)
    clone = model_from_json(json.dumps(doc))
    t = np.geomspace(0.1, 10.0, 50)
    assert np.allclose(clone.W(t), model.W(t), rtol=0, atol=0)
    with pytest.raises(ValueError):
        model_from_json({"builtin": "unknown"})
    with pytest.raises(ValueError):
        model_from_json({"family": "other"})


def test_validation_report_json(report):
    doc = report.to_json()
    assert doc["pass"] is True
    assert {"l", "alpha", "C", "kappa"} <= set(doc["constants"])
    assert len(doc["assumptions"]) == 6
    for entry in doc["assumptions"]:
        assert {"assumption", "pass", "witness_t"} <= set(entry)
