import math

import numpy as np
import pytest

import cljchain.discrete as disc
from cljchain.continuum import solve_continuum
from cljchain.discrete import (
    ChainConfig,
    Deformation,
    ForceField,
    chain_config_from_json,
    deformation_from_csv,
    deformation_to_csv,
    force_from_json,
    random_admissible,
    sigma_field,
    uniform_deformation,
)
from cljchain.potentials import default_model, poly_log_sqrt_model

L = 1.1


@pytest.fixture(scope="module")
def model():
    return default_model()


@pytest.fixture(scope="module")
def pure_model():
    return poly_log_sqrt_model(kappa=0.8, kappa2=0.8, beta1=1.0)


def test_uniform_pure_energy(model):
    cfg = ChainConfig(model, N=16, L=L)
    y = uniform_deformation(cfg)
    assert disc.energy_pure(cfg, y) == pytest.approx(2 * cfg.N * model.W(L), rel=1e-14)


def test_alternating_gaps_hand_expansion(model):
    # N=2, gaps (a,b,a,b): 2 phi1(a) + 2 phi1(b) + 4 phi2((a+b)/2)
    cfg = ChainConfig(model, N=2, L=1.0)
    a, b = 0.9, 1.3
    y = Deformation(cfg, np.array([a, b, a, b]))
    expected = 2 * model.phi1(a) + 2 * model.phi1(b) + 4 * model.phi2(0.5 * (a + b))
    assert disc.energy_pure(cfg, y) == pytest.approx(expected, rel=1e-14)


def test_nonpositive_gap_gives_infinite_energy(model):
    cfg = ChainConfig(model, N=4, L=L)
    gaps = np.full(8, L)
    gaps[3] = 0.0
    y = Deformation(cfg, gaps)
    assert math.isinf(disc.energy_pure(cfg, y))
    assert math.isinf(disc.F_eps(cfg, y))
    gaps[3] = -0.2
    assert math.isinf(disc.F_eps(cfg, Deformation(cfg, gaps)))


def test_defect_energy_vanishes_for_pure_model(pure_model):
    cfg = ChainConfig(pure_model, N=8, L=L)
    rng = np.random.default_rng(3)
    for _ in range(5):
        y = random_admissible(cfg, rng)
        assert disc.energy_defect(cfg, y) == pytest.approx(0.0, abs=1e-13)


def test_defect_energy_uniform(model):
    cfg = ChainConfig(model, N=8, L=L)
    y = uniform_deformation(cfg)
    expected = 2 * (model.psi2(L) - model.phi2(L) + model.psi1(L) - model.phi1(L))
    assert disc.energy_defect(cfg, y) == pytest.approx(expected, rel=1e-14)


def test_defect_energy_independent_of_N(model):
    # E_d only references gaps at indices -2..1
    rng = np.random.default_rng(5)
    near = 0.8 + 0.6 * rng.random(4)
    values = []
    for N in (8, 16):
        cfg = ChainConfig(model, N=N, L=L)
        gaps = 0.9 + 0.4 * rng.random(2 * N)
        gaps[N - 2:N + 2] = near
        values.append(disc.energy_defect(cfg, Deformation(cfg, gaps)))
    assert values[0] == pytest.approx(values[1], rel=1e-15)


def test_zero_force(model):
    cfg = ChainConfig(model, N=8, L=L)
    y = random_admissible(cfg, np.random.default_rng(0))
    assert disc.energy_force(cfg, y) == 0.0
    assert np.all(sigma_field(cfg).values == 0.0)


def test_sigma_field_unit_force_hand_unrolled(model):
    # f = 1, N = 2: sigma = (-eps/2, eps/2, 3 eps/2, 5 eps/2, 7 eps/2)
    cfg = ChainConfig(model, N=2, L=1.0, force=ForceField("const", 1.0))
    eps = cfg.eps
    expected = np.array([-0.5, 0.5, 1.5, 2.5, 3.5]) * eps
    assert np.allclose(sigma_field(cfg).values, expected, rtol=0, atol=1e-16)


def test_sigma_recursion_exact(model):
    cfg = ChainConfig(model, N=32, L=L, force=ForceField("sin", 0.7))
    sig = sigma_field(cfg).values
    assert sig[0] == -0.5 * cfg.eps * cfg.f[0]
    for j in range(1, 2 * cfg.N + 1):
        assert sig[j] == sig[j - 1] + cfg.eps * cfg.f[j - 1]


def test_summation_by_parts(model):
    # sum f_i u_i = -sum sigma_{i+1} D1u_i for admissible y
    rng = np.random.default_rng(17)
    for N in (8, 32):
        cfg = ChainConfig(model, N=N, L=L, force=ForceField("sin", 1.0))
        sig = sigma_field(cfg).values
        for _ in range(5):
            y = random_admissible(cfg, rng)
            lhs = float(np.dot(cfg.f, y.u[:-1]))
            rhs = -float(np.dot(sig[1:], y.d1u()))
            norm = float(np.linalg.norm(y.u))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, norm)


def test_total_energy_decomposition(model):
    cfg = ChainConfig(model, N=8, L=L, force=ForceField("sin", 0.5))
    y = random_admissible(cfg, np.random.default_rng(2))
    total = disc.energy_total(cfg, y)
    parts = (disc.energy_pure(cfg, y) + disc.energy_defect(cfg, y)
             + disc.energy_force(cfg, y))
    assert total == pytest.approx(parts, rel=1e-13)
    assert disc.F_eps(cfg, y) == pytest.approx(cfg.eps * total, rel=1e-15)


def test_degenerate_F_eps_is_W(pure_model):
    cfg = ChainConfig(pure_model, N=16, L=L)
    y = uniform_deformation(cfg)
    assert disc.F_eps(cfg, y) == pytest.approx(pure_model.W(L), rel=1e-13)


def test_F_eps_against_mpmath_brute_force(model):
    # independent term-by-term summation at 50 digits
    import mpmath as mp
    mp.mp.dps = 50
    kappa, kappa2, beta1 = mp.mpf("0.8"), mp.mpf("0.4"), mp.mpf("1.5")

    def phi1(t):
        return t * t - 2 * mp.log(t)

    def phi2(t):
        return -kappa * mp.sqrt(1 + t * t)

    def psi1(t):
        return beta1 * phi1(t)

    def psi2(t):
        return -kappa2 * mp.sqrt(1 + t * t)

    N = 4
    cfg = ChainConfig(model, N=N, L=L, force=ForceField("sin", 0.5))
    y = random_admissible(cfg, np.random.default_rng(23))
    g = [mp.mpf(v) for v in y.gaps]
    eps = mp.mpf(1) / (2 * N)
    Lm = mp.mpf("1.1")

    total = mp.mpf(0)
    for j in range(2 * N):
        i = j - N
        nn = psi1 if i in (-1, 0) else phi1
        snn = psi2 if i in (-2, 0) else phi2
        total += nn(g[j]) + snn((g[j] + g[(j + 1) % (2 * N)]) / 2)
    ys = mp.mpf(0)
    for j in range(2 * N):
        i = j - N
        x_i = i * eps
        f_i = mp.mpf("0.5") * mp.sin(2 * mp.pi * x_i)
        total += f_i * (ys - Lm * (x_i + mp.mpf(1) / 2))
        ys += eps * g[j]
    expected = float(eps * total)
    assert disc.F_eps(cfg, y) == pytest.approx(expected, rel=1e-14)


def test_gradient_uniform_symmetry(pure_model):
    cfg = ChainConfig(pure_model, N=8, L=L)
    y = uniform_deformation(cfg)
    grad = disc.gradient(cfg, y)
    expected = cfg.eps * pure_model.W_prime(L)
    assert np.allclose(grad, expected, rtol=1e-14, atol=1e-16)


def _fd_gradient(cfg, gaps, h=1e-6):
    out = np.empty_like(gaps)
    for j in range(len(gaps)):
        gp, gm = gaps.copy(), gaps.copy()
        gp[j] += h
        gm[j] -= h
        out[j] = (disc.F_eps(cfg, Deformation(cfg, gp))
                  - disc.F_eps(cfg, Deformation(cfg, gm))) / (2 * h)
    return out


def test_gradient_matches_fd(model):
    cfg = ChainConfig(model, N=8, L=L, force=ForceField("sin", 0.5))
    rng = np.random.default_rng(29)
    for _ in range(3):
        y = random_admissible(cfg, rng)
        grad = disc.gradient(cfg, y)
        fd = _fd_gradient(cfg, y.gaps)
        assert np.max(np.abs(grad - fd)) <= 1e-6 * max(1.0, np.max(np.abs(grad)))


def test_hessian_matches_fd_and_row_sums(model):
    cfg = ChainConfig(model, N=8, L=L, force=ForceField("sin", 0.5))
    rng = np.random.default_rng(31)
    y = random_admissible(cfg, rng)
    H = disc.hessian(cfg, y).toarray()
    assert np.allclose(H, H.T, rtol=0, atol=1e-18)
    h = 1e-6
    n = 2 * cfg.N
    fd = np.empty((n, n))
    for j in range(n):
        gp, gm = y.gaps.copy(), y.gaps.copy()
        gp[j] += h
        gm[j] -= h
        fd[:, j] = (disc.gradient(cfg, Deformation(cfg, gp))
                    - disc.gradient(cfg, Deformation(cfg, gm))) / (2 * h)
    assert np.max(np.abs(H - fd)) <= 1e-5 * max(1.0, np.max(np.abs(H)))
    # at defect-free rows of a uniform state the row sum is eps*W''(L)
    yu = uniform_deformation(cfg)
    Hu = disc.hessian(cfg, yu).toarray()
    row = Hu[2].sum()
    assert row == pytest.approx(cfg.eps * model.W_second(L), rel=1e-13)


def test_gradient_rejects_inadmissible(model):
    cfg = ChainConfig(model, N=4, L=L)
    gaps = np.full(8, L)
    gaps[0] = -1.0
    with pytest.raises(ValueError):
        disc.gradient(cfg, Deformation(cfg, gaps))
    with pytest.raises(ValueError):
        disc.hessian(cfg, Deformation(cfg, gaps))


@pytest.mark.parametrize("N", [8, 16, 32])
def test_mean_energy_coercivity(model, N):
    # eps*(E_pure + E_defect) >= l_coer * ||g||_eps^2 + C_coer
    cc = model.constants
    cfg = ChainConfig(model, N=N, L=L)
    rng = np.random.default_rng(N)
    for _ in range(30):
        gaps = np.exp(rng.uniform(np.log(5e-3), np.log(20.0), 2 * cfg.N))
        y = Deformation(cfg, gaps)
        lhs = cfg.eps * (disc.energy_pure(cfg, y) + disc.energy_defect(cfg, y))
        rhs = (cc.l_coercivity * cfg.eps * float(np.sum(gaps ** 2))
               + cc.C_coercivity)
        assert lhs >= rhs - 1e-10


@pytest.mark.parametrize("N", [16, 32, 64, 128, 256])
def test_sigma_interpolation_estimates(model, N):
    # trapezoid tail and in-cell Taylor remainders against the printed bounds
    from cljchain.quadrature import gauss_panel
    A = 1.0
    cfg = ChainConfig(model, N=N, L=L, force=ForceField("sin", A))
    force = cfg.force
    eps = cfg.eps
    sig = sigma_field(cfg).values
    f1_sup, f2_sup = force.d1_sup, force.d2_sup
    bound1 = eps ** 2 * f2_sup / 12.0
    bound2 = eps ** 2 * f1_sup / 6.0
    trapz = 0.0
    for j in range(2 * cfg.N):
        x_i = cfg.x[j]
        # piece 1: integral of f - (piecewise linear interpolant of f) up to x_i
        piece1 = float(force.antiderivative(x_i)) - trapz
        assert abs(piece1) <= bound1 + 1e-15
        # piece 2: cell average of int_{x_i}^x f minus eps*f_i/2
        inner = gauss_panel(
            lambda x: np.array([gauss_panel(force, x_i, xv, n=12) for xv in np.atleast_1d(x)]),
            x_i, x_i + eps, n=12) / eps
        piece2 = inner - 0.5 * eps * cfg.f[j]
        assert abs(piece2) <= bound2 + 1e-15
        # combined: cell average of sigma - sigma_eps
        avg_sigma = gauss_panel(force.antiderivative, x_i, x_i + eps, n=12) / eps
        assert abs(avg_sigma - sig[j + 1]) <= bound1 + bound2 + 1e-15
        trapz += 0.5 * eps * (cfg.f[j] + force(cfg.x[j + 1]))


def test_s_terms_identity(model):
    # F1_eps = sum s_i + E_d_tilde(D1y - F0) with both sides independent
    from cljchain.cell import E_d_tilde
    cfg = ChainConfig(model, N=64, L=L, force=ForceField("sin", 0.5))
    cont = solve_continuum(cfg)
    rng = np.random.default_rng(41)
    for _ in range(3):
        y = random_admissible(cfg, rng, spread=0.2)
        s = disc.s_terms(cfg, y, cont)
        r = y.gaps - cont.F0_strain
        ed = E_d_tilde(model, cont.F0_strain,
                       r[cfg.N - 2], r[cfg.N - 1], r[cfg.N], r[cfg.N + 1])
        lhs = disc.F1_eps(cfg, y, cont)
        assert abs(lhs - (float(np.sum(s)) + ed)) <= 1e-9


def test_s_terms_vanish_at_degenerate_minimiser(pure_model):
    cfg = ChainConfig(pure_model, N=16, L=L)
    cont = solve_continuum(cfg)
    y = Deformation(cfg, cont.cell_average_strains())
    s = disc.s_terms(cfg, y, cont)
    assert np.max(np.abs(s)) <= 1e-11
    assert abs(disc.F1_eps(cfg, y, cont)) <= 1e-10


def test_s_terms_pointwise_lower_bound(model):
    # s_i + C eps^{3/2} ||Du||_2 >= 0 at the discrete minimiser
    from cljchain.solver import SolveOptions, minimize_discrete
    for N in (16, 64):
        cfg = ChainConfig(model, N=N, L=L, force=ForceField("sin", 0.5))
        cont = solve_continuum(cfg)
        res = minimize_discrete(cfg, SolveOptions(), cont=cont)
        s = disc.s_terms(cfg, res.y, cont)
        du_norm = math.sqrt(cfg.eps * float(np.sum(res.y.d1u() ** 2)))
        C = cfg.force.d2_sup / 12.0 + cfg.force.d1_sup / 6.0
        assert np.min(s) >= -C * cfg.eps ** 1.5 * du_norm - 1e-9


def test_F1_requires_matching_config(model):
    cfg = ChainConfig(model, N=8, L=L)
    other = ChainConfig(model, N=16, L=L)
    cont = solve_continuum(other)
    with pytest.raises(ValueError):
        disc.F1_eps(cfg, uniform_deformation(cfg), cont)


def test_config_json_and_csv_round_trip(model, tmp_path):
    cfg = chain_config_from_json(
        {"model": {"builtin": "default"}, "N": 8, "L": 1.1,
         "force": {"kind": "sin", "amplitude": 0.5}})
    assert cfg.N == 8 and cfg.L == 1.1 and cfg.force.kind == "sin"
    assert force_from_json({"kind": "zero"}).kind == "zero"
    with pytest.raises(ValueError):
        force_from_json({"kind": "quadratic"})

    y = random_admissible(cfg, np.random.default_rng(1))
    path = tmp_path / "def.csv"
    deformation_to_csv(y, path)
    back = deformation_from_csv(cfg, path)
    assert np.array_equal(back.gaps, y.gaps)
    assert disc.F_eps(cfg, back) == disc.F_eps(cfg, y)


def test_epsilon_definition(model):
    for N in (2, 7, 64):
        cfg = ChainConfig(model, N=N, L=L)
        assert abs(cfg.eps * 2 * N - 1.0) <= 1e-15
        assert cfg.x[0] == -0.5 and cfg.x[-1] == 0.5
        assert cfg.f_periodic(N) == cfg.f_periodic(-N)
