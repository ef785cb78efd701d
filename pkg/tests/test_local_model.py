import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slagfib.ambient import DefiningPolynomial, FamilyParams, PartitionedIndex, ToricPotential
from slagfib.geometry import Geometry
from slagfib.errors import ParameterError
from slagfib.local_model import (
    FibreEmbedding, ModelParams, deta_dc, lagrangian_residual, model_torus, mu_of, phase_residual, solve_eta, zeta_of,
)

from conftest import CONST_P, DESK_P, make_geom


def _bisect_eta(c, kappa):
    c = np.asarray(c, float)
    lo, hi = 0.0, kappa ** (1.0 / len(c))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.prod(c + mid) > kappa:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_eta_examples():
    assert solve_eta([0, 0], 9e-4) == pytest.approx(0.03, rel=1e-14)
    root = (-0.05 + math.sqrt(0.0061)) / 2
    assert solve_eta([0, 0.05], 9e-4) == pytest.approx(root, rel=1e-14)
    assert root == pytest.approx(0.0140512, abs=1e-7)
    assert solve_eta([0, 0, 0], 8e-6) == pytest.approx(0.02, rel=1e-14)
    assert solve_eta([0, 0.1, 0.3], 1e-3) == pytest.approx(_bisect_eta([0, 0.1, 0.3], 1e-3), rel=1e-13)


def test_eta_rejects():
    with pytest.raises(ParameterError):
        solve_eta([0, 0.1], 0.0)
    with pytest.raises(ParameterError):
        solve_eta([0, -0.1], 1e-3)


def test_zeta_examples():
    assert zeta_of([0, 0], 0.123) == pytest.approx(0.5)
    assert zeta_of([0, 0.05], 0.0140512) == pytest.approx(0.820093, abs=1e-6)
    assert zeta_of([0, 10], 9e-5) == pytest.approx(1 / (1 + 9e-5 / (10 + 9e-5)), rel=1e-14)


def test_mu_examples():
    mu, grad = mu_of([0, 0], 0.03)
    assert mu == pytest.approx(0.06)
    assert np.allclose(grad, -math.log(0.03) - 1)
    mu, grad = mu_of([0, 0.05], 0.0140512)
    assert mu == pytest.approx(0.165506, abs=1e-6)
    # -log(c_1 + eta) = 2.74807; the constant -1 comes from eta's dependence on c
    assert grad[1] + 1 == pytest.approx(2.74807, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=3), st.floats(-12, 0))
def test_eta_properties(ctail, logk):
    c = np.array([0.0] + ctail)
    kappa = 10.0 ** logk
    eta = solve_eta(c, kappa)
    assert eta > 0
    assert abs(np.prod(c + eta) - kappa) <= 1e-13 * kappa
    zeta = zeta_of(c, eta)
    assert 1.0 / len(c) - 1e-15 <= zeta <= 1.0 + 1e-15


def test_eta_derivatives_match_central_differences(rng):
    for _ in range(20):
        c = np.concatenate([[0.0], rng.uniform(0, 0.2, 2)])
        kappa = 10 ** rng.uniform(-6, -2)
        eta = solve_eta(c, kappa)
        dd = deta_dc(c, eta)
        dmu = mu_of(c, eta)[1]
        for k in range(1, 3):
            h = 1e-6 * max(c[k], 1e-3)
            cp, cm = c.copy(), c.copy()
            cp[k] += h
            cm[k] -= h
            ep, em = solve_eta(cp, kappa), solve_eta(cm, kappa)
            assert dd[k] == pytest.approx((ep - em) / (2 * h), rel=1e-6, abs=1e-9)
            fd = (mu_of(cp, ep)[0] - mu_of(cm, em)[0]) / (2 * h)
            assert dmu[k] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_model_torus_flat_constant():
    geom, params = make_geom(p=CONST_P)
    emb = model_torus(params, geom.pot, geom.p, (8, 8))
    u = np.abs(emb.points) ** 2
    assert np.allclose(u[..., 0], 0.02, rtol=1e-13)
    assert np.allclose(u[..., 1], 0.02, rtol=1e-13)
    assert np.allclose(u[..., 2], 1.0)
    assert lagrangian_residual(emb, geom.form("check", params.c_arr)) <= 1e-10
    assert phase_residual(emb, geom.part, geom.p, FamilyParams(0.01)) <= 1e-10


def test_model_torus_on_hypersurface_with_winding(desk):
    geom, params = desk
    emb = model_torus(params, geom.pot, geom.p, (8, 16))
    res = np.prod(emb.points, axis=-1) - 0.01 * geom.p.value(emb.points)
    assert np.max(np.abs(res)) < 1e-16
    assert emb.winding.tolist() == [[-1, 1, 0], [-1, 0, 1]]


def test_model_torus_residuals_converge(desk):
    geom, params = desk
    lag, ph = [], []
    for N in (16, 32):
        emb = model_torus(params, geom.pot, geom.p, (N, N))
        lag.append(lagrangian_residual(emb, geom.form("check", params.c_arr)))
        ph.append(phase_residual(emb, geom.part, geom.p, FamilyParams(0.01)))
    assert lag[1] <= 1e-6 and ph[1] <= 1e-6
    assert lag[0] >= 10 * lag[1]


def test_full_form_is_not_lagrangian():
    """Control: without the mu correction the model torus is not Lagrangian.

    Needs two large coordinates; with one, the correction restricts to zero.
    """
    part = PartitionedIndex(3, (0, 1), (2, 3))
    p = DefiningPolynomial(3, {(0, 0, 0, 0): 2, (0, 0, 1, 0): 0.5, (0, 0, 0, 1): 0.5j, (0, 0, 1, 1): 0.3})
    geom = Geometry(part, ToricPotential.flat(3), p, 0.01)
    params = ModelParams((1.0, 0.9), (0.0, 0.0), part, FamilyParams(0.01))
    emb = model_torus(params, geom.pot, p, (16, 16, 16))
    check = lagrangian_residual(emb, geom.form("check", params.c_arr))
    full = lagrangian_residual(emb, geom.form("model"))
    assert full > 100 * check


def test_phase_negative_control(desk):
    geom, params = desk
    emb = model_torus(params, geom.pot, geom.p, (32, 32))
    pts = emb.points.copy()
    # a radial wobble of z_1 along its own angle tilts the tangent frame off the torus
    pts[..., 1] *= 1 + 0.01 * np.cos(emb.x[..., 0])
    pts[..., 0] = 0.01 * geom.p.value(pts) / (pts[..., 1] * pts[..., 2])
    bad = FibreEmbedding(pts, emb.winding)
    assert phase_residual(bad, geom.part, geom.p, FamilyParams(0.01)) > 1e-3


def test_model_params_validation(part):
    with pytest.raises(ParameterError):
        ModelParams((1.0,), (0.1, 0.0), part, FamilyParams(0.01))
    with pytest.raises(ParameterError):
        ModelParams((0.0,), (0.0, 0.0), part, FamilyParams(0.01))


def test_nu_scale(desk):
    geom, params = desk
    nu = params.nu(geom.pot)
    assert nu[2] == 1.0
    assert nu[0] == pytest.approx(math.sqrt(0.01), rel=1e-12)
