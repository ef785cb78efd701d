import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slagfib.ambient import (
    DefiningPolynomial, FamilyParams, PartitionedIndex, RegionConstants, ToricPotential, classify_region,
    hypersurface_residual, kahler_matrix, make_coefficients, project_z0,
)
from slagfib.errors import ParameterError

from conftest import DESK_P


def test_make_coefficients_examples():
    assert make_coefficients({"m1": 1.0}, 0.1, {"m1": 0.0})["m1"] == pytest.approx(0.1)
    out = make_coefficients({"m1": 2.0, "m2": 0.5}, 0.5)
    assert out["m1"] == pytest.approx(0.25)
    assert out["m2"] == pytest.approx(math.sqrt(0.5))
    rot = make_coefficients({"m1": 1.0}, 0.1, {"m1": math.pi / 2})["m1"]
    assert rot == pytest.approx(0.1j, abs=1e-15)


@pytest.mark.parametrize("weights,tau", [({"a": 1.0}, 0.0), ({"a": 1.0}, 1.0), ({"a": 0.0}, 0.5), ({"a": -1}, 0.5)])
def test_make_coefficients_rejects(weights, tau):
    with pytest.raises(ParameterError):
        make_coefficients(weights, tau)


def test_partition_validation():
    with pytest.raises(ParameterError):
        PartitionedIndex(2, (1,), (0, 2))
    with pytest.raises(ParameterError):
        PartitionedIndex(2, (0, 1), (1, 2))


def test_hypersurface_residual_examples(part):
    const = DefiningPolynomial(2, {(0, 0, 0): 2.0})
    fam = FamilyParams(0.01, 1.0)
    assert abs(hypersurface_residual([0.02, 1, 1], fam, const, part)) < 1e-17
    assert hypersurface_residual([0.03, 1, 1], fam, const, part) == pytest.approx(0.01)
    z = np.array([0.3 + 0.1j, 0.2, 0.7 - 0.2j])
    val = hypersurface_residual(z, FamilyParams(0.01, 0.0), DESK_P, part)
    assert val == pytest.approx(np.prod(z) - 0.01 * (2 + z[2]))


def test_family_params_validation():
    for kw in ({"t": 0.0}, {"t": 1.0, "s": 1.5}, {"t": 1.0, "tau": 1.0}):
        with pytest.raises(ParameterError):
            FamilyParams(**kw)


def test_project_z0_lands_on_hypersurface(part):
    p = DefiningPolynomial(2, {(0, 0, 0): 2.0, (1, 1, 0): 0.5, (0, 0, 1): 1.0})
    zr = np.array([[0.3 + 0.2j, 0.9], [0.1j, 1.2 - 0.3j]])
    z = project_z0(zr, 0.01, p)
    res = np.prod(z, axis=-1) - 0.01 * p.value(z)
    assert np.max(np.abs(res)) < 1e-16


def test_classify_region_examples(part):
    c = RegionConstants(C=1.0, C1=2.0, C2=2.0, C3=1.0, C4=1.0, eps_max=0.5)
    rep = classify_region([0.02, 0.14, 1.0], part, DESK_P, c)
    assert rep.normal
    assert rep.epsilon == pytest.approx(0.02)
    assert not classify_region([0.5, 0.6, 1.0], part, DESK_P, c).epsilon_small
    p = DefiningPolynomial(2, {(0, 0, 0): -2.0, (0, 0, 1): 1.0})
    assert not classify_region([0.02, 0.14, 1.9], part, p, c).p_bounded


def test_classify_region_vacuous_epsilon():
    part = PartitionedIndex(2, (0, 1, 2), ())
    rep = classify_region([0.1, 0.2, 0.3], part, DefiningPolynomial(2, {(0, 0, 0): 2.0}))
    assert rep.eps_vacuous and rep.epsilon_small


def test_kahler_flat_is_identity(rng):
    z = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    g = kahler_matrix(ToricPotential.flat(2), z)
    assert np.allclose(g, np.eye(3))


def test_kahler_direct_example():
    pot = ToricPotential(1, {(1, 0): 1.0, (1, 1): 1.0})
    g = kahler_matrix(pot, np.array([1.0, 1.0]))
    assert np.allclose(g, [[2, 1], [1, 1]])


def _fd_kahler(rho, z, h=1e-4):
    """d^2 rho / dz_j dzbar_k by central differences in real coordinates."""
    n = len(z)
    out = np.zeros((n, n), complex)
    dirs = [(np.eye(n)[j], 1j * np.eye(n)[j]) for j in range(n)]

    def d2(a, b):
        return (rho(z + h * a + h * b) - rho(z + h * a - h * b) - rho(z - h * a + h * b) + rho(z - h * a - h * b)) / (4 * h * h)

    for j in range(n):
        xj, yj = dirs[j]
        for k in range(n):
            xk, yk = dirs[k]
            # d_z = (d_x - i d_y)/2, d_zbar = (d_x + i d_y)/2
            out[j, k] = 0.25 * (d2(xj, xk) + 1j * d2(xj, yk) - 1j * d2(yj, xk) + d2(yj, yk))
    return out


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.1, 2.0), min_size=4, max_size=4), st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_kahler_matches_finite_differences(coefs, zs):
    terms = {(1, 0, 0): 1.0, (0, 1, 0): coefs[0], (0, 0, 1): 1.0, (1, 1, 0): coefs[1], (0, 1, 1): coefs[2],
             (0, 0, 2): coefs[3]}
    pot = ToricPotential(2, terms)
    z = np.array(zs[:3]) + 1j * np.array(zs[3:])

    def rho(w):
        return float(pot.value(np.abs(w) ** 2))

    assert np.allclose(kahler_matrix(pot, z), _fd_kahler(rho, z), atol=1e-6)
