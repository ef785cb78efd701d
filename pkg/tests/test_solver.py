import numpy as np
import pytest

from slagfib import spectral
from slagfib.ambient import FamilyParams
from slagfib.local_model import model_torus, solve_eta, zeta_of
from slagfib.solver import PotentialField, SolverConfig, SolverContext, moduli_coordinate

from conftest import CONST_P, make_geom


def _ctx(p=None, shape=(16, 16), t=0.01, **kw):
    geom, params = make_geom(p=p, t=t) if p is not None else make_geom(t=t)
    return SolverContext(geom, params, SolverConfig(shape=shape, **kw))


def _low_mode_field(shape, seed=0, kmax=3):
    rng = np.random.default_rng(seed)
    mask = np.ones(shape, bool)
    for ax, N in enumerate(shape):
        k = np.abs(np.fft.fftfreq(N, 1.0 / N))
        sl = [None] * len(shape)
        sl[ax] = slice(None)
        mask &= (k <= kmax)[tuple(sl)]
    v = np.real(np.fft.ifftn(np.fft.fftn(rng.standard_normal(shape)) * mask))
    return PotentialField.from_values(v / np.max(np.abs(v)))


@pytest.fixture(scope="module")
def desk_ctx():
    return _ctx(shape=(16, 16))


def test_potential_field_mean_zero_and_gradient():
    shape = (8, 16)
    x = spectral.grid(shape)
    h = PotentialField.from_values(3.0 + np.sin(x[..., 0]) + 0.5 * np.cos(2 * x[..., 1]))
    assert abs(h.values.mean()) < 1e-15
    g = h.gradient()
    assert np.allclose(g[..., 0], np.cos(x[..., 0]))
    assert np.allclose(g[..., 1], -np.sin(2 * x[..., 1]))


def test_model_fibre_at_zero(desk_ctx):
    emb = desk_ctx.embed(PotentialField.zero(desk_ctx.shape), 0.0)
    geom, params = make_geom()
    ref = model_torus(params, geom.pot, geom.p, desk_ctx.shape)
    assert np.max(np.abs(emb.points - ref.points)) < 1e-14


def test_gauge_invariance(desk_ctx):
    h = _low_mode_field(desk_ctx.shape).scaled(1e-4)
    F1 = desk_ctx.eval_F(h, 0.5)
    c = h.coeffs.copy()
    c.flat[0] = 7.0 * h.values.size
    shifted = PotentialField(h.shape, c)
    assert np.allclose(shifted.values, h.values + 7.0)
    F2 = desk_ctx.eval_F(shifted, 0.5)
    assert np.array_equal(F1, F2)


def test_model_fibre_phase_defect_small():
    ctx = _ctx(shape=(32, 32))
    assert np.max(np.abs(ctx.eval_F(PotentialField.zero(ctx.shape), 0.0))) <= 1e-8


def test_flowed_defect_shrinks_with_t():
    sup = []
    for t in (1e-2, 3e-3, 1e-3):
        ctx = _ctx(shape=(8, 16), t=t)
        sup.append(np.max(np.abs(ctx.eval_F(PotentialField.zero(ctx.shape), 1.0))))
    assert sup[0] > 0
    assert sup[0] > sup[1] > sup[2]


def test_constant_p_continuation_is_trivial():
    ctx = _ctx(p=CONST_P, shape=(8, 8))
    steps = ctx.continuation()
    assert all(st.newton_steps == 0 for st in steps)
    assert all(st.h.sup() == 0 for st in steps)


def test_apply_matches_assembled_matrix(desk_ctx):
    lin = desk_ctx.linearize(PotentialField.zero(desk_ctx.shape), 0.0)
    dh = _low_mode_field(desk_ctx.shape, seed=3).values
    a = desk_ctx.apply(lin, dh)
    m = (lin.matrix @ dh.ravel()).reshape(desk_ctx.shape)
    assert np.max(np.abs(a - m)) <= 1e-9 * np.max(np.abs(a))


def test_linearization_error_linear_in_eps(desk_ctx):
    ctx = desk_ctx
    h0 = PotentialField.zero(ctx.shape)
    F0 = ctx.eval_F(h0, 0.0)
    lin = ctx.linearize(h0, 0.0, assemble=False)
    dh = _low_mode_field(ctx.shape, seed=1).scaled(1e-3)
    L = ctx.apply(lin, dh.values)
    errs = [np.max(np.abs((ctx.eval_F(dh.scaled(e), 0.0) - F0) / e - L)) for e in (1e-2, 1e-3, 1e-4)]
    for a, b in zip(errs, errs[1:]):
        assert a / b == pytest.approx(10.0, rel=0.2)


def test_constant_p_coefficients_closed_form():
    ctx = _ctx(p=CONST_P, shape=(8, 8))
    co = ctx.coefficients(ctx.linearize(PotentialField.zero(ctx.shape), 0.0, assemble=False))
    eta = solve_eta([0.0, 0.0], (0.01 * 2.0) ** 2)
    zeta = zeta_of([0.0, 0.0], eta)
    # induced flat metric on the torus plus the Hessian of mu along log|z_2|^2
    g = np.array([[2 * eta, eta], [eta, 1 + eta]]) - np.diag([0.0, zeta * eta])
    assert np.allclose(co.a, -0.5 * np.linalg.inv(g), atol=1e-7)
    assert np.max(np.abs(co.b)) < 1e-6
    lo, hi = co.ellipticity(ctx.nu)
    assert hi < 0


def test_coefficients_reproduce_second_variation():
    ctx = _ctx(shape=(16, 32))
    co = ctx.coefficients(ctx.linearize(PotentialField.zero(ctx.shape), 0.0, assemble=False))
    x = ctx.x
    eps = 1e-4 * ctx.nu.min() ** 2
    for hv in (np.cos(x[..., 0]), np.cos(x[..., 1]), np.cos(x[..., 0] + x[..., 1])):
        h = PotentialField.from_values(eps * hv)
        fd = (ctx.eval_F(h, 0.0) - ctx.eval_F(h.scaled(-1.0), 0.0)) / (2 * eps)
        g = np.stack([spectral.derivative(hv, k) for k in range(2)], -1)
        H = np.stack([np.stack([spectral.derivative(g[..., i], j) for j in range(2)], -1) for i in range(2)], -2)
        L = np.einsum("...ij,...ij->...", co.a, H) + np.einsum("...i,...i->...", co.b, g)
        L -= L.mean()
        assert np.max(np.abs(fd - L)) <= 1e-4 * np.max(np.abs(fd))


def test_deformation_forms_constant_p():
    ctx = _ctx(p=CONST_P, shape=(8, 8))
    basis = ctx.deformation_one_forms(PotentialField.zero(ctx.shape), 1.0)
    assert np.allclose(basis.f, 0.0, atol=1e-8)
    assert np.allclose(basis.min_diag, 1.0)


def test_moduli_coordinate_examples():
    nu = np.array([0.1, 1.0])
    assert np.all(moduli_coordinate(np.zeros((8, 8, 2)), nu).coords == 0)
    y = np.broadcast_to([2e-3, 0.5], (8, 8, 2))
    assert np.allclose(moduli_coordinate(y, nu).coords, [0.2, 0.5])
    h = _low_mode_field((8, 8), seed=4)
    assert np.max(np.abs(moduli_coordinate(h.gradient(), nu).coords)) <= 1e-12


def test_model_fibre_moduli_zero(desk_ctx):
    pts = desk_ctx.embed(PotentialField.zero(desk_ctx.shape), 0.0).points
    assert np.max(np.abs(desk_ctx.moduli_of_points(pts).coords)) < 1e-13
