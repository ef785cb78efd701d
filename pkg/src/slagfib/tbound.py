"""Envelope diagnostics for matrices that should be uniformly bounded after toric rescaling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .darboux import DarbouxChart
from .errors import ParameterError
from .geometry import Geometry
from .local_model import ModelParams, model_torus


@dataclass
class TBoundReport:
    norm_G: float
    norm_conj: float
    norm_conj_bar: float
    norm_inv_conj: float
    det_lower: float
    torically_bounded_excess: float
    strong_correction_norm: float = 0.0
    constants: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "norm_G": self.norm_G,
            "norm_conj": self.norm_conj,
            "norm_conj_bar": self.norm_conj_bar,
            "norm_inv_conj": self.norm_inv_conj,
            "det_lower": self.det_lower,
            "torically_bounded_excess": self.torically_bounded_excess,
            "strong_correction_norm": self.strong_correction_norm,
            "constants": dict(self.constants),
            "flags": dict(self.flags),
        }


def _check_z(z):
    z = np.asarray(z, complex)
    if np.any(np.abs(z) == 0):
        raise ParameterError("coordinates must be non-zero")
    return z


def t_bound_norms(G, z, bound: float = 10.0, det_floor: float = 1e-3) -> TBoundReport:
    """Spectral norms of Z G Z^-1, conj(Z)^-1 G conj(Z) and Z G^-1 Z^-1 at one point.

    ``z`` holds the coordinates matching the rows of G (z_1..z_n).
    """
    G = np.asarray(G, complex)
    z = _check_z(z)
    ZGZ = z[:, None] * G / z[None, :]
    ZbGZb = G * np.conj(z)[None, :] / np.conj(z)[:, None]
    det = float(abs(np.linalg.det(G)))
    if det >= det_floor:
        Gi = np.linalg.inv(G)
        inv_conj = float(np.linalg.norm(z[:, None] * Gi / z[None, :], 2))
    else:
        inv_conj = math.inf
    a = np.abs(z)
    env = np.eye(len(z)) + a[:, None] * a[None, :]
    excess = float(np.max(np.maximum(np.abs(G) - bound * env, 0.0)))
    nc = float(np.linalg.norm(ZGZ, 2))
    ncb = float(np.linalg.norm(ZbGZb, 2))
    flags = {
        "t_bounded": bool(max(nc, ncb) <= bound),
        "inverse_t_bounded": bool(inv_conj <= bound),
        "torically_bounded": excess == 0.0,
    }
    return TBoundReport(float(np.linalg.norm(G, 2)), nc, ncb, inv_conj, det, excess, flags=flags)


def _envelopes(z, z0_abs, I, J):
    a = np.abs(z)
    n = len(a)
    D = np.eye(n)
    T = a[:, None] * a[None, :]
    E = np.zeros((n, n))
    mask = np.zeros((n, n), bool)
    mask[np.ix_(list(I), list(J))] = True
    E[mask] = (z0_abs ** 2 / (a[:, None] * a[None, :]))[mask]
    return D, T, E


def fit_envelopes(samples, I, J) -> dict:
    """Smallest (c_D, c_T, c_E) with |G_ij| <= c_D d_ij + c_T |z_i z_j| + c_E |z_0|^2/(|z_i||z_j|) [I x J].

    ``samples`` is an iterable of (G, z, |z_0|). The three constants are found by
    a linear program minimising their sum; ties go to the diagonal, then to the
    correction term.
    """
    rows, rhs = [], []
    for G, z, z0 in samples:
        z = _check_z(z)
        a = np.abs(z)
        if z0 > (1 + 1e-12) * a.min():
            raise ParameterError("|z_0| must not exceed min |z_k|")
        D, T, E = _envelopes(z, z0, I, J)
        absG = np.abs(np.asarray(G))
        for i, j in zip(*np.nonzero(absG > 0)):
            rows.append([-D[i, j], -T[i, j], -E[i, j]])
            rhs.append(-absG[i, j])
    if not rows:
        return {"c_D": 0.0, "c_T": 0.0, "c_E": 0.0, "total": 0.0}
    A = np.array(rows)
    b = np.array(rhs)
    # uncovered entries (all three envelopes zero) make the program infeasible
    if np.any(np.all(A == 0, axis=1) & (b < 0)):
        return {"c_D": math.inf, "c_T": math.inf, "c_E": math.inf, "total": math.inf}
    res = linprog(c=[1.0, 1.0 + 2e-9, 1.0 + 1e-9], A_ub=A, b_ub=b, bounds=[(0, None)] * 3, method="highs")
    if not res.success:
        return {"c_D": math.inf, "c_T": math.inf, "c_E": math.inf, "total": math.inf}
    cD, cT, cE = (float(v) for v in res.x)
    return {"c_D": cD, "c_T": cT, "c_E": cE, "total": cD + cT + cE}


def strong_tbound_decompose(G, z, z0_abs: float, part=None, bound: float = 10.0) -> TBoundReport:
    """Split G into diagonal, toric and corner-correction envelopes at one point.

    ``part`` is the index pair (I, J) (0-based rows/columns of G); default all x all.
    """
    G = np.asarray(G, complex)
    z = _check_z(z)
    n = len(z)
    I, J = part if part is not None else (range(n), range(n))
    rep = t_bound_norms(G, z, bound)
    consts = fit_envelopes([(G, z, z0_abs)], I, J)
    rep.constants = consts
    rep.strong_correction_norm = consts["c_E"]
    rep.flags["strongly_t_bounded"] = bool(consts["total"] <= bound)
    return rep


# -- matrices from the geometry ----------------------------------------------

def check_metric_samples(geom: Geometry, params: ModelParams, shape=(8, 8)):
    """(G, z', |z_0|) along the model torus, G the omega_check metric in dz coordinates."""
    emb = model_torus(params, geom.pot, geom.p, shape)
    z = emb.points.reshape(-1, geom.n + 1)
    ed = geom.eta_data(z, params.c_arr)
    H = geom.pull(geom.F0.log_hess(ed.u) - ed.mu_hess, geom.frame(z, 0.0))
    zr = z[:, 1:]
    G = H / (zr[:, :, None] * np.conj(zr)[:, None, :])
    return [(G[i], zr[i], float(abs(z[i, 0]))) for i in range(len(z))]


def jacobian_envelopes(chart: DarbouxChart, shape=(8, 8)) -> dict:
    """C with |dy_j/dlog|z_k|^2| <= C min(|z_j|^2, |z_k|^2), and the analogue for the inverse."""
    geom = chart.geom
    emb = model_torus(chart.params, geom.pot, geom.p, shape)
    z = emb.points.reshape(-1, geom.n + 1)
    blocks = chart.jacobian(z)
    Jy = blocks.dy_dl
    Jinv = np.linalg.inv(Jy)
    u = np.abs(z[:, 1:]) ** 2
    lo = np.minimum(u[:, :, None], u[:, None, :])
    hi = np.maximum(u[:, :, None], u[:, None, :])
    return {
        "jacobian": float(np.max(np.abs(Jy) / lo)),
        "inverse": float(np.max(np.abs(Jinv) * hi)),
    }


def envelope_sweep(geom: Geometry, params: ModelParams, ts, shape=(8, 8)) -> list[dict]:
    """Envelope constants for the omega_check metric, its inverse and the Darboux Jacobian at each t."""
    n = geom.n
    allidx = range(n)
    out = []
    for t in ts:
        g = geom.with_t(t)
        mp = params.replace(t=t)
        samples = check_metric_samples(g, mp, shape)
        inv = [(np.linalg.inv(G), z, z0) for G, z, z0 in samples]
        fit = fit_envelopes(samples, allidx, allidx)
        fit_inv = fit_envelopes(inv, allidx, allidx)
        det = min(float(abs(np.linalg.det(G))) for G, _, _ in samples)
        jac = jacobian_envelopes(DarbouxChart(mp, g), shape)
        out.append({
            "t": float(t),
            "metric_c_D": fit["c_D"], "metric_c_T": fit["c_T"], "metric_c_E": fit["c_E"],
            "metric_total": fit["total"],
            "inverse_total": fit_inv["total"],
            "det_min": det,
            "jacobian": jac["jacobian"],
            "jacobian_inverse": jac["inverse"],
        })
    return out


STABILITY_KEYS = ("metric_total", "inverse_total", "jacobian", "jacobian_inverse")


def envelope_growth(rows, keys=STABILITY_KEYS) -> dict:
    """Largest ratio C(t_next) / C(t_prev) per key along the t-sequence."""
    out = {}
    for k in keys:
        vals = [r[k] for r in rows]
        out[k] = max((b / a if a > 0 else math.inf) for a, b in zip(vals, vals[1:])) if len(vals) > 1 else 1.0
    return out
