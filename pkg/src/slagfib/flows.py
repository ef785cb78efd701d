"""The two symplectic deformation flows and their RK4 integration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ambient import project_z0
from .errors import DegenerateError, ProjectionError
from .geometry import Geometry, herm_to_real, real_im_part


def _solve(M, rhs):
    try:
        return np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise DegenerateError("singular symplectic form matrix") from exc


def _to_log(v, n):
    return v[..., :n] + 1j * v[..., n:]


def h_alpha_field(z, s, geom: Geometry, c):
    """H_alpha with omega_hat_s(H, .) = alpha, alpha = (lambda_0|z_0|^2 - eta) d arg p.

    Returned as a real vector in (log|z|, arg z) coordinates.
    """
    ed = geom.eta_data(z, c)
    d, _ = geom.defect(z, ed)
    alpha = d[..., None] * geom.darg_p(ed)
    M = geom.omega_hat(z, c, s, ed)
    return -_solve(M, alpha)


def varphi_velocity(z, s, geom: Geometry, c):
    """d log z_{1..n} / ds for the flow of -H_alpha on Y_t."""
    return _to_log(-h_alpha_field(z, s, geom, c), geom.n)


def gamma_weights(z, s, geom: Geometry, c, ed=None):
    """gamma_k: normal direction to X_{t,s} (metric of the family potential), sum q_k gamma_k = 1."""
    ed = ed or geom.eta_data(z, c)
    G = geom.ambient_metric(z, c, s, ed).astype(complex)
    q = geom.q(z, s)
    w = np.conj(_solve(G, q))
    norm = np.einsum("...k,...k->...", q, w)
    if np.min(np.abs(norm)) < 1e-300:
        raise DegenerateError("defining function has vanishing differential")
    return w / norm[..., None], q


def hamiltonian_gradient_V(z, s, geom: Geometry, c, ed=None):
    """Holomorphic components (d log z_k / ds, k = 0..n) of the normal field V with V(s) = 1."""
    z = np.asarray(z, complex)
    if geom.trivial_family:
        return np.zeros(z.shape, complex)
    gam, _ = gamma_weights(z, s, geom, c, ed)
    rate = geom.pds(s).value(z) / geom.ps(s).value(z)
    return rate[..., None] * gam


def alpha_s_form(z, s, geom: Geometry, c, ed=None):
    """Real 1-form Im d(v_s + mu) pulled back to X_{t,s}."""
    ed = ed or geom.eta_data(z, c)
    E = geom.frame(z, s)
    vg = geom.vs(s).log_grad(ed.u)
    hol = (vg[..., None, :] @ E)[..., 0, :] + ed.eta[..., None] * ed.dlogk[..., 1:]
    return real_im_part(hol)


def deformation_field(z, s, geom: Geometry, c):
    """V - H_{alpha_s}, as d log z_{1..n} / ds."""
    ed = geom.eta_data(z, c)
    alpha = alpha_s_form(z, s, geom, c, ed)
    G = geom.ambient_metric(z, c, s, ed)
    M = herm_to_real(geom.pull(G, geom.frame(z, s)))
    vel = _to_log(_solve(M, alpha), geom.n)
    if not geom.trivial_family:
        vel = vel + hamiltonian_gradient_V(z, s, geom, c, ed)[..., 1:]
    return vel


def phi_velocity(z, s, geom, c):
    return deformation_field(z, s, geom, c)


@dataclass
class FlowTrace:
    s_samples: list = field(default_factory=list)
    states: list = field(default_factory=list)
    residual_max: list = field(default_factory=list)
    form_drift: list = field(default_factory=list)

    @property
    def final(self):
        return self.states[-1]

    def to_json(self) -> dict:
        return {
            "s": [float(v) for v in self.s_samples],
            "residual_max": [float(v) for v in self.residual_max],
            "form_drift": [float(v) for v in self.form_drift],
        }


class Flow:
    """One of the two flows, bound to a geometry and a fibre label c."""

    def __init__(self, geom: Geometry, c, kind: str):
        if kind not in ("varphi", "phi"):
            raise ValueError(kind)
        self.geom = geom
        self.c = np.asarray(c, float)
        self.kind = kind

    def project(self, logz, s):
        ps = self.geom.p0 if self.kind == "varphi" else self.geom.ps(s)
        return project_z0(np.exp(logz), self.geom.t, ps)

    def velocity(self, z, s):
        if self.kind == "varphi":
            return varphi_velocity(z, s, self.geom, self.c)
        return deformation_field(z, s, self.geom, self.c)

    def form(self, z, s):
        if self.kind == "varphi":
            return self.geom.omega_hat(z, self.c, s)
        return self.geom.omega_tilde(z, self.c, s)

    def residual(self, z, s):
        ps = self.geom.p0 if self.kind == "varphi" else self.geom.ps(s)
        return np.abs(np.prod(z, axis=-1) - self.geom.t * ps.value(z))

    def _rhs(self, logz, s):
        return self.velocity(self.project(logz, s), s)

    def run(self, z0, s0: float = 0.0, s1: float = 1.0, steps_per_unit: int = 64, record: bool = False):
        """RK4 from s0 to s1; returns final points (and a trace when ``record``)."""
        z0 = np.asarray(z0, complex)
        nsteps = max(1, int(np.ceil(round(abs(s1 - s0) * steps_per_unit, 9))))
        h = (s1 - s0) / nsteps
        y = np.log(z0[..., 1:])
        trace = FlowTrace() if record else None
        if record:
            self._record(trace, y, s0)
        s = s0
        for _ in range(nsteps):
            k1 = self._rhs(y, s)
            k2 = self._rhs(y + 0.5 * h * k1, s + 0.5 * h)
            k3 = self._rhs(y + 0.5 * h * k2, s + 0.5 * h)
            k4 = self._rhs(y + h * k3, s + h)
            y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            s = s + h
            if record:
                self._record(trace, y, s)
        z = self.project(y, s1)
        return (z, trace) if record else z

    def _record(self, trace, y, s):
        z = self.project(y, s)
        trace.s_samples.append(float(s))
        trace.states.append(z)
        trace.residual_max.append(float(np.max(self.residual(z, s))))

    # -- tangent transport ------------------------------------------------

    def _real_rhs(self, X, s):
        n = self.geom.n
        v = self._rhs(X[..., :n] + 1j * X[..., n:], s)
        return np.concatenate([v.real, v.imag], axis=-1)

    def transport(self, z0, vecs, s0=0.0, s1=1.0, steps_per_unit=64, fd_step=1e-6):
        """Carry points and tangent vectors (real, (..., k, 2n)) along the flow.

        Tangent vectors follow the linearised field, whose action on a vector is
        obtained from a central difference of the field along that vector.
        Returns (points, vectors, drift) with drift the largest change in the
        transported form values over the run.
        """
        n = self.geom.n
        z0 = np.asarray(z0, complex)
        vecs = np.asarray(vecs, float)
        nsteps = max(1, int(np.ceil(round(abs(s1 - s0) * steps_per_unit, 9))))
        h = (s1 - s0) / nsteps
        logz = np.log(z0[..., 1:])
        X = np.concatenate([logz.real, logz.imag], axis=-1)
        V = vecs.copy()

        def rhs(X, V, s):
            norms = np.linalg.norm(V, axis=-1, keepdims=True)
            U = V / np.where(norms == 0, 1.0, norms)
            Xp = X[..., None, :] + fd_step * U
            Xm = X[..., None, :] - fd_step * U
            allX = np.concatenate([X[..., None, :], Xp, Xm], axis=-2)
            F = self._real_rhs(allX, s)
            k = V.shape[-2]
            dV = (F[..., 1:1 + k, :] - F[..., 1 + k:, :]) / (2 * fd_step) * norms
            return F[..., 0, :], dV

        def form_vals(X, V, s):
            z = self.project(X[..., :n] + 1j * X[..., n:], s)
            M = self.form(z, s)
            return np.einsum("...ia,...ab,...jb->...ij", V, M, V)

        w0 = form_vals(X, V, s0)
        s = s0
        for _ in range(nsteps):
            a1, b1 = rhs(X, V, s)
            a2, b2 = rhs(X + 0.5 * h * a1, V + 0.5 * h * b1, s + 0.5 * h)
            a3, b3 = rhs(X + 0.5 * h * a2, V + 0.5 * h * b2, s + 0.5 * h)
            a4, b4 = rhs(X + h * a3, V + h * b3, s + h)
            X = X + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
            V = V + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
            s += h
        w1 = form_vals(X, V, s1)
        z = self.project(X[..., :n] + 1j * X[..., n:], s1)
        return z, V, float(np.max(np.abs(w1 - w0)))


def varphi_flow(z0, geom: Geometry, c, s_target: float = 1.0, steps: int = 64, record: bool = True):
    return Flow(geom, c, "varphi").run(z0, 0.0, s_target, steps, record=record)


def phi_flow(z0, geom: Geometry, c, s_target: float = 1.0, steps: int = 64, record: bool = True, s_start: float = 0.0):
    return Flow(geom, c, "phi").run(z0, s_start, s_target, steps, record=record)


__all__ = [
    "Flow", "FlowTrace", "h_alpha_field", "hamiltonian_gradient_V", "deformation_field",
    "gamma_weights", "varphi_flow", "phi_flow", "alpha_s_form", "ProjectionError",
]
