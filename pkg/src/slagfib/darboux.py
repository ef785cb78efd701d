"""Action-angle type coordinates (x, y) around a model fibre on Y_t."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambient import project_z0
from .errors import ChartDomainError, DegenerateError
from .geometry import EtaData, Geometry
from .local_model import ModelParams, model_torus


@dataclass(frozen=True)
class JacobianBlocks:
    """Blocks of d(y, x) / d(log|z|^2, theta), coordinates indexed 1..n."""

    dy_dl: np.ndarray
    dy_dth: np.ndarray
    dx_dl: np.ndarray
    dx_dth: np.ndarray

    @property
    def full(self):
        top = np.concatenate([self.dy_dl, self.dy_dth], axis=-1)
        bot = np.concatenate([self.dx_dl, self.dx_dth], axis=-1)
        return np.concatenate([top, bot], axis=-2)

    @property
    def inverse(self):
        try:
            return np.linalg.inv(self.full)
        except np.linalg.LinAlgError as exc:
            raise DegenerateError("singular Darboux Jacobian") from exc


class DarbouxChart:
    """Chart centred on the model fibre S_{r,c}; y vanishes on the fibre."""

    def __init__(self, params: ModelParams, geom: Geometry):
        self.params = params
        self.geom = geom
        self.part = params.part
        self.n = self.part.n
        self.c = params.c_arr
        self.nu = params.nu(geom.pot)
        small = list(self.part.small)
        # offset per y-component (index 1..n): c_k on the small block, calibration on the large
        C = np.zeros(self.n + 1)
        C[small] = self.c
        u = params.u_large()
        base = geom.pot.base(self.part)
        rho_g = base.log_grad(u)
        lam = params.lambdas(geom.pot)
        for j in self.part.large:
            C[j] = rho_g[j] + sum(
                geom.lam_polys[i].log_grad(u)[j] / lam[i] * self.c[i] for i in range(len(small))
            )
        self.offset = C[1:]

    @property
    def calibration(self) -> dict:
        return {int(j): float(self.offset[j - 1]) for j in self.part.large}

    def _raw(self, z, ed: EtaData):
        g = self.geom
        F0g = g.F0.log_grad(ed.u)
        lam0u0 = ed.lam[..., 0] * ed.u[..., 0]
        y = F0g - lam0u0[..., None]
        corr = ed.eta[..., None] * (1.0 - ed.loglam_grad)
        y = y + g.large * corr
        return y[..., 1:]

    def forward(self, z, check: bool = True):
        """(x, y) of points on Y_t."""
        z = np.asarray(z, complex)
        if check:
            res = np.prod(z, axis=-1) - self.geom.t * self.geom.p0.value(z)
            scale = self.geom.t * max(1.0, float(np.max(np.abs(self.geom.p0.value(z)))))
            if np.max(np.abs(res)) > 1e-8 * scale:
                raise ChartDomainError("point is not on the local model hypersurface")
        ed = self.geom.eta_data(z, self.c)
        x = np.angle(z[..., 1:])
        return x, self._raw(z, ed) - self.offset

    def holo_dy(self, z, ed: EtaData | None = None):
        """dy_m / dw_j (holomorphic derivatives), shape (..., n, n)."""
        g = self.geom
        ed = ed or g.eta_data(z, self.c)
        E = g.frame(z, 0.0)
        H0 = g.F0.log_hess(ed.u)
        T = ed.lam_grad[..., 0, :] * ed.u[..., 0, None]
        T[..., 0] = ed.lam[..., 0] * ed.u[..., 0]
        d_toric = np.einsum("...mk,...kj->...mj", H0, E) - np.einsum("...k,...kj->...j", T, E)[..., None, :]
        L = ed.dlogk[..., 1:]
        corr = (ed.zeta * ed.eta)[..., None, None] * (1.0 - ed.loglam_grad)[..., :, None] * L[..., None, :] \
            - ed.eta[..., None, None] * ed.loglam_hess[..., :, 1:]
        d = d_toric + g.large[:, None] * corr
        return d[..., 1:, :]

    def jacobian(self, z) -> JacobianBlocks:
        z = np.asarray(z, complex)
        c = self.holo_dy(z)
        n = self.n
        shape = z.shape[:-1]
        return JacobianBlocks(
            dy_dl=c.real,
            dy_dth=-2 * c.imag,
            dx_dl=np.zeros(shape + (n, n)),
            dx_dth=np.broadcast_to(np.eye(n), shape + (n, n)).copy(),
        )

    def model_points(self, x):
        """Model-fibre points at arbitrary angles x (shape (..., n))."""
        g = self.geom
        part = self.part
        x = np.asarray(x, float)
        z = np.zeros(x.shape[:-1] + (self.n + 1,), complex)
        large = list(part.large)
        z[..., large] = np.array(self.params.r) * np.exp(1j * x[..., [j - 1 for j in large]])
        ed = g.eta_data(z, self.c)  # kappa depends only on z'
        lam = self.params.lambdas(g.pot)
        for i, k in enumerate(part.small):
            if k:
                z[..., k] = np.sqrt((self.c[i] + ed.eta) / lam[i]) * np.exp(1j * x[..., k - 1])
        z[..., 0] = g.t * g.p0.value(z) / np.prod(z[..., 1:], axis=-1)
        return z

    def inverse(self, x, y, z_guess=None, tol: float = 1e-14, maxit: int = 50):
        """Points on Y_t with the given (x, y), by Newton in log|z_k|."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        z = self.model_points(x) if z_guess is None else np.asarray(z_guess, complex).copy()
        a = np.log(np.abs(z[..., 1:]))
        scale = self.nu[1:] ** 2
        for it in range(maxit):
            zr = np.exp(a + 1j * x)
            z = project_z0(zr, self.geom.t, self.geom.p0)
            ed = self.geom.eta_data(z, self.c)
            r = self._raw(z, ed) - self.offset - y
            err = np.max(np.abs(r) / scale) if r.size else 0.0
            if err < tol:
                return z
            Jl = 2.0 * self.holo_dy(z, ed).real
            a = a - np.linalg.solve(Jl, r[..., None])[..., 0]
        raise ChartDomainError(f"Darboux inverse did not converge (residual {err:.3e})")

    def in_box(self, y, frac: float = 0.5) -> bool:
        return bool(np.all(np.abs(y) <= frac * self.nu[1:] ** 2))


def darboux_forward(z, chart: DarbouxChart):
    return chart.forward(z)


def darboux_inverse(x, y, chart: DarbouxChart):
    return chart.inverse(x, y)


def darboux_jacobian(z, chart: DarbouxChart) -> JacobianBlocks:
    return chart.jacobian(z)


def model_fibre(chart: DarbouxChart, shape):
    return model_torus(chart.params, chart.geom.pot, chart.geom.p, shape)
