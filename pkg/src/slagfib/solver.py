"""Graph-potential solve of the constant-phase condition on a flowed torus."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .darboux import DarbouxChart
from .errors import ConvergenceError, ParameterError
from .flows import Flow
from .geometry import Geometry
from .local_model import FibreEmbedding, ModelParams, infer_winding, phase_field

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PotentialField:
    """Mean-zero potential h on T^n stored by its real-FFT coefficients."""

    shape: tuple
    coeffs: np.ndarray

    @classmethod
    def zero(cls, shape) -> "PotentialField":
        return cls.from_values(np.zeros(shape))

    @classmethod
    def from_values(cls, values) -> "PotentialField":
        values = np.asarray(values, float)
        c = np.fft.rfftn(values)
        c.flat[0] = 0.0
        return cls(values.shape, c)

    @property
    def values(self) -> np.ndarray:
        return np.fft.irfftn(self.coeffs, s=self.shape, axes=tuple(range(len(self.shape))))

    def gradient(self) -> np.ndarray:
        """dh from the coefficients; the constant mode never enters."""
        n = len(self.shape)
        axes = tuple(range(n))
        out = []
        for ax, N in enumerate(self.shape):
            k = np.fft.rfftfreq(N, 1.0 / N) if ax == n - 1 else np.fft.fftfreq(N, 1.0 / N)
            if N % 2 == 0:
                k[N // 2] = 0.0
            sl = [None] * n
            sl[ax] = slice(None)
            out.append(np.fft.irfftn(1j * k[tuple(sl)] * self.coeffs, s=self.shape, axes=axes))
        return np.stack(out, axis=-1)

    def tail_fraction(self) -> float:
        return spectral.tail_fraction(self.values)

    def __add__(self, other: "PotentialField") -> "PotentialField":
        return PotentialField(self.shape, self.coeffs + other.coeffs)

    def scaled(self, a: float) -> "PotentialField":
        return PotentialField(self.shape, self.coeffs * a)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class LinearOperatorCoeffs:
    """Second-order operator a^{ij} d_i d_j + b^i d_i on the grid."""

    a: np.ndarray
    b: np.ndarray
    asymmetry: float

    def ellipticity(self, nu) -> tuple[float, float]:
        """(min, max) over the grid of the eigenvalues of nu_i nu_j a^{ij}."""
        nu = np.asarray(nu, float)
        A = self.a * nu[:, None] * nu[None, :]
        ev = np.linalg.eigvalsh(A)
        return float(ev.min()), float(ev.max())


@dataclass(frozen=True)
class DeformationBasis:
    f: np.ndarray
    min_diag: np.ndarray
    residual: float


@dataclass(frozen=True)
class ModuliCoordinate:
    coords: np.ndarray


@dataclass
class SolverConfig:
    shape: tuple = (32, 32)
    flow_steps: int = 16
    tol: float = 1e-9
    schedule: tuple = tuple(round(float(v), 12) for v in np.linspace(0.0, 1.0, 11))
    min_ds: float = 1.0 / 160.0
    max_newton: int = 8
    fd_rel: float = 1e-5
    tail_max: float = 0.1
    box_frac: float = 0.5


@dataclass
class Linearization:
    """Exact derivative data of the discrete map h -> F(h, s) at one iterate."""

    J: np.ndarray
    dPhi: np.ndarray
    dlogq0: np.ndarray
    F: np.ndarray
    emb: FibreEmbedding
    matrix: np.ndarray | None = None


@dataclass
class StepRecord:
    s: float
    h: PotentialField
    residual: float
    newton_steps: int
    history: list = field(default_factory=list)


class SolverContext:
    """Everything needed to evaluate and solve F(h, s) = 0 around one model fibre."""

    def __init__(self, geom: Geometry, params: ModelParams, config: SolverConfig | None = None):
        self.geom = geom
        self.params = params
        self.cfg = config or SolverConfig()
        self.shape = tuple(self.cfg.shape)
        if len(self.shape) != geom.n:
            raise ParameterError("grid shape must have one entry per angle")
        self.n = geom.n
        self.chart = DarbouxChart(params, geom)
        self.nu = self.chart.nu[1:]
        self.x = spectral.grid(self.shape)
        self.model = self.chart.model_points(self.x)
        self.winding = infer_winding(self.model)
        self.varphi = Flow(geom, params.c, "varphi")
        self.phi = Flow(geom, params.c, "phi")
        self.varphi_trivial = not geom.p0.depends_on(geom.part.large)
        self._D = None
        self._P = None

    @property
    def D(self):
        if self._D is None:
            self._D = spectral.diff_matrices(self.shape)
        return self._D

    # -- embeddings -------------------------------------------------------

    def psi(self, z0, s):
        """psi_s = phi_s o varphi_1 applied to points of Y_t."""
        steps = self.cfg.flow_steps
        z = z0 if self.varphi_trivial else self.varphi.run(z0, 0.0, 1.0, steps)
        if s > 0:
            z = self.phi.run(z, 0.0, s, steps)
        return z

    def psi_inverse(self, z, s=1.0):
        steps = self.cfg.flow_steps
        if s > 0:
            z = self.phi.run(z, s, 0.0, steps)
        return z if self.varphi_trivial else self.varphi.run(z, 1.0, 0.0, steps)

    def _node_points(self, Y, s):
        x = np.broadcast_to(self.x, Y.shape)
        guess = np.broadcast_to(self.model, Y.shape[:-1] + (self.n + 1,))
        if not self.chart.in_box(Y, self.cfg.box_frac):
            raise ParameterError("graph leaves the validated Darboux box")
        z0 = self.chart.inverse(x, Y, z_guess=guess)
        return self.psi(z0, s)

    def embed(self, h: PotentialField, s: float) -> FibreEmbedding:
        z = self._node_points(h.gradient(), s)
        return FibreEmbedding(z, self.winding, {"s": float(s)})

    def eval_F(self, h: PotentialField, s: float, emb: FibreEmbedding | None = None):
        emb = emb or self.embed(h, s)
        ph = phase_field(emb, self.geom.ps(s))
        return ph - ph.mean()

    # -- linearisation -----------------------------------------------------

    def dlogq0(self, z, s):
        """d log q_0 / d w_m along X_{t,s}."""
        ps = self.geom.ps(s)
        val, pc = ps.log_derivs(z)
        H = ps.log_hess(z) / val[..., None, None]
        dq0 = -(H[..., 0, :] - pc[..., :1] * pc)  # d q_0 / d W_m
        q0 = 1.0 - pc[..., 0]
        E = self.geom.frame(z, s)
        return (dq0[..., None, :] @ E)[..., 0, :] / q0[..., None]

    def linearize(self, h: PotentialField, s: float, assemble: bool = True) -> Linearization:
        Y0 = h.gradient()
        n = self.n
        d = self.cfg.fd_rel * self.nu ** 2
        Ys = [Y0]
        for k in range(n):
            e = np.zeros(n)
            e[k] = d[k]
            Ys += [Y0 + e, Y0 - e]
        Z = self._node_points(np.stack(Ys), s)
        emb = FibreEmbedding(Z[0], self.winding, {"s": float(s)})
        dPhi = np.stack(
            [np.log(Z[1 + 2 * k][..., 1:] / Z[2 + 2 * k][..., 1:]) / (2 * d[k]) for k in range(n)], axis=-1
        )
        J = emb.frame()
        ph = phase_field(emb, self.geom.ps(s))
        lin = Linearization(J, dPhi, self.dlogq0(emb.points, s), ph - ph.mean(), emb)
        if assemble:
            lin.matrix = self.assemble(lin)
        return lin

    def apply(self, lin: Linearization, dh) -> np.ndarray:
        """Exact derivative of the discrete F along dh (grid values), mean removed."""
        g = spectral.gradient(np.asarray(dh, float), self.n)
        w = np.einsum("...mk,...k->...m", lin.dPhi, g)
        return self._dF_from_w(lin, w)

    def _dF_from_w(self, lin, w):
        n = self.n
        dJ = np.stack([spectral.derivative(w, a) for a in range(n)], axis=-1)
        Jinv = np.linalg.inv(lin.J)
        tr = np.einsum("...jm,...mj->...", Jinv, dJ)
        out = np.imag(tr - np.einsum("...m,...m->...", lin.dlogq0, w))
        return out - out.mean()

    def constant_shift_response(self, lin: Linearization) -> np.ndarray:
        """dF for y -> y + e_k (constant), stacked over k; shape (..., n)."""
        return np.stack([self._dF_from_w(lin, lin.dPhi[..., k]) for k in range(self.n)], axis=-1)

    def assemble(self, lin: Linearization) -> np.ndarray:
        n = self.n
        N = int(np.prod(self.shape))
        D = self.D
        Jinv = np.linalg.inv(lin.J).reshape(N, n, n)
        P = lin.dPhi.reshape(N, n, n)
        cq = lin.dlogq0.reshape(N, n)
        L = np.zeros((N, N), complex)
        for m in range(n):
            Bm = sum(P[:, m, k][:, None] * D[k] for k in range(n))
            for j in range(n):
                L += Jinv[:, j, m][:, None] * (D[j] @ Bm)
            L -= cq[:, m][:, None] * Bm
        L = L.imag
        return L - L.mean(axis=0, keepdims=True)

    def coefficients(self, lin: Linearization) -> LinearOperatorCoeffs:
        Jinv = np.linalg.inv(lin.J)
        a = np.imag(Jinv @ lin.dPhi)
        asym = float(np.max(np.abs(a - np.swapaxes(a, -1, -2))))
        a = 0.5 * (a + np.swapaxes(a, -1, -2))
        n = self.n
        dP = np.stack([spectral.derivative(lin.dPhi, ax) for ax in range(n)], axis=-1)  # [..., m, k, j]
        b = np.imag(np.einsum("...jm,...mkj->...k", Jinv, dP) - np.einsum("...m,...mk->...k", lin.dlogq0, lin.dPhi))
        return LinearOperatorCoeffs(a, b, asym)

    # -- Newton ------------------------------------------------------------

    @property
    def nyquist_projector(self):
        """Projector onto modes with a Nyquist index, which d/dx cannot see."""
        if self._P is None:
            mask = np.zeros(self.shape, bool)
            for a, N in enumerate(self.shape):
                if N % 2 == 0:
                    idx = [slice(None)] * len(self.shape)
                    idx[a] = N // 2
                    mask[tuple(idx)] = True
            M = int(np.prod(self.shape))
            eye = np.eye(M).reshape((M,) + self.shape)
            axes = tuple(range(1, len(self.shape) + 1))
            P = np.real(np.fft.ifftn(np.fft.fftn(eye, axes=axes) * mask, axes=axes)).reshape(M, M)
            self._P = P.T
        return self._P

    def _solve_linear(self, L, rhs):
        N = L.shape[0]
        P = self.nyquist_projector
        Q = np.eye(N) - P
        A = L @ Q + P + np.ones((N, N)) / N
        x = np.linalg.solve(A, rhs.reshape(-1))
        return (Q @ x).reshape(self.shape)

    def newton(self, h: PotentialField, s: float, lin: Linearization | None = None, refresh_on_stall=True):
        """Quasi-Newton at fixed s with the operator frozen at the starting iterate."""
        cfg = self.cfg
        lin = lin or self.linearize(h, s)
        F = lin.F
        res = float(np.max(np.abs(F)))
        history = [res]
        steps = 0
        refreshed = False
        while res > cfg.tol:
            if steps >= cfg.max_newton:
                raise ConvergenceError(f"no convergence at s={s:.4g} within {cfg.max_newton} steps (residual {res:.3e})")
            dh = self._solve_linear(lin.matrix, -F)
            lam = 1.0
            accepted = False
            while lam >= 1.0 / 16:
                trial = h + PotentialField.from_values(lam * dh)
                if trial.tail_fraction() > cfg.tail_max and trial.sup() > 1e-12:
                    raise ConvergenceError("potential is under-resolved on this grid")
                try:
                    Ft = self.eval_F(trial, s)
                except ParameterError:
                    lam *= 0.5
                    continue
                rt = float(np.max(np.abs(Ft)))
                if rt < res:
                    accepted = True
                    break
                lam *= 0.5
            steps += 1
            if not accepted:
                if refresh_on_stall and not refreshed:
                    lin = self.linearize(h, s)
                    F = lin.F
                    refreshed = True
                    continue
                raise ConvergenceError(f"Newton stalled at s={s:.4g} (residual {res:.3e})")
            if res > 0 and rt > 0.5 * res and refresh_on_stall and not refreshed:
                # slow contraction: rebuild the operator at the new iterate
                h, F, res = trial, Ft, rt
                history.append(res)
                lin = self.linearize(h, s)
                F = lin.F
                refreshed = True
                continue
            h, F, res = trial, Ft, rt
            history.append(res)
        return h, res, steps, history

    def continuation(self, schedule=None, h0: PotentialField | None = None):
        """Solve along s, warm-starting each step and bisecting failed steps."""
        cfg = self.cfg
        sched = [float(v) for v in (schedule if schedule is not None else cfg.schedule)]
        h = h0 or PotentialField.zero(self.shape)
        out = []
        s_prev = sched[0]
        h_prev = None
        lin = self.linearize(h, s_prev)
        h, res, k, hist = self.newton(h, s_prev, lin)
        out.append(StepRecord(s_prev, h, res, k, hist))
        targets = list(sched[1:])
        while targets:
            s = targets[0]
            ds = s - s_prev
            guess = h
            if h_prev is not None and out[-2].s != out[-1].s:
                ds_prev = out[-1].s - out[-2].s
                guess = h + (h + h_prev.scaled(-1.0)).scaled(ds / ds_prev)
            try:
                lin = self.linearize(guess, s)
                hn, res, k, hist = self.newton(guess, s, lin)
            except ConvergenceError:
                if ds / 2 < cfg.min_ds - 1e-15:
                    raise ConvergenceError(f"continuation failed; last converged s={s_prev:.4g}")
                targets.insert(0, s_prev + ds / 2)
                log.info("bisecting continuation step at s=%.4g", s)
                continue
            targets.pop(0)
            h_prev, h, s_prev = h, hn, s
            out.append(StepRecord(s, h, res, k, hist))
            log.info("s=%.3f residual=%.3e newton=%d", s, res, k)
        return out

    # -- post-processing -------------------------------------------------

    def deformation_one_forms(self, h: PotentialField, s: float = 1.0, lin: Linearization | None = None) -> DeformationBasis:
        lin = lin or self.linearize(h, s)
        B = self.constant_shift_response(lin)
        fs, mins, resid = [], [], 0.0
        for k in range(self.n):
            f = self._solve_linear(lin.matrix, B[..., k])
            f = f - f.mean()
            r = (self.apply(lin, f) - B[..., k]).reshape(-1)
            # Nyquist modes lie outside the range of the discrete operator
            r = r - self.nyquist_projector @ r
            resid = max(resid, float(np.max(np.abs(r))))
            fs.append(f)
            mins.append(float(np.min(np.abs(1.0 - spectral.derivative(f, k)))))
        return DeformationBasis(np.stack(fs), np.array(mins), resid)

    def moduli_of_points(self, z_chart) -> ModuliCoordinate:
        """Normalised periods of a torus sampled on the grid, given in Y_t points."""
        emb = FibreEmbedding(z_chart, infer_winding(z_chart))
        _, y = self.chart.forward(z_chart, check=False)
        dx = np.imag(emb.frame())  # d arg z_m / d xi_k
        per = np.einsum("...m,...mk->...k", y, dx).reshape(-1, self.n).mean(axis=0)
        return ModuliCoordinate(per / self.nu ** 2)

    def moduli_of_fibre(self, points_on_Xt) -> ModuliCoordinate:
        return self.moduli_of_points(self.psi_inverse(points_on_Xt, 1.0))


def moduli_coordinate(y, nu) -> ModuliCoordinate:
    """Graph form: mean(y_k) / nu_k^2."""
    y = np.asarray(y, float)
    n = y.shape[-1]
    return ModuliCoordinate(y.reshape(-1, n).mean(axis=0) / np.asarray(nu) ** 2)
