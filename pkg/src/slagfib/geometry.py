"""Kaehler data on the hypersurface family in logarithmic coordinates.

Points are arrays ``z`` of shape (..., n+1). On the hypersurface, w_j = log z_j
(j = 1..n) are holomorphic coordinates and z_0 is determined by the defining
equation. Real 2-forms are returned as antisymmetric matrices M with
form(u, v) = u^T M v in the real coordinates (a_1..a_n, theta_1..theta_n),
a_j = log|z_j|. All forms are normalised so that i d dbar |z|^2 is positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .ambient import DefiningPolynomial, PartitionedIndex, ToricPotential
from .local_model import solve_eta, zeta_of


def herm_to_real(H):
    """Real matrix of the form i sum H_jk dw_j ^ dwbar_k in (a, theta) coordinates."""
    S = H.real
    A = H.imag
    top = np.concatenate([-2 * A, 2 * S], axis=-1)
    bot = np.concatenate([-2 * S, -2 * A], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def real_differential(c):
    """Real 1-form df from the holomorphic derivatives c_j = df/dw_j of a real f."""
    return np.concatenate([2 * c.real, -2 * c.imag], axis=-1)


def real_im_part(c):
    """Real 1-form Im(sum c_j dw_j)."""
    return np.concatenate([c.imag, c.real], axis=-1)


def wedge(beta, gamma):
    return beta[..., :, None] * gamma[..., None, :] - gamma[..., :, None] * beta[..., None, :]


@dataclass(frozen=True)
class EtaData:
    u: np.ndarray
    kappa: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    lam: np.ndarray
    lam_grad: np.ndarray
    dlogk: np.ndarray  # holomorphic d log kappa / dW_m, ambient index
    loglam_grad: np.ndarray
    loglam_hess: np.ndarray
    p0_check: np.ndarray

    @property
    def mu_hess(self):
        """Hermitian d dbar mu in ambient log coordinates."""
        L = self.dlogk
        return self.eta[..., None, None] * (
            self.loglam_hess + self.zeta[..., None, None] * L[..., :, None] * np.conj(L[..., None, :])
        )


class Geometry:
    """Potential, defining polynomial and t for one partition, with derived forms."""

    def __init__(self, part: PartitionedIndex, pot: ToricPotential, p: DefiningPolynomial, t: float):
        self.part = part
        self.pot = pot
        self.p = p
        self.t = float(t)
        self.n = part.n
        self.lam_polys = [pot.lam(part, k) for k in part.small]
        self.p0 = p.restricted(part, 0.0)
        self.F0 = pot.model(part)
        self.large = np.zeros(self.n + 1)
        self.large[list(part.large)] = 1.0
        self._ps = lru_cache(maxsize=512)(lambda s: p.restricted(part, s))
        self._pds = lru_cache(maxsize=512)(lambda s: p.restricted_ds(part, s))
        self._Fs = lru_cache(maxsize=512)(lambda s: pot.scaled(part, s))
        self._vs = lru_cache(maxsize=512)(lambda s: pot.scaled_ds(part, s))
        self.trivial_family = not p.depends_on(part.small)

    def with_t(self, t: float) -> "Geometry":
        return Geometry(self.part, self.pot, self.p, t)

    def ps(self, s):
        return self._ps(float(s))

    def pds(self, s):
        return self._pds(float(s))

    def Fs(self, s):
        return self._Fs(float(s))

    def vs(self, s):
        return self._vs(float(s))

    # -- scalar data ---------------------------------------------------

    def eta_data(self, z, c) -> EtaData:
        z = np.asarray(z, complex)
        u = np.abs(z) ** 2
        lam = np.stack([q.value(u) for q in self.lam_polys], axis=-1)
        lg = np.stack([q.log_grad(u) for q in self.lam_polys], axis=-2)
        lh = np.stack([q.log_hess(u) for q in self.lam_polys], axis=-3)
        g = lg / lam[..., None]
        loglam_grad = g.sum(axis=-2)
        loglam_hess = (lh / lam[..., None, None]).sum(axis=-3) - np.swapaxes(g, -1, -2) @ g
        pval, pchk = self.p0.log_derivs(z)
        R = np.prod(u[..., list(self.part.large)], axis=-1)
        kappa = np.prod(lam, axis=-1) * np.abs(self.t * pval) ** 2 / R
        c = np.asarray(c, float)
        eta = solve_eta(c, kappa)
        eta = np.asarray(eta)
        zeta = np.asarray(zeta_of(c, eta))
        dlogk = loglam_grad + pchk - self.large
        return EtaData(u, kappa, eta, zeta, lam, lg, dlogk, loglam_grad, loglam_hess, pchk)

    def q(self, z, s):
        _, pc = self.ps(s).log_derivs(z)
        return 1.0 - pc

    def frame(self, z, s):
        """E[..., m, j] = d log z_m / d w_j on X_{t,s} (m = 0..n, j = 1..n)."""
        q = self.q(z, s)
        n = self.n
        E = np.zeros(q.shape[:-1] + (n + 1, n), complex)
        E[..., 1:, :] = np.eye(n)
        E[..., 0, :] = -q[..., 1:] / q[..., :1]
        return E

    @staticmethod
    def pull(G, E):
        return np.swapaxes(E, -1, -2) @ G @ np.conj(E)

    def defect(self, z, ed: EtaData):
        """lambda_0 |z_0|^2 - eta and its holomorphic derivatives on Y_t."""
        lam0 = ed.lam[..., 0]
        u0 = ed.u[..., 0]
        d = lam0 * u0 - ed.eta
        T = ed.lam_grad[..., 0, :] * u0[..., None]
        T[..., 0] = lam0 * u0
        E = self.frame(z, 0.0)
        c = (T[..., None, :] @ E)[..., 0, :] - (ed.zeta * ed.eta)[..., None] * ed.dlogk[..., 1:]
        return d, c

    def darg_p(self, ed: EtaData):
        """Real 1-form d arg p(0, z')."""
        return real_im_part(ed.p0_check[..., 1:])

    # -- 2-forms ---------------------------------------------------------

    def omega_model(self, z, s=0.0):
        """i d dbar of the family potential (no mu correction) restricted to X_{t,s}."""
        u = np.abs(z) ** 2
        return herm_to_real(self.pull(self.Fs(s).log_hess(u).astype(complex), self.frame(z, s)))

    def omega_check(self, z, c, ed: EtaData | None = None):
        ed = ed or self.eta_data(z, c)
        G = self.F0.log_hess(ed.u) - ed.mu_hess
        return herm_to_real(self.pull(G, self.frame(z, 0.0)))

    def omega_tilde(self, z, c, s, ed: EtaData | None = None):
        ed = ed or self.eta_data(z, c)
        G = self.Fs(s).log_hess(ed.u) - (1.0 - s) * ed.mu_hess
        return herm_to_real(self.pull(G, self.frame(z, s)))

    def omega_hat(self, z, c, s, ed: EtaData | None = None):
        """omega_check - (1-s) d(lambda_0|z_0|^2 - eta) ^ d arg p; at s = 0 the Darboux form."""
        ed = ed or self.eta_data(z, c)
        M = self.omega_check(z, c, ed)
        if s == 1.0:
            return M
        _, dc = self.defect(z, ed)
        return M - (1.0 - s) * wedge(real_differential(dc), self.darg_p(ed))

    def ambient_metric(self, z, c, s, ed: EtaData | None = None):
        """Hermitian metric of the family potential in ambient log coordinates."""
        ed = ed or self.eta_data(z, c)
        return self.Fs(s).log_hess(ed.u) - (1.0 - s) * ed.mu_hess

    # -- convenience evaluators for residual checks ----------------------

    def form(self, kind: str, c=None, s: float = 0.0):
        if kind == "check":
            return lambda z: self.omega_check(z, c)
        if kind == "hat":
            return lambda z: self.omega_hat(z, c, s)
        if kind == "tilde":
            return lambda z: self.omega_tilde(z, c, s)
        if kind == "model":
            return lambda z: self.omega_model(z, s)
        if kind == "final":
            return lambda z: self.omega_model(z, 1.0)
        raise ValueError(kind)
