"""Explicit local-model tori and the eta-equation prod_k (c_k + eta) = kappa."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spectral
from .ambient import DefiningPolynomial, FamilyParams, PartitionedIndex, ToricPotential
from .errors import DegenerateError, ParameterError


# -- eta algebra ----------------------------------------------------------

def solve_eta(c, kappa, tol: float = 1e-13, maxit: int = 200):
    """Positive root of prod_k (c_k + eta) = kappa, vectorised over ``kappa``.

    Newton on log(eta) starting from the upper bound kappa^(1/m). The map
    L -> sum log(c_k + e^L) is increasing and convex, so the iteration
    decreases monotonically onto the root.
    """
    c = np.asarray(c, float)
    kappa = np.asarray(kappa, float)
    if np.any(kappa <= 0):
        raise ParameterError("kappa must be positive")
    if np.any(c < 0):
        raise ParameterError("c_k must be non-negative")
    m = c.size
    logk = np.log(kappa)
    L = logk / m
    done = 0
    for _ in range(maxit):
        eta = np.exp(L)
        ce = c + eta[..., None]
        f = np.log(ce).sum(axis=-1) - logk
        df = (eta[..., None] / ce).sum(axis=-1)
        step = f / df
        L = L - step
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(L))):
            done += 1
            if done == 2:
                break
    else:
        from .errors import ConvergenceError
        raise ConvergenceError("eta solve did not converge")
    eta = np.exp(L)
    return eta if eta.ndim else float(eta)


def zeta_of(c, eta):
    """zeta = (sum_k eta / (c_k + eta))^-1, between 1/|I''| and 1."""
    c = np.asarray(c, float)
    eta = np.asarray(eta, float)
    z = 1.0 / (eta[..., None] / (c + eta[..., None])).sum(axis=-1)
    return z if z.ndim else float(z)


def deta_dc(c, eta):
    """d eta / d c_k = -zeta eta / (c_k + eta)."""
    c = np.asarray(c, float)
    eta = np.asarray(eta, float)
    return -(zeta_of(c, eta) * eta)[..., None] / (c + eta[..., None])


def mu_of(c, eta, kappa=None):
    """mu = m eta - sum c_k log(c_k + eta) and its total c-gradient with kappa fixed.

    Through d eta / d c_k = -zeta eta / (c_k + eta) the gradient collapses to
    -log(c_k + eta) - 1.
    """
    c = np.asarray(c, float)
    eta = np.asarray(eta, float)
    ce = c + eta[..., None]
    mu = c.size * eta - (c * np.log(ce)).sum(axis=-1)
    return mu, -np.log(ce) - 1.0


# -- model parameters -----------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Fibre label: radii on the large block, offsets c on the small block (c_0 = 0)."""

    r: tuple
    c: tuple
    part: PartitionedIndex
    family: FamilyParams

    def __post_init__(self):
        r = tuple(float(v) for v in self.r)
        c = tuple(float(v) for v in self.c)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "c", c)
        if len(r) != len(self.part.large) or len(c) != len(self.part.small):
            raise ParameterError("r and c must match the partition blocks")
        if any(v <= 0 for v in r):
            raise ParameterError("radii must be positive")
        if c[0] != 0.0 or any(v < 0 for v in c):
            raise ParameterError("c must be non-negative with c_0 = 0")

    @property
    def c_arr(self) -> np.ndarray:
        return np.array(self.c)

    def u_large(self) -> np.ndarray:
        """Ambient u-vector with the large block at r^2 and zeros elsewhere."""
        u = np.zeros(self.part.n + 1)
        u[list(self.part.large)] = np.square(self.r)
        return u

    def lambdas(self, pot: ToricPotential) -> np.ndarray:
        u = self.u_large()
        return np.array([pot.lam(self.part, k).value(u) for k in self.part.small])

    def eta_check(self, pot: ToricPotential) -> float:
        """Root of prod (c_k + eta) = Lambda R^-1 t^2, the p-free reference scale."""
        R = float(np.prod(np.square(self.r)))
        return solve_eta(self.c_arr, np.prod(self.lambdas(pot)) / R * self.family.t ** 2)

    def nu(self, pot: ToricPotential) -> np.ndarray:
        """Scale vector indexed 0..n: r_i on the large block, sqrt(eta_check + c_i) on the small."""
        out = np.zeros(self.part.n + 1)
        out[list(self.part.large)] = self.r
        out[list(self.part.small)] = np.sqrt(self.eta_check(pot) + self.c_arr)
        return out

    def replace(self, r=None, c=None, t=None) -> "ModelParams":
        fam = self.family if t is None else FamilyParams(t, self.family.s, self.family.tau, self.family.weights)
        return ModelParams(self.r if r is None else r, self.c if c is None else c, self.part, fam)


def kappa_at(z, part: PartitionedIndex, pot: ToricPotential, p0: DefiningPolynomial, t: float):
    """kappa(z') = Lambda(z') |t p(0,z')|^2 / prod_{j large} |z_j|^2."""
    z = np.asarray(z, complex)
    u = np.abs(z) ** 2
    lam = np.prod([pot.lam(part, k).value(u) for k in part.small], axis=0)
    R = np.prod(u[..., list(part.large)], axis=-1)
    return lam * np.abs(t * p0.value(z)) ** 2 / R


@dataclass(frozen=True)
class EtaProfile:
    grid: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    mu: np.ndarray


# -- embeddings -----------------------------------------------------------

def infer_winding(points: np.ndarray) -> np.ndarray:
    """Integer winding of each coordinate's phase around each grid cycle."""
    n = points.ndim - 1
    W = np.zeros((n, points.shape[-1]), dtype=int)
    for a in range(n):
        ph = np.angle(points)
        d = np.angle(np.exp(1j * (np.roll(ph, -1, axis=a) - ph)))
        tot = d.sum(axis=a) / (2 * np.pi)
        W[a] = np.rint(tot.reshape(-1, points.shape[-1])[0]).astype(int)
    return W


@dataclass(frozen=True)
class FibreEmbedding:
    """Samples of a torus in C^{n+1} on a uniform grid, plus its winding matrix."""

    points: np.ndarray
    winding: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def shape(self) -> tuple:
        return self.points.shape[:-1]

    @property
    def n(self) -> int:
        return self.points.ndim - 1

    @property
    def x(self) -> np.ndarray:
        return spectral.grid(self.shape)

    def log_periodic(self) -> np.ndarray:
        """log z minus the winding part i W^T x, on a continuous branch."""
        lin = self.x @ self.winding
        w = self.points * np.exp(-1j * lin)
        return np.log(np.abs(w)) + 1j * spectral.unwrap_grid(np.angle(w))

    def frame(self) -> np.ndarray:
        """J[..., k, j] = d log z_{k+1} / d x_j for k, j = 0..n-1."""
        per = self.log_periodic()[..., 1:]
        J = np.stack([spectral.derivative(per, a) for a in range(self.n)], axis=-1)
        return J + 1j * self.winding[:, 1:].T

    def tangents(self) -> np.ndarray:
        """Real tangent vectors in (log|z|, arg z) coordinates, shape (..., 2n, n)."""
        J = self.frame()
        return np.concatenate([J.real, J.imag], axis=-2)

    def to_csv(self, path) -> None:
        path = Path(path)
        x = self.x.reshape(-1, self.n)
        pts = self.points.reshape(-1, self.points.shape[-1])
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.n)]
                       + [f"{part}{k}" for k in range(pts.shape[1]) for part in ("re_z", "im_z")])
            for xi, zi in zip(x, pts):
                row = [f"{v:.17g}" for v in xi]
                for v in zi:
                    row += [f"{v.real:.17g}", f"{v.imag:.17g}"]
                w.writerow(row)

    def to_json(self) -> dict:
        return {"grid_shape": list(self.shape), "winding": self.winding.tolist(), "meta": self.meta}


def model_torus(params: ModelParams, pot: ToricPotential, p: DefiningPolynomial, shape) -> FibreEmbedding:
    """Sample S_{r,c} on the hypersurface z_0...z_n = t p(0, z') over a uniform angle grid."""
    part = params.part
    n = part.n
    shape = tuple(shape)
    if len(shape) != n:
        raise ParameterError("grid shape must have one entry per angle")
    theta = spectral.grid(shape)
    p0 = p.restricted(part, 0.0)
    t = params.family.t
    z = np.zeros(shape + (n + 1,), complex)
    large = list(part.large)
    z[..., large] = np.array(params.r) * np.exp(1j * theta[..., [j - 1 for j in large]])
    lam = params.lambdas(pot)
    if np.any(lam <= 0):
        raise ParameterError("lambda_k must be positive on the fibre")
    kappa = kappa_at(z, part, pot, p0, t)
    eta = solve_eta(params.c_arr, kappa)
    for i, k in enumerate(part.small):
        if k == 0:
            continue
        z[..., k] = np.sqrt((params.c[i] + eta) / lam[i]) * np.exp(1j * theta[..., k - 1])
    z[..., 0] = t * p0.value(z) / np.prod(z[..., 1:], axis=-1)
    emb = FibreEmbedding(z, infer_winding(z), {"kind": "model", "r": list(params.r), "c": list(params.c)})
    return emb


def eta_profile(params: ModelParams, pot, p, shape) -> EtaProfile:
    emb = model_torus(params, pot, p, shape)
    p0 = p.restricted(params.part, 0.0)
    kappa = kappa_at(emb.points, params.part, pot, p0, params.family.t)
    eta = solve_eta(params.c_arr, kappa)
    return EtaProfile(emb.x, eta, zeta_of(params.c_arr, eta), mu_of(params.c_arr, eta)[0])


def lagrangian_residual(emb: FibreEmbedding, form) -> float:
    """sup over nodes and i < j of |form(e_i, e_j)| for the pushed-forward grid tangents.

    ``form`` maps an array of points to real matrices M with form(u, v) = u^T M v
    in (log|z_k|, arg z_k)_{k=1..n} coordinates.
    """
    E = emb.tangents()
    M = form(emb.points)
    vals = np.einsum("...ai,...ab,...bj->...ij", E, M, E)
    iu = np.triu_indices(emb.n, 1)
    if len(iu[0]) == 0:
        return 0.0
    return float(np.max(np.abs(vals[..., iu[0], iu[1]])))


def phase_field(emb: FibreEmbedding, ps: DefiningPolynomial) -> np.ndarray:
    """Continuous branch of arg(det J / q_0) over the grid."""
    J = emb.frame()
    det = np.linalg.det(J)
    if np.min(np.abs(det)) < 1e-12:
        raise DegenerateError("degenerate tangent frame on the fibre")
    _, pc = ps.log_derivs(emb.points)
    q0 = 1.0 - pc[..., 0]
    return spectral.unwrap_grid(np.angle(det / q0))


def phase_residual(emb: FibreEmbedding, part: PartitionedIndex, p: DefiningPolynomial, family: FamilyParams) -> float:
    """Oscillation (sup - inf) of the holomorphic volume phase along the fibre."""
    ph = phase_field(emb, p.restricted(part, family.s))
    return float(ph.max() - ph.min())


def write_embedding(emb: FibreEmbedding, stem, extra: dict | None = None) -> None:
    stem = Path(stem)
    emb.to_csv(stem.with_suffix(".csv"))
    doc = emb.to_json()
    if extra:
        doc.update(extra)
    stem.with_suffix(".json").write_text(json.dumps(doc, indent=2, sort_keys=True))
