"""Ambient chart: index partition, toric potential, defining polynomial, region tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class PartitionedIndex:
    """Split of ``{0..n}`` into the small block (contains 0) and the large block."""

    n: int
    small: tuple[int, ...]
    large: tuple[int, ...]

    def __post_init__(self):
        small = tuple(int(i) for i in self.small)
        large = tuple(int(i) for i in self.large)
        object.__setattr__(self, "small", small)
        object.__setattr__(self, "large", large)
        if self.n < 1:
            raise ParameterError("n must be positive")
        if 0 not in small:
            raise ParameterError("index 0 must belong to the small block")
        if sorted(small + large) != list(range(self.n + 1)):
            raise ParameterError("blocks must partition {0..n}")
        if list(small) != sorted(set(small)) or list(large) != sorted(set(large)):
            raise ParameterError("indices must be strictly increasing")

    @property
    def l(self) -> int:
        return len(self.small) - 1

    @property
    def small_mask(self) -> np.ndarray:
        m = np.zeros(self.n + 1, dtype=bool)
        m[list(self.small)] = True
        return m

    @property
    def large_mask(self) -> np.ndarray:
        return ~self.small_mask

    @classmethod
    def standard(cls, n: int, l: int) -> "PartitionedIndex":
        return cls(n, tuple(range(l + 1)), tuple(range(l + 1, n + 1)))


def _as_terms(terms, n, dtype):
    if isinstance(terms, Mapping):
        items = list(terms.items())
    else:
        items = list(terms)
    exps = np.array([tuple(e) for e, _ in items], dtype=np.int64).reshape(-1, n + 1)
    coefs = np.array([c for _, c in items], dtype=dtype).reshape(-1)
    return exps, coefs


class ToricPotential:
    """Polynomial rho(u) = sum_I c_I prod_k u_k^{I_k} in u_k = |z_k|^2.

    All derivatives are taken with respect to ``log u_k``, which is the only
    form the geometry consumes.
    """

    def __init__(self, n: int, terms):
        self.n = n
        self.exps, self.coefs = _as_terms(terms, n, float)
        if np.any(self.exps < 0):
            raise ParameterError("potential exponents must be non-negative")

    @classmethod
    def flat(cls, n: int, weights=None) -> "ToricPotential":
        w = np.ones(n + 1) if weights is None else np.asarray(weights, float)
        return cls(n, {tuple(np.eye(n + 1, dtype=int)[k]): w[k] for k in range(n + 1)})

    def terms(self) -> dict:
        return {tuple(int(v) for v in e): float(c) for e, c in zip(self.exps, self.coefs)}

    def _monomials(self, u):
        u = np.asarray(u, float)
        if len(self.exps) == 0:
            return np.zeros(u.shape[:-1] + (0,))
        if np.all(self.exps.sum(axis=1) == self.exps.max(axis=1)) and np.all(self.exps <= 1):
            # linear monomials: pick columns directly
            out = np.ones(u.shape[:-1] + (len(self.exps),))
            nz = self.exps.argmax(axis=1)
            has = self.exps.max(axis=1) > 0
            out[..., has] = u[..., nz[has]]
            return out
        return np.prod(u[..., None, :] ** self.exps, axis=-1)

    def value(self, u):
        return self._monomials(u) @ self.coefs

    def log_grad(self, u):
        m = self._monomials(u) * self.coefs
        return m @ self.exps

    def log_hess(self, u):
        m = self._monomials(u) * self.coefs
        k = self.n + 1
        outer = (self.exps[:, :, None] * self.exps[:, None, :]).reshape(-1, k * k).astype(float)
        return (m @ outer).reshape(m.shape[:-1] + (k, k))

    def u_grad(self, u):
        """Ordinary gradient d rho / d u_k (used by the complex Hessian)."""
        u = np.asarray(u, float)
        out = np.zeros(u.shape, float)
        for e, c in zip(self.exps, self.coefs):
            for k in np.nonzero(e)[0]:
                ee = e.copy()
                ee[k] -= 1
                out[..., k] += c * e[k] * np.prod(u ** ee, axis=-1)
        return out

    def u_hess(self, u):
        u = np.asarray(u, float)
        out = np.zeros(u.shape + (u.shape[-1],), float)
        for e, c in zip(self.exps, self.coefs):
            for j in np.nonzero(e)[0]:
                for k in np.nonzero(e)[0]:
                    ee = e.copy()
                    ee[j] -= 1
                    ee[k] -= 1
                    if ee[j] < 0 or ee[k] < 0:
                        continue
                    coef = c * e[j] * (e[k] - (1 if j == k else 0))
                    out[..., j, k] += coef * np.prod(u ** ee, axis=-1)
        return out

    def _select(self, mask, scale):
        keep = mask & (scale != 0)
        return ToricPotential(self.n, list(zip(map(tuple, self.exps[keep]), self.coefs[keep] * scale[keep])))

    def small_degree(self, part: PartitionedIndex) -> np.ndarray:
        return self.exps[:, list(part.small)].sum(axis=1)

    def base(self, part: PartitionedIndex) -> "ToricPotential":
        """rho restricted to the small coordinates set to zero."""
        d = self.small_degree(part)
        return self._select(d == 0, np.ones(len(d)))

    def lam(self, part: PartitionedIndex, k: int) -> "ToricPotential":
        """Coefficient lambda_k(u') of u_k, as a polynomial in the large block."""
        d = self.small_degree(part)
        mask = (d == 1) & (self.exps[:, k] == 1)
        sel = self._select(mask, np.ones(len(d)))
        sel.exps = sel.exps.copy()
        sel.exps[:, k] = 0
        return sel

    def scaled(self, part: PartitionedIndex, s: float) -> "ToricPotential":
        """Potential of the deformation family, rho(0,z') + s^-2 (rho(s z'', z') - rho(0, z')).

        Terms of small-degree d pick up s^(2d-2) (d >= 1); at s = 0 this is the
        truncated model potential.
        """
        d = self.small_degree(part)
        pw = np.where(d >= 1, 2 * d - 2, 0)
        scale = np.array([1.0 if q == 0 else s ** q for q in pw])
        return self._select(np.ones(len(d), bool), scale)

    def scaled_ds(self, part: PartitionedIndex, s: float) -> "ToricPotential":
        """s-derivative of :meth:`scaled` (the correction potential v_s)."""
        d = self.small_degree(part)
        pw = np.where(d >= 1, 2 * d - 2, 0)
        scale = np.array([0.0 if q == 0 else q * s ** (q - 1) for q in pw])
        return self._select(np.ones(len(d), bool), scale)

    def model(self, part: PartitionedIndex) -> "ToricPotential":
        return self.scaled(part, 0.0)


class DefiningPolynomial:
    """Laurent polynomial p(z) = sum_e a_e prod_k z_k^{e_k}."""

    def __init__(self, n: int, terms):
        self.n = n
        self.exps, self.coefs = _as_terms(terms, n, complex)

    def terms(self) -> dict:
        return {tuple(int(v) for v in e): complex(c) for e, c in zip(self.exps, self.coefs)}

    def _monomials(self, z):
        z = np.asarray(z, complex)
        return np.prod(z[..., None, :] ** self.exps, axis=-1)

    def value(self, z):
        return self._monomials(z) @ self.coefs

    def log_grad(self, z):
        """p_k = z_k dp/dz_k."""
        m = self._monomials(z) * self.coefs
        return m @ self.exps.astype(complex)

    def log_hess(self, z):
        """z_j d/dz_j (z_k dp/dz_k)."""
        m = self._monomials(z) * self.coefs
        k = self.n + 1
        outer = (self.exps[:, :, None] * self.exps[:, None, :]).reshape(-1, k * k).astype(complex)
        return (m @ outer).reshape(m.shape[:-1] + (k, k))

    def log_derivs(self, z):
        """(p, pcheck_k = z_k d log p / dz_k)."""
        m = self._monomials(z) * self.coefs
        val = m.sum(axis=-1)
        return val, (m @ self.exps.astype(complex)) / val[..., None]

    def restricted(self, part: PartitionedIndex, s: float) -> "DefiningPolynomial":
        """The polynomial z -> p(s z'', z') expressed in z."""
        d = self.exps[:, list(part.small)].sum(axis=1)
        if s == 0 and np.any(d < 0):
            raise ParameterError("negative small-block exponent cannot be restricted at s=0")
        scale = np.array([1.0 if q == 0 else s ** float(q) for q in d])
        keep = scale != 0
        return DefiningPolynomial(self.n, list(zip(map(tuple, self.exps[keep]), self.coefs[keep] * scale[keep])))

    def restricted_ds(self, part: PartitionedIndex, s: float) -> "DefiningPolynomial":
        """d/ds of p(s z'', z')."""
        d = self.exps[:, list(part.small)].sum(axis=1)
        if s == 0 and np.any(d < 0):
            raise ParameterError("negative small-block exponent cannot be differentiated at s=0")
        scale = np.array([0.0 if q == 0 else q * s ** float(q - 1) for q in d])
        keep = scale != 0
        return DefiningPolynomial(self.n, list(zip(map(tuple, self.exps[keep]), self.coefs[keep] * scale[keep])))

    def depends_on(self, idx) -> bool:
        return bool(np.any(self.exps[:, list(idx)] != 0))


@dataclass(frozen=True)
class FamilyParams:
    t: float
    s: float = 0.0
    tau: float = 0.5
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.t > 0:
            raise ParameterError("t must be positive")
        if not 0.0 <= self.s <= 1.0:
            raise ParameterError("s must lie in [0, 1]")
        if not 0.0 < self.tau < 1.0:
            raise ParameterError("tau must lie in (0, 1)")


def make_coefficients(weights: Mapping, tau: float, phases: Mapping | None = None) -> dict:
    """a_m = tau^{w_m} exp(i phase_m)."""
    if not 0.0 < tau < 1.0:
        raise ParameterError("tau must lie in (0, 1)")
    phases = phases or {}
    out = {}
    for m, w in weights.items():
        if not w > 0:
            raise ParameterError(f"weight for {m!r} must be positive")
        out[m] = tau ** w * complex(math.cos(phases.get(m, 0.0)), math.sin(phases.get(m, 0.0)))
    return out


def hypersurface_residual(z, family: FamilyParams, p: DefiningPolynomial, part: PartitionedIndex):
    """z_0...z_n - t p(s z'', z')."""
    z = np.asarray(z, complex)
    ps = p.restricted(part, family.s)
    return np.prod(z, axis=-1) - family.t * ps.value(z)


def project_z0(zrest, t: float, ps: DefiningPolynomial, tol: float = 1e-15, maxit: int = 100):
    """Solve z_0 = t p_s(z_0, z_rest) / prod(z_rest) by fixed-point iteration.

    ``zrest`` holds z_1..z_n in its last axis. Returns the full point array.
    """
    zrest = np.asarray(zrest, complex)
    prod = np.prod(zrest, axis=-1)
    z = np.concatenate([np.zeros(zrest.shape[:-1] + (1,), complex), zrest], axis=-1)
    if not ps.depends_on([0]):
        z[..., 0] = t * ps.value(z) / prod
        return z
    z[..., 0] = t * ps.value(z) / prod
    for _ in range(maxit):
        new = t * ps.value(z) / prod
        err = np.max(np.abs(new - z[..., 0]) / np.maximum(np.abs(new), 1e-300)) if new.size else 0.0
        z[..., 0] = new
        if err < tol:
            return z
    from .errors import ProjectionError
    raise ProjectionError("fixed-point projection onto the hypersurface did not converge")


def kahler_matrix(pot: ToricPotential, z):
    """Hermitian matrix g_{jk} = d^2 rho / dz_j d zbar_k."""
    z = np.asarray(z, complex)
    u = np.abs(z) ** 2
    g1 = pot.u_grad(u)
    g2 = pot.u_hess(u)
    out = np.conj(z)[..., :, None] * z[..., None, :] * g2
    idx = np.arange(z.shape[-1])
    out = out.astype(complex)
    out[..., idx, idx] += g1
    return out


@dataclass(frozen=True)
class RegionConstants:
    C: float = 1.0
    C1: float = 2.0
    C2: float = 2.0
    C3: float = 1.0
    C4: float = 1.0
    eps_max: float = 0.1


@dataclass(frozen=True)
class RegionReport:
    p_bounded: bool
    epsilon_small: bool
    refined_small_coords: bool
    refined_large_coords: bool
    in_u_sigma: bool
    epsilon: float
    eps_vacuous: bool

    @property
    def normal(self) -> bool:
        return self.p_bounded and self.epsilon_small and self.refined_small_coords and self.refined_large_coords


def classify_region(z, part: PartitionedIndex, p: DefiningPolynomial, consts: RegionConstants = RegionConstants()) -> RegionReport:
    """Evaluate the normal-region inequalities at a single point."""
    z = np.asarray(z, complex)
    a = np.abs(z)
    p0 = p.restricted(part, 0.0)
    p_ok = bool(abs(p0.value(z)) >= consts.C3)
    large = list(part.large)
    small = [k for k in part.small if k != 0]
    vacuous = not large
    eps = float(max(a[0] / a[j] for j in large)) if large else 0.0
    eps_ok = vacuous or eps < consts.eps_max
    ref_small = True
    if small:
        ref_small = all(a[i] ** 1.5 <= consts.C * a[small[0]] for i in small)
    ref_large = all(a[j] ** 1.5 >= consts.C * a[0] for j in large)
    sm = np.sort(a[list(part.small)])
    nu0 = sm[0]
    nu1 = sm[1] if len(sm) > 1 else sm[0]
    in_u = (
        np.linalg.norm(z) < consts.C2
        and p_ok
        and all(a[i] <= a[j] for i in part.small for j in large)
        and all(a[i] <= consts.C4 * nu1 ** (2 / 3) for i in part.small)
        and all(a[j] >= consts.C4 * nu0 ** (2 / 3) for j in large)
    )
    return RegionReport(p_ok, bool(eps_ok), bool(ref_small), bool(ref_large), bool(in_u), eps, vacuous)
