"""Fourier pseudospectral tools on uniform periodic grids over T^n = [0, 2pi)^n."""

from __future__ import annotations

import numpy as np


def grid(shape) -> np.ndarray:
    """Node coordinates, array of shape ``shape + (n,)``."""
    axes = [2 * np.pi * np.arange(N) / N for N in shape]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def wavenumbers(N: int, order: int = 1) -> np.ndarray:
    k = np.fft.fftfreq(N, 1.0 / N)
    if order % 2 == 1 and N % 2 == 0:
        k[N // 2] = 0.0
    return k


def derivative(f, axis: int, order: int = 1):
    """Spectral derivative of a periodic array along ``axis``."""
    f = np.asarray(f)
    N = f.shape[axis]
    k = wavenumbers(N, order)
    shape = [1] * f.ndim
    shape[axis] = N
    mult = ((1j * k) ** order).reshape(shape)
    out = np.fft.ifft(np.fft.fft(f, axis=axis) * mult, axis=axis)
    return out.real if np.isrealobj(f) else out


def gradient(f, n: int):
    """Stack of first derivatives over the leading ``n`` axes, last axis indexes direction."""
    return np.stack([derivative(f, a) for a in range(n)], axis=-1)


def diff_matrix(N: int) -> np.ndarray:
    """Dense first-derivative matrix on N equispaced nodes (Nyquist mode dropped)."""
    return np.real(np.fft.ifft(1j * wavenumbers(N)[:, None] * np.fft.fft(np.eye(N), axis=0), axis=0))


def diff_matrices(shape) -> list[np.ndarray]:
    """Dense derivative matrices on the flattened (C-order) grid, one per axis."""
    mats = []
    for a, N in enumerate(shape):
        factors = [np.eye(M) for M in shape]
        factors[a] = diff_matrix(N)
        D = factors[0]
        for F in factors[1:]:
            D = np.kron(D, F)
        mats.append(D)
    return mats


def tail_fraction(f, frac: float = 1.0 / 3.0) -> float:
    """Energy fraction in modes whose max |k|/(N/2) exceeds 1 - frac."""
    f = np.asarray(f)
    F = np.abs(np.fft.fftn(f)) ** 2
    total = F.sum()
    if total == 0:
        return 0.0
    kk = np.zeros(f.shape)
    for a, N in enumerate(f.shape):
        k = np.abs(np.fft.fftfreq(N, 1.0 / N)) / (N / 2)
        shape = [1] * f.ndim
        shape[a] = N
        kk = np.maximum(kk, k.reshape(shape))
    return float(F[kk > 1 - frac].sum() / total)


def unwrap_grid(phase):
    """Continuous branch of a phase field on the grid, anchored at node 0."""
    out = np.asarray(phase, float)
    for a in range(out.ndim):
        out = np.unwrap(out, axis=a)
    return out


def trig_eval(values, points):
    """Evaluate the trigonometric interpolant of grid ``values`` at arbitrary ``points``.

    ``points`` has shape (M, n); the last axes of ``values`` beyond n are carried.
    """
    points = np.atleast_2d(points)
    n = points.shape[-1]
    shape = values.shape[:n]
    coef = np.fft.fftn(values, axes=tuple(range(n))) / np.prod(shape)
    out = coef
    for a in range(n):
        N = shape[a]
        k = np.fft.fftfreq(N, 1.0 / N)
        E = np.exp(1j * np.outer(points[:, a], k))
        if N % 2 == 0:
            E[:, N // 2] = np.cos(N / 2 * points[:, a])
        if a == 0:
            out = np.tensordot(E, out, axes=([1], [0]))
        else:
            out = np.einsum("mk,mk...->m...", E, out)
    return out


def trig_eval_grad(values, points):
    """Gradient of the interpolant at ``points``; returns shape (M, ..., n)."""
    n = points.shape[-1]
    grads = [derivative(values, a) for a in range(n)]
    return np.stack([trig_eval(g, points) for g in grads], axis=-1)
