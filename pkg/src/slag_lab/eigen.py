"""Closed-form eigenvalue solvers for symmetric 2x2 and 3x3 matrices.

Both the single-matrix and batched entry points return eigenvalues sorted in
descending order. The 3x3 path uses the trigonometric method on the shifted
and scaled matrix; r is clamped to [-1, 1] against round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridError


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a symmetric dim x dim matrix, sorted descending."""

    eigenvalues: tuple[float, ...]

    def __post_init__(self):
        ev = tuple(float(v) for v in self.eigenvalues)
        if not all(np.isfinite(ev)):
            raise ValueError(f"non-finite eigenvalues {ev}")
        if any(ev[i] < ev[i + 1] for i in range(len(ev) - 1)):
            raise ValueError(f"eigenvalues not sorted descending: {ev}")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def as_array(self) -> np.ndarray:
        return np.array(self.eigenvalues)


def _eigvals2(m: np.ndarray) -> np.ndarray:
    # m: (..., 2, 2) symmetric -> (..., 2) descending
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    c = m[..., 1, 1]
    mean = 0.5 * (a + c)
    disc = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
    return np.stack([mean + disc, mean - disc], axis=-1)


def _eigvals3(m: np.ndarray) -> np.ndarray:
    # m: (..., 3, 3) symmetric -> (..., 3) descending
    m = np.asarray(m, dtype=float)
    p1 = m[..., 0, 1] ** 2 + m[..., 0, 2] ** 2 + m[..., 1, 2] ** 2
    diag = np.stack([m[..., 0, 0], m[..., 1, 1], m[..., 2, 2]], axis=-1)
    q = diag.mean(axis=-1)
    p2 = ((diag - q[..., None]) ** 2).sum(axis=-1) + 2.0 * p1
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)
    safe_p = np.where(p > 0, p, 1.0)
    b = (m - q[..., None, None] * np.eye(3)) / safe_p[..., None, None]
    r = (
        b[..., 0, 0] * (b[..., 1, 1] * b[..., 2, 2] - b[..., 1, 2] ** 2)
        - b[..., 0, 1] * (b[..., 0, 1] * b[..., 2, 2] - b[..., 1, 2] * b[..., 0, 2])
        + b[..., 0, 2] * (b[..., 0, 1] * b[..., 1, 2] - b[..., 1, 1] * b[..., 0, 2])
    ) / 2.0
    phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
    lam1 = q + 2.0 * p * np.cos(phi)
    lam3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam2 = 3.0 * q - lam1 - lam3  # trace identity
    out = np.stack([lam1, lam2, lam3], axis=-1)
    # p == 0 means the matrix is a multiple of the identity
    iso = p2 <= 0
    if np.any(iso):
        out = np.where(iso[..., None], q[..., None] * np.ones(3), out)
    return out


def eigvals_sym(matrices: np.ndarray) -> np.ndarray:
    """Descending eigenvalues of a batch (..., d, d) of symmetric matrices."""
    m = np.asarray(matrices, dtype=float)
    d = m.shape[-1]
    if m.shape[-2] != d or d not in (2, 3):
        raise GridError(f"expected (..., 2, 2) or (..., 3, 3) input, got {m.shape}")
    return _eigvals2(m) if d == 2 else _eigvals3(m)


def eigen_decompose(matrix: np.ndarray) -> Spectrum:
    """Spectrum of one symmetric 2x2 or 3x3 matrix."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise GridError("eigen_decompose expects a single matrix")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-10 * (1.0 + np.abs(m).max())):
        raise GridError("matrix is not symmetric")
    vals = eigvals_sym(0.5 * (m + m.T))
    return Spectrum(tuple(vals))
