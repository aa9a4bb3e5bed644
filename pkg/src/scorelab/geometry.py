"""Sphere and linear-algebra primitives.

Unit features, waveforms and scores are plain numpy arrays / floats; the
``as_*`` helpers validate them at module boundaries.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError

UNIT_TOL = 1e-9
# relative singular-value cutoff for pseudo-inverse rank decisions
SVD_RTOL = 1e-12


def as_unit(v, tol: float = UNIT_TOL) -> np.ndarray:
    """Validate a unit feature (d >= 2, norm 1 within ``tol``)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] < 2:
        raise DimensionMismatchError(f"unit feature must be a vector with d >= 2, got shape {v.shape}")
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise ValueError(f"not unit-norm: |v| = {np.linalg.norm(v)!r}")
    return v


def as_waveform(samples) -> np.ndarray:
    w = np.asarray(samples, dtype=float)
    if w.ndim != 1:
        raise DimensionMismatchError(f"waveform must be 1-D, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(np.abs(w) > 1.0):
        raise ValueError("waveform samples must lie in [-1, 1]")
    return w


def clip(w) -> np.ndarray:
    return np.clip(w, -1.0, 1.0)


def normalize(v) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm.

    Works row-wise on 2-D input. Raises DegenerateInputError on zero norm.
    """
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise DegenerateInputError("cannot normalize a zero-norm (or non-finite) vector")
    return v / norm


def cosine(u, v) -> float:
    """Inner product of two unit features, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(np.clip(u @ v, -1.0, 1.0))


def perturb_angular(x, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate unit ``x`` by ``theta`` degrees toward a uniformly random orthogonal direction.

    The result ``x'`` satisfies ``<x, x'> = cos(theta)``.
    """
    if not 0.0 <= theta <= 180.0:
        raise ValueError(f"theta must lie in [0, 180] degrees, got {theta}")
    x = as_unit(x)
    while True:
        g = rng.standard_normal(x.shape[0])
        g -= (g @ x) * x
        norm = np.linalg.norm(g)
        if norm > 1e-8:
            break
    u = g / norm
    # one Gram-Schmidt pass leaves ~1e-16 of x in u; remove it again
    u -= (u @ x) * x
    u /= np.linalg.norm(u)
    rad = np.deg2rad(theta)
    return np.cos(rad) * x + np.sin(rad) * u


def _svd(A: np.ndarray):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateInputError("matrix has no nonzero singular value")
    keep = s > SVD_RTOL * s[0]
    return U[:, keep], s[keep], Vt[keep]


def pinv(A) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with relative cutoff ``SVD_RTOL``."""
    A = np.asarray(A, dtype=float)
    U, s, Vt = _svd(A)
    return (Vt.T / s) @ U.T


def least_squares(A, y) -> tuple[np.ndarray, float]:
    """Minimum-norm least-squares solution of ``A x = y`` via truncated SVD.

    Returns
    -------
    solution : ndarray of shape (d,)
    residual : float
        ``||A @ solution - y||``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or A.shape[0] != y.shape[0]:
        raise DimensionMismatchError(f"A is {A.shape} but y has shape {y.shape}")
    U, s, Vt = _svd(A)
    x = Vt.T @ ((U.T @ y) / s)
    return x, float(np.linalg.norm(A @ x - y))


def condition_number(A) -> float:
    """Spectral condition number over the nonzero singular values."""
    _, s, _ = _svd(np.atleast_2d(np.asarray(A, dtype=float)))
    return float(s[0] / s[-1])
