"""Dense float64 matrix kernels, probability-simplex utilities, and the
central-difference gradient oracle.

All operations are pure functions on numpy arrays (double precision,
row-major). Matrices here are plain ``np.ndarray``; the helpers below
enforce the invariants (finiteness, simplex membership) at operation
boundaries instead of wrapping arrays in classes.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import InvalidInputError, OracleError, ShapeError

# SVD routines here are only exercised up to this edge length.
SVD_MAX_DIM = 512


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a C-contiguous float64 2-D array with finite entries."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


def require_simplex_rows(P: np.ndarray, tol: float = 1e-6, name: str = "P") -> np.ndarray:
    """Check every row of ``P`` lies on the probability simplex within ``tol``."""
    P = as_matrix(P, name)
    if np.any(P < -tol):
        raise InvalidInputError(f"{name} has negative entries")
    sums = P.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise InvalidInputError(f"{name} rows do not sum to 1 (max dev {np.abs(sums - 1).max():.3g})")
    return P


def softmax_rows(logits) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability."""
    M = as_matrix(logits, "logits")
    shifted = M - M.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def entropy(p) -> float:
    """Shannon entropy of a probability vector in nats, with 0*ln(0) := 0."""
    v = np.asarray(p, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError("entropy expects a 1-D probability vector")
    if not np.all(np.isfinite(v)) or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
        raise InvalidInputError("entropy input is not a probability vector")
    nz = v[v > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def l2_normalize_rows(M) -> np.ndarray:
    """Scale each row to unit Euclidean norm; zero rows pass through unchanged."""
    M = as_matrix(M)
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    return M / np.where(norms > 0.0, norms, 1.0)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    Coordinate k gets (f(x + h*e_k) - f(x - h*e_k)) / (2h). Used as the
    independent oracle for every analytic gradient in the package.
    """
    if h <= 0:
        raise InvalidInputError("finite_diff_grad requires h > 0")
    x = np.asarray(x, dtype=np.float64).ravel().copy()
    g = np.empty_like(x)
    for k in range(x.size):
        xp = x.copy()
        xp[k] += h
        xm = x.copy()
        xm[k] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"non-finite probe value at coordinate {k}")
        g[k] = (fp - fm) / (2.0 * h)
    return g


def max_relative_error(approx, exact, floor: float = 1e-8) -> float:
    """Max over coordinates of |approx - exact| / max(floor, |exact|)."""
    a = np.asarray(approx, dtype=np.float64).ravel()
    b = np.asarray(exact, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError("operands must have equal lengths")
    denom = np.maximum(np.abs(b), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def singular_values(M) -> np.ndarray:
    """Singular values of a dense matrix, descending, each >= 0."""
    M = as_matrix(M)
    if max(M.shape) > SVD_MAX_DIM:
        raise ShapeError(f"matrix exceeds the {SVD_MAX_DIM}x{SVD_MAX_DIM} desk-scale limit")
    return np.linalg.svd(M, compute_uv=False)
