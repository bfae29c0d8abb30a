"""Small dense helpers: numerical rank, null spaces, intersections of spans."""
from __future__ import annotations

import numpy as np

RANK_RTOL = 1e-10


def numerical_rank(a: np.ndarray, rtol: float = RANK_RTOL, atol: float = 0.0) -> int:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > max(rtol * s[0], atol)))


def null_space(a: np.ndarray, rtol: float = RANK_RTOL, atol: float = 0.0) -> np.ndarray:
    """Orthonormal basis (as columns) of the kernel of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[1]
    if a.shape[0] == 0:
        return np.eye(n)
    u, s, vt = np.linalg.svd(a, full_matrices=True)
    r = 0 if s.size == 0 or s[0] == 0.0 else int(np.sum(s > max(rtol * s[0], atol)))
    return vt[r:].T.copy()


def column_span(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (as columns) of the column space of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[0], 0))
    r = int(np.sum(s > rtol * s[0]))
    return u[:, :r].copy()


def span_intersection(a: np.ndarray, b: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Basis of span(a) ∩ span(b) from the kernel of the concatenation [a, -b]."""
    a = column_span(a, rtol)
    b = column_span(b, rtol)
    if a.shape[1] == 0 or b.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    k = null_space(np.hstack([a, -b]), rtol)
    if k.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    return column_span(a @ k[: a.shape[1]], rtol)


def smallest_singular_value(a: np.ndarray) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False)[-1])
