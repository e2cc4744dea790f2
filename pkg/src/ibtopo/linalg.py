"""Dense SVD-based pseudoinverse and rank.

Support regions are local, so matrices stay at a few hundred rows at most.
Everything runs in float64.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidMatrix, NumericalFailure


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidMatrix(f"expected a non-empty 2D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidMatrix("matrix contains non-finite entries")
    return a


def default_rcond(shape: tuple[int, int]) -> float:
    return max(shape) * np.finfo(np.float64).eps


def _svd(a: np.ndarray, compute_uv: bool = True):
    try:
        return np.linalg.svd(a, full_matrices=False, compute_uv=compute_uv)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc


def pseudoinverse(a, rcond: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudoinverse of ``a`` (shape cols x rows).

    Singular values at or below ``rcond * sigma_max`` are treated as zero;
    ``rcond=0`` selects ``max(rows, cols) * eps``.
    """
    if rcond < 0:
        raise InvalidMatrix("rcond must be non-negative")
    a = _as_matrix(a)
    u, s, vt = _svd(a)
    cutoff = (rcond or default_rcond(a.shape)) * (s[0] if s.size else 0.0)
    keep = s > cutoff
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T


def numerical_rank(a, rcond: float = 0.0) -> int:
    """Number of singular values above ``rcond * sigma_max``."""
    if rcond < 0:
        raise InvalidMatrix("rcond must be non-negative")
    a = _as_matrix(a)
    s = _svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > (rcond or default_rcond(a.shape)) * s[0]))


def condition_number(a) -> float:
    """Ratio of largest to smallest non-zero singular value (inf if singular)."""
    a = _as_matrix(a)
    s = _svd(a, compute_uv=False)
    nz = s[s > default_rcond(a.shape) * s[0]] if s[0] > 0 else s[:0]
    return float(nz[0] / nz[-1]) if nz.size else float("inf")


def pinv_with_rank(a, rcond: float = 0.0) -> tuple[np.ndarray, int, float]:
    """Pseudoinverse, numerical rank and condition number from one SVD."""
    a = _as_matrix(a)
    u, s, vt = _svd(a)
    cutoff = (rcond or default_rcond(a.shape)) * (s[0] if s.size else 0.0)
    keep = s > cutoff
    rank = int(np.count_nonzero(keep))
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    cond = float(s[0] / s[keep][-1]) if rank else float("inf")
    return (vt.T * inv_s) @ u.T, rank, cond
