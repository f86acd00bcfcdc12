"""Rank-revealing least-squares / least-norm solve shared by the solvers."""

from __future__ import annotations

import numpy as np

# Rank cutoff relative to the largest column norm of the system matrix.
RANK_TOL_SCALE = 1e-8


def min_norm_lstsq(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal-norm least-squares solution of ``A x = b``.

    Uses an orthogonal (SVD) factorisation with singular values below
    ``RANK_TOL_SCALE * max column norm`` treated as zero, so over-, under- and
    rank-deficient systems are all handled: the result minimises ``||Ax - b||``
    and, among those minimisers, ``||x||``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if A.size == 0:
        return np.zeros(A.shape[1])
    col_norm = float(np.max(np.linalg.norm(A, axis=0)))
    if col_norm == 0.0:
        return np.zeros(A.shape[1])
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    keep = s > RANK_TOL_SCALE * col_norm
    if not np.any(keep):
        return np.zeros(A.shape[1])
    coeff = (u[:, keep].T @ b) / s[keep]
    return vt[keep].T @ coeff
