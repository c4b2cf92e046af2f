"""Pure numpy implementations of the hot kernels.

Each function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and semantics; ``_backend`` picks one at import time.
"""

from __future__ import annotations

import numpy as np


def spd_solve_batch(A: np.ndarray, B: np.ndarray, rtol: float) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``A[i] @ X[i] = B[i]`` for a stack of symmetric positive definite systems.

    Parameters
    ----------
    A : (m, d, d) float64 array
        Only the lower triangle is read.
    B : (m, d, k) float64 array
    rtol : float
        A system is flagged singular when its smallest Cholesky pivot is
        non-positive or below ``rtol`` times its largest pivot.

    Returns
    -------
    X : (m, d, k) array
        Solutions; rows flagged singular are filled with NaN.
    ok : (m,) bool array
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    m, d, _ = A.shape
    L = np.zeros_like(A)
    pivots = np.empty((m, d))
    ok = np.ones(m, dtype=bool)
    # column-by-column Cholesky, vectorised over the batch
    for j in range(d):
        s = A[:, j, j] - np.einsum("ik,ik->i", L[:, j, :j], L[:, j, :j])
        pivots[:, j] = s
        ok &= s > 0.0
        root = np.sqrt(np.where(s > 0.0, s, 1.0))
        L[:, j, j] = root
        if j + 1 < d:
            col = A[:, j + 1 :, j] - np.einsum("irk,ik->ir", L[:, j + 1 :, :j], L[:, j, :j])
            L[:, j + 1 :, j] = col / root[:, None]
    ok &= pivots.min(axis=1) >= rtol * pivots.max(axis=1)

    # forward then backward substitution
    Y = np.empty_like(B)
    for j in range(d):
        Y[:, j, :] = (B[:, j, :] - np.einsum("ik,ikc->ic", L[:, j, :j], Y[:, :j, :])) / L[:, j, j, None]
    X = np.empty_like(B)
    for j in range(d - 1, -1, -1):
        X[:, j, :] = (
            Y[:, j, :] - np.einsum("ik,ikc->ic", L[:, j + 1 :, j], X[:, j + 1 :, :])
        ) / L[:, j, j, None]
    X[~ok] = np.nan
    return X, ok


def signed_rank_counts(weights: np.ndarray) -> np.ndarray:
    """Count sign assignments by the sum of the positively signed weights.

    ``weights`` are non-negative integers (doubled ranks, so mid-ranks stay
    integral). Entry ``s`` of the result is the number of subsets of
    ``weights`` summing to ``s``.
    """
    w = np.asarray(weights, dtype=np.int64)
    total = int(w.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for wi in w:
        wi = int(wi)
        if wi == 0:
            counts *= 2
            continue
        counts[wi:] = counts[wi:] + counts[:-wi].copy()
    return counts


def pairwise_sq_dists(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``X`` and ``Y``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    diff = X[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)
