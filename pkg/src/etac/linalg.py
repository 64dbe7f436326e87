"""SVD-based pseudo-inverse shared by the fitting and adaptation code."""

import numpy as np

DEFAULT_RCOND = 1e-10


def pseudo_inverse(M, tol: float = DEFAULT_RCOND) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below ``tol * s_max`` are dropped."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise ValueError("pseudo_inverse requires a finite matrix")
    p, c = M.shape
    if M.size == 0:
        return np.zeros((c, p))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((c, p))
    keep = s > tol * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def numerical_rank(M, tol: float = DEFAULT_RCOND) -> int:
    s = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))
