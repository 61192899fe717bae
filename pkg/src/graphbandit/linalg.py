"""Cholesky with jitter escalation, shared by every posterior-style solve."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import CholeskyFailure

JITTER_START = 1e-10
JITTER_MAX = 1e-4


def chol_with_jitter(a: np.ndarray):
    """Lower Cholesky factor of ``a``, adding diagonal jitter if needed.

    Tries the bare matrix first, then jitter starting at 1e-10 * mean(diag)
    escalating tenfold up to 1e-4 * mean(diag).  Returns (factor, jitter).
    Raises CholeskyFailure once the ladder is exhausted; that signals a
    matrix that is indefinite beyond rounding, not merely rank-deficient.
    """
    a = np.asarray(a, dtype=np.float64)
    scale = float(np.mean(np.diag(a))) if a.size else 1.0
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    jitter = 0.0
    while True:
        try:
            mat = a if jitter == 0.0 else a + jitter * np.eye(a.shape[0])
            return cholesky(mat, lower=True), jitter
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_START * scale if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX * scale:
            raise CholeskyFailure(
                f"not positive definite after jitter escalation to {JITTER_MAX * scale:g}"
            )


def chol_solve_lower(factor: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cho_solve((factor, True), b)


def tri_solve_lower(factor: np.ndarray, b: np.ndarray) -> np.ndarray:
    return solve_triangular(factor, b, lower=True)
