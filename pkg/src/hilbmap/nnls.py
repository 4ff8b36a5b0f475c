"""Nonnegative least squares by active-set pivoting.

Deterministic variant of the classic Lawson-Hanson algorithm: the entering
variable is the first index attaining the maximal dual value, so repeated
runs (and degenerate ties) resolve identically.
"""

from __future__ import annotations

import numpy as np


def nnls(A: np.ndarray, b: np.ndarray, dual_tol: float | None = None,
         max_iter: int | None = None):
    """Minimize ||A x - b|| subject to x >= 0.

    Returns (x, residual_norm).  dual_tol bounds the accepted violation of
    dual feasibility (default 1e-12 relative to the data scale).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError("shape mismatch between A and b")
    if max_iter is None:
        max_iter = 3 * n
    scale = max(1.0, float(np.max(np.abs(A.T @ b), initial=0.0)))
    if dual_tol is None:
        dual_tol = 1e-12
    tol = dual_tol * scale

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    resid = b.copy()
    w = A.T @ resid

    for _ in range(max_iter):
        candidates = ~passive & (w > tol)
        if not np.any(candidates):
            break
        w_masked = np.where(candidates, w, -np.inf)
        j = int(np.argmax(w_masked))  # first maximal index wins ties
        passive[j] = True

        # Inner loop: restricted least squares, stepping back to the
        # feasible set whenever a passive variable would turn negative.
        while True:
            idx = np.nonzero(passive)[0]
            z, *_ = np.linalg.lstsq(A[:, idx], b, rcond=None)
            if np.all(z > 0):
                x = np.zeros(n)
                x[idx] = z
                break
            neg = z <= 0
            ratios = x[idx][neg] / (x[idx][neg] - z[neg])
            alpha = float(np.min(ratios))
            x[idx] = x[idx] + alpha * (z - x[idx])
            drop = idx[np.abs(x[idx]) <= 1e-14 * max(1.0, np.max(np.abs(x)))]
            x[drop] = 0.0
            passive[drop] = False
            if not np.any(passive):
                x = np.zeros(n)
                break
        resid = b - A @ x
        w = A.T @ resid

    return x, float(np.linalg.norm(resid))
