"""Verified nonnegative least squares.

scipy's rewritten nnls can terminate prematurely on some small systems,
returning a non-optimal point and a wrong residual scalar.  This wrapper
never trusts the reported residual: it recomputes it from the returned
vector and checks first-order optimality of the cone-constrained least
squares problem; on failure it re-solves with the dense active-set QP
kernel (u = 0 is always a feasible start, so no feasibility oracle is
involved).
"""

import numpy as np
from scipy.optimize import nnls as _scipy_nnls

from .qp import active_set_qp

_OPT_TOL = 1e-8


def _is_optimal(M, r, u, scale):
    g = M.T @ (M @ u - r)
    if g.size and float(g.min()) < -_OPT_TOL * scale:
        return False
    comp = abs(float(u @ g))
    return comp <= _OPT_TOL * scale * (1.0 + float(np.linalg.norm(u)))


def nonneg_lstsq(M, r):
    """argmin_{u >= 0} ||M u - r||; returns (u, true residual norm)."""
    M = np.asarray(M, dtype=float)
    r = np.asarray(r, dtype=float).ravel()
    if M.size == 0 or M.shape[1] == 0:
        return np.zeros(M.shape[1] if M.ndim == 2 else 0), float(np.linalg.norm(r))
    scale = max(1.0, float(np.abs(M).max()), float(np.abs(r).max()))
    u = None
    try:
        u, _ = _scipy_nnls(M, r, maxiter=50 * max(M.shape))
    except RuntimeError:
        u = None
    if u is None or not _is_optimal(M, r, u, scale):
        k = M.shape[1]
        Q = M.T @ M
        c = -M.T @ r
        res = active_set_qp(Q, c, -np.eye(k), np.zeros(k), None, None,
                            x0=np.zeros(k))
        u = np.maximum(res.x, 0.0)
    return u, float(np.linalg.norm(M @ u - r))
