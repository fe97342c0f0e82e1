"""Cyclic Jacobi eigensolver for dense symmetric matrices."""
from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceFailure


def off_norm(a):
    off = a - np.diag(np.diag(a))
    return math.sqrt(float(np.sum(off * off)))


def jacobi_eigh(a, tol=1e-10, max_sweeps=100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, v)`` with eigenvalues sorted in descending order and the
    matching unit eigenvectors as the columns of ``v``. Sweeps stop once the
    off-diagonal Frobenius norm drops below ``tol * ||a||_F``.
    """
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = float(np.linalg.norm(a))
    if n < 2 or scale == 0.0:
        return _sorted(np.diag(a).copy(), v)
    target = tol * scale
    tiny = np.finfo(float).tiny * scale
    for _ in range(max_sweeps):
        if off_norm(a) <= target:
            return _sorted(np.diag(a).copy(), v)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tiny:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) * 1e100 < abs(diff):
                    t = apq / diff
                else:
                    theta = 0.5 * diff / apq
                    t = 1.0 / (abs(theta) + math.hypot(theta, 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    if off_norm(a) <= target:
        return _sorted(np.diag(a).copy(), v)
    raise ConvergenceFailure(f"Jacobi did not converge in {max_sweeps} sweeps")


def _sorted(w, v):
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]
