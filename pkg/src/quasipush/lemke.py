"""Lemke's complementary pivoting for ``w = M z + q, 0 <= z _|_ w >= 0``."""
from __future__ import annotations

import numpy as np

from .exceptions import CycleDetected

PIVOT_TOL = 1e-12


def _lex_min_row(T, col, rhs, n, z0_row_hint):
    """Leaving row by the lexicographic minimum-ratio rule.

    Ratios are compared on ``[rhs, B^-1]`` row vectors divided by the
    pivot column; the basis inverse occupies the first n tableau columns.
    Returns None when no entry of the column is positive (ray).
    """
    colv = T[:, col]
    scale = max(1.0, np.abs(colv).max())
    cand = np.flatnonzero(colv > PIVOT_TOL * scale)
    if cand.size == 0:
        return None
    ratios = T[cand, rhs] / colv[cand]
    best = ratios.min()
    tie = cand[ratios <= best + 1e-12 * max(1.0, abs(best))]
    if z0_row_hint is not None and z0_row_hint in tie:
        return int(z0_row_hint)
    for j in range(n):
        if tie.size == 1:
            break
        r = T[tie, j] / colv[tie]
        m = r.min()
        tie = tie[r <= m + 1e-12 * max(1.0, abs(m))]
    return int(tie[0])


def lemke_solve(M, q, max_pivots: int | None = None):
    """Solve the LCP (M, q) by Lemke's method with covering vector 1.

    Returns ``(z, w)`` or None on secondary-ray termination (no solution
    reachable).  Raises CycleDetected when the pivot cap (default 500 n)
    is exhausted.
    """
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float).reshape(-1)
    n = len(q)
    if M.shape != (n, n):
        raise ValueError("M must be square and match q")
    if np.all(q >= 0):
        return np.zeros(n), q.copy()
    max_pivots = 500 * n if max_pivots is None else max_pivots

    # columns: w (0..n-1), z (n..2n-1), z0 (2n), rhs (2n+1)
    T = np.hstack([np.eye(n), -M, -np.ones((n, 1)), q[:, None]])
    basis = list(range(n))
    z0, rhs = 2 * n, 2 * n + 1

    r = int(np.argmin(q))
    _pivot(T, r, z0)
    leaving = basis[r]
    basis[r] = z0
    entering = leaving + n

    for _ in range(max_pivots):
        z0_row = basis.index(z0) if z0 in basis else None
        r = _lex_min_row(T, entering, rhs, n, z0_row)
        if r is None:
            return None
        _pivot(T, r, entering)
        leaving = basis[r]
        basis[r] = entering
        if leaving == z0:
            z = np.zeros(n)
            for i, b in enumerate(basis):
                if n <= b < 2 * n:
                    z[b - n] = T[i, rhs]
            z = polish(M, q, z)
            return z, M @ z + q
        entering = leaving + n if leaving < n else leaving - n
    raise CycleDetected(f"Lemke exceeded {max_pivots} pivots")


def _violation(M, q, z) -> float:
    w = M @ z + q
    return max(-z.min(), -w.min(), abs(z @ w), 0.0)


def polish(M, q, z):
    """Re-solve the complementary basis of z directly to clean up round-off.

    The basis is the support of z; its linear system gets one step of
    iterative refinement.  The re-solved point is kept only if it violates
    the LCP conditions less than the input.
    """
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    active = np.flatnonzero(z > 0)
    if not active.size:
        return z
    Ma, qa = M[np.ix_(active, active)], q[active]
    try:
        za = np.linalg.solve(Ma, -qa)
        za -= np.linalg.solve(Ma, Ma @ za + qa)
    except np.linalg.LinAlgError:
        return z
    cand = np.zeros_like(z)
    cand[active] = np.maximum(za, 0.0)
    return cand if _violation(M, q, cand) <= _violation(M, q, z) else z


def _pivot(T, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
