"""Random problem generators and brute-force oracles shared by the tests."""
from __future__ import annotations

import itertools

import numpy as np

from quasipush.geometry import ContactPoint
from quasipush.limit_surface import QuadraticLS, lifted_gram, quartic_from_gram


def random_pd(rng, floor=0.1) -> np.ndarray:
    B = rng.normal(size=(3, 3))
    A = B @ B.T + floor * np.eye(3)
    return A / np.trace(A) * 3


def random_quartic(rng, terms=3, floor=0.05):
    """sos-convex quartic ``sum_k (F^T A_k F)^2 + floor |F|^4``.

    Squares of non-negative convex quadratics are convex, and the Gram
    matrix of the sum is exact (it satisfies the Hessian constraints).
    """
    Q = floor * lifted_gram(np.eye(3))
    for _ in range(terms):
        Q = Q + lifted_gram(random_pd(rng, floor=0.0)) / terms
    return quartic_from_gram(Q)


def random_surface(rng, degree):
    return QuadraticLS(random_pd(rng)) if degree == 2 else random_quartic(rng)


def random_contact(rng, mu_max=1.0, approach=False) -> ContactPoint:
    """A contact on a unit-size body, normal pointing roughly at the centre."""
    phi = rng.uniform(-np.pi, np.pi)
    r = rng.uniform(0.3, 1.5)
    p = r * np.array([np.cos(phi), np.sin(phi)])
    tilt = phi + np.pi + rng.uniform(-1.0, 1.0)
    n = np.array([np.cos(tilt), np.sin(tilt)])
    v = rng.normal(size=2)
    if approach and v @ n <= 0:
        v = v - 2 * (v @ n) * n
    return ContactPoint(p, n, v, mu_c=float(rng.uniform(0.0, mu_max)))


def random_contacts(rng, m, **kw) -> list:
    return [random_contact(rng, **kw) for _ in range(m)]


def enumerate_lcp(M, q, tol=1e-9):
    """Every solution of the LCP (M, q) at a non-singular complementary basis.

    For each index set a, z_a and w_(not a) are the basic variables of
    ``[M_a, -I_(not a)] x = -q``; a basis is a solution when x >= 0.
    Returns a list of ``(z, w)``.
    """
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    n = len(q)
    masks = np.array(list(itertools.product([False, True], repeat=n)))
    B = np.where(masks[:, None, :], M[None, :, :], -np.eye(n)[None, :, :])
    s = np.linalg.svd(B, compute_uv=False)
    ok = s[:, -1] > 1e-10 * s[:, 0]
    x = np.linalg.solve(B[ok], np.broadcast_to(-q, (int(ok.sum()), n))[..., None])[..., 0]
    sols = []
    for mask, xk in zip(masks[ok], x):
        if np.all(xk >= -tol):
            z = np.where(mask, xk, 0.0)
            sols.append((z, M @ z + q))
    return sols
