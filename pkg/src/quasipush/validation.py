"""Invariant checks for a limit surface (what ``quasipush validate`` runs)."""
from __future__ import annotations

import numpy as np

from .exceptions import NoConvergence


def random_unit_wrenches(n: int, rng) -> np.ndarray:
    F = rng.normal(size=(n, 3))
    return F / np.linalg.norm(F, axis=1)[:, None]


def finite_difference_error(ls, F, h: float = 1e-5) -> tuple:
    """Largest relative central-difference error of the gradient and Hessian at the rows of F."""
    g, Hs = ls.gradient(F), ls.hessian(F)
    g_fd = np.empty_like(g)
    H_fd = np.empty_like(Hs)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        g_fd[:, k] = (ls.eval(F + e) - ls.eval(F - e)) / (2 * h)
        H_fd[:, :, k] = (ls.gradient(F + e) - ls.gradient(F - e)) / (2 * h)
    eg = np.linalg.norm(g - g_fd, axis=1) / np.linalg.norm(g, axis=1)
    eh = np.linalg.norm(Hs - H_fd, axis=(1, 2)) / np.linalg.norm(Hs, axis=(1, 2))
    return float(eg.max()), float(eh.max())


def euler_residuals(ls, F) -> tuple:
    """Relative residuals of ``F . grad H = d H`` and ``Hess H F = (d - 1) grad H``."""
    d = ls.degree
    g, Hs, v = ls.gradient(F), ls.hessian(F), ls.eval(F)
    r1 = np.abs(np.einsum("ni,ni->n", F, g) - d * v) / np.abs(v)
    r2 = np.linalg.norm(np.einsum("nij,nj->ni", Hs, F) - (d - 1) * g, axis=1) / np.linalg.norm(g, axis=1)
    return float(r1.max()), float(r2.max())


def roundtrip_error(ls, F) -> float:
    """Largest error of wrench_of_twist(twist_of_wrench(F)) against F scaled to H = 1."""
    worst = 0.0
    for f in F:
        f1 = f / ls.eval(f) ** (1.0 / ls.degree)
        try:
            back = ls.wrench_of_twist(ls.twist_of_wrench(f1))
        except NoConvergence:
            return float("inf")
        worst = max(worst, float(np.linalg.norm(back - f1)))
    return worst


def validate_limit_surface(ls, n: int = 1000, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    F = random_unit_wrenches(n, rng)
    report = {}
    vals = ls.eval(F)
    report["positive"] = (bool(np.all(vals > 0)), f"min H on unit wrenches {vals.min():.6g}")
    lam = ls.min_hessian_eigenvalue()
    report["convex"] = (lam >= -1e-10, f"min Hessian eigenvalue {lam:.6g}")
    r1, r2 = euler_residuals(ls, F)
    report["euler"] = (max(r1, r2) < 1e-10, f"residuals {r1:.3g}, {r2:.3g}")
    eg, eh = finite_difference_error(ls, F)
    report["derivatives"] = (max(eg, eh) < 1e-6, f"finite-difference errors {eg:.3g} (grad), {eh:.3g} (Hessian)")
    err = roundtrip_error(ls, F)
    report["dual_roundtrip"] = (err < 1e-6, f"max error {err:.3g}")
    return report
