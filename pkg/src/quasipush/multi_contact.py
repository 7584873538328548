"""Several position-controlled contacts resolved as one complementarity problem.

With ``V = A F`` and ``F = N^T f_n + L^T f_t`` the contact conditions
(no penetration, stick/slip, Coulomb bound) become the standard LCP
``w = M z + q`` in ``z = [f_n; f_t; lambda]``.  An LCP with no solution
means no twist can balance the fingers: the object is jammed (or grasped).

Inputs are normalized like in :mod:`single_contact`: contact positions
divided by rho, twists as ``(vx, vy, rho * omega)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .exceptions import CycleDetected, NoConvergence
from .geometry import ContactPoint
from .lemke import lemke_solve, polish
from .limit_surface import QuadraticLS
from .single_contact import ContactMode

ACTIVE_TOL = 1e-10
RETRY_SHIFT = 1e-10
MERGE_TOL = 1e-9
OUTER_TOL = 1e-8
OUTER_MAX = 50
LINE_SEARCH_MIN = 1.0 / 64
NCP_TOL = 1e-11
ROUNDOFF = 8 * np.finfo(float).eps


class Status:
    RESOLVED = "Resolved"
    JAMMED = "Jammed"


@dataclass(frozen=True, eq=False)
class LcpProblem:
    """Blocks of the contact LCP and the assembled ``(M, q)``."""

    M: np.ndarray
    q: np.ndarray
    N: np.ndarray
    L: np.ndarray
    E: np.ndarray
    mu: np.ndarray
    A: np.ndarray
    offset: np.ndarray

    @property
    def m(self) -> int:
        return len(self.mu)

    def split(self, z):
        m = self.m
        return z[:m], z[m:3 * m], z[3 * m:]

    def wrench(self, z) -> np.ndarray:
        f_n, f_t, _ = self.split(z)
        return self.N.T @ f_n + self.L.T @ f_t

    def twist(self, z) -> np.ndarray:
        return self.A @ self.wrench(z) + self.offset

    def to_json(self, z=None, w=None) -> dict:
        doc = {"M": self.M.tolist(), "q": self.q.tolist()}
        if z is not None:
            doc["z"] = np.asarray(z).tolist()
            doc["w"] = np.asarray(w).tolist()
        return doc


@dataclass(frozen=True, eq=False)
class MultiContactOutcome:
    status: str
    V: np.ndarray
    F: np.ndarray
    f_n: np.ndarray
    f_t: np.ndarray
    lam: np.ndarray
    modes: list = field(default_factory=list)
    z: np.ndarray | None = None
    w: np.ndarray | None = None
    problem: LcpProblem | None = None

    @property
    def jammed(self) -> bool:
        return self.status == Status.JAMMED


def merge_contacts(contacts):
    """Collapse coincident contacts (same point and normal).

    Returns the merged list and, for every input contact, the index of the
    merged contact standing in for it.
    """
    merged, index = [], []
    for c in contacts:
        for k, u in enumerate(merged):
            if (np.linalg.norm(c.p - u.p) < MERGE_TOL and np.linalg.norm(c.normal - u.normal) < MERGE_TOL
                    and np.linalg.norm(c.v_p - u.v_p) <= MERGE_TOL * max(1.0, np.linalg.norm(u.v_p))):
                index.append(k)
                break
        else:
            index.append(len(merged))
            merged.append(c)
    return merged, index


def assemble_lcp(A, contacts, offset=None) -> LcpProblem:
    """Build the contact LCP for ``V = A F + offset``.

    ``offset`` is zero for a quadratic limit surface; the Newton step of
    the higher-degree iteration uses it for the affine part of the
    linearized twist map.
    """
    A = np.asarray(A, dtype=float)
    m = len(contacts)
    if m < 1:
        raise ValueError("need at least one contact")
    c = np.zeros(3) if offset is None else np.asarray(offset, dtype=float)
    N = np.empty((m, 3))
    L = np.empty((2 * m, 3))
    E = np.zeros((2 * m, m))
    mu = np.empty(m)
    s_a = np.empty(m)
    s_b = np.empty(2 * m)
    for i, ct in enumerate(contacts):
        J = ct.jacobian
        D = ct.D
        N[i] = ct.normal @ J
        L[2 * i:2 * i + 2] = D.T @ J
        E[2 * i:2 * i + 2, i] = 1.0
        mu[i] = ct.mu_c
        s_a[i] = -ct.normal @ ct.v_p
        s_b[2 * i:2 * i + 2] = -D.T @ ct.v_p

    NA, LA = N @ A, L @ A
    M = np.zeros((4 * m, 4 * m))
    M[:m, :m] = NA @ N.T
    M[:m, m:3 * m] = NA @ L.T
    M[m:3 * m, :m] = LA @ N.T
    M[m:3 * m, m:3 * m] = LA @ L.T
    M[m:3 * m, 3 * m:] = E
    M[3 * m:, :m] = np.diag(mu)
    M[3 * m:, m:3 * m] = -E.T
    q = np.concatenate([s_a + N @ c, s_b + L @ c, np.zeros(m)])
    return LcpProblem(M, q, N, L, E, mu, A, c)


def _solve_with_retry(P: LcpProblem):
    try:
        sol = lemke_solve(P.M, P.q)
    except CycleDetected:
        sol = None
    if sol is None:
        try:
            sol = lemke_solve(P.M, P.q + RETRY_SHIFT)
        except CycleDetected:
            sol = None
        if sol is not None:
            # back to the unshifted problem on the same basis
            z = polish(P.M, P.q, sol[0])
            sol = z, P.M @ z + P.q
    return sol


def _modes(f_n, f_t, lam):
    modes = []
    for i in range(len(f_n)):
        if f_n[i] < ACTIVE_TOL:
            modes.append(ContactMode.SEPARATING)
        elif lam[i] < ACTIVE_TOL:
            modes.append(ContactMode.STICKING)
        elif f_t[2 * i] >= f_t[2 * i + 1]:
            modes.append(ContactMode.SLIDE_LEFT)
        else:
            modes.append(ContactMode.SLIDE_RIGHT)
    return modes


def _jammed(m_in, P=None):
    return MultiContactOutcome(Status.JAMMED, np.zeros(3), np.zeros(3), np.zeros(m_in), np.zeros(2 * m_in),
                               np.zeros(m_in), [None] * m_in, problem=P)


def _clean(P, z, w):
    """Zero the entries of w that are zero to working precision.

    Large contact forces make ``M z + q`` lose absolute accuracy; entries
    below the row's round-off bound carry no sign information.
    """
    bound = ROUNDOFF * (np.abs(P.M) @ np.abs(z) + np.abs(P.q))
    return np.where(np.abs(w) <= bound, 0.0, w)


def _outcome(P, z, w, index):
    w = _clean(P, z, w)
    f_n, f_t, lam = P.split(z)
    modes = _modes(f_n, f_t, lam)
    idx = np.asarray(index)
    # forces of a merged contact are reported on its first occurrence
    first = np.zeros(len(index), dtype=bool)
    seen = set()
    for j, k in enumerate(index):
        if k not in seen:
            first[j] = True
            seen.add(k)
    fn_out = np.where(first, f_n[idx], 0.0)
    ft_out = np.column_stack([np.where(first, f_t[2 * idx], 0.0), np.where(first, f_t[2 * idx + 1], 0.0)]).ravel()
    lam_out = lam[idx]
    return MultiContactOutcome(Status.RESOLVED, P.twist(z), P.wrench(z), fn_out, ft_out, lam_out,
                               [modes[k] for k in index], z, w, P)


def _dump(path, P, sol):
    if path is None:
        return
    z, w = (None, None) if sol is None else sol
    Path(path).write_text(json.dumps(P.to_json(z, w), indent=1))


def resolve_multi_contact(H, contacts, F0=None, debug_path=None) -> MultiContactOutcome:
    """Resolve m >= 1 contacts against limit surface H.

    Returns a Resolved outcome with twist, applied wrench, contact forces
    and per-contact modes, or a Jammed outcome when the LCP has no
    solution.  Quadratic H needs one solve.  Higher degrees alternate
    between the local ellipsoid at the current wrench and an LCP solve
    (Newton-style, with the affine correction of the twist map) until the
    wrench settles.  ``F0`` warm-starts that iteration.
    """
    contacts = list(contacts)
    if not contacts:
        raise ValueError("need at least one contact")
    merged, index = merge_contacts(contacts)

    if isinstance(H, QuadraticLS):
        P = assemble_lcp(H.A, merged)
        sol = _solve_with_retry(P)
        _dump(debug_path, P, sol)
        if sol is None:
            return _jammed(len(contacts), P)
        return _outcome(P, *sol, index)
    if H.degree is None:
        raise TypeError("multi-contact resolution needs a polynomial limit surface")
    return _resolve_polynomial(H, merged, index, len(contacts), F0, debug_path)


def _initial_wrench(H, contacts, F0):
    if F0 is not None and np.linalg.norm(F0) > 0:
        return np.asarray(F0, dtype=float)
    F = sum(ct.jacobian.T @ ct.normal for ct in contacts)
    if not np.linalg.norm(F) > 1e-9:
        F = contacts[0].jacobian.T @ contacts[0].normal
    speed = max(np.linalg.norm(ct.v_p) for ct in contacts)
    tw = np.linalg.norm(H.twist(F))
    if speed > 0 and tw > 0:
        F = F * (speed / tw) ** (1.0 / (H.degree - 1))
    return F


def _ncp_residual(H, base: LcpProblem, z) -> np.ndarray:
    """Fischer-Burmeister residual of the nonlinear complementarity problem at z.

    ``base`` carries the contact blocks; the residual uses the exact twist
    map of H instead of a linearization.
    """
    m = base.m
    f_n, f_t, lam = base.split(z)
    v = H.twist(base.N.T @ f_n + base.L.T @ f_t)
    g = np.concatenate([base.N @ v + base.q[:m], base.L @ v + base.E @ lam + base.q[m:3 * m],
                        base.mu * f_n - base.E.T @ f_t])
    return np.sqrt(z * z + g * g) - z - g


def _merit(H, base: LcpProblem, z) -> float:
    r = _ncp_residual(H, base, z)
    return 0.5 * float(r @ r)


def _polish_ncp(H, base: LcpProblem, z):
    """Least-squares solve of the residual from z; None unless it reaches zero."""
    fit = least_squares(lambda x: _ncp_residual(H, base, x), z, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    z = np.clip(fit.x, 0.0, None)
    if np.abs(_ncp_residual(H, base, z)).max() > NCP_TOL * (1 + np.linalg.norm(base.q)):
        return None
    return z


def _resolve_polynomial(H, merged, index, m_in, F0, debug_path):
    d = H.degree
    F = _initial_wrench(H, merged, F0)
    base = assemble_lcp(np.eye(3), merged)
    z = None
    newton = F0 is not None
    for _ in range(OUTER_MAX):
        A_t = H.local_matrix(F)
        if newton:
            # twist(F') ~ (d-1) A_t F' - (d-2) twist(F) near F
            P = assemble_lcp((d - 1) * A_t, merged, -(d - 2) * H.twist(F))
            sol = _solve_with_retry(P)
            if sol is None:
                newton = False
        if not newton:
            P = assemble_lcp(A_t, merged)
            sol = _solve_with_retry(P)
        if sol is None:
            _dump(debug_path, P, None)
            return _jammed(m_in, P)
        z_new, eta = sol[0], 1.0
        if z is not None:
            # backtrack on the merit so active-set switches cannot cycle
            psi0, step = _merit(H, base, z), z_new - z
            while eta > LINE_SEARCH_MIN and _merit(H, base, z + eta * step) > (1 - 1e-4 * eta) * psi0:
                eta *= 0.5
            z_new = z + eta * step
        F_new = base.wrench(z_new)
        if not np.linalg.norm(F_new) > 0:
            _dump(debug_path, P, sol)
            return _outcome(P, *sol, index)
        change = np.linalg.norm(F_new - F) / np.linalg.norm(F)
        F, z = F_new, z_new
        newton = True
        if change < OUTER_TOL and eta == 1.0:
            _dump(debug_path, P, sol)
            out = _outcome(P, *sol, index)
            return MultiContactOutcome(out.status, H.twist(F), F, out.f_n, out.f_t, out.lam, out.modes,
                                       out.z, out.w, P)
    # the iteration can stall between active sets; finish on the exact residual
    z = _polish_ncp(H, base, z)
    if z is None:
        raise NoConvergence(f"outer Hessian/LCP iteration did not settle in {OUTER_MAX} steps")
    F = base.wrench(z)
    # at F the Newton linearization is exact, so (z, Mz + q) solves its LCP
    P = assemble_lcp((d - 1) * H.local_matrix(F), merged, -(d - 2) * H.twist(F))
    sol = (z, P.M @ z + P.q)
    _dump(debug_path, P, sol)
    out = _outcome(P, *sol, index)
    return MultiContactOutcome(out.status, H.twist(F), F, out.f_n, out.f_t, out.lam, out.modes, z, sol[1], P)
