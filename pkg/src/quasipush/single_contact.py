"""Single position-controlled point contact.

The contact mode follows from where the pusher velocity falls relative to
the motion cone: inside it the contact sticks and the twist solves a
3x3 linear system (quadratic H) or a sequence of them (higher degree);
outside it the pusher slides and the applied wrench sits on the matching
friction-cone edge.

All inputs are in normalized units: contact positions divided by the
limit surface's characteristic length, twists as ``(vx, vy, rho * omega)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NoConvergence, SingularD
from .geometry import ContactPoint, contact_jacobian, cross2, rot90, torque_null_vector
from .limit_surface import QuadraticLS

# |signed area| between unit vectors below which v_p counts as on a cone edge
EDGE_TOL = 1e-9
SEPARATION_TOL = 1e-12


class ContactMode(str, enum.Enum):
    STICKING = "stick"
    SLIDE_LEFT = "slide_left"
    SLIDE_RIGHT = "slide_right"
    SEPARATING = "separate"


@dataclass(frozen=True, eq=False)
class MotionCone:
    F_l: np.ndarray
    F_r: np.ndarray
    V_l: np.ndarray
    V_r: np.ndarray
    v_l: np.ndarray
    v_r: np.ndarray


@dataclass(frozen=True, eq=False)
class SingleContactOutcome:
    mode: ContactMode
    V: np.ndarray
    F: np.ndarray


def friction_edges(n_p, mu_c):
    """Unit left and right edges of the friction cone around normal n_p."""
    n = np.asarray(n_p, dtype=float)
    t = rot90(n)
    c = 1.0 / math.sqrt(1.0 + mu_c * mu_c)
    s = mu_c * c
    return c * n + s * t, c * n - s * t


def motion_cone(H, p, n_p, mu_c) -> MotionCone:
    J = contact_jacobian(p)
    f_l, f_r = friction_edges(n_p, mu_c)
    F_l, F_r = J.T @ f_l, J.T @ f_r
    V_l, V_r = H.twist_of_wrench(F_l), H.twist_of_wrench(F_r)
    return MotionCone(F_l, F_r, V_l, V_r, J @ V_l, J @ V_r)


def solve_sticking_quadratic(A, p, v_p):
    """Sticking twist and wrench for ``H = F^T A F``.

    Stacks the two kinematic rows of J_p with ``(A^-1 t)^T V = 0`` (the
    torque balance about p) and solves ``D V = [v_p; 0]``.  Returns
    ``(V, F)`` with ``F = A^-1 V``.
    """
    A = np.asarray(A, dtype=float)
    px, py = float(p[0]), float(p[1])
    t = np.array([-py, px, -1.0])
    a = np.linalg.solve(A, t)
    # rows [1, 0, -py], [0, 1, px], a: expand the determinant along the last row
    det = a[0] * py - a[1] * px + a[2]
    if not abs(det) > 1e-14 * math.sqrt(a @ a) * max(1.0, math.sqrt(t @ t)):
        raise SingularD(f"D is singular (det={det:.3g}); A is not positive definite")
    vx, vy = float(v_p[0]), float(v_p[1])
    w = -(a[0] * vx + a[1] * vy) / det
    V = np.array([vx + py * w, vy - px * w, w])
    return V, np.linalg.solve(A, V)


def _sticking_objective(H, J, F, v_p):
    return float(np.linalg.norm(J @ H.twist(F) - v_p))


def solve_sticking_quartic(H, p, v_p, F0=None, max_iter: int = 200, tol: float = 1e-10):
    """Sticking twist and wrench for a higher-degree H.

    Solves a sequence of quadratic sub-problems with the local ellipsoid
    ``A_t = Hess H(F_t) / (d (d - 1))``.  Each sub-problem targets the
    contact velocity ``(v_p + (d - 2) J_p twist(F_t)) / (d - 1)``, which
    makes the sequence a Newton iteration on ``J_p twist(F) = v_p,
    t^T F = 0``; aiming straight at ``v_p`` instead can cycle.  Steps are
    halved while the velocity residual grows.  ``F0`` is an optional warm
    start.
    """
    J = contact_jacobian(p)
    t = torque_null_vector(p)
    v_p = np.asarray(v_p, dtype=float)
    d = H.degree
    if F0 is None or not np.linalg.norm(F0) > 0:
        F0 = J.T @ (v_p / np.linalg.norm(v_p))
    F = np.asarray(F0, dtype=float)
    F = F - (t @ F) / (t @ t) * t
    if not np.linalg.norm(F) > 0:
        F = J.T @ np.array([1.0, 0.0])
        F = F - (t @ F) / (t @ t) * t
    F = _rescale(H, F, np.linalg.norm(v_p))
    obj = _sticking_objective(H, J, F, v_p)
    for _ in range(max_iter):
        target = (v_p + (d - 2) * (J @ H.twist(F))) / (d - 1)
        _, F_full = solve_sticking_quadratic(H.local_matrix(F), p, target)
        F_new = F_full
        obj_new = _sticking_objective(H, J, F_new, v_p)
        eta = 1.0
        while obj_new > obj and eta > 1e-6:
            eta *= 0.5
            F_new = (1 - eta) * F + eta * F_full
            obj_new = _sticking_objective(H, J, F_new, v_p)
        change = np.linalg.norm(F_new - F) / np.linalg.norm(F_new)
        F, obj = F_new, obj_new
        if change < tol or obj == 0.0:
            break
    else:
        if obj > 1e-8 * max(1.0, np.linalg.norm(v_p)):
            raise NoConvergence(f"sticking iteration stalled at residual {obj:.3g}")
    return H.twist(F), F


def _rescale(H, F, target):
    tw = np.linalg.norm(H.twist(F))
    if tw == 0 or target == 0:
        return F
    return F * (target / tw) ** (1.0 / (H.degree - 1))


def _solve_sticking(H, p, v_p, F0=None):
    if isinstance(H, QuadraticLS):
        return solve_sticking_quadratic(H.A, p, v_p)
    if H.degree is None:
        return H.solve_sticking(p, v_p)
    return solve_sticking_quartic(H, p, v_p, F0=F0)


def _edge_wrench(H, F_edge, V):
    if H.degree is None:
        return H.wrench_of_twist(V)
    return _rescale(H, F_edge, np.linalg.norm(V))


def _signed_angle(n, v) -> float:
    return math.atan2(cross2(n, v), float(n @ v))


def resolve_single_contact(H, contact: ContactPoint, F0=None) -> SingleContactOutcome:
    """Contact mode, twist and applied wrench for one pusher contact.

    Twists follow the convention ``V = twist(F)`` of the limit surface
    (``A F`` for a quadratic), so wrench magnitudes are comparable across
    modes.
    """
    n = contact.normal
    v_p = contact.v_p
    vn = float(n @ v_p)
    if vn <= SEPARATION_TOL * max(1.0, np.linalg.norm(v_p)):
        return SingleContactOutcome(ContactMode.SEPARATING, np.zeros(3), np.zeros(3))

    cone = motion_cone(H, contact.p, n, contact.mu_c)
    phi_p = _signed_angle(n, v_p)
    phi_l = _signed_angle(n, cone.v_l)
    phi_r = _signed_angle(n, cone.v_r)
    if phi_l < phi_r:
        # zero-width or inverted cone: only exact alignment sticks
        phi_l = phi_r = 0.5 * (phi_l + phi_r)

    if phi_p > phi_l and math.sin(phi_p - phi_l) > EDGE_TOL:
        mode, V_edge, v_edge, F_edge = ContactMode.SLIDE_LEFT, cone.V_l, cone.v_l, cone.F_l
    elif phi_p < phi_r and math.sin(phi_r - phi_p) > EDGE_TOL:
        mode, V_edge, v_edge, F_edge = ContactMode.SLIDE_RIGHT, cone.V_r, cone.v_r, cone.F_r
    else:
        mode = ContactMode.STICKING

    if mode is not ContactMode.STICKING:
        denom = float(n @ v_edge)
        if denom > 1e-12 * np.linalg.norm(v_edge):
            V = (vn / denom) * V_edge
            return SingleContactOutcome(mode, V, _edge_wrench(H, F_edge, V))
        mode = ContactMode.STICKING

    V, F = _solve_sticking(H, contact.p, v_p, F0)
    return SingleContactOutcome(mode, V, F)
