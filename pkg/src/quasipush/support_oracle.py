"""Ground-truth friction model over a discrete support distribution.

Each support point contributes Coulomb friction of magnitude ``w_i``
along its sliding velocity, so the wrench for a twist is a plain sum.
This is the brute-force reference every fitted limit surface is checked
against, and it also produces wrench/twist training pairs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize

from .exceptions import ConfigError, ZeroTwist, ZeroWrench
from .geometry import Shape, points_in_polygon
from .limit_surface import Normalization

# speeds below this count as a support point sitting on the rotation center
ZERO_SPEED = 1e-12


@dataclass(frozen=True, eq=False)
class SupportModel:
    """Support points (mm, body frame) with pressure-times-friction weights.

    Weights are normalized to sum to one, so ``f_max = 1``.  The pressure
    centroid must sit at the origin (the object's center of mass).
    ``rho`` defaults to ``sum w_i |r_i|``, the largest torque per unit of
    friction force.
    """

    points: np.ndarray
    weights: np.ndarray
    rho: float | None = None

    def __post_init__(self):
        r = np.asarray(self.points, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(r) == 0 or len(r) != len(w):
            raise ConfigError("support needs matching, non-empty points and weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise ConfigError("support weights must be non-negative with positive sum")
        w = w / w.sum()
        cop = w @ r
        scale = max(np.abs(r).max(), 1e-12)
        if np.linalg.norm(cop) > 1e-6 * scale:
            raise ConfigError(f"pressure centroid {cop} is not at the origin")
        r.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", r)
        object.__setattr__(self, "weights", w)
        rho = self.rho if self.rho is not None else float(w @ np.linalg.norm(r, axis=1))
        if not rho > 0:
            raise ConfigError("support rho must be positive")
        object.__setattr__(self, "rho", float(rho))

    @property
    def center_of_pressure(self) -> np.ndarray:
        return self.weights @ self.points

    @property
    def normalization(self) -> Normalization:
        return Normalization(1.0, self.rho)

    def with_rho(self, rho: float) -> "SupportModel":
        return SupportModel(self.points, self.weights, rho)

    # constructors

    @classmethod
    def uniform_grid(cls, width: float, height: float, nx: int, ny: int | None = None, rho=None) -> "SupportModel":
        """Cell-centred uniform grid over a width x height rectangle."""
        ny = nx if ny is None else ny
        xs = (np.arange(nx) + 0.5) / nx * width - width / 2
        ys = (np.arange(ny) + 0.5) / ny * height - height / 2
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        return cls(pts, np.ones(len(pts)), rho)

    @classmethod
    def shape_grid(cls, shape: Shape, n: int = 20, rho=None) -> "SupportModel":
        """Uniform pressure over the interior of a polygon, recentred at its grid centroid."""
        lo, hi = shape.vertices.min(axis=0), shape.vertices.max(axis=0)
        xs = lo[0] + (np.arange(n) + 0.5) / n * (hi[0] - lo[0])
        ys = lo[1] + (np.arange(n) + 0.5) / n * (hi[1] - lo[1])
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        pts = pts[points_in_polygon(pts, shape.vertices)]
        return cls(pts - pts.mean(axis=0), np.ones(len(pts)), shape.rho if rho is None else rho)

    @classmethod
    def boundary(cls, shape: Shape, n: int = 100, rho=None) -> "SupportModel":
        """Uniform friction along the polygon boundary (n points by arc length)."""
        v = shape.vertices
        seg = np.roll(v, -1, axis=0) - v
        L = np.linalg.norm(seg, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(L)])
        s = (np.arange(n) + 0.5) / n * cum[-1]
        i = np.searchsorted(cum, s, side="right") - 1
        pts = v[i] + ((s - cum[i]) / L[i])[:, None] * seg[i]
        return cls(pts - pts.mean(axis=0), np.ones(n), shape.rho if rho is None else rho)

    # serialization

    def to_json(self) -> dict:
        return {"points": self.points.tolist(), "weights": self.weights.tolist(), "rho": self.rho}

    @classmethod
    def from_dict(cls, doc: dict) -> "SupportModel":
        try:
            return cls(np.asarray(doc["points"], dtype=float), np.asarray(doc["weights"], dtype=float), doc.get("rho"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed support document: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SupportModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def wrench_of_twist_oracle(m: SupportModel, V) -> np.ndarray:
    """Applied wrench [Fx, Fy, tau] balancing sliding friction for twist V.

    V is a body twist in physical units (mm/s, rad/s), or an (n, 3) stack
    of them.  Support points with zero velocity contribute nothing.
    """
    V = np.asarray(V, dtype=float)
    single = V.ndim == 1
    V = np.atleast_2d(V)
    if np.any(np.linalg.norm(V, axis=1) == 0):
        raise ZeroTwist("oracle needs a non-zero twist")
    x, y = m.points[:, 0], m.points[:, 1]
    ux = V[:, 0:1] - V[:, 2:3] * y
    uy = V[:, 1:2] + V[:, 2:3] * x
    speed = np.hypot(ux, uy)
    scale = np.linalg.norm(V, axis=1, keepdims=True) * max(1.0, m.rho)
    moving = speed > ZERO_SPEED * scale
    inv = np.where(moving, 1.0 / np.where(moving, speed, 1.0), 0.0)
    wx, wy = ux * inv * m.weights, uy * inv * m.weights
    F = np.column_stack([wx.sum(axis=1), wy.sum(axis=1), (x * wy - y * wx).sum(axis=1)])
    return F[0] if single else F


def generate_pairs(m: SupportModel, n: int, rng: np.random.Generator, rho: float | None = None):
    """Random normalized wrench/twist pairs from the oracle.

    Twists are uniform on the unit sphere in ``(vx, vy, rho * omega)``;
    wrenches are returned as ``(Fx, Fy, tau / rho)``.  Returns two (n, 3)
    arrays.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rho = m.rho if rho is None else rho
    if n == 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    norm = Normalization(1.0, rho)
    V_unit = rng.normal(size=(n, 3))
    V_unit /= np.linalg.norm(V_unit, axis=1)[:, None]
    F = wrench_of_twist_oracle(m, norm.twist_from_unit(V_unit))
    return norm.wrench_to_unit(F), V_unit


class OracleLimitSurface:
    """Adapter exposing the oracle through the limit-surface interface.

    Works in normalized units like the polynomial models.  The inverse map
    (wrench to twist) minimizes the smoothed dissipation
    ``sum w_i |u_i(V)|`` over the plane ``F . V = 1``.
    """

    degree = None

    def __init__(self, support: SupportModel, normalization: Normalization | None = None):
        self.support = support
        self.normalization = normalization or support.normalization

    def wrench_of_twist(self, V) -> np.ndarray:
        V = np.asarray(V, dtype=float)
        if not np.linalg.norm(V) > 0:
            raise ZeroTwist("oracle needs a non-zero twist")
        n = self.normalization
        return n.wrench_to_unit(wrench_of_twist_oracle(self.support, n.twist_from_unit(V)))

    def balancing_wrench(self, V) -> np.ndarray:
        if not np.linalg.norm(V) > 0:
            return np.zeros(3)
        return self.wrench_of_twist(V)

    def _dissipation(self, V, eps):
        """Smoothed dissipation and its gradient, both in unit coordinates."""
        r = self.support.points / self.normalization.rho
        w = self.support.weights
        ux = V[0] - V[2] * r[:, 1]
        uy = V[1] + V[2] * r[:, 0]
        s = np.sqrt(ux * ux + uy * uy + eps * eps)
        gx, gy = w * ux / s, w * uy / s
        grad = np.array([gx.sum(), gy.sum(), np.sum(r[:, 0] * gy - r[:, 1] * gx)])
        return float(np.sum(w * s)), grad

    def twist_of_wrench(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        nf = np.linalg.norm(F)
        if not nf > 0:
            raise ZeroWrench("twist_of_wrench needs a non-zero wrench")
        f_hat = F / nf
        basis = np.linalg.svd(f_hat[None, :])[2][1:]
        v0 = f_hat

        def obj(c, eps):
            V = v0 + c @ basis
            val, g = self._dissipation(V, eps)
            return val, basis @ g

        c = np.zeros(2)
        for eps in (1e-3, 1e-6, 1e-9):
            c = minimize(obj, c, args=(eps,), jac=True, method="BFGS", options={"gtol": 1e-12}).x
        V = v0 + c @ basis
        return V / np.linalg.norm(V)

    def solve_sticking(self, p, v_p):
        """Twist with J_p V = v_p whose oracle wrench has no torque about p.

        The torque residual is monotone along the null direction of J_p,
        so a bracketed 1-D root solve suffices.
        """
        from .geometry import contact_jacobian, torque_null_vector

        J = contact_jacobian(p)
        t = torque_null_vector(p)
        V0 = J.T @ np.linalg.solve(J @ J.T, np.asarray(v_p, dtype=float))
        t_hat = t / np.linalg.norm(t)

        def g(s):
            return float(t_hat @ self.wrench_of_twist(V0 + s * t_hat))

        span = max(1.0, np.linalg.norm(v_p))
        lo, hi = -span, span
        while g(lo) > 0:
            lo *= 2
        while g(hi) < 0:
            hi *= 2
        s = brentq(g, lo, hi, xtol=1e-13 * span, rtol=1e-13)
        V = V0 + s * t_hat
        return V, self.wrench_of_twist(V)
