"""Convex homogeneous polynomial limit surfaces.

A limit surface is represented as the unit level set of a convex,
homogeneous polynomial H over *normalized* wrenches
``(fx / f_max, fy / f_max, tau / tau_max)``.  The resulting body twist is
parallel to the gradient of H; with twists normalized as
``(vx, vy, omega * tau_max / f_max)`` the map is a plain gradient.

Two degrees are supported: quadratic ``H = F^T A F`` and quartic
``H = sum_k a_k Fx^i Fy^j tau^(4-i-j)``.  Quartics are built from a 9x9
Gram matrix Q of their Hessian (sos-convex by construction), from a
lifted quadratic, or from explicit coefficients.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares, minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigError, DegenerateData, NoConvergence, NotPSD, ZeroTwist, ZeroWrench

QUARTIC_EXPONENTS = tuple((i1, i2, 4 - i1 - i2) for i1 in range(5) for i2 in range(5 - i1))


@dataclass(frozen=True)
class Normalization:
    """Wrench scales; ``rho = tau_max / f_max`` is the characteristic length."""

    f_max: float = 1.0
    tau_max: float = 1.0

    def __post_init__(self):
        if not (self.f_max > 0 and self.tau_max > 0):
            raise ConfigError("normalization scales must be positive")

    @property
    def rho(self) -> float:
        return self.tau_max / self.f_max

    def wrench_to_unit(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        return F / np.array([self.f_max, self.f_max, self.tau_max])

    def wrench_from_unit(self, F) -> np.ndarray:
        return np.asarray(F, dtype=float) * np.array([self.f_max, self.f_max, self.tau_max])

    def twist_to_unit(self, V) -> np.ndarray:
        return np.asarray(V, dtype=float) * np.array([1.0, 1.0, self.rho])

    def twist_from_unit(self, V) -> np.ndarray:
        return np.asarray(V, dtype=float) / np.array([1.0, 1.0, self.rho])

    def to_json(self) -> dict:
        return {"f_max": self.f_max, "tau_max": self.tau_max}


def _unit(v, err=ZeroWrench) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not n > 0:
        raise err("zero vector has no direction")
    return v / n


class LimitSurface:
    """Common interface; subclasses supply eval/gradient/hessian."""

    degree: int
    normalization: Normalization

    def eval(self, F):
        raise NotImplementedError

    def gradient(self, F):
        raise NotImplementedError

    def hessian(self, F):
        raise NotImplementedError

    def twist_of_wrench(self, F) -> np.ndarray:
        """Unit twist direction produced by wrench F (normalized units)."""
        g = self.gradient(np.asarray(F, dtype=float))
        if not np.linalg.norm(F) > 0:
            raise ZeroWrench("twist_of_wrench needs a non-zero wrench")
        return _unit(g)

    def twist(self, F) -> np.ndarray:
        """Twist with the scale convention V = grad H(F) / degree.

        For a quadratic this is simply ``A F``.
        """
        return self.gradient(F) / self.degree

    def local_matrix(self, F) -> np.ndarray:
        """Ellipsoidal approximation at F: ``A_F F = twist(F)`` exactly."""
        return self.hessian(F) / (self.degree * (self.degree - 1))

    def balancing_wrench(self, V) -> np.ndarray:
        """The wrench F with ``twist(F) == V``."""
        V = np.asarray(V, dtype=float)
        nv = np.linalg.norm(V)
        if nv == 0:
            return np.zeros(3)
        F1 = self.wrench_of_twist(V)
        scale = (nv / np.linalg.norm(self.twist(F1))) ** (1.0 / (self.degree - 1))
        return scale * F1

    def wrench_of_twist(self, V) -> np.ndarray:
        """Wrench on the unit level set whose gradient is parallel to V.

        Gauss-Newton on the residual ``[g/|g| - V/|V|, H - 1]`` with step
        halving, started from V/|V| projected onto the level set.
        """
        v_hat = _unit(V, ZeroTwist)
        F = v_hat / self.eval(v_hat) ** (1.0 / self.degree)
        r = self._dual_residual(F, v_hat)
        for _ in range(100):
            g = self.gradient(F)
            ng = np.linalg.norm(g)
            g_hat = g / ng
            J = np.vstack([(np.eye(3) - np.outer(g_hat, g_hat)) @ self.hessian(F) / ng, g])
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
            rn = np.linalg.norm(r)
            eta = 1.0
            for _ in range(40):
                F_new = F + eta * step
                r_new = self._dual_residual(F_new, v_hat)
                if np.linalg.norm(r_new) < rn or eta < 1e-10:
                    break
                eta *= 0.5
            F, r = F_new, r_new
            if eta * np.linalg.norm(step) < 1e-12 or np.linalg.norm(r) < 1e-15:
                break
        if np.linalg.norm(r) > 1e-8:
            raise NoConvergence(f"wrench_of_twist residual {np.linalg.norm(r):.3g}")
        return F

    def _dual_residual(self, F, v_hat):
        g = self.gradient(F)
        return np.append(g / np.linalg.norm(g) - v_hat, self.eval(F) - 1.0)

    def min_hessian_eigenvalue(self, n_grid: int = 600, refine: int = 3) -> float:
        """Smallest Hessian eigenvalue over unit wrenches.

        The Hessian of an even-degree form is even in F, so a Fibonacci
        grid on one hemisphere is scanned and the worst points refined
        locally.
        """
        dirs = fibonacci_hemisphere(n_grid)
        ev = np.linalg.eigvalsh(self.hessian(dirs))[:, 0]
        if self.degree == 2:
            return float(ev.min())
        best = float(ev.min())

        def f(ang):
            th, ph = ang
            d = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
            return float(np.linalg.eigvalsh(self.hessian(d))[0])

        for i in np.argsort(ev)[:refine]:
            d = dirs[i]
            x0 = [math.acos(np.clip(d[2], -1, 1)), math.atan2(d[1], d[0])]
            res = minimize(f, x0, method="Nelder-Mead", options={"xatol": 1e-7, "fatol": 1e-13})
            best = min(best, float(res.fun))
        return best


def fibonacci_hemisphere(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = k / n
    r = np.sqrt(1 - z * z)
    phi = math.pi * (3 - math.sqrt(5)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


@dataclass(frozen=True, eq=False)
class QuadraticLS(LimitSurface):
    """``H(F) = F^T A F`` with A symmetric positive definite."""

    A: np.ndarray
    normalization: Normalization = field(default_factory=Normalization)
    degree: int = field(default=2, init=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).reshape(3, 3)
        if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12 * np.abs(A).max()):
            raise ConfigError("A must be symmetric")
        A = 0.5 * (A + A.T)
        if np.linalg.eigvalsh(A)[0] <= 0:
            raise NotPSD("A must be positive definite")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "_A_inv", np.linalg.inv(A))

    def eval(self, F):
        F = np.asarray(F, dtype=float)
        return np.einsum("...i,ij,...j->...", F, self.A, F)

    def gradient(self, F):
        return 2.0 * np.asarray(F, dtype=float) @ self.A

    def hessian(self, F):
        F = np.asarray(F, dtype=float)
        return np.broadcast_to(2.0 * self.A, F.shape[:-1] + (3, 3)).copy()

    def local_matrix(self, F=None) -> np.ndarray:
        return self.A

    def twist(self, F):
        return np.asarray(F, dtype=float) @ self.A

    def wrench_of_twist(self, V) -> np.ndarray:
        v = _unit(V, ZeroTwist)
        x = self._A_inv @ v
        return x / math.sqrt(v @ x)

    def balancing_wrench(self, V) -> np.ndarray:
        return self._A_inv @ np.asarray(V, dtype=float)


def _multinomial(e) -> int:
    return math.factorial(sum(e)) // math.prod(math.factorial(k) for k in e)


@lru_cache(maxsize=None)
def _tensor_index():
    """For each of the 81 index tuples, the monomial it belongs to and its weight."""
    idx = {e: k for k, e in enumerate(QUARTIC_EXPONENTS)}
    mono = np.zeros(81, dtype=int)
    weight = np.zeros(81)
    for flat, t in enumerate(itertools.product(range(3), repeat=4)):
        e = tuple(t.count(i) for i in range(3))
        mono[flat] = idx[e]
        weight[flat] = 1.0 / _multinomial(e)
    return mono, weight


def coefficients_to_tensor(a) -> np.ndarray:
    """Symmetric 3x3x3x3 tensor T with H(F) = T(F, F, F, F)."""
    mono, weight = _tensor_index()
    return (np.asarray(a, dtype=float)[mono] * weight).reshape(3, 3, 3, 3)


def tensor_to_coefficients(T) -> np.ndarray:
    mono, _ = _tensor_index()
    return np.bincount(mono, weights=np.asarray(T, dtype=float).ravel(), minlength=15)


@dataclass(frozen=True, eq=False)
class QuarticLS(LimitSurface):
    """Homogeneous quartic limit surface.

    ``a`` holds the 15 coefficients in the order of ``QUARTIC_EXPONENTS``;
    ``Q`` is the Gram matrix it was built from, when known.
    """

    a: np.ndarray
    normalization: Normalization = field(default_factory=Normalization)
    Q: np.ndarray | None = None
    degree: int = field(default=4, init=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(15)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        T = coefficients_to_tensor(a)
        object.__setattr__(self, "_T9", T.reshape(9, 9))
        if self.Q is not None:
            Q = np.asarray(self.Q, dtype=float).reshape(9, 9)
            Q.setflags(write=False)
            object.__setattr__(self, "Q", Q)

    def hessian(self, F):
        F = np.asarray(F, dtype=float)
        ff = (F[..., :, None] * F[..., None, :]).reshape(F.shape[:-1] + (9,))
        return 12.0 * (ff @ self._T9).reshape(F.shape[:-1] + (3, 3))

    def gradient(self, F):
        F = np.asarray(F, dtype=float)
        return np.einsum("...ij,...j->...i", self.hessian(F), F) / 3.0

    def eval(self, F):
        F = np.asarray(F, dtype=float)
        return np.einsum("...i,...i->...", self.gradient(F), F) / 4.0

    @property
    def tensor(self) -> np.ndarray:
        return self._T9.reshape(3, 3, 3, 3)

    def min_hessian_eigenvalue(self, n_grid: int = 300, refine: int = 4, sweeps: int = 30) -> float:
        """Smallest Hessian eigenvalue over unit wrenches.

        ``u^T Hess(F) u`` is a biquadratic form in (F, u), so starting from
        the worst grid points we alternate exact minimization over u (an
        eigenvector of Hess(F)) and over F (an eigenvector of the same
        tensor contracted with u u); each sweep can only lower the value.
        """
        dirs = fibonacci_hemisphere(n_grid)
        lam, U = np.linalg.eigh(self.hessian(dirs))
        best = float(lam[:, 0].min())
        T = 12.0 * self.tensor
        for i in np.argsort(lam[:, 0])[:refine]:
            u, val = U[i, :, 0], lam[i, 0]
            for _ in range(sweeps):
                F = np.linalg.eigh(np.einsum("ijkl,k,l->ij", T, u, u))[1][:, 0]
                l_u, W = np.linalg.eigh(self.hessian(F))
                u = W[:, 0]
                done = val - l_u[0] < 1e-14 * max(1.0, abs(val))
                val = min(val, float(l_u[0]))
                if done:
                    break
            best = min(best, val)
        return best


# ---------------------------------------------------------------------------
# Gram matrix <-> coefficients


def gram_vector(F, z) -> np.ndarray:
    """Basis y(F, z) = [z1 F, z2 F, z3 F] (z-major Kronecker product)."""
    return np.kron(np.asarray(z, dtype=float), np.asarray(F, dtype=float))


@lru_cache(maxsize=None)
def _gram_system():
    zpairs = [(a, c) for a in range(3) for c in range(a, 3)]
    fpairs = [(b, d) for b in range(3) for d in range(b, 3)]
    keys = [(zp, fp) for zp in zpairs for fp in fpairs]
    row = {k: i for i, k in enumerate(keys)}
    K = len(keys)
    C = np.zeros((K, 9, 9))
    for i in range(9):
        for j in range(9):
            a, b = divmod(i, 3)
            c, d = divmod(j, 3)
            C[row[(tuple(sorted((a, c))), tuple(sorted((b, d))))], i, j] = 1.0
    B = np.zeros((K, 15))
    for k, e in enumerate(QUARTIC_EXPONENTS):
        for a in range(3):
            for c in range(3):
                ee = list(e)
                coef = ee[a]
                ee[a] -= 1
                if coef == 0:
                    continue
                coef *= ee[c]
                ee[c] -= 1
                if coef == 0:
                    continue
                fp = tuple(sorted(i for i in range(3) for _ in range(ee[i])))
                B[row[(tuple(sorted((a, c))), fp)], k] += coef
    C.setflags(write=False)
    B.setflags(write=False)
    return C, B


def gram_constraints(degree: int = 4):
    """Linear system ``Tr(C_k Q) = b_k^T a`` linking a quartic to its Hessian Gram matrix.

    Row k matches the coefficient of one monomial ``z_a z_c F_b F_d`` of
    ``z^T Hess H(F; a) z`` with the same coefficient of ``y^T Q y``.
    Returns ``(C, b, K)`` with C of shape (K, 9, 9) and b of shape (K, 15).
    """
    if degree != 4:
        raise ValueError("only degree 4 is supported")
    C, B = _gram_system()
    return C, B, len(B)


def _check_psd(Q, what="Q"):
    Q = np.asarray(Q, dtype=float)
    if not np.allclose(Q, Q.T, atol=1e-10 * max(1.0, np.abs(Q).max())):
        raise NotPSD(f"{what} must be symmetric")
    Q = 0.5 * (Q + Q.T)
    lam = np.linalg.eigvalsh(Q)
    if lam[0] < -1e-10 * max(1.0, abs(lam[-1])):
        raise NotPSD(f"{what} has negative eigenvalue {lam[0]:.3g}")
    return Q


def quartic_from_gram(Q, normalization: Normalization | None = None) -> QuarticLS:
    """Quartic whose Hessian Gram matrix is Q.

    Uses ``H(F) = y(F, F)^T Q y(F, F) / 12``: exact whenever Q satisfies the
    constraint system of :func:`gram_constraints` (Euler's identity for a
    degree-4 form), and otherwise the rotation-invariant least-squares
    projection of ``y^T Q y`` onto Hessian forms.
    """
    Q = _check_psd(np.asarray(Q, dtype=float).reshape(9, 9))
    T = Q.reshape(3, 3, 3, 3)
    perms = itertools.permutations(range(4))
    Tsym = sum(T.transpose(p) for p in perms) / 24.0
    a = tensor_to_coefficients(Tsym) / 12.0
    return QuarticLS(a, normalization or Normalization(), Q)


def lifted_gram(A) -> np.ndarray:
    """Gram matrix of the Hessian of ``(F^T A F)^2``."""
    A = np.asarray(A, dtype=float)
    vecA = A.reshape(9)
    return 4.0 * np.kron(A, A) + 8.0 * np.outer(vecA, vecA)


def lift_quadratic(ls: QuadraticLS) -> QuarticLS:
    """Quartic ``(F^T A F)^2``: same level sets as the quadratic, degree 4."""
    return quartic_from_gram(lifted_gram(ls.A), ls.normalization)


# ---------------------------------------------------------------------------
# fitting


def _sym_from_params(x) -> np.ndarray:
    a, b, c, d, e, f = x
    return np.array([[a, b, c], [b, d, e], [c, e, f]])


_SYM_BASIS = [_sym_from_params(np.eye(6)[k]) for k in range(6)]


def fit_quadratic(wrenches, twists, refine: bool = True, normalization: Normalization | None = None) -> QuadraticLS:
    """Fit a positive-definite A from wrench/twist pairs (normalized units).

    A linear initial estimate comes from ``V_i x (A F_i) = 0``; it is then
    refined on the direction residual ``A F_i / |A F_i| - V_i / |V_i|`` and
    projected onto PD matrices by clamping eigenvalues at
    ``1e-6 trace(A) / 3``.  The scale is fixed so the data sits on the unit
    level set on average.
    """
    F = np.asarray(wrenches, dtype=float).reshape(-1, 3)
    V = np.asarray(twists, dtype=float).reshape(-1, 3)
    if len(F) != len(V):
        raise ValueError("wrenches and twists must pair up")
    if len(F) < 6:
        raise DegenerateData(f"need at least 6 pairs, got {len(F)}")
    vn = np.linalg.norm(V, axis=1)
    if np.any(vn == 0):
        raise DegenerateData("zero twist in data")
    V_hat = V / vn[:, None]

    rows = np.stack([np.cross(V_hat, F @ E) for E in _SYM_BASIS], axis=-1).reshape(-1, 6)
    _, s, vt = np.linalg.svd(rows, full_matrices=False)
    if s[-2] <= 1e-10 * s[0]:
        raise DegenerateData("wrench data do not determine A")
    x = vt[-1]
    if np.trace(_sym_from_params(x)) < 0:
        x = -x

    if refine:
        def resid(x):
            AF = F @ _sym_from_params(x)
            return (AF / np.linalg.norm(AF, axis=1)[:, None] - V_hat).ravel()

        x = least_squares(resid, x, method="lm", xtol=1e-14, ftol=1e-14).x

    A = _sym_from_params(x)
    A = 0.5 * (A + A.T)
    lam, U = np.linalg.eigh(A)
    if lam[-1] <= 0:
        raise DegenerateData("fitted matrix has no positive eigenvalue")
    eps = 1e-6 * max(np.trace(A), lam[-1]) / 3.0
    A = (U * np.maximum(lam, eps)) @ U.T
    A /= np.mean(np.einsum("ni,ij,nj->n", F, A, F))
    return QuadraticLS(A, normalization or Normalization())


class LimitSurfaceRegressor(RegressorMixin, BaseEstimator):
    """Quadratic limit surface as a scikit-learn regressor.

    ``fit(X, y)`` takes wrenches X (n, 3) and twists y (n, 3) in normalized
    units; ``predict`` returns unit twist directions.  ``score`` is the
    mean cosine similarity between predicted and true twist directions.
    """

    def __init__(self, refine=True, f_max=1.0, tau_max=1.0):
        self.refine = refine
        self.f_max = f_max
        self.tau_max = tau_max

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        if X.shape[1] != 3 or y.ndim != 2 or y.shape[1] != 3:
            raise ValueError("wrenches and twists must both have 3 columns")
        self.limit_surface_ = fit_quadratic(X, y, self.refine, Normalization(self.f_max, self.tau_max))
        self.A_ = self.limit_surface_.A
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "limit_surface_")
        X = check_array(X)
        g = X @ self.A_
        return g / np.linalg.norm(g, axis=1)[:, None]

    def score(self, X, y, sample_weight=None):
        y = check_array(y)
        pred = self.predict(X)
        cos = np.einsum("ij,ij->i", pred, y / np.linalg.norm(y, axis=1)[:, None])
        return float(np.average(cos, weights=sample_weight))

    def angular_errors(self, X, y) -> np.ndarray:
        """Per-sample angle in radians between predicted and true twists."""
        cos = np.clip(np.einsum("ij,ij->i", self.predict(X), y / np.linalg.norm(y, axis=1)[:, None]), -1, 1)
        return np.arccos(cos)


# ---------------------------------------------------------------------------
# files


def save_limit_surface(ls: LimitSurface, path) -> None:
    doc = {"degree": ls.degree, "normalization": ls.normalization.to_json()}
    if isinstance(ls, QuadraticLS):
        doc["A"] = [float(v) for v in ls.A.ravel()]
    elif isinstance(ls, QuarticLS):
        doc["monomials"] = [list(e) for e in QUARTIC_EXPONENTS]
        doc["a"] = [float(v) for v in ls.a]
        if ls.Q is not None:
            doc["Q"] = [float(v) for v in ls.Q.ravel()]
    else:
        raise TypeError(f"cannot serialize {type(ls).__name__}")
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def limit_surface_from_dict(doc: dict) -> LimitSurface:
    try:
        norm = Normalization(**doc.get("normalization", {}))
        degree = int(doc["degree"])
        if degree == 2:
            return QuadraticLS(np.asarray(doc["A"], dtype=float).reshape(3, 3), norm)
        if degree == 4:
            if "monomials" in doc and [tuple(m) for m in doc["monomials"]] != list(QUARTIC_EXPONENTS):
                raise ConfigError("unsupported monomial order in limit-surface file")
            Q = doc.get("Q")
            Q = None if Q is None else np.asarray(Q, dtype=float).reshape(9, 9)
            if "a" not in doc and Q is not None:
                return quartic_from_gram(Q, norm)
            return QuarticLS(np.asarray(doc["a"], dtype=float), norm, Q)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed limit-surface document: {exc}") from exc
    raise ConfigError(f"unsupported degree {doc.get('degree')}")


def load_limit_surface(path) -> LimitSurface:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return limit_surface_from_dict(doc)


PAIR_COLUMNS = ("Fx", "Fy", "tau", "Vx", "Vy", "omega")


def write_pairs(path, wrenches, twists) -> None:
    data = np.hstack([np.asarray(wrenches, float).reshape(-1, 3), np.asarray(twists, float).reshape(-1, 3)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIR_COLUMNS)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def read_pairs(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(PAIR_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        try:
            rows = [[float(r[c]) for c in PAIR_COLUMNS] for r in reader]
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    data = np.asarray(rows, dtype=float).reshape(-1, 6)
    return data[:, :3], data[:, 3:]
