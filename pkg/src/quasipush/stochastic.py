"""Random limit surfaces and friction coefficients.

Quadratic surfaces are perturbed by drawing ``A ~ W(A_est, n_df) / n_df``;
quartics draw their Hessian Gram matrix the same way and map it back to
coefficients, so every sample stays convex.  ``n_df`` sets the spread:
larger means closer to the estimate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NotPSD
from .limit_surface import QuadraticLS, QuarticLS, quartic_from_gram

REDRAW_MODES = ("per_trajectory", "per_step")
# relative diagonal offset added to sampled matrices
STABILITY_OFFSET = 1e-6


@dataclass(frozen=True)
class StochasticConfig:
    n_df: float
    mu_c_range: tuple = (0.0, 0.0)
    seed: int = 0
    redraw: str = "per_trajectory"

    def __post_init__(self):
        lo, hi = (float(x) for x in self.mu_c_range)
        object.__setattr__(self, "mu_c_range", (lo, hi))
        if not (0 <= lo <= hi):
            raise ConfigError(f"mu_c_range must satisfy 0 <= lo <= hi, got {self.mu_c_range}")
        if not self.n_df > 0:
            raise ConfigError("n_df must be positive")
        if self.redraw not in REDRAW_MODES:
            raise ConfigError(f"redraw must be one of {REDRAW_MODES}")
        if int(self.seed) < 0:
            raise ConfigError("seed must be non-negative")

    @classmethod
    def from_dict(cls, doc: dict) -> "StochasticConfig":
        try:
            return cls(float(doc["n_df"]), tuple(doc.get("mu_c_range", (0.0, 0.0))),
                       int(doc.get("seed", 0)), doc.get("redraw", "per_trajectory"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed stochastic config: {exc}") from exc

    def to_json(self) -> dict:
        return {"n_df": self.n_df, "mu_c_range": list(self.mu_c_range), "seed": self.seed, "redraw": self.redraw}


def substreams(seed: int, n: int) -> list:
    """Independent generators, one per trajectory, fixed by ``seed`` alone."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(n)]


def _psd_factor(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NotPSD("scale matrix must be square")
    if not np.allclose(S, S.T, atol=1e-10 * max(1.0, np.abs(S).max())):
        raise NotPSD("scale matrix must be symmetric")
    S = 0.5 * (S + S.T)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        lam, U = np.linalg.eigh(S)
        if lam[0] < -1e-10 * max(1.0, abs(lam[-1])):
            raise NotPSD(f"scale matrix has negative eigenvalue {lam[0]:.3g}") from None
        return U * np.sqrt(np.clip(lam, 0.0, None))


def wishart_sample(S_hat, n_df, rng: np.random.Generator) -> np.ndarray:
    """One draw from the Wishart distribution W(S_hat, n_df), mean ``n_df * S_hat``.

    Bartlett decomposition: ``L B B^T L^T`` with ``L L^T = S_hat`` and B
    lower-triangular, chi-distributed on the diagonal and standard normal
    below it.
    """
    L = _psd_factor(S_hat)
    p = L.shape[0]
    if n_df < p:
        raise ValueError(f"n_df={n_df} must be at least the dimension {p}")
    B = np.zeros((p, p))
    B[np.diag_indices(p)] = np.sqrt(rng.chisquare(n_df - np.arange(p)))
    rows, cols = np.tril_indices(p, -1)
    B[rows, cols] = rng.standard_normal(len(rows))
    LB = L @ B
    W = LB @ LB.T
    return 0.5 * (W + W.T)


def sample_quadratic(base: QuadraticLS, n_df, rng) -> QuadraticLS:
    A_est = base.A
    A = wishart_sample(A_est, n_df, rng) / n_df
    A += STABILITY_OFFSET * np.trace(A_est) / 3 * np.eye(3)
    return QuadraticLS(A, base.normalization)


def sample_quartic(base: QuarticLS, n_df, rng) -> QuarticLS:
    """Quartic from a Wishart-perturbed Gram matrix.

    A small diagonal offset is always added.  If the mapped quartic still
    has a negative Hessian eigenvalue somewhere (the map back to
    coefficients is a projection), the offset is raised just enough to
    restore convexity.
    """
    if base.Q is None:
        raise ConfigError("quartic base surface has no Gram matrix to sample around")
    Q_est = base.Q
    eps = STABILITY_OFFSET * np.trace(Q_est) / 9
    Q = wishart_sample(Q_est, n_df, rng) / n_df
    ls = quartic_from_gram(Q + eps * np.eye(9), base.normalization)
    # an identity on Q adds |F|^4 / 12 to H, i.e. 1/3 to every unit-F Hessian eigenvalue
    lam = ls.min_hessian_eigenvalue()
    if lam < eps / 3:
        delta = 3.0 * (eps / 3 - lam) + eps
        ls = quartic_from_gram(Q + (eps + delta) * np.eye(9), base.normalization)
    return ls


def sample_limit_surface(base, n_df, rng):
    if isinstance(base, QuadraticLS):
        return sample_quadratic(base, n_df, rng)
    if isinstance(base, QuarticLS):
        return sample_quartic(base, n_df, rng)
    raise ConfigError(f"cannot sample around {type(base).__name__}")


def sample_mu_c(cfg: StochasticConfig, rng) -> float:
    lo, hi = cfg.mu_c_range
    if lo == hi:
        return lo
    return float(rng.uniform(lo, hi))
