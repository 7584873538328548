import math

import numpy as np
import pytest
import sympy as sp
from sklearn.base import clone

from helpers import random_pd, random_quartic
from quasipush.exceptions import DegenerateData, NotPSD, ZeroWrench
from quasipush.limit_surface import (QUARTIC_EXPONENTS, LimitSurfaceRegressor, Normalization, QuadraticLS, QuarticLS,
                                     fit_quadratic, gram_constraints, gram_vector, lift_quadratic, lifted_gram,
                                     load_limit_surface, quartic_from_gram, read_pairs, save_limit_surface,
                                     write_pairs)
from quasipush.support_oracle import OracleLimitSurface, SupportModel, generate_pairs


def _unit_rows(rng, n):
    X = rng.normal(size=(n, 3))
    return X / np.linalg.norm(X, axis=1)[:, None]


def _angles_deg(P, Q):
    P = P / np.linalg.norm(P, axis=1)[:, None]
    Q = Q / np.linalg.norm(Q, axis=1)[:, None]
    return np.degrees(np.arccos(np.clip(np.sum(P * Q, axis=1), -1, 1)))


def test_eval_examples():
    ls = QuadraticLS(np.eye(3))
    assert ls.eval([1, 0, 0]) == 1
    assert ls.eval([1, 1, 1]) == 3
    sphere4 = quartic_from_gram(lifted_gram(np.eye(3)))
    assert sphere4.eval([0, 1, 0]) == pytest.approx(1.0, abs=1e-14)
    F = np.array([0.3, -1.2, 0.7])
    assert sphere4.eval(F) == pytest.approx((F @ F) ** 2, rel=1e-13)


def test_quadratic_gradient_and_hessian():
    ls = QuadraticLS(np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(ls.gradient([1, 1, 1]), [2, 4, 6])
    np.testing.assert_allclose(ls.hessian([0.2, 0.1, 5.0]), 2 * np.diag([1.0, 2.0, 3.0]))


def test_twist_of_wrench_examples():
    np.testing.assert_allclose(QuadraticLS(np.eye(3)).twist_of_wrench([0, 1, 0]), [0, 1, 0])
    V = QuadraticLS(np.diag([1.0, 1.0, 4.0])).twist_of_wrench([1, 0, 1])
    np.testing.assert_allclose(V, np.array([2, 0, 8]) / math.sqrt(68))
    np.testing.assert_allclose(V, [0.243, 0, 0.970], atol=5e-4)
    with pytest.raises(ZeroWrench):
        QuadraticLS(np.eye(3)).twist_of_wrench([0, 0, 0])


def test_twist_matches_square_oracle():
    sup = SupportModel.uniform_grid(90, 90, 8, 8)
    F, V = generate_pairs(sup, 600, np.random.default_rng(0))
    ls = fit_quadratic(F, V)
    oracle = OracleLimitSurface(sup)
    Fs = _unit_rows(np.random.default_rng(3), 150)
    P = np.array([ls.twist_of_wrench(f) for f in Fs])
    O = np.array([oracle.twist_of_wrench(f) for f in Fs])
    assert _angles_deg(P, O).mean() < 5.0


def test_wrench_of_twist_examples():
    np.testing.assert_allclose(QuadraticLS(np.eye(3)).wrench_of_twist([1, 0, 0]), [1, 0, 0])
    rng = np.random.default_rng(1)
    for _ in range(20):
        ls = QuadraticLS(random_pd(rng))
        F = rng.normal(size=3)
        back = ls.wrench_of_twist(ls.twist_of_wrench(F))
        np.testing.assert_allclose(back, F / math.sqrt(ls.eval(F)), atol=1e-8)


def test_wrench_of_twist_quartic_roundtrip():
    rng = np.random.default_rng(2)
    for _ in range(100):
        ls = random_quartic(rng)
        F = rng.normal(size=3)
        back = ls.wrench_of_twist(ls.twist_of_wrench(F))
        np.testing.assert_allclose(back, F / ls.eval(F) ** 0.25, atol=1e-6)
        g = ls.gradient(back)
        V = ls.twist_of_wrench(F)
        assert np.linalg.norm(g / np.linalg.norm(g) - V) < 1e-8


def test_generic_solver_agrees_with_closed_form():
    # the quadratic overrides wrench_of_twist; the iterative base-class path must agree
    from quasipush.limit_surface import LimitSurface
    rng = np.random.default_rng(4)
    ls = QuadraticLS(random_pd(rng))
    V = rng.normal(size=3)
    np.testing.assert_allclose(LimitSurface.wrench_of_twist(ls, V), ls.wrench_of_twist(V), atol=1e-10)


def test_fit_recovers_diagonal():
    A_true = np.diag([1.0, 1.0, 0.5])
    rng = np.random.default_rng(5)
    F = rng.normal(size=(200, 3))
    V = F @ A_true
    A = fit_quadratic(F, V).A
    A = A / A[0, 0]
    np.testing.assert_allclose(A, A_true, atol=0.01)


def test_fit_on_square_grid_predicts_held_out():
    sup = SupportModel.uniform_grid(90, 90, 8, 8)
    F, V = generate_pairs(sup, 600, np.random.default_rng(0))
    ls = fit_quadratic(F, V)
    Ft, Vt = generate_pairs(sup, 500, np.random.default_rng(1))
    assert _angles_deg(Ft @ ls.A, Vt).mean() < 10.0


def test_fit_needs_six_pairs():
    rng = np.random.default_rng(6)
    with pytest.raises(DegenerateData):
        fit_quadratic(rng.normal(size=(5, 3)), rng.normal(size=(5, 3)))
    F = np.tile([1.0, 0.0, 0.0], (10, 1))
    with pytest.raises(DegenerateData):
        fit_quadratic(F, F)


def test_fit_scale_equivariance():
    rng = np.random.default_rng(7)
    A_true = random_pd(rng)
    F = rng.normal(size=(100, 3))
    V = F @ A_true
    A1 = fit_quadratic(F, V).A
    A2 = fit_quadratic(3.0 * F, V).A
    np.testing.assert_allclose(A2, A1 / 9.0, rtol=1e-8)


def test_fit_projects_to_positive_definite():
    rng = np.random.default_rng(8)
    F = rng.normal(size=(50, 3))
    V = F @ np.diag([1.0, 1.0, 1e-9]) + 1e-3 * rng.normal(size=(50, 3))
    A = fit_quadratic(F, V).A
    assert np.linalg.eigvalsh(A)[0] > 0


def test_identity_gram_gives_quartic_norm():
    # z^T Hess H z = |z|^2 |F|^2  integrates to  H = |F|^4 / 12
    ls = quartic_from_gram(np.eye(9))
    f = sp.symbols("f0:3")
    H = sp.Poly(sp.expand((f[0] ** 2 + f[1] ** 2 + f[2] ** 2) ** 2 / 12), *f)
    expected = [float(H.coeff_monomial(f[0] ** i * f[1] ** j * f[2] ** k)) for i, j, k in QUARTIC_EXPONENTS]
    np.testing.assert_allclose(ls.a, expected, atol=1e-15)


def test_gram_constraints_match_symbolic_expansion():
    f = sp.symbols("f0:3")
    z = sp.symbols("z0:3")
    a = sp.symbols("a0:15")
    H = sum(ak * f[0] ** i * f[1] ** j * f[2] ** k for ak, (i, j, k) in zip(a, QUARTIC_EXPONENTS))
    hz = sp.expand(sum(z[r] * z[c] * sp.diff(H, f[r], f[c]) for r in range(3) for c in range(3)))
    poly = sp.Poly(hz, *z, *f)
    C, B, K = gram_constraints(4)
    assert C.shape == (K, 9, 9) and B.shape == (K, 15)
    # every (z, F) monomial of bidegree (2, 2) appears exactly once
    assert K == 36
    seen = set()
    for k in range(K):
        i, j = np.argwhere(C[k])[0]
        (za, fb), (zc, fd) = divmod(i, 3), divmod(j, 3)
        mono = z[za] * z[zc] * f[fb] * f[fd]
        seen.add(mono)
        coeff = poly.coeff_monomial(mono)
        b_sym = [float(sp.Poly(coeff, *a).coeff_monomial(ak)) if coeff != 0 else 0.0 for ak in a]
        np.testing.assert_allclose(B[k], b_sym, atol=0)
        # the y^T Q y side: C_k collects every (i, j) giving this monomial
        idx = {(ii, jj) for ii in range(9) for jj in range(9)
               if sp.expand(z[ii // 3] * f[ii % 3] * z[jj // 3] * f[jj % 3] - mono) == 0}
        assert set(map(tuple, np.argwhere(C[k]))) == idx
    assert len(seen) == K


def test_exact_gram_identity():
    rng = np.random.default_rng(9)
    Q = lifted_gram(random_pd(rng)) + lifted_gram(random_pd(rng)) + 0.1 * lifted_gram(np.eye(3))
    ls = quartic_from_gram(Q)
    C, B, _ = gram_constraints()
    np.testing.assert_allclose(np.einsum("kij,ij->k", C, Q), B @ ls.a, atol=1e-12)
    for _ in range(100):
        F, z = rng.normal(size=3), rng.normal(size=3)
        y = gram_vector(F, z)
        assert z @ ls.hessian(F) @ z == pytest.approx(y @ Q @ y, rel=1e-9, abs=1e-9)


def test_lift_quadratic_same_level_set():
    rng = np.random.default_rng(10)
    q = QuadraticLS(random_pd(rng))
    ls = lift_quadratic(q)
    F = rng.normal(size=(50, 3))
    np.testing.assert_allclose(ls.eval(F), q.eval(F) ** 2, rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_homogeneity_and_euler(seed):
    rng = np.random.default_rng(seed)
    for ls in (QuadraticLS(random_pd(rng)), random_quartic(rng)):
        d = ls.degree
        F = rng.normal(size=3)
        for s in (0.5, 2.0, 10.0):
            assert ls.eval(s * F) == pytest.approx(s ** d * ls.eval(F), rel=1e-10)
        g = ls.gradient(F)
        assert F @ g == pytest.approx(d * ls.eval(F), rel=1e-10)
        np.testing.assert_allclose(ls.hessian(F) @ F, (d - 1) * g, rtol=1e-10, atol=1e-12 * np.abs(g).max())


def test_gradient_and_hessian_finite_differences():
    rng = np.random.default_rng(11)
    ls = random_quartic(rng)
    for _ in range(20):
        F = rng.normal(size=3)
        h = 1e-6 * np.linalg.norm(F)
        E = np.eye(3) * h
        g_fd = np.array([(ls.eval(F + e) - ls.eval(F - e)) / (2 * h) for e in E])
        H_fd = np.array([(ls.gradient(F + e) - ls.gradient(F - e)) / (2 * h) for e in E])
        np.testing.assert_allclose(g_fd, ls.gradient(F), rtol=1e-6, atol=1e-6 * np.abs(ls.gradient(F)).max())
        np.testing.assert_allclose(H_fd, ls.hessian(F), rtol=1e-6, atol=1e-6 * np.abs(ls.hessian(F)).max())


def test_constructed_quartics_are_convex():
    rng = np.random.default_rng(12)
    F = _unit_rows(rng, 1000)
    for _ in range(5):
        ls = random_quartic(rng)
        assert np.linalg.eigvalsh(ls.hessian(F)).min() > 0
        assert ls.min_hessian_eigenvalue() > 0


def test_not_psd_errors():
    Q = np.eye(9)
    Q[0, 0] = -1
    with pytest.raises(NotPSD):
        quartic_from_gram(Q)
    with pytest.raises(NotPSD):
        QuadraticLS(np.diag([1.0, -1.0, 1.0]))


def test_limit_surface_file_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    norm = Normalization(2.0, 50.0)
    for ls in (QuadraticLS(random_pd(rng), norm), random_quartic(rng)):
        path = tmp_path / f"ls{ls.degree}.json"
        save_limit_surface(ls, path)
        back = load_limit_surface(path)
        assert type(back) is type(ls)
        assert back.normalization == ls.normalization
        F = rng.normal(size=(10, 3))
        np.testing.assert_array_equal(back.eval(F), ls.eval(F))
    bare = QuarticLS(lift_quadratic(QuadraticLS(np.eye(3))).a)
    save_limit_surface(bare, tmp_path / "bare.json")
    assert load_limit_surface(tmp_path / "bare.json").Q is None


def test_pairs_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(14)
    F, V = rng.normal(size=(7, 3)), rng.normal(size=(7, 3))
    write_pairs(tmp_path / "p.csv", F, V)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "Fx,Fy,tau,Vx,Vy,omega"
    F2, V2 = read_pairs(tmp_path / "p.csv")
    np.testing.assert_array_equal(F2, F)
    np.testing.assert_array_equal(V2, V)


def test_sklearn_regressor():
    rng = np.random.default_rng(15)
    A = random_pd(rng)
    X = rng.normal(size=(80, 3))
    y = X @ A
    est = LimitSurfaceRegressor()
    assert clone(est).get_params() == est.get_params()
    est.fit(X, y)
    assert est.score(X, y) == pytest.approx(1.0, abs=1e-10)
    assert est.angular_errors(X, y).max() < 1e-6
    np.testing.assert_allclose(est.predict(X[:3]), y[:3] / np.linalg.norm(y[:3], axis=1)[:, None], atol=1e-8)
