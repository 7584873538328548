import math

import numpy as np
import pytest

from quasipush.exceptions import ConfigError, ZeroTwist
from quasipush.geometry import Shape
from quasipush.limit_surface import fit_quadratic
from quasipush.support_oracle import OracleLimitSurface, SupportModel, generate_pairs, wrench_of_twist_oracle

TRI = 30.0 * np.array([[1.0, 0.0], [-0.5, math.sqrt(3) / 2], [-0.5, -math.sqrt(3) / 2]])


def _rot(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def test_square_translation():
    sq = SupportModel.uniform_grid(90, 90, 8, 8)
    np.testing.assert_allclose(wrench_of_twist_oracle(sq, [1, 0, 0]), [1, 0, 0], atol=1e-15)


def test_square_rotation_torque_by_summation():
    sq = SupportModel.uniform_grid(90, 90, 8, 8)
    F = wrench_of_twist_oracle(sq, [0, 0, 1])
    # every point slides tangentially, so torque = sum w_i |r_i| point by point
    tau = 0.0
    for (x, y), w in zip(sq.points, sq.weights):
        tau += w * math.hypot(x, y)
    np.testing.assert_allclose(F[:2], 0, atol=1e-13)
    assert F[2] == pytest.approx(tau, rel=1e-12)
    assert sq.normalization.wrench_to_unit(F)[2] == pytest.approx(1.0, rel=1e-12)


def test_three_point_rotation_has_no_force():
    tri = SupportModel(TRI, np.ones(3))
    F = wrench_of_twist_oracle(tri, [0, 0, 2.5])
    np.testing.assert_allclose(F[:2], 0, atol=1e-15)
    assert F[2] == pytest.approx(30.0)


def test_antisymmetry_and_rotation_equivariance():
    rng = np.random.default_rng(0)
    g = SupportModel.uniform_grid(60, 40, 6, 4)
    w = rng.uniform(0.1, 1.0, len(g.points))
    sup = SupportModel(g.points - (w / w.sum()) @ g.points, w)
    for _ in range(20):
        V = rng.normal(size=3) * [10, 10, 0.3]
        F = wrench_of_twist_oracle(sup, V)
        np.testing.assert_allclose(wrench_of_twist_oracle(sup, -V), -F, atol=1e-14)
        phi = rng.uniform(-math.pi, math.pi)
        R = _rot(phi)
        rot = SupportModel(sup.points @ R.T, sup.weights, sup.rho)
        Fr = wrench_of_twist_oracle(rot, np.r_[R @ V[:2], V[2]])
        np.testing.assert_allclose(Fr[:2], R @ F[:2], atol=1e-12)
        assert Fr[2] == pytest.approx(F[2], abs=1e-10)


def test_batch_matches_single():
    sup = SupportModel.uniform_grid(50, 30, 5, 3)
    V = np.random.default_rng(1).normal(size=(6, 3))
    np.testing.assert_allclose(wrench_of_twist_oracle(sup, V), [wrench_of_twist_oracle(sup, v) for v in V])


def test_oracle_wrench_is_on_the_boundary():
    # maximum power: F(V) . V >= F(V') . V for every other twist V'
    sup = SupportModel.uniform_grid(40, 20, 4, 2)
    rng = np.random.default_rng(2)
    Vs = rng.normal(size=(400, 3)) * [1, 1, 0.05]
    Fs = wrench_of_twist_oracle(sup, Vs)
    for V, F in zip(Vs[:40], Fs[:40]):
        assert np.all(Fs @ V <= F @ V + 1e-12)
        # |F| is maximal among sampled wrenches pointing the same way (within a narrow cone)
        for dV in rng.normal(size=(20, 3)) * [1e-3, 1e-3, 5e-5]:
            F2 = wrench_of_twist_oracle(sup, V + dV)
            assert F2 @ V <= F @ V + 1e-12


def test_zero_velocity_point_contributes_nothing():
    sup = SupportModel(np.array([[0.0, 0.0], [10.0, 0.0], [-10.0, 0.0]]), np.ones(3))
    # rotation about the middle point: it does not move
    F = wrench_of_twist_oracle(sup, [0, 0, 1])
    np.testing.assert_allclose(F, [0, 0, 20.0 / 3], atol=1e-14)


def test_zero_twist_rejected():
    with pytest.raises(ZeroTwist):
        wrench_of_twist_oracle(SupportModel(TRI, np.ones(3)), [0, 0, 0])


def test_support_validation():
    with pytest.raises(ConfigError):
        SupportModel(np.array([[1.0, 0.0], [2.0, 0.0]]), np.ones(2))
    with pytest.raises(ConfigError):
        SupportModel(TRI, -np.ones(3))
    s = SupportModel(TRI, 2 * np.ones(3))
    assert s.weights.sum() == pytest.approx(1.0)
    assert s.rho == pytest.approx(30.0)


def test_shape_constructors_centered():
    rect = Shape.rectangle(50, 35)
    for sup in (SupportModel.shape_grid(rect, 12), SupportModel.boundary(Shape.butterfly(), 80)):
        np.testing.assert_allclose(sup.center_of_pressure, 0, atol=1e-9)


def test_generate_pairs_shapes_and_units():
    sq = SupportModel.uniform_grid(90, 90, 10, 10)
    F, V = generate_pairs(sq, 200, np.random.default_rng(3))
    assert F.shape == V.shape == (200, 3)
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0)
    # normalized wrenches lie inside the unit box, torque included
    assert np.abs(F).max() <= 1.0 + 1e-12
    F0, V0 = generate_pairs(sq, 0, np.random.default_rng(3))
    assert F0.shape == V0.shape == (0, 3)


def test_three_point_fit_predicts_held_out():
    tri = SupportModel(TRI, np.ones(3))
    ls = fit_quadratic(*generate_pairs(tri, 400, np.random.default_rng(4)))
    Ft, Vt = generate_pairs(tri, 500, np.random.default_rng(5))
    P = Ft @ ls.A
    P /= np.linalg.norm(P, axis=1)[:, None]
    ang = np.degrees(np.arccos(np.clip(np.sum(P * Vt, axis=1), -1, 1)))
    assert ang.mean() < 25.0


def test_oracle_limit_surface_inverse():
    sup = SupportModel.uniform_grid(60, 60, 6, 6)
    ls = OracleLimitSurface(sup)
    rng = np.random.default_rng(6)
    for _ in range(5):
        V = rng.normal(size=3)
        V /= np.linalg.norm(V)
        back = ls.twist_of_wrench(ls.wrench_of_twist(V))
        assert np.degrees(math.acos(min(1.0, back @ V))) < 0.5


def test_support_json_roundtrip(tmp_path):
    import json
    sup = SupportModel.uniform_grid(20, 10, 3, 2, rho=7.0)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(sup.to_json()))
    back = SupportModel.load(path)
    np.testing.assert_array_equal(back.points, sup.points)
    assert back.rho == 7.0
