import json

import numpy as np
import pytest

from helpers import random_contact, random_contacts, random_pd, random_quartic
from quasipush.geometry import ContactPoint
from quasipush.limit_surface import QuadraticLS, lift_quadratic
from quasipush.multi_contact import Status, assemble_lcp, merge_contacts, resolve_multi_contact
from quasipush.single_contact import ContactMode, resolve_single_contact
from quasipush.support_oracle import OracleLimitSurface, SupportModel


def test_leading_block_symmetric():
    rng = np.random.default_rng(0)
    for m in (1, 2, 4):
        P = assemble_lcp(random_pd(rng), random_contacts(rng, m))
        lead = P.M[:3 * m, :3 * m]
        np.testing.assert_allclose(lead, lead.T, atol=1e-14)
        assert P.M.shape == (4 * m, 4 * m) and P.q.shape == (4 * m,)
        np.testing.assert_array_equal(P.M[3 * m:, 3 * m:], 0)


def test_single_contact_equivalence():
    rng = np.random.default_rng(1)
    for _ in range(100):
        H = QuadraticLS(random_pd(rng))
        c = random_contact(rng, approach=True)
        one = resolve_single_contact(H, c)
        many = resolve_multi_contact(H, [c])
        assert many.status == Status.RESOLVED
        np.testing.assert_allclose(many.V, one.V, atol=1e-9 * max(1.0, np.linalg.norm(one.V)))
        assert many.modes[0] == one.mode or np.allclose(one.V, many.V, atol=1e-9)


def test_quartic_single_contact_equivalence():
    rng = np.random.default_rng(2)
    for _ in range(20):
        H = random_quartic(rng)
        c = random_contact(rng, approach=True)
        one = resolve_single_contact(H, c)
        many = resolve_multi_contact(H, [c])
        np.testing.assert_allclose(many.V, one.V, atol=1e-7 * max(1.0, np.linalg.norm(one.V)))


def test_scaling_the_limit_surface_keeps_the_twist():
    rng = np.random.default_rng(3)
    A = random_pd(rng)
    cs = random_contacts(rng, 2, approach=True)
    a = resolve_multi_contact(QuadraticLS(A), cs)
    b = resolve_multi_contact(QuadraticLS(4.0 * A), cs)
    assert a.status == b.status
    if a.status == Status.RESOLVED:
        np.testing.assert_allclose(b.V, a.V, atol=1e-10)
        np.testing.assert_allclose(b.F, a.F / 4.0, atol=1e-10)


def test_balance_and_complementarity():
    rng = np.random.default_rng(4)
    for _ in range(100):
        H = QuadraticLS(random_pd(rng))
        cs = random_contacts(rng, int(rng.integers(1, 4)))
        out = resolve_multi_contact(H, cs)
        if out.jammed:
            continue
        P = out.problem
        np.testing.assert_allclose(out.V, H.A @ out.F, atol=1e-10)
        np.testing.assert_allclose(out.F, P.N.T @ out.f_n + P.L.T @ out.f_t, atol=1e-10)
        assert out.z.min() >= -1e-12 and out.w.min() >= -1e-12
        assert abs(out.z @ out.w) <= 1e-8 * max(1.0, np.abs(out.z).max())
        for c, fn in zip(cs, out.f_n):
            # no contact pulls
            assert fn >= -1e-12
            gap_rate = c.normal @ (c.jacobian @ out.V - c.v_p)
            assert gap_rate >= -1e-9


def test_symmetric_two_finger_push():
    H = QuadraticLS(np.diag([1.0, 1.0, 0.6]))
    cs = [ContactPoint((-0.7, 0.7), (0.6, -0.8), (1.0, 0.0), 0.3),
          ContactPoint((-0.7, -0.7), (0.6, 0.8), (1.0, 0.0), 0.3)]
    out = resolve_multi_contact(H, cs)
    assert out.status == Status.RESOLVED
    assert out.V[1] == pytest.approx(0.0, abs=1e-12)
    assert out.V[2] == pytest.approx(0.0, abs=1e-12)
    assert out.V[0] > 0
    assert out.f_n[0] == pytest.approx(out.f_n[1], rel=1e-10)


def test_centered_disc_push():
    H = lift_quadratic(QuadraticLS(np.diag([1.0, 1.0, 0.5])))
    out = resolve_multi_contact(H, [ContactPoint((-1.0, 0.0), (1.0, 0.0), (2.0, 0.0), 0.5)])
    np.testing.assert_allclose(out.V, [2.0, 0.0, 0.0], atol=1e-9)
    assert out.modes == [ContactMode.STICKING]


def test_squeeze_is_jammed():
    H = QuadraticLS(np.eye(3))
    cs = [ContactPoint((-1.0, 0.0), (1.0, 0.0), (1.0, 0.0), 0.5),
          ContactPoint((1.0, 0.0), (-1.0, 0.0), (-1.0, 0.0), 0.5)]
    out = resolve_multi_contact(H, cs)
    assert out.jammed
    np.testing.assert_array_equal(out.V, 0)
    assert resolve_multi_contact(lift_quadratic(H), cs).jammed


def test_duplicate_contacts_merge():
    rng = np.random.default_rng(5)
    H = QuadraticLS(random_pd(rng))
    c = random_contact(rng, approach=True)
    merged, index = merge_contacts([c, c])
    assert len(merged) == 1 and index == [0, 0]
    one = resolve_multi_contact(H, [c])
    two = resolve_multi_contact(H, [c, c])
    np.testing.assert_allclose(two.V, one.V, atol=1e-12)
    assert two.f_n[1] == 0 and two.f_n[0] == pytest.approx(one.f_n[0])
    assert len(two.modes) == 2


def test_debug_dump(tmp_path):
    rng = np.random.default_rng(6)
    path = tmp_path / "lcp.json"
    out = resolve_multi_contact(QuadraticLS(random_pd(rng)), random_contacts(rng, 2, approach=True), debug_path=path)
    doc = json.loads(path.read_text())
    np.testing.assert_allclose(doc["M"], out.problem.M)
    np.testing.assert_allclose(doc["q"], out.problem.q)
    if not out.jammed:
        np.testing.assert_allclose(doc["z"], out.z)


def test_rejects_oracle_and_empty():
    oracle = OracleLimitSurface(SupportModel.uniform_grid(10, 10, 3, 3))
    with pytest.raises(TypeError):
        resolve_multi_contact(oracle, [ContactPoint((-1.0, 0.0), (1.0, 0.0), (1.0, 0.0), 0.2)])
    with pytest.raises(ValueError):
        resolve_multi_contact(QuadraticLS(np.eye(3)), [])
