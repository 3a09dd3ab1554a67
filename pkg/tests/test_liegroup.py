from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg

from microgen.errors import DomainViolation, UsageError
from microgen.genfun import lagrangian_defect
from microgen.hamjac import energy_monoid_genfun
from microgen.liegroup import (
    L_X,
    L_Y,
    L_Z,
    CoAlgebraElement,
    MatLieElement,
    assoc_defect,
    bch,
    dexp_matrix,
    mat_exp,
    mat_log,
    random_element,
    so3_action,
    so3_momentum,
    symmetry_genfun,
    symmetry_relation_sample,
    symmetry_sampler,
)
from oracles import dynkin4, rodrigues


def so3(x, y, z):
    return MatLieElement.from_coords([x, y, z], "so3")


# --------------------------------------------------------------------------
# exp and log


def test_exp_examples():
    assert np.array_equal(mat_exp(np.zeros((3, 3))), np.eye(3))
    R = mat_exp(so3(0, 0, np.pi / 2))
    assert np.allclose(R, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-14)
    rng = np.random.default_rng(0)
    for _ in range(10):
        X = random_element(rng, "sl2", 1.5)
        assert np.allclose(mat_exp(X) @ mat_exp(-X), np.eye(2), atol=1e-12)


def test_exp_against_rodrigues_and_scipy():
    rng = np.random.default_rng(1)
    for _ in range(20):
        axis = rng.normal(size=3)
        angle = rng.uniform(-3, 3)
        k = axis / np.linalg.norm(axis)
        X = so3(*(angle * k))
        assert np.allclose(mat_exp(X), rodrigues(k, angle), atol=1e-13)
        assert np.allclose(mat_exp(X), scipy.linalg.expm(X.entries), atol=1e-13)


def test_log_examples():
    assert mat_log(np.eye(3), "so3").norm() == 0.0
    rng = np.random.default_rng(2)
    for _ in range(20):
        X = random_element(rng, "so3", 0.1)
        assert np.max(np.abs(mat_log(mat_exp(X), "so3").entries - X.entries)) < 1e-12
    got = mat_log(rodrigues([0, 0, 1], 0.2), "so3")
    assert np.allclose(got.coords(), [0, 0, 0.2], atol=1e-14)


def test_log_round_trip_up_to_half():
    rng = np.random.default_rng(3)
    for algebra in ("so3", "sl2"):
        for _ in range(50):
            X = random_element(rng, algebra, rng.uniform(0, 0.5))
            L = mat_log(mat_exp(X), algebra)
            assert np.max(np.abs(L.entries - X.entries)) < 1e-12
            assert np.allclose(L.entries, scipy.linalg.logm(mat_exp(X)).real, atol=1e-12)


def test_log_domain():
    with pytest.raises(DomainViolation):
        mat_log(rodrigues([0, 0, 1], 2.0), "so3")
    with pytest.raises(DomainViolation):
        mat_log(2.5 * np.eye(2))


# --------------------------------------------------------------------------
# BCH


def test_bch_examples():
    v = so3(0.1, -0.2, 0.3)
    zero = so3(0, 0, 0)
    assert np.allclose(bch(v, zero).entries, v.entries, atol=1e-15)
    w = v * 2.5
    assert np.array_equal(bch(v, w).entries, (v + w).entries)
    v, w = so3(0.1, 0, 0), so3(0, 0.1, 0)
    got = bch(v, w).entries
    second = (v + w).entries + v.bracket(w).entries / 2
    assert np.max(np.abs(got - second)) < 1e-4
    assert np.max(np.abs(got - dynkin4(v.entries, w.entries))) < 1e-5


def test_bch_unit_and_inverse():
    rng = np.random.default_rng(4)
    for algebra in ("so3", "sl2"):
        for _ in range(20):
            v = random_element(rng, algebra, rng.uniform(0, 0.3))
            zero = v * 0.0
            assert np.max(np.abs(bch(v, zero).entries - v.entries)) < 1e-12
            assert np.max(np.abs(bch(zero, v).entries - v.entries)) < 1e-12
            assert bch(v, -v).norm() < 1e-12


def test_bch_against_dynkin():
    rng = np.random.default_rng(5)
    for algebra in ("so3", "sl2"):
        for _ in range(50):
            v = random_element(rng, algebra, rng.uniform(0.01, 0.2))
            w = random_element(rng, algebra, rng.uniform(0.01, 0.2))
            size = np.hypot(v.norm(), w.norm())
            got = bch(v, w).entries
            assert np.linalg.norm(got - dynkin4(v.entries, w.entries)) < 10 * size ** 5


def test_assoc_defect():
    rng = np.random.default_rng(6)
    mu3 = CoAlgebraElement([1.0, -0.5, 0.25])
    for algebra in ("so3", "sl2"):
        for _ in range(100):
            u, v, w = (random_element(rng, algebra, rng.uniform(0, 0.1)) for _ in range(3))
            assert assoc_defect(u, v, w, mu3) < 1e-10
        u = random_element(rng, algebra, 0.1)
        assert assoc_defect(u, u * 0.0, u, mu3) < 1e-12


def test_abelian_case():
    one = lambda t: MatLieElement([[t]], "abelian")
    M = energy_monoid_genfun()
    for t1, t2, E in [(1.0, 2.0, 3.0), (-0.4, 0.9, 2.5), (10.0, 20.0, -1.0)]:
        assert symmetry_genfun(one(t1), one(t2), CoAlgebraElement([E])) == (t1 + t2) * E
        assert symmetry_genfun(one(t1), one(t2), CoAlgebraElement([E])) == M.value([t1, t2], [E])
    assert assoc_defect(one(0.3), one(0.4), one(0.5), CoAlgebraElement([2.0])) == 0.0


def test_symmetry_genfun_examples():
    v = so3(0.1, -0.2, 0.05)
    assert abs(symmetry_genfun(v, -v, CoAlgebraElement([1, 2, 3]))) < 1e-14
    val = symmetry_genfun(so3(0.1, 0, 0), so3(0, 0.1, 0), CoAlgebraElement([0, 0, 1]))
    assert abs(val - 0.005) < 1e-4
    exact = scipy.linalg.logm(mat_exp(0.1 * L_X) @ mat_exp(0.1 * L_Y)).real
    assert val == pytest.approx(exact[1, 0], abs=1e-14)


def test_element_validation():
    with pytest.raises(UsageError):
        MatLieElement(np.eye(3), "so3")
    with pytest.raises(UsageError):
        MatLieElement(np.eye(2), "sl2")
    with pytest.raises(UsageError):
        MatLieElement(np.eye(2), "su5")


def test_basis_bracket():
    x, y = MatLieElement(L_X, "so3"), MatLieElement(L_Y, "so3")
    assert np.array_equal(x.bracket(y).entries, L_Z)


# --------------------------------------------------------------------------
# the symmetry relation


def test_symmetry_sample_unit():
    z = (np.array([1.0, 0.2, 0.0]), np.array([0.0, 1.0, 0.3]))
    s = symmetry_relation_sample(so3_action, so3_momentum, so3(0, 0, 0), z)
    assert np.allclose(s.mu, so3_momentum(*z))
    assert np.allclose(s.gz[0], z[0]) and np.allclose(s.gz[1], z[1])


def test_symmetry_sample_rotation():
    z = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    s = symmetry_relation_sample(so3_action, so3_momentum, so3(0, 0, 0.1), z)
    R = rodrigues([0, 0, 1], 0.1)
    assert np.allclose(s.gz[0], R @ z[0], atol=1e-15)
    assert np.allclose(s.gz[1], R @ z[1], atol=1e-15)
    # equivariance: j(g z) = g j(z) for rotations
    assert np.allclose(s.mu, R @ so3_momentum(*z), atol=1e-15)
    assert np.allclose(so3_momentum(*z), [0, 0, 1])
    assert np.allclose(so3_momentum(*z, convention="textbook"), [0, 0, -1])


def test_w_g_lagrangian_in_exponential_chart():
    sampler = symmetry_sampler(so3_action, so3_momentum)
    rng = np.random.default_rng(7)
    for _ in range(3):
        base = rng.uniform(-0.3, 0.3, 9)
        assert lagrangian_defect(sampler, base) < 1e-5


def test_w_g_displayed_chart_is_not_flat_lagrangian():
    """Read in flat (v, mu) coordinates, the displayed triple is not isotropic."""
    sampler = symmetry_sampler(so3_action, so3_momentum, chart="displayed")
    base = np.array([0.0, 0.0, 0.0, 1.0, 0.2, 0.0, 0.0, 1.0, 0.3])
    assert lagrangian_defect(sampler, base) > 1e-2


def test_w_g_textbook_sign_fails():
    textbook = lambda p, q: so3_momentum(p, q, "textbook")
    sampler = symmetry_sampler(so3_action, textbook)
    base = np.array([0.1, -0.2, 0.1, 1.0, 0.2, 0.0, 0.0, 1.0, 0.3])
    assert lagrangian_defect(sampler, base) > 1e-2


def test_dexp_identity_at_zero():
    assert np.allclose(dexp_matrix(so3(0, 0, 0)), np.eye(3))


def test_dexp_matches_finite_difference():
    """d/ds exp(v + s dv) exp(-v) = dexp_v(dv) in right trivialisation."""
    v = so3(0.3, -0.1, 0.2)
    dv = so3(0.05, 0.1, -0.2)
    h = 1e-6
    D = (mat_exp(v + dv * h) - mat_exp(v - dv * h)) / (2 * h) @ np.linalg.inv(mat_exp(v))
    got = MatLieElement((D - D.T) / 2, "so3").coords()
    assert np.allclose(dexp_matrix(v) @ dv.coords(), got, atol=1e-8)


def test_time_translation_action():
    """Abelian action of the free-particle flow with j = H reproduces the evolution relation."""
    from microgen.dynamics import evolution_relation_point
    from microgen.hamjac import Hamiltonian, hj_series

    H = Hamiltonian.from_expr("p^2/2")
    S = hj_series(H, 4)

    def action(g, p, q):
        t = float(np.log(g[0, 0]))
        return p, q - t * p

    j = lambda p, q: np.array([p[0] ** 2 / 2])
    v = MatLieElement([[0.1]], "abelian")
    s = symmetry_relation_sample(action, j, v, (np.array([0.5]), np.array([1.0])))
    pt = evolution_relation_point(S, 0.1, [0.5], s.gz[1])
    assert s.mu[0] == pytest.approx(pt.E)
    assert pt.q[0] == pytest.approx(1.0)
    assert pt.P[0] == pytest.approx(s.gz[0][0])
