from __future__ import annotations

import warnings

import numpy as np
import pytest

from microgen.compose import star_series
from microgen.errors import DegeneracyError, UsageError
from microgen.genfun import (
    CoreMap,
    GeneratingFunction,
    TruncationWarning,
    identity_genfun,
    sample_relation,
    tensor,
)
from microgen.hamjac import (
    Hamiltonian,
    core_J,
    core_form_check,
    energy_monoid_genfun,
    evolution_genfun,
    freeze_time,
    hamiltonian_from_genfun,
    hj_series,
    semigroup_defect,
)
from microgen.jetcalc import Jet
from oracles import ho_closed_form, random_poly_coeffs

HO = "(p^2+q^2)/2"


def random_hamiltonians(count=5, seed=0):
    rng = np.random.default_rng(seed)
    return [Hamiltonian.from_jet(Jet(2, 4, random_poly_coeffs(rng, 2, 4)), 1)
            for _ in range(count)]


def pq_jet(order, coeffs):
    return Jet(2, order, coeffs)


# --------------------------------------------------------------------------
# hj_series


def test_free_particle_closed_form():
    S = hj_series(Hamiltonian.from_expr("p^2/2"), 10)
    want = {(0, 1, 1): 1.0, (1, 2, 0): 0.5}
    got = S.S.coeffs
    for key, value in want.items():
        assert got[key] == pytest.approx(value, abs=1e-15)
    assert all(abs(v) < 1e-12 for k, v in got.items() if k not in want)


def test_harmonic_oscillator_low_orders():
    S = hj_series(Hamiltonian.from_expr(HO), 6)
    assert S.block(0).allclose(pq_jet(11, {(1, 1): 1.0}), atol=1e-15)
    assert S.block(1).allclose(pq_jet(10, {(2, 0): 0.5, (0, 2): 0.5}), atol=1e-15)
    assert S.block(2).allclose(pq_jet(9, {(1, 1): 0.5}), atol=1e-15)


def test_harmonic_oscillator_closed_form():
    S = hj_series(Hamiltonian.from_expr(HO), 14)
    for t, p, Q in [(0.05, 0.3, -0.2), (0.1, 0.5, 0.5), (-0.08, 0.1, 0.4)]:
        assert S.value(t, [p], [Q]) == pytest.approx(ho_closed_form(t, p, Q), abs=1e-13)


def test_zero_hamiltonian():
    S = hj_series(Hamiltonian.from_expr("0*p*q"), 5)
    assert S.S.coeffs == {(0, 1, 1): 1.0}


def test_second_order_expansion_random():
    for H in random_hamiltonians():
        S = hj_series(H, 4)
        Hj = H.jet(8)
        assert S.block(1).allclose(Hj.truncate(7), atol=1e-12)
        second = (Hj.partial(1) * Hj.partial(0)).scale(0.5)
        assert S.block(2).allclose(second.truncate(6), atol=1e-12)


def test_residual_vanishes():
    for H in random_hamiltonians() + [Hamiltonian.from_expr("p^2/2 + cos(q)")]:
        S = hj_series(H, 6)
        assert S.max_residual() < 1e-10


def test_two_dimensional():
    H = Hamiltonian.from_expr("(p1^2+p2^2)/2 + q1^2*q2", ["p1", "p2"], ["q1", "q2"])
    S = hj_series(H, 5)
    assert S.max_residual() < 1e-10
    assert hamiltonian_from_genfun(S).allclose(H.jet(9), atol=1e-12)


def test_time_dependent_flag_is_harmless():
    a = hj_series(Hamiltonian.from_expr(HO), 6)
    b = hj_series(Hamiltonian.from_expr(HO + " + 0*t"), 6)
    assert b.H.time_dependent
    assert a.S.allclose(b.S, atol=1e-14)


def test_time_dependent_residual():
    S = hj_series(Hamiltonian.from_expr("p^2/2 + t*q"), 8)
    assert S.max_residual() < 1e-10
    # S_2 picks up the explicit t dependence: [t^1] H(d_Q S, Q) = Q
    assert S.block(2)[(0, 1)] == pytest.approx(0.5)


def test_nonzero_base_point():
    H = Hamiltonian.from_expr("p^2/2 + cos(q)", q0=[0.5])
    S = hj_series(H, 6)
    assert S.max_residual() < 1e-10
    assert S.value(0.0, [0.2], [0.7]) == pytest.approx(0.2 * 0.7, abs=1e-15)


def test_order_validation():
    with pytest.raises(UsageError):
        hj_series(Hamiltonian.from_expr(HO), 0)
    with pytest.raises(UsageError):
        hj_series(Hamiltonian.from_expr(HO), 4, space_order=1)


# --------------------------------------------------------------------------
# hamiltonian_from_genfun and core_J


def test_hamiltonian_from_genfun_examples():
    S = hj_series(Hamiltonian.from_expr("p^2/2"), 4)
    assert hamiltonian_from_genfun(S).coeffs == {(2, 0): 0.5}
    S = hj_series(Hamiltonian.from_expr("0*p"), 4)
    assert hamiltonian_from_genfun(S).max_abs() == 0.0
    H = Hamiltonian.from_expr(HO)
    assert hamiltonian_from_genfun(hj_series(H, 6)).allclose(H.jet(11), atol=1e-12)


def test_hamiltonian_round_trip_random():
    for H in random_hamiltonians(seed=1):
        assert hamiltonian_from_genfun(hj_series(H, 5)).allclose(H.jet(9), atol=1e-12)


def test_core_J_examples():
    U, q = core_J(Hamiltonian.from_expr("p^2/2"))(0.7)
    assert U == 0.0 and q[0] == 0.7
    assert core_J(Hamiltonian.from_expr(HO))(0.4)[0] == pytest.approx(0.08)
    assert core_J(Hamiltonian.from_expr("p^2/2 + cos(q)"))(0.4)[0] == pytest.approx(np.cos(0.4))


# --------------------------------------------------------------------------
# freeze_time


def test_freeze_time_zero_is_identity():
    S = hj_series(Hamiltonian.from_expr(HO), 8)
    F = freeze_time(S, 0.0)
    E = identity_genfun(1, F.order)
    assert F.F.allclose(E.F, atol=0.0)
    assert F.strict


def test_freeze_time_free_particle():
    F = freeze_time(hj_series(Hamiltonian.from_expr("p^2/2"), 6), 0.1)
    assert F.F.coeffs == pytest.approx({(1, 1): 1.0, (2, 0): 0.05})
    assert F.strict


def test_freeze_time_harmonic_oscillator():
    S = hj_series(Hamiltonian.from_expr(HO), 8)
    F = freeze_time(S, 0.05)
    # H(0, q) = q^2/2 is not zero, so F_t is a plain symplectomorphism germ
    assert not F.strict
    assert F.value([0.3], [0.2]) == pytest.approx(ho_closed_form(0.05, 0.3, 0.2), abs=1e-12)


def test_freeze_time_degenerate():
    # H = -pq gives S = pQ (1 - t) at first order, degenerate at t = 1
    S = hj_series(Hamiltonian.from_expr("-p*q"), 1)
    with pytest.raises(DegeneracyError):
        freeze_time(S, 1.0)


# --------------------------------------------------------------------------
# semigroup / module axiom


def grid(n=5, r=0.5):
    axis = np.linspace(-r, r, n)
    return [([p], [q]) for p in axis for q in axis]


def test_semigroup_unit():
    H = Hamiltonian.from_expr(HO)
    assert semigroup_defect(H, 0.0, 0.05, grid(3), 10) < 1e-12


def test_semigroup_free_particle():
    H = Hamiltonian.from_expr("p^2/2")
    for t1, t2 in [(0.3, 0.7), (-1.0, 0.5), (1.0, 1.0)]:
        assert semigroup_defect(H, t1, t2, grid(3, 1.0), 4) < 1e-12


def test_semigroup_harmonic_oscillator():
    H = Hamiltonian.from_expr(HO)
    assert semigroup_defect(H, 0.05, 0.05, grid(), 10) < 1e-9


def test_module_axiom_via_tensor():
    """rho o (mu (x) id) = rho o (id (x) rho) for monomials of time degree <= order_t."""
    S = hj_series(Hamiltonian.from_expr(HO), 6)
    rho = evolution_genfun(S)
    mu = energy_monoid_genfun(order=rho.order)
    EQ = identity_genfun(1, rho.order, p_vars=["p"], x_vars=["Q"])
    EE = identity_genfun(1, rho.order, p_vars=["s"], x_vars=["E"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        left = star_series(tensor(mu, EQ), rho)
        right = star_series(tensor(EE, rho), rho)
    diff = (left.F - right.F).coeffs
    assert all(abs(v) < 1e-12 for k, v in diff.items() if k[0] + k[1] <= S.order_t)
    for t1, t2, p, Q in [(0.05, 0.03, 0.2, 0.3), (-0.02, 0.04, -0.1, 0.2)]:
        assert left.value([t1, t2, p], [Q]) == pytest.approx(S.value(t1 + t2, [p], [Q]),
                                                             abs=1e-14)


# --------------------------------------------------------------------------
# energy monoid


def test_energy_monoid_sample():
    M = energy_monoid_genfun()
    assert M.value([1.0, 2.0], [3.0]) == 9.0
    pt = sample_relation(M, [1.0, 2.0], [3.0])
    assert np.allclose(pt.x1, [3.0, 3.0]) and np.allclose(pt.p2, [3.0])
    pt = sample_relation(M, [0.0, 0.0], [5.0])
    assert np.allclose(pt.p2, [0.0]) and np.allclose(pt.x1, [5.0, 5.0])


def test_energy_monoid_associative():
    M = energy_monoid_genfun(order=4)
    E = identity_genfun(1, 4, p_vars=["s"], x_vars=["F"])
    left = star_series(tensor(M, E), M)
    right = star_series(tensor(E, M), M)
    assert left.F.allclose(right.F, atol=0.0)
    assert left.value([1.0, 2.0, 3.0], [0.5]) == pytest.approx(3.0)


# --------------------------------------------------------------------------
# core_form_check


def test_core_form_harmonic_oscillator():
    rep = core_form_check(evolution_genfun(hj_series(Hamiltonian.from_expr(HO), 6)))
    assert rep.passed
    for q in (-0.3, 0.1, 0.4):
        assert rep.U(np.array([q])) == pytest.approx(q * q / 2, abs=1e-12)


def test_core_form_identity_like():
    core = CoreMap.from_expr(["0", "q"], ["q"])
    F = GeneratingFunction(core, Jet.zero(3, 4), ["t", "p"], ["q"])
    rep = core_form_check(F)
    assert rep.passed and rep.U(np.array([0.3])) == 0.0


def test_core_form_failure():
    core = CoreMap.from_expr(["0", "2*q"], ["q"])
    F = GeneratingFunction(core, Jet.zero(3, 4), ["t", "p"], ["q"])
    rep = core_form_check(F)
    assert not rep.passed
    assert rep.offending is not None
    assert rep.to_json()["verdict"] == "fail"
