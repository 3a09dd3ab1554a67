from __future__ import annotations

import math

import numpy as np
import pytest

from microgen.dynamics import (
    FlowMap,
    PhasePoint,
    energy_drift,
    evolution_relation_point,
    fiber_decomposition,
    reconstruct_relation,
    recover_flow,
    recovered_flow_map,
    reference_flow,
    reference_flow_map,
    symplecticity_defect,
)
from microgen.errors import UsageError
from microgen.genfun import CoreMap, GeneratingFunction, cotangent_lift, identity_genfun, sample_relation
from microgen.hamjac import Hamiltonian, hj_series
from oracles import brute_force_fiber, ho_flow

HO = Hamiltonian.from_expr("(p^2+q^2)/2")
FREE = Hamiltonian.from_expr("p^2/2")
PENDULUM = Hamiltonian.from_expr("p^2/2 + cos(q)")
ZERO = Hamiltonian.from_expr("0*p*q")


def z(p, q):
    return PhasePoint([p], [q])


def gap(a: PhasePoint, b: PhasePoint) -> float:
    return float(np.max(np.abs(a.as_array() - b.as_array())))


# --------------------------------------------------------------------------
# recover_flow


def test_recover_free_particle():
    S = hj_series(FREE, 4)
    w = recover_flow(S, 0.1, z(0.5, 1.0))
    assert w.q[0] == pytest.approx(0.95, abs=1e-15)
    assert w.p[0] == pytest.approx(0.5, abs=1e-15)


def test_recover_at_time_zero():
    S = hj_series(PENDULUM, 6)
    for pt in [z(0.3, -0.2), z(0.0, 0.0)]:
        assert gap(recover_flow(S, 0.0, pt), pt) < 1e-15


def test_recover_harmonic_oscillator_vs_exact():
    S = hj_series(HO, 10)
    w = recover_flow(S, 0.05, z(0.3, 0.4))
    P, Q = ho_flow(0.05, 0.3, 0.4)
    assert abs(w.p[0] - P) < 1e-12 and abs(w.q[0] - Q) < 1e-12
    assert gap(w, reference_flow(HO, z(0.3, 0.4), 0.05)) < 1e-10


def test_recover_dimension_mismatch():
    S = hj_series(HO, 4)
    with pytest.raises(UsageError):
        recover_flow(S, 0.05, PhasePoint([0.1, 0.2], [0.3, 0.4]))


def test_flow_gap_rate():
    """Halving t divides the gap to the oracle by about 2^(N+1)."""
    S = hj_series(HO, 10)
    pt = z(0.3, 0.4)
    gaps = []
    for t in (0.4, 0.2):
        P, Q = ho_flow(t, 0.3, 0.4)
        gaps.append(gap(recover_flow(S, t, pt), z(P, Q)))
    ratio = gaps[0] / gaps[1]
    assert 2 ** 9 <= ratio <= 2 ** 13


# --------------------------------------------------------------------------
# reference_flow


def test_reference_zero_hamiltonian():
    assert gap(reference_flow(ZERO, z(0.3, 0.4), 1.0, steps=10), z(0.3, 0.4)) == 0.0


def test_reference_free_particle():
    assert gap(reference_flow(FREE, z(0.5, 1.0), 0.1, steps=100), z(0.5, 0.95)) < 1e-14


def test_reference_period():
    assert gap(reference_flow(HO, z(0.3, 0.4), 2 * math.pi, steps=10_000), z(0.3, 0.4)) < 1e-8


def test_reference_fourth_order():
    exact = z(*ho_flow(1.0, 0.3, 0.4))
    e1 = gap(reference_flow(HO, z(0.3, 0.4), 1.0, steps=20), exact)
    e2 = gap(reference_flow(HO, z(0.3, 0.4), 1.0, steps=40), exact)
    assert 12 < e1 / e2 < 20


def test_time_reversed():
    fwd = reference_flow(HO, z(0.3, 0.4), -0.5, steps=500)
    rev = reference_flow(HO, z(0.3, 0.4), 0.5, steps=500, time_reversed=True)
    assert gap(fwd, rev) < 1e-15


def test_time_dependent_consistency():
    H = Hamiltonian.from_expr("p^2/2 + t*q + q^3/3")
    S = hj_series(H, 10)
    pt = z(0.2, -0.1)
    for t in (0.05, 0.1):
        assert gap(recover_flow(S, t, pt), reference_flow(H, pt, t)) < 1e-10


# --------------------------------------------------------------------------
# symplecticity and energy


def test_symplecticity_examples():
    identity = FlowMap(lambda t, w: w, "identity")
    assert symplecticity_defect(identity, 0.1, z(0.3, 0.4)) < 1e-10
    S = hj_series(FREE, 4)
    assert symplecticity_defect(recovered_flow_map(S), 0.1, z(0.3, 0.4)) < 1e-8
    S = hj_series(HO, 10)
    scaled = FlowMap(lambda t, w: PhasePoint(2 * recover_flow(S, t, w).p,
                                             recover_flow(S, t, w).q), "scaled")
    assert symplecticity_defect(scaled, 0.05, z(0.3, 0.4)) > 1


@pytest.mark.parametrize("H", [FREE, HO, PENDULUM], ids=["free", "ho", "pendulum"])
def test_symplecticity_suite(H):
    S = hj_series(H, 10)
    flow = recovered_flow_map(S)
    rng = np.random.default_rng(0)
    for t in (0.05, 0.1):
        for _ in range(3):
            assert symplecticity_defect(flow, t, PhasePoint.from_array(rng.uniform(-.3, .3, 2))) < 1e-6


def test_energy_drift_examples():
    S = hj_series(ZERO, 4)
    assert energy_drift(ZERO, recovered_flow_map(S), z(0.3, 0.4), 0.1) == 0.0
    S = hj_series(HO, 10)
    assert energy_drift(HO, recovered_flow_map(S), z(0.3, 0.4), 0.05) < 1e-9
    S = hj_series(FREE, 4)
    assert energy_drift(FREE, recovered_flow_map(S), z(0.3, 0.4), 0.05) < 1e-12


def test_energy_drift_time_dependent_rejected():
    H = Hamiltonian.from_expr("p^2/2 + t*q")
    with pytest.raises(UsageError):
        energy_drift(H, reference_flow_map(H), z(0.1, 0.1), 0.1)


# --------------------------------------------------------------------------
# evolution relation points


def test_evolution_point_examples():
    S = hj_series(HO, 8)
    pt = evolution_relation_point(S, 0.0, [0.3], [0.4])
    assert pt.E == pytest.approx(0.125) and pt.q[0] == pytest.approx(0.4)
    assert pt.P[0] == pytest.approx(0.3)
    S = hj_series(ZERO, 4)
    pt = evolution_relation_point(S, 0.7, [0.3], [0.4])
    assert (pt.E, pt.q[0], pt.P[0]) == (0.0, 0.4, 0.3)
    S = hj_series(FREE, 4)
    pt = evolution_relation_point(S, 0.1, [0.5], [0.95])
    assert pt.E == pytest.approx(0.125) and pt.q[0] == pytest.approx(1.0)
    assert pt.P[0] == pytest.approx(0.5)


def test_energy_slot_is_hamiltonian_of_evolved_point():
    S = hj_series(PENDULUM, 10)
    pt = evolution_relation_point(S, 0.05, [0.2], [0.3])
    assert pt.E == pytest.approx(float(PENDULUM(pt.P, pt.Q)), abs=1e-10)


# --------------------------------------------------------------------------
# fiber decomposition


def p2x():
    return GeneratingFunction.from_expr(["0"], "p^2*x", ["p"], ["x"], order=6)


def test_fiber_p2x_example():
    fg = fiber_decomposition(p2x(), [2.0])
    p1, x1 = fg.L_param([1.0])
    assert (p1[0], x1[0]) == (1.0, 4.0)
    P, Q = fg.Psi((p1, x1))
    assert (P[0], Q[0]) == (1.0, 2.0)
    axis = np.linspace(-1, 1, 10)
    for x in axis:
        fg = fiber_decomposition(p2x(), [x])
        for p in axis:
            src = fg.L_param([p])
            assert src[1][0] == 2 * x * p
            P, Q = fg.Psi(src)
            assert (P[0], Q[0]) == (p * p, x)


def test_fiber_passes_through_core():
    F = GeneratingFunction.from_expr(["x^2"], "p^2*x", ["p"], ["x"], order=6)
    p1, x1 = fiber_decomposition(F, [0.7]).L_param([0.0])
    assert p1[0] == 0.0 and x1[0] == pytest.approx(0.49)


def test_fiber_cotangent_lift():
    F = cotangent_lift(CoreMap.from_expr(["x^2"], ["x"]))
    fg = fiber_decomposition(F, [1.5])
    for p in (-1.0, 0.5):
        src = fg.L_param([p])
        assert src[1][0] == pytest.approx(2.25)
        assert fg.Psi(src)[0][0] == pytest.approx(3.0 * p)


def test_fiber_identity():
    fg = fiber_decomposition(identity_genfun(1), [0.4])
    src = fg.L_param([0.9])
    assert src[1][0] == 0.4
    assert fg.Psi(src)[0][0] == 0.9


def test_psi_rejects_off_fiber_points():
    with pytest.raises(UsageError):
        fiber_decomposition(p2x(), [2.0]).Psi(([1.0], [3.0]))


def test_union_of_graphs_is_relation():
    F = GeneratingFunction.from_expr(["x + x^2"], "p^2*x + p^3", ["p"], ["x"], order=6)
    xs = np.linspace(-0.5, 0.5, 10)
    ps = np.linspace(-0.5, 0.5, 10)
    rebuilt = reconstruct_relation(F, [[x] for x in xs], [[p] for p in ps])
    direct = [sample_relation(F, [p], [x]) for x in xs for p in ps]
    for a, b in zip(rebuilt, direct):
        assert a.allclose(b, atol=1e-12)


def test_brute_force_fiber_oracle():
    F = GeneratingFunction.from_expr(["x^2"], "p^2*x", ["p"], ["x"], order=6)
    xs = np.linspace(-0.5, 0.5, 7)
    ps = np.linspace(-0.5, 0.5, 7)
    cloud = [sample_relation(F, [p], [x]) for x in xs for p in ps]
    for x in xs[[1, 4]]:
        selected = brute_force_fiber(cloud, np.array([x]))
        assert len(selected) == len(ps)
        fg = fiber_decomposition(F, [x])
        for pt in selected:
            P, Q = fg.Psi((pt.p1, pt.x1))
            assert np.allclose(P, pt.p2, atol=1e-12) and np.allclose(Q, pt.x2)
