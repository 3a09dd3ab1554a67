from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microgen.errors import DomainViolation, OrderUnderflow, UsageError
from microgen.jetcalc import (
    Jet,
    jet_add,
    jet_compose,
    jet_elementary,
    jet_equal,
    jet_eval,
    jet_mul,
    jet_partial,
)
from oracles import dict_eval, dict_mul, dicts_close, jet_to_dict


def X(n=2, order=4):
    return Jet.variable(0, n, order)


def Y(n=2, order=4):
    return Jet.variable(1, n, order)


def random_jet(rng, n, order, scale=1.0):
    from microgen.jetcalc import basis_size
    return Jet(n, order, rng.uniform(-scale, scale, basis_size(n, order)))


# --------------------------------------------------------------------------
# examples


def test_add_examples():
    x = Jet.variable(0, 1, 3)
    assert jet_equal(jet_add(1 + x, 1 - x), Jet.constant(2, 1, 3))
    f = x * x + 0.5
    assert jet_equal(jet_add(Jet.zero(1, 3), f), f)
    x, y = X(2, 2), Y(2, 2)
    got = jet_add(x * x + y, 3 * (x * x))
    assert got.coeffs == {(2, 0): 4.0, (0, 1): 1.0}


def test_mul_examples():
    x = Jet.variable(0, 1, 2)
    assert (jet_mul(1 + x, 1 - x)).coeffs == {(0,): 1.0, (2,): -1.0}
    f = x * 3 + 2
    assert jet_equal(jet_mul(f, Jet.constant(1, 1, 2)), f)
    x, y = X(2, 2), Y(2, 2)
    assert ((x + y) ** 2).coeffs == {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0}


def test_partial_examples():
    x, y = X(), Y()
    assert jet_equal(jet_partial(x * x * y, 0), 2 * x * y)
    assert jet_partial(Jet.constant(5, 2, 3), 1).max_abs() == 0.0
    p, xx = X(), Y()
    assert jet_equal(jet_partial(p * p * xx, 0), 2 * p * xx)
    assert jet_partial(x * x * y, 0).max_order == 3
    z = jet_partial(Jet.constant(1, 1, 0), 0)
    assert z.max_order == 0 and z.max_abs() == 0.0


def test_partial_index_out_of_range():
    with pytest.raises(UsageError):
        jet_partial(X(), 2)


def test_compose_examples():
    u = Jet.variable(0, 2, 4)
    v = Jet.variable(1, 2, 4)
    x = Jet.variable(0, 1, 4)
    got = jet_compose(x * x, [u + v])
    assert got.coeffs == {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0}
    f = 1 + 2 * u - u * v + v ** 3
    assert jet_equal(jet_compose(f, [u, v]), f)
    e = jet_elementary("exp", Jet.variable(0, 1, 3))
    got = jet_compose(e, [u.truncate(3) + v.truncate(3)])
    s = (u + v).truncate(3)
    want = 1 + s + s * s / 2 + s * s * s / 6
    assert jet_equal(got, want)


def test_compose_recentres_nonzero_constants():
    x = Jet.variable(0, 1, 5)
    f = x ** 3 - 2 * x
    t = Jet.variable(0, 1, 5)
    got = jet_compose(f, [t + 0.7])
    for s in (-0.3, 0.1, 0.25):
        assert got(np.array([s])) == pytest.approx((s + 0.7) ** 3 - 2 * (s + 0.7), abs=1e-12)


def test_compose_errors():
    with pytest.raises(UsageError):
        jet_compose(X(), [Jet.variable(0, 1, 4)])
    with pytest.raises(OrderUnderflow):
        jet_compose(X(2, 2), [X(2, 2), Y(2, 2)], order=5)


def test_elementary_examples():
    z = Jet.zero(1, 4)
    assert jet_elementary("sin", z).max_abs() == 0.0
    x = Jet.variable(0, 1, 2)
    assert jet_elementary("exp", x).coeffs == {(0,): 1.0, (1,): 1.0, (2,): 0.5}
    x = Jet.variable(0, 2, 6) + 0.3 * Jet.variable(1, 2, 6)
    c, s = jet_elementary("cos", x), jet_elementary("sin", x)
    assert jet_equal(c * c + s * s, Jet.constant(1, 2, 6))


@pytest.mark.parametrize("name", ["log", "sqrt"])
def test_elementary_domain(name):
    with pytest.raises(DomainViolation):
        jet_elementary(name, Jet.variable(0, 1, 3))
    with pytest.raises(DomainViolation):
        jet_elementary(name, Jet.variable(0, 1, 3, value=-1.0))


def test_elementary_against_math():
    for name, fn in [("exp", math.exp), ("log", math.log), ("sin", math.sin),
                     ("cos", math.cos), ("sqrt", math.sqrt)]:
        f = jet_elementary(name, Jet.variable(0, 1, 12, value=1.3))
        assert f(np.array([0.05])) == pytest.approx(fn(1.35), abs=1e-13)
    f = jet_elementary("pow_n", Jet.variable(0, 1, 12, value=2.0), 1.5)
    assert f(np.array([0.1])) == pytest.approx(2.1 ** 1.5, abs=1e-13)


def test_eval_examples():
    x = Jet.variable(0, 1, 1)
    assert jet_eval(1 + x, [2.0]) == 3.0
    assert jet_eval(Jet.zero(3, 2), [1.0, -2.0, 5.0]) == 0.0
    p, xx = X(), Y()
    assert jet_eval(p * p * xx, [2.0, 3.0]) == 12.0
    with pytest.raises(UsageError):
        jet_eval(p, [1.0])


def test_eval_batch():
    p, q = X(), Y()
    f = p * q + q * q
    pts = np.array([[1.0, 2.0], [0.5, -1.0]])
    assert np.allclose(jet_eval(f, pts), [6.0, 0.5])


def test_mixed_order_takes_min():
    a = Jet.variable(0, 1, 5)
    b = Jet.variable(0, 1, 3)
    assert (a + b).max_order == 3
    assert (a * b).max_order == 3


def test_truncate_and_extend():
    x = Jet.variable(0, 1, 3)
    f = x ** 3 + x
    assert f.truncate(1).coeffs == {(1,): 1.0}
    assert jet_equal(f.truncate(1).extend(3), x)
    with pytest.raises(OrderUnderflow):
        f.truncate(4)


def test_json_round_trip():
    p, q = X(), Y()
    f = 0.25 * p * p * q - q + 1
    data = f.to_json(["p", "q"])
    g, names = Jet.from_json(data)
    assert names == ["p", "q"]
    assert jet_equal(f, g, atol=0.0)


def test_variable_count_mismatch():
    with pytest.raises(UsageError):
        X(2, 3) + Jet.variable(0, 3, 3)


# --------------------------------------------------------------------------
# randomized algebraic laws against a dictionary-based product


@pytest.fixture(scope="module")
def cases():
    rng = np.random.default_rng(0)
    out = []
    for _ in range(200):
        n = int(rng.integers(1, 4))
        order = int(rng.integers(1, 6))
        out.append((n, order, [random_jet(rng, n, order) for _ in range(3)]))
    return out


def test_ring_axioms(cases):
    for n, order, (a, b, c) in cases:
        assert jet_equal((a * b) * c, a * (b * c), atol=1e-12)
        assert jet_equal(a * (b + c), a * b + a * c, atol=1e-12)
        assert jet_equal(a * b, b * a, atol=1e-12)
        assert jet_equal((a + b) + c, a + (b + c), atol=1e-12)


def test_product_matches_dictionary_oracle(cases):
    for n, order, (a, b, _) in cases:
        want = dict_mul(jet_to_dict(a), jet_to_dict(b), order)
        assert dicts_close(jet_to_dict(a * b), want, atol=1e-12)


def test_leibniz(cases):
    for n, order, (a, b, _) in cases:
        for i in range(n):
            lhs = (a * b).partial(i)
            rhs = a.partial(i) * b + a * b.partial(i)
            assert jet_equal(lhs, rhs, atol=1e-12)


def test_chain_rule(cases):
    rng = np.random.default_rng(1)
    for n, order, (f, _, _) in cases:
        m = int(rng.integers(1, 3))
        args = [random_jet(rng, m, order) for _ in range(n)]
        args = [a - a.constant_term for a in args]
        g = jet_compose(f, args)
        for j in range(m):
            lhs = g.partial(j)
            rhs = Jet.zero(m, order - 1)
            for i in range(n):
                rhs = rhs + jet_compose(f.partial(i), [a.truncate(order - 1) for a in args]) \
                    * args[i].partial(j)
            assert jet_equal(lhs, rhs, atol=1e-11)


def test_finite_difference_agreement(cases):
    rng = np.random.default_rng(2)
    h = 1e-6
    for n, order, (f, _, _) in cases:
        x = rng.uniform(-0.5, 0.5, n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            fd = (f(x + e) - f(x - e)) / (2 * h)
            exact = f.partial(i)(x)
            assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(-1, 1), st.floats(-1, 1))
def test_eval_matches_dictionary(coeffs, x, y):
    f = Jet(2, 1, coeffs).extend(2)
    g = f * f
    want = dict_eval(dict_mul(jet_to_dict(f), jet_to_dict(f), 2), (x, y))
    assert g([x, y]) == pytest.approx(want, abs=1e-12)


@given(st.integers(0, 5), st.floats(-1, 1))
def test_substitute_matches_eval(k, value):
    p, q = X(2, 5), Y(2, 5)
    f = p ** k * q + 2 * q * q - p
    g = f.substitute(0, value)
    for s in (-0.4, 0.3):
        assert g([s]) == pytest.approx(f([value, s]), abs=1e-12)
