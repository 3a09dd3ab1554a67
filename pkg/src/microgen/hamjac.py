"""Hamilton-Jacobi series for the evolution generating function.

The evolution generating function ``S(t, p, Q)`` solves

    d_t S = H(d_Q S, Q),    S(0, p, Q) = <p, Q>,

with the flow given implicitly by ``q = d_p S`` and ``P = d_Q S``.  With this
equation Hamilton's equations read ``Qdot = -H_p``, ``Pdot = +H_q``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .compose import star_numeric
from .errors import DegeneracyError, OrderUnderflow, UsageError
from .expr import compile_expr, diff, free_vars, is_polynomial, lower_to_jet, parse, to_source
from .genfun import CoreMap, GeneratingFunction, _p_split, core_of
from .jetcalc import Jet, jet_compose

DET_THRESHOLD = 1e-8


def _default_names(prefix: str, n: int) -> tuple[str, ...]:
    return (prefix,) if n == 1 else tuple(f"{prefix}{i + 1}" for i in range(n))


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """``H(p, q)`` or ``H(t, p, q)`` on ``R^n_p x R^n_q``.

    ``func`` takes ``(t, p, q)`` with ``p`` and ``q`` of shape ``(..., n)`` and
    broadcasts.  ``jet_source(order)`` returns the Taylor jet in
    ``(p, q - q0)``, with ``t`` first in time-dependent mode.
    """

    dim: int
    func: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    jet_source: Callable[[int], Jet] | None = None
    grad_func: Callable[[float, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    time_dependent: bool = False
    q0: tuple[float, ...] = ()
    expr: str | None = None
    exact: bool = False
    p_vars: tuple[str, ...] = ()
    q_vars: tuple[str, ...] = ()
    t_var: str = "t"

    def __post_init__(self):
        if not self.q0:
            object.__setattr__(self, "q0", (0.0,) * self.dim)
        if not self.p_vars:
            object.__setattr__(self, "p_vars", _default_names("p", self.dim))
        if not self.q_vars:
            object.__setattr__(self, "q_vars", _default_names("q", self.dim))
        if len(self.q0) != self.dim:
            raise UsageError("q0 must have one entry per degree of freedom")
        if self.jet_source is not None:
            j0 = self.jet_source(0).constant_term
            direct = float(self(np.zeros(self.dim), np.array(self.q0), 0.0))
            if abs(j0 - direct) > 1e-10:
                raise UsageError("Hamiltonian callable and jet disagree at the base point")

    def __call__(self, p, q, t: float = 0.0):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return self.func(t, p, q)

    def gradient(self, p, q, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """``(H_p, H_q)``; central differences at step 1e-6 without ``grad_func``."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.grad_func is not None:
            return self.grad_func(t, p, q)
        h = 1e-6
        gp = np.zeros(np.broadcast_shapes(p.shape, q.shape))
        gq = np.zeros_like(gp)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            gp[..., i] = (self(p + e, q, t) - self(p - e, q, t)) / (2 * h)
            gq[..., i] = (self(p, q + e, t) - self(p, q - e, t)) / (2 * h)
        return gp, gq

    def jet(self, order: int) -> Jet:
        if self.jet_source is None:
            raise UsageError("this Hamiltonian carries no jet representation")
        return self.jet_source(order)

    def potential_jet(self, order: int) -> Jet:
        """Jet of ``q -> H(0, q)`` (at ``t = 0`` in time-dependent mode)."""
        j = self.jet(order)
        n = self.dim
        offset = 1 if self.time_dependent else 0
        return j.restrict(range(offset + n, offset + 2 * n))

    # constructors ---------------------------------------------------------

    @classmethod
    def from_expr(cls, src: str, p_vars: Sequence[str] | None = None,
                  q_vars: Sequence[str] | None = None, t_var: str | None = None,
                  q0: Sequence[float] | None = None) -> Hamiltonian:
        """Parse ``src``; the ``t`` variable is used only if it occurs in the expression."""
        tree = parse(src)
        free = free_vars(tree)
        if p_vars is None and q_vars is None:
            p_vars, q_vars = ("p",), ("q",)
            if "x" in free and "q" not in free:
                q_vars = ("x",)
        p_vars, q_vars = tuple(p_vars), tuple(q_vars)
        if len(p_vars) != len(q_vars):
            raise UsageError("need as many momenta as positions")
        n = len(p_vars)
        tname = t_var or "t"
        time_dependent = tname in free
        variables = ([tname] if time_dependent else []) + list(p_vars) + list(q_vars)
        unknown = free - set(variables)
        if unknown:
            raise UsageError(f"unknown identifier(s) {sorted(unknown)} in Hamiltonian")
        q0 = tuple(float(v) for v in q0) if q0 is not None else (0.0,) * n
        f = compile_expr(tree, variables)
        grads = [compile_expr(diff(tree, v), variables) for v in list(p_vars) + list(q_vars)]

        def split(t, p, q):
            p = np.asarray(p, dtype=float)
            q = np.asarray(q, dtype=float)
            args = [p[..., i] for i in range(n)] + [q[..., i] for i in range(n)]
            if time_dependent:
                args = [np.asarray(t, dtype=float)] + args
            return args

        def func(t, p, q):
            return f(*split(t, p, q))

        def grad_func(t, p, q):
            args = split(t, p, q)
            vals = [g(*args) for g in grads]
            return np.stack(vals[:n], axis=-1), np.stack(vals[n:], axis=-1)

        base = ([0.0] if time_dependent else []) + [0.0] * n + list(q0)

        def jet_source(order: int) -> Jet:
            return lower_to_jet(tree, variables, base, order)

        return cls(n, func, jet_source, grad_func, time_dependent, q0, to_source(tree),
                   is_polynomial(tree), p_vars, q_vars, tname)

    @classmethod
    def from_jet(cls, jet: Jet, dim: int, time_dependent: bool = False,
                 q0: Sequence[float] | None = None, exact: bool = True) -> Hamiltonian:
        """Hamiltonian given by a jet; ``exact`` marks it as a polynomial."""
        expected = 2 * dim + (1 if time_dependent else 0)
        if jet.num_vars != expected:
            raise UsageError(f"Hamiltonian jet needs {expected} variables")
        q0_arr = np.array(q0 if q0 is not None else [0.0] * dim, dtype=float)
        grads = jet.gradient()
        off = 1 if time_dependent else 0

        def point(t, p, q):
            p = np.asarray(p, dtype=float)
            q = np.asarray(q, dtype=float) - q0_arr
            p, q = np.broadcast_arrays(p, q)
            parts = [p, q]
            if time_dependent:
                parts = [np.broadcast_to(np.asarray(t, dtype=float), p.shape[:-1])[..., None]] + parts
            return np.concatenate(parts, axis=-1)

        def func(t, p, q):
            return jet(point(t, p, q))

        def grad_func(t, p, q):
            y = point(t, p, q)
            vals = [g(y) for g in grads]
            return (np.stack(vals[off: off + dim], axis=-1),
                    np.stack(vals[off + dim:], axis=-1))

        def jet_source(order: int) -> Jet:
            if order <= jet.max_order:
                return jet.truncate(order)
            if exact:
                return jet.extend(order)
            raise OrderUnderflow(f"Hamiltonian jet stored to order {jet.max_order}, need {order}")

        return cls(dim, func, jet_source, grad_func, time_dependent, tuple(q0_arr), None, exact)


@dataclass(frozen=True)
class CoreJ:
    """``J(q) = (H(0, q), q)``."""

    H: Hamiltonian

    def U(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return float(self.H(np.zeros(self.H.dim), q))

    def __call__(self, q) -> tuple[float, np.ndarray]:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        return self.U(q), q.copy()


def core_J(H: Hamiltonian) -> CoreJ:
    return CoreJ(H)


# --------------------------------------------------------------------------
# the series solver


@dataclass(eq=False)
class EvolutionGenFun:
    """``S(t, p, Q)`` as a jet in ``(t, p, Q - q0)``.

    The ``t^k`` coefficient is carried to space order ``order_t + space_order - k``.
    """

    S: Jet
    order_t: int
    space_order: int
    H: Hamiltonian

    @property
    def dim(self) -> int:
        return self.H.dim

    @property
    def q0(self) -> np.ndarray:
        return np.array(self.H.q0)

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.H.t_var,) + tuple(self.H.p_vars) + tuple(self.H.q_vars)

    def block(self, k: int) -> Jet:
        """Coefficient of ``t^k`` as a jet in ``(p, Q - q0)``."""
        return self.S.blocks(0)[k]

    @cached_property
    def _grad(self) -> list[Jet]:
        return self.S.gradient()

    def point(self, t: float, p, Q) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        Q = np.asarray(Q, dtype=float) - self.q0
        p, Q = np.broadcast_arrays(p, Q)
        tt = np.broadcast_to(np.asarray(t, dtype=float), p.shape[:-1])[..., None]
        return np.concatenate([tt, p, Q], axis=-1)

    def value(self, t: float, p, Q):
        return self.S(self.point(t, p, Q))

    def gradient(self, t: float, p, Q) -> tuple:
        """``(d_t S, d_p S, d_Q S)`` at a point."""
        y = self.point(t, p, Q)
        vals = [g(y) for g in self._grad]
        n = self.dim
        return vals[0], np.stack(vals[1: n + 1], axis=-1), np.stack(vals[n + 1:], axis=-1)

    def residual(self) -> Jet:
        """``d_t S - H(d_Q S, Q)`` as a jet in ``(t, p, Q - q0)``."""
        return self.S.partial(0) - _hj_rhs(self.S, self.H)

    def max_residual(self) -> float:
        """Largest residual coefficient among t-degrees below ``order_t``."""
        res = self.residual()
        blocks = res.blocks(0)
        return max([b.max_abs() for b in blocks[: self.order_t]] + [0.0])

    def to_json(self) -> dict:
        return {
            "S": self.S.to_json(self.variables),
            "order_t": self.order_t,
            "space_order": self.space_order,
            "max_residual_coeff": self.max_residual(),
        }


def _hj_rhs(S: Jet, H: Hamiltonian) -> Jet:
    """``H(d_Q S, Q)`` (with ``t`` inserted in time-dependent mode)."""
    n = H.dim
    nv = S.num_vars
    order = S.max_order - 1
    dQ = [S.partial(1 + n + i) for i in range(n)]
    Q = [Jet.variable(1 + n + i, nv, order) for i in range(n)]
    args = dQ + Q
    if H.time_dependent:
        args = [Jet.variable(0, nv, order)] + args
    return jet_compose(H.jet(order), args)


def hj_series(H: Hamiltonian, order: int, space_order: int | None = None) -> EvolutionGenFun:
    """Solve the HJ equation through ``t^order`` by the recursion
    ``(k + 1) S_{k+1} = [t^k] H(d_Q S, Q)``."""
    if order < 1:
        raise UsageError("order must be at least 1")
    space_order = max(order, 2) if space_order is None else space_order
    if space_order < 2:
        raise UsageError("space order must be at least 2 to hold <p, Q>")
    n = H.dim
    nv = 1 + 2 * n
    M = order + space_order
    S = Jet.zero(nv, M)
    for i in range(n):
        S = S + Jet.variable(1 + n + i, nv, M - 1, H.q0[i]).mul_var(1 + i)
    for k in range(order):
        rhs = _hj_rhs(S, H)
        coeff = rhs.blocks(0)[k].scale(1.0 / (k + 1))
        term = coeff.embed(nv, range(1, nv))
        for _ in range(k + 1):
            term = term.mul_var(0)
        S = S + term
    return EvolutionGenFun(S, order, space_order, H)


def hamiltonian_from_genfun(S: EvolutionGenFun) -> Jet:
    """``H(p, q) = d_t S(0, p, q)``: the ``t``-linear block of ``S``."""
    return S.block(1)


def _remainder_is_strict(F: Jet, k: int, atol: float = 1e-12) -> bool:
    deg0, deg1 = _p_split(F, k)
    return not (np.any(np.abs(F.array[deg0]) > atol) or np.any(np.abs(F.array[deg1]) > atol))


def freeze_time(S: EvolutionGenFun, t: float) -> GeneratingFunction:
    """``F_t(p, Q) = S(t, p, Q)`` as a generating function with base ``q0``.

    The result is strict when it satisfies the micromorphism constraints
    (e.g. ``t = 0`` or ``H(0, .) = 0``) and a plain symplectomorphism germ otherwise.
    """
    n = S.dim
    Ft = S.S.substitute(0, float(t))
    p_vars, q_vars = S.H.p_vars, S.H.q_vars
    mixed = np.array([[Ft.partial(i).partial(n + j).constant_term for j in range(n)]
                      for i in range(n)])
    det = float(np.linalg.det(mixed))
    if abs(det) < DET_THRESHOLD:
        raise DegeneracyError(f"det d2S/dpdQ = {det:.3e} at the base point")
    core_jets = [Ft.partial(i).restrict(range(n, 2 * n)) for i in range(n)]
    residue = Ft
    for i, cj in enumerate(core_jets):
        residue = residue - cj.embed(2 * n, range(n, 2 * n)).mul_var(i)
    strict = _remainder_is_strict(residue, n)
    return GeneratingFunction.from_total(Ft, p_vars, q_vars, S.q0, strict=strict,
                                         exact=S.H.exact and float(t) == 0.0)


def evolution_genfun(S: EvolutionGenFun) -> GeneratingFunction:
    """``S`` as a micromorphism ``T*E (x) T*Q -> T*Q`` with momenta ``(t, p)``,
    positions ``Q`` and core ``J(Q) = (H(0, Q), Q)``."""
    if S.H.time_dependent:
        raise UsageError("the module structure needs a time-independent Hamiltonian")
    H = S.H
    n = H.dim
    M = S.S.max_order
    potential = H.potential_jet(M)
    q0 = np.array(H.q0)
    U_func = core_J(H).U

    def fn(x):
        return np.concatenate([[U_func(x)], x])

    def jet_source(order: int, center: np.ndarray):
        if np.allclose(center, q0, rtol=0, atol=0):
            u = H.potential_jet(order)
        else:
            ys = [Jet.variable(i, n, order, c - b) for i, (c, b) in enumerate(zip(center, q0))]
            u = jet_compose(H.potential_jet(order), ys)
        return (u,) + tuple(Jet.variable(i, n, order, center[i]) for i in range(n))

    core = CoreMap(n, n + 1, fn, None, jet_source, tuple(q0), H.exact)
    nv = 1 + 2 * n
    remainder = S.S - potential.embed(nv, range(1 + n, nv)).truncate(M - 1).mul_var(0)
    for i in range(n):
        remainder = remainder - Jet.variable(1 + n + i, nv, M - 1, q0[i]).mul_var(1 + i)
    return GeneratingFunction(core, remainder, (H.t_var,) + tuple(H.p_vars), H.q_vars, q0)


def energy_monoid_genfun(order: int = 2, names: Sequence[str] = ("t1", "t2"),
                         energy: str = "E") -> GeneratingFunction:
    """``S(t1, t2, E) = (t1 + t2) E``: the cotangent lift of ``E -> (E, E)``."""
    core = CoreMap.from_expr([energy, energy], [energy])
    return GeneratingFunction(core, Jet.zero(3, order), tuple(names), (energy,), exact=True)


def semigroup_defect(H: Hamiltonian, t1: float, t2: float,
                     grid: Iterable[tuple[Sequence[float], Sequence[float]]],
                     order: int, S: EvolutionGenFun | None = None) -> float:
    """Max over the grid of ``|(F_{t2} * F_{t1})(p, Q) - F_{t1+t2}(p, Q)|``."""
    if H.time_dependent:
        raise UsageError("semigroup_defect needs a time-independent Hamiltonian")
    if S is None:
        S = hj_series(H, order)
    F1, F2, F12 = freeze_time(S, t1), freeze_time(S, t2), freeze_time(S, t1 + t2)
    worst = 0.0
    for p, Q in grid:
        composed = star_numeric(F1, F2, p, Q).value
        worst = max(worst, abs(composed - F12.value(p, Q)))
    return worst


@dataclass
class CoreFormReport:
    passed: bool
    worst: float
    U: Callable[[np.ndarray], float]
    offending: list[float] | None = None

    def to_json(self) -> dict:
        return {"verdict": "pass" if self.passed else "fail", "worst": self.worst,
                "offending_sample": self.offending}


def core_form_check(F: GeneratingFunction, samples: int = 10, seed: int = 0,
                    radius: float = 0.5, tol: float = 1e-10) -> CoreFormReport:
    """Check that the core of ``F: T*E (x) T*Q -> T*Q`` has the form ``x -> (U(x), x)``."""
    if F.k != F.l + 1:
        raise UsageError("expected momenta (t, p) with one more entry than the positions")
    phi = core_of(F, samples=0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    offending = None
    for _ in range(samples):
        x = F.base + rng.uniform(-radius, radius, F.l)
        err = float(np.max(np.abs(phi(x)[1:] - x)))
        if err > worst:
            worst = err
            if err > tol:
                offending = x.tolist()
    return CoreFormReport(worst <= tol, worst, lambda x: float(phi(x)[0]), offending)
