"""Flows recovered from evolution generating functions, and their checks.

``recover_flow`` solves ``q = d_p S(t, p, Q)`` for ``Q`` and returns
``(P, Q) = (d_Q S, Q)``.  ``reference_flow`` integrates the same convention
(``Qdot = -H_p``, ``Pdot = +H_q``) with classical RK4 as an oracle.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegeneracyError, NewtonFailure, UsageError
from .genfun import GeneratingFunction, RelationPoint, _vec
from .hamjac import DET_THRESHOLD, EvolutionGenFun, Hamiltonian
from .jetcalc import Jet, monomial_values

JAC_STEP = 1e-4


@dataclass(frozen=True)
class PhasePoint:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = _vec(self.p, name="p")
        q = _vec(self.q, len(p), "q")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise UsageError("phase point entries must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def dim(self) -> int:
        return len(self.p)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.q])

    @classmethod
    def from_array(cls, z) -> PhasePoint:
        z = _vec(z, name="phase point")
        n = len(z) // 2
        return cls(z[:n], z[n:])


@dataclass(frozen=True)
class FlowMap:
    """``evaluator(t, z) -> z'``; ``provenance`` names where it came from."""

    evaluator: Callable[[float, PhasePoint], PhasePoint]
    provenance: str

    def __call__(self, t: float, z: PhasePoint) -> PhasePoint:
        return self.evaluator(t, z)


# --------------------------------------------------------------------------
# flow recovery


class _SDerivatives:
    """Cached derivative jets of ``S`` for repeated pointwise evaluation."""

    def __init__(self, S: EvolutionGenFun):
        n = S.dim
        self.S = S
        self.n = n
        g = S.S.gradient()
        self.dp = g[1: n + 1]
        self.dQ = g[n + 1:]
        self.dpdQ = [[a.partial(1 + n + j) for j in range(n)] for a in self.dp]
        self.size_order = S.S.max_order

    def evaluate(self, t: float, p: np.ndarray, Q: np.ndarray):
        y = np.concatenate([[t], p, Q - self.S.q0])
        vals = monomial_values(len(y), self.size_order, y)

        def ev(j: Jet) -> float:
            return float(vals[: len(j.array)] @ j.array)

        dp = np.array([ev(j) for j in self.dp])
        dQ = np.array([ev(j) for j in self.dQ])
        mixed = np.array([[ev(j) for j in row] for row in self.dpdQ])
        return dp, dQ, mixed


_DERIV_CACHE: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _derivs(S: EvolutionGenFun) -> _SDerivatives:
    d = _DERIV_CACHE.get(S)
    if d is None:
        d = _SDerivatives(S)
        _DERIV_CACHE[S] = d
    return d


def recover_flow(S: EvolutionGenFun, t: float, z: PhasePoint, tol: float = 1e-14,
                 max_iter: int = 50) -> PhasePoint:
    """Solve ``q = d_p S(t, p, Q)`` by Newton from ``Q = q``; return ``(d_Q S, Q)``."""
    d = _derivs(S)
    p, q = z.p, z.q
    if z.dim != S.dim:
        raise UsageError("phase point dimension does not match the generating function")
    Q = q.copy()
    scale = 1.0 + float(np.max(np.abs(q)))
    for _ in range(max_iter + 1):
        dp, dQ, mixed = d.evaluate(t, p, Q)
        r = dp - q
        if float(np.max(np.abs(r))) <= tol * scale:
            return PhasePoint(dQ, Q)
        det = float(np.linalg.det(mixed))
        if abs(det) < DET_THRESHOLD:
            raise DegeneracyError(f"det d2S/dpdQ = {det:.3e} at Q = {Q.tolist()}")
        step = np.linalg.solve(mixed, -r)
        Q = Q + step
        # Newton has converged once the update is at roundoff level
        if float(np.max(np.abs(step))) <= 4 * np.finfo(float).eps * scale:
            dp, dQ, _ = d.evaluate(t, p, Q)
            return PhasePoint(dQ, Q)
    raise NewtonFailure(f"flow recovery did not converge at t={t}, z={z.as_array().tolist()}")


def recovered_flow_map(S: EvolutionGenFun) -> FlowMap:
    return FlowMap(lambda t, z: recover_flow(S, t, z), "recovered-from-genfun")


# --------------------------------------------------------------------------
# reference integrator


def _vector_field(H: Hamiltonian, time_reversed: bool):
    sign = -1.0 if time_reversed else 1.0

    def field(s: float, p: np.ndarray, q: np.ndarray):
        Hp, Hq = H.gradient(p, q, s)
        # HJ sign convention: Qdot = -H_p, Pdot = +H_q
        return sign * Hq, -sign * Hp

    return field


def reference_flow_batch(H: Hamiltonian, p, q, t: float, steps: int,
                         time_reversed: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 with ``steps`` fixed steps; ``p`` and ``q`` may carry batch axes."""
    if steps < 1:
        raise UsageError("steps must be at least 1")
    p = np.array(p, dtype=float)
    q = np.array(q, dtype=float)
    f = _vector_field(H, time_reversed)
    h = float(t) / steps
    s = 0.0
    for _ in range(steps):
        k1p, k1q = f(s, p, q)
        k2p, k2q = f(s + h / 2, p + h / 2 * k1p, q + h / 2 * k1q)
        k3p, k3q = f(s + h / 2, p + h / 2 * k2p, q + h / 2 * k2q)
        k4p, k4q = f(s + h, p + h * k3p, q + h * k3q)
        p = p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        q = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        s += h
    return p, q


def reference_flow(H: Hamiltonian, z: PhasePoint, t: float, steps: int = 10_000,
                   time_reversed: bool = False) -> PhasePoint:
    p, q = reference_flow_batch(H, z.p, z.q, t, steps, time_reversed)
    return PhasePoint(p, q)


def reference_flow_map(H: Hamiltonian, steps: int = 10_000, time_reversed: bool = False) -> FlowMap:
    return FlowMap(lambda t, z: reference_flow(H, z, t, steps, time_reversed),
                   "reference-integrator")


# --------------------------------------------------------------------------
# checks


def symplectic_matrix(n: int) -> np.ndarray:
    """``J`` in the ordering ``(p, q)``."""
    return np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])


def flow_jacobian(flow: FlowMap | Callable, t: float, z: PhasePoint, h: float = JAC_STEP) -> np.ndarray:
    z0 = z.as_array()
    m = len(z0)
    cols = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        plus = flow(t, PhasePoint.from_array(z0 + e)).as_array()
        minus = flow(t, PhasePoint.from_array(z0 - e)).as_array()
        cols.append((plus - minus) / (2 * h))
    return np.column_stack(cols)


def symplecticity_defect(flow: FlowMap | Callable, t: float, z: PhasePoint,
                         h: float = JAC_STEP) -> float:
    """``||M^T J M - J||_F`` for the finite-difference Jacobian ``M``."""
    M = flow_jacobian(flow, t, z, h)
    J = symplectic_matrix(z.dim)
    return float(np.linalg.norm(M.T @ J @ M - J))


def energy_drift(H: Hamiltonian, flow: FlowMap | Callable, z: PhasePoint, t: float) -> float:
    if H.time_dependent:
        raise UsageError("energy drift is only meaningful for time-independent H")
    w = flow(t, z)
    return abs(float(H(w.p, w.q)) - float(H(z.p, z.q)))


@dataclass(frozen=True)
class EvolutionPoint:
    """``((t, E), (p, q), (P, Q))`` on the evolution relation."""

    t: float
    E: float
    p: np.ndarray
    q: np.ndarray
    P: np.ndarray
    Q: np.ndarray

    def as_tuple(self):
        return ((self.t, self.E), (self.p, self.q), (self.P, self.Q))


def evolution_relation_point(S: EvolutionGenFun, t: float, p, Q) -> EvolutionPoint:
    p = _vec(p, S.dim, "p")
    Q = _vec(Q, S.dim, "Q")
    dt, dp, dQ = S.gradient(t, p, Q)
    return EvolutionPoint(float(t), float(dt), p, np.asarray(dp, dtype=float),
                          np.asarray(dQ, dtype=float), Q)


# --------------------------------------------------------------------------
# fiber-graph decomposition


@dataclass(frozen=True)
class FiberGraph:
    """The fiber ``L_x2`` of the vertical fibration and the map ``Psi_x2`` on it."""

    x2: np.ndarray
    F: GeneratingFunction

    def L_param(self, p1) -> tuple[np.ndarray, np.ndarray]:
        """``p1 -> (p1, phi(x2) + d_p f(p1, x2))``."""
        p1 = _vec(p1, self.F.k, "p1")
        dpf, _ = self.F.remainder_grad(p1, self.x2)
        return p1, self.F.core(self.x2) + dpf

    def Psi(self, point: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """``(p1, x1) in L_x2 -> ((T*phi) p1 + d_x f(p1, x2), x2)``."""
        p1, x1 = point
        p1 = _vec(p1, self.F.k, "p1")
        expected = self.L_param(p1)[1]
        if not np.allclose(expected, x1, atol=1e-9, rtol=0):
            raise UsageError("point does not lie on the fiber L_x2")
        _, dxf = self.F.remainder_grad(p1, self.x2)
        return self.F.core.cotangent(self.x2, p1) + dxf, self.x2.copy()

    def graph_point(self, p1) -> RelationPoint:
        src = self.L_param(p1)
        dst = self.Psi(src)
        return RelationPoint(src[0], src[1], dst[0], dst[1])

    def graph(self, p1_grid: Iterable) -> list[RelationPoint]:
        return [self.graph_point(p) for p in p1_grid]


def fiber_decomposition(F: GeneratingFunction, x2, p1_grid: Iterable | None = None) -> FiberGraph:
    return FiberGraph(_vec(x2, F.l, "x2"), F)


def reconstruct_relation(F: GeneratingFunction, x2_grid: Iterable,
                         p1_grid: Sequence) -> list[RelationPoint]:
    """Union over ``x2_grid`` of the fiber graphs."""
    out = []
    for x2 in x2_grid:
        out.extend(fiber_decomposition(F, x2).graph(p1_grid))
    return out
