"""Composition ``G * F`` of generating functions.

The composite is the critical value of

    H(p2, x2) = F(p1, x2) + G(p2, x3) - <p2, x2>

over the intermediate variables.  ``star_series`` solves the critical-point
system as jets in ``(p1, x3)``; ``star_numeric`` solves it pointwise by Newton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NewtonFailure, NumericFailure, OrderUnderflow, UsageError
from .genfun import GeneratingFunction, _vec
from .jetcalc import Jet, jet_compose

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50


@dataclass(frozen=True)
class CriticalPoint:
    p2_bar: np.ndarray
    x2_bar: np.ndarray
    residual: float
    iterations: int


@dataclass(frozen=True)
class StarResult:
    value: float
    cp: CriticalPoint

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "p2_bar": self.cp.p2_bar.tolist(),
            "x2_bar": self.cp.x2_bar.tolist(),
            "residual": self.cp.residual,
            "iterations": self.cp.iterations,
        }


def _check_compatible(F: GeneratingFunction, G: GeneratingFunction) -> None:
    if F.l != G.k:
        raise UsageError(
            f"cannot compose: F has {F.l} target positions but G has {G.k} source momenta")


def _system(F: GeneratingFunction, G: GeneratingFunction, p1, x3, p2, x2):
    """Residual ``K`` and its Jacobian in the unknowns ``(p2, x2)``."""
    l = F.l
    _, gF, hF = F.local_data(p1, x2)
    _, gG, hG = G.local_data(p2, x3)
    K = np.concatenate([gF[F.k:] - p2, gG[:G.k] - x2])
    J = np.block([[-np.eye(l), hF[F.k:, F.k:]], [hG[:G.k, :G.k], -np.eye(l)]])
    return K, J


def newton_critical_point(F: GeneratingFunction, G: GeneratingFunction, p1, x3,
                          p2_0=None, x2_0=None, tol: float = NEWTON_TOL,
                          max_iter: int = NEWTON_MAX_ITER) -> CriticalPoint:
    """Newton on ``K(p2, x2) = (d_x F(p1, x2) - p2, d_p G(p2, x3) - x2)``."""
    _check_compatible(F, G)
    p1 = _vec(p1, F.k, "p1")
    x3 = _vec(x3, G.l, "x3")
    p2 = np.zeros(F.l) if p2_0 is None else _vec(p2_0, F.l, "p2 guess").copy()
    x2 = G.core(x3) if x2_0 is None else _vec(x2_0, F.l, "x2 guess").copy()
    for it in range(max_iter + 1):
        K, J = _system(F, G, p1, x3, p2, x2)
        res = float(np.linalg.norm(K))
        if not np.isfinite(res):
            raise NewtonFailure(f"Newton diverged at p1={p1.tolist()}, x3={x3.tolist()}")
        if res < tol:
            return CriticalPoint(p2, x2, res, it)
        if it == max_iter:
            break
        try:
            step = np.linalg.solve(J, -K)
        except np.linalg.LinAlgError as exc:
            raise NewtonFailure("singular Newton Jacobian") from exc
        p2 = p2 + step[: F.l]
        x2 = x2 + step[F.l:]
    raise NewtonFailure(
        f"Newton did not converge in {max_iter} iterations (residual {res:.3e}) "
        f"at p1={p1.tolist()}, x3={x3.tolist()}")


def star_numeric(F: GeneratingFunction, G: GeneratingFunction, p1, x3,
                 tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> StarResult:
    """Pointwise value of ``G * F`` at ``(p1, x3)``."""
    cp = newton_critical_point(F, G, p1, x3, tol=tol, max_iter=max_iter)
    value = F.value(p1, cp.x2_bar) + G.value(cp.p2_bar, x3) - float(cp.p2_bar @ cp.x2_bar)
    return StarResult(value, cp)


def star_gradient(F: GeneratingFunction, G: GeneratingFunction, p1, x3,
                  cp: CriticalPoint | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(d_p F(p1, x2_bar), d_x G(p2_bar, x3))``, the gradient of ``G * F``."""
    if cp is None:
        cp = newton_critical_point(F, G, p1, x3)
    dpF, _ = F.grad(p1, cp.x2_bar)
    _, dxG = G.grad(cp.p2_bar, x3)
    return dpF, dxG


def _exact_sum(terms: Sequence[Jet], n: int, order: int) -> Jet:
    """Coefficient-wise correctly rounded sum, so telescoping terms cancel exactly."""
    stack = np.stack([t.extend(order).array for t in terms])
    return Jet(n, order, np.array([math.fsum(col) for col in stack.T]))


def star_series(F: GeneratingFunction, G: GeneratingFunction,
                order: int | None = None, max_passes: int | None = None) -> GeneratingFunction:
    """``G * F`` as a generating function in ``(F.p_vars, G.x_vars)``.

    Functional iteration ``p2 <- d_x F(p1, x2)``, ``x2 <- d_p G(p2, x3)`` from
    ``(0, psi)``.  For strict inputs each pass fixes one more total degree.
    """
    _check_compatible(F, G)
    if order is None:
        order = min(F.order, G.order)
    if order > min(F.order, G.order):
        raise OrderUnderflow(
            f"order {order} exceeds stored orders {F.order} and {G.order}")
    if order < 1:
        raise UsageError("star_series needs order >= 1")
    k, l, m = F.k, F.l, G.l
    n = k + m
    N = order
    FF = F.F.truncate(N)
    GG = G.F.truncate(N)
    b2 = F.base

    P1 = [Jet.variable(i, n, N) for i in range(k)]
    Y3 = [Jet.variable(k + j, n, N) for j in range(m)]
    P1d = [a.truncate(N - 1) for a in P1]
    Y3d = [a.truncate(N - 1) for a in Y3]
    dFx = [FF.partial(k + j) for j in range(l)]
    dGp = [GG.partial(j) for j in range(l)]

    x2 = [j.embed(n, range(k, n)) for j in G.core.jets(N - 1)]
    p2 = [Jet.zero(n, N - 1) for _ in range(l)]
    if max_passes is None:
        max_passes = N + 2 if (F.strict and G.strict) else max(N + 2, 200)
    stable = False
    for _ in range(max_passes):
        shifted = [x - b for x, b in zip(x2, b2)]
        new_p2 = [jet_compose(d, P1d + shifted) for d in dFx]
        new_x2 = [jet_compose(d, new_p2 + Y3d) for d in dGp]
        change = max(max((a - b).max_abs() for a, b in zip(new_p2, p2)),
                     max((a - b).max_abs() for a, b in zip(new_x2, x2)))
        scale = 1.0 + max(max(a.max_abs() for a in new_p2), max(a.max_abs() for a in new_x2))
        p2, x2 = new_p2, new_x2
        if change <= 1e-15 * scale:
            stable = True
            break
    if not stable:
        raise NumericFailure("critical-point series did not stabilise")

    # Degree-N coefficients of (p2, x2) do not reach the critical value, so
    # padding them with zeros keeps the value exact through order N.
    p2e = [a.extend(N) for a in p2]
    x2e = [a.extend(N) for a in x2]
    terms = [jet_compose(FF, P1 + [x - b for x, b in zip(x2e, b2)]),
             jet_compose(GG, p2e + Y3)]
    terms += [(a * b).scale(-1.0) for a, b in zip(p2e, x2e)]
    value = _exact_sum(terms, n, N)
    core = F.core.compose(G.core)
    remainder = value
    for i, phi_i in enumerate(core.jets(N - 1)):
        remainder = remainder - phi_i.embed(n, range(k, n)).mul_var(i)
    return GeneratingFunction(core, remainder, F.p_vars, G.x_vars, G.base,
                              strict=F.strict and G.strict, total=value)


# --------------------------------------------------------------------------
# monicity


@dataclass
class MonicityReport:
    unique: bool
    worst_spread: float
    max_iterations: int
    failed_starts: int
    points: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "unique": self.unique,
            "worst_spread": self.worst_spread,
            "max_iterations": self.max_iterations,
            "failed_starts": self.failed_starts,
            "points": self.points,
        }


def monicity_probe(F: GeneratingFunction, G: GeneratingFunction,
                   grid: Iterable[tuple[Sequence[float], Sequence[float]]], starts: int = 20,
                   tol: float = 1e-9, radius: float = 0.1, seed: int = 0,
                   max_iter: int = NEWTON_MAX_ITER) -> MonicityReport:
    """Multi-start Newton around ``(0, psi(x3))``; all converged runs must agree."""
    _check_compatible(F, G)
    rng = np.random.default_rng(seed)
    worst = 0.0
    max_its = 0
    failed = 0
    unique = True
    rows = []
    for p1, x3 in grid:
        p1 = _vec(p1, F.k, "p1")
        x3 = _vec(x3, G.l, "x3")
        anchor = G.core(x3)
        found = []
        for _ in range(starts):
            p2_0 = rng.uniform(-radius, radius, F.l)
            x2_0 = anchor + rng.uniform(-radius, radius, F.l)
            try:
                cp = newton_critical_point(F, G, p1, x3, p2_0, x2_0, max_iter=max_iter)
            except NumericFailure:
                failed += 1
                continue
            found.append(np.concatenate([cp.p2_bar, cp.x2_bar]))
            max_its = max(max_its, cp.iterations)
        if not found:
            unique = False
            rows.append({"p1": p1.tolist(), "x3": x3.tolist(), "converged": 0, "spread": None})
            continue
        pts = np.array(found)
        spread = float(np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)))
        worst = max(worst, spread)
        if spread > tol:
            unique = False
        rows.append({"p1": p1.tolist(), "x3": x3.tolist(), "converged": len(found),
                     "spread": spread})
    return MonicityReport(unique, worst, max_its, failed, rows)
