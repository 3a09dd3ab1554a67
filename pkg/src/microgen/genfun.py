"""Local generating functions of symplectic micromorphisms between cotangent charts.

A micromorphism ``T*U1 -> T*U2`` with core map ``phi: U2 -> U1`` is described
in a flat chart by

    F(p1, x2) = <p1, phi(x2)> + f(p1, x2),

with ``f(0, x2) = 0`` and ``d_p f(0, x2) = 0``.  Its relation consists of the
points ``(p1, x1 = d_p F, p2 = d_x F, x2)``.

Jets of ``F`` and ``f`` are taken in the shifted coordinates ``(p1, x2 - base)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import DegeneracyError, MalformedGeneratingFunction, NumericFailure, UsageError
from .expr import Expr, compile_expr, diff, is_polynomial, lower_to_jet, parse, to_source
from .jetcalc import Jet, basis_size, monomial_values

COEFF_ATOL = 1e-12
FD_GRAD_STEP = 1e-6
FD_HESS_STEP = 1e-4


class TruncationWarning(UserWarning):
    pass


def _vec(x, n: int | None = None, name: str = "vector") -> np.ndarray:
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if a.ndim != 1 or (n is not None and a.shape[0] != n):
        raise UsageError(f"{name} must have {n} components, got shape {a.shape}")
    return a


# --------------------------------------------------------------------------
# core maps


@dataclass(frozen=True, eq=False)
class CoreMap:
    """Smooth map ``phi: R^dim_source -> R^dim_target`` with optional jet data.

    ``jet_source(order, center)`` returns one jet per target component, in
    the coordinates ``x - center``.  User callables must be safe to call concurrently.
    """

    dim_source: int
    dim_target: int
    fn: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray] | None = None
    jet_source: Callable[[int, np.ndarray], tuple[Jet, ...]] | None = None
    base: tuple[float, ...] = ()
    exact: bool = False
    exprs: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.base:
            object.__setattr__(self, "base", (0.0,) * self.dim_source)
        if len(self.base) != self.dim_source:
            raise UsageError("core base point has the wrong dimension")
        if self.jet_source is not None:
            at_base = np.array([j.constant_term for j in self.jets(0)])
            direct = self(np.array(self.base))
            if not np.allclose(at_base, direct, atol=1e-10, rtol=0):
                raise UsageError("core callable and jet disagree at the base point")

    def __call__(self, x) -> np.ndarray:
        x = _vec(x, self.dim_source, "core argument")
        return _vec(self.fn(x), self.dim_target, "core value")

    def jacobian(self, x) -> np.ndarray:
        """``(dim_target, dim_source)`` derivative; central differences when no ``jac``."""
        x = _vec(x, self.dim_source, "core argument")
        if self.jac is not None:
            return np.asarray(self.jac(x), dtype=float).reshape(self.dim_target, self.dim_source)
        cols = []
        for i in range(self.dim_source):
            e = np.zeros(self.dim_source)
            e[i] = FD_GRAD_STEP
            cols.append((self(x + e) - self(x - e)) / (2 * FD_GRAD_STEP))
        return np.column_stack(cols)

    def cotangent(self, x, p1) -> np.ndarray:
        """``(T*_x phi) p1``, i.e. the transpose Jacobian applied to ``p1``."""
        return self.jacobian(x).T @ _vec(p1, self.dim_target, "p1")

    def jets(self, order: int, center=None) -> tuple[Jet, ...]:
        """Taylor jets about ``center`` (default: the base point)."""
        if self.jet_source is None:
            raise UsageError("this core map carries no jet representation")
        c = np.array(self.base if center is None else center, dtype=float)
        return tuple(self.jet_source(order, c))

    def compose(self, inner: CoreMap) -> CoreMap:
        """``self o inner``; jets are composed when both sides carry them."""
        if inner.dim_target != self.dim_source:
            raise UsageError("core maps are not composable")
        outer = self

        def fn(x):
            return outer(inner(x))

        def jac(x):
            return outer.jacobian(inner(x)) @ inner.jacobian(x)

        jet_source = None
        if outer.jet_source is not None and inner.jet_source is not None:

            def jet_source(order: int, center: np.ndarray):
                inner_jets = inner.jets(order, center)
                mid = np.array([j.constant_term for j in inner_jets])
                args = [j - c for j, c in zip(inner_jets, mid)]
                return tuple(g.compose(args) for g in outer.jets(order, mid))

        return CoreMap(inner.dim_source, outer.dim_target, fn, jac, jet_source, inner.base,
                       outer.exact and inner.exact)

    # constructors ---------------------------------------------------------

    @classmethod
    def identity(cls, dim: int, base: Sequence[float] | None = None) -> CoreMap:
        base = tuple(float(b) for b in base) if base is not None else (0.0,) * dim

        def jet_source(order: int, center: np.ndarray):
            return tuple(Jet.variable(i, dim, order, center[i]) for i in range(dim))

        return cls(dim, dim, lambda x: np.array(x, dtype=float), lambda x: np.eye(dim),
                   jet_source, base, exact=True)

    @classmethod
    def constant(cls, value: Sequence[float], dim_source: int,
                 base: Sequence[float] | None = None) -> CoreMap:
        value = _vec(value)
        k = len(value)
        base = tuple(float(b) for b in base) if base is not None else (0.0,) * dim_source

        def jet_source(order: int, center: np.ndarray):
            return tuple(Jet.constant(v, dim_source, order) for v in value)

        return cls(dim_source, k, lambda x: value.copy(), lambda x: np.zeros((k, dim_source)),
                   jet_source, base, exact=True)

    @classmethod
    def from_jets(cls, jets: Sequence[Jet], base: Sequence[float] | None = None,
                  exact: bool = False) -> CoreMap:
        jets = tuple(jets)
        l = jets[0].num_vars
        base_arr = np.array(base if base is not None else [0.0] * l, dtype=float)
        grads = [j.gradient() for j in jets]

        def fn(x):
            return np.array([j(np.asarray(x) - base_arr) for j in jets])

        def jac(x):
            y = np.asarray(x) - base_arr
            return np.array([[g(y) for g in row] for row in grads])

        def jet_source(order: int, center: np.ndarray):
            shift = center - base_arr
            if not np.any(shift):
                return tuple(j.extend(order) if exact else j.truncate(order) for j in jets)
            # Re-expansion is exact for polynomial data and a truncated
            # approximation otherwise.
            top = max([order] + [j.max_order for j in jets])
            ys = [Jet.variable(i, l, top, s) for i, s in enumerate(shift)]
            return tuple(j.extend(top).compose(ys).truncate(order) for j in jets)

        return cls(l, len(jets), fn, jac, jet_source, tuple(base_arr), exact=exact)

    @classmethod
    def from_expr(cls, exprs: str | Sequence[str], x_vars: Sequence[str],
                  base: Sequence[float] | None = None) -> CoreMap:
        if isinstance(exprs, str):
            exprs = [exprs]
        x_vars = list(x_vars)
        trees = [parse(s) for s in exprs]
        base = tuple(float(b) for b in base) if base is not None else (0.0,) * len(x_vars)
        funcs = [compile_expr(t, x_vars) for t in trees]
        dfuncs = [[compile_expr(diff(t, v), x_vars) for v in x_vars] for t in trees]

        def fn(x):
            return np.array([f(*x) for f in funcs])

        def jac(x):
            return np.array([[d(*x) for d in row] for row in dfuncs])

        def jet_source(order: int, center: np.ndarray):
            return tuple(lower_to_jet(t, x_vars, center, order) for t in trees)

        return cls(len(x_vars), len(trees), fn, jac, jet_source, base,
                   exact=all(is_polynomial(t) for t in trees),
                   exprs=tuple(to_source(t) for t in trees))


# --------------------------------------------------------------------------
# relation points and the Schwartz transform


@dataclass(frozen=True)
class RelationPoint:
    """A point ``((p1, x1), (p2, x2))`` of a relation ``V`` in ``T*A x T*B``."""

    p1: np.ndarray
    x1: np.ndarray
    p2: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        for name in ("p1", "x1", "p2", "x2"):
            object.__setattr__(self, name, _vec(getattr(self, name), name=name))
        if self.p1.shape != self.x1.shape or self.p2.shape != self.x2.shape:
            raise UsageError("momentum and position blocks must have matching sizes")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p1, self.x1, self.p2, self.x2])

    def allclose(self, other: RelationPoint, atol: float = 1e-12) -> bool:
        a, b = self.as_array(), other.as_array()
        return a.shape == b.shape and bool(np.all(np.abs(a - b) <= atol))

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("p1", "x1", "p2", "x2")}


@dataclass(frozen=True)
class CotangentPoint:
    """A point of ``T*(A x B)``: covector ``(q1, q2)`` over base ``(x1, x2)``."""

    q1: np.ndarray
    q2: np.ndarray
    base1: np.ndarray
    base2: np.ndarray


def schwartz(pt: RelationPoint) -> CotangentPoint:
    return CotangentPoint(-pt.p1, pt.p2.copy(), pt.x1.copy(), pt.x2.copy())


def schwartz_inverse(cp: CotangentPoint) -> RelationPoint:
    return RelationPoint(-cp.q1, cp.base1, cp.q2, cp.base2)


def canonical_embedding(phi: CoreMap, v1, p2, p1, x2) -> RelationPoint:
    """Flat-chart symplectomorphism ``K_phi((v1, p2), (p1, x2))``."""
    x2 = _vec(x2, phi.dim_source, "x2")
    p1 = _vec(p1, phi.dim_target, "p1")
    return RelationPoint(p1, phi(x2) + _vec(v1, phi.dim_target, "v1"),
                         phi.cotangent(x2, p1) + _vec(p2, phi.dim_source, "p2"), x2)


# --------------------------------------------------------------------------
# generating functions


def _p_split(jet: Jet, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Masks of coefficients with p-degree 0 and p-degree 1 (p = first k variables)."""
    from .jetcalc import monomials

    pdeg = monomials(jet.num_vars, jet.max_order)[:, :k].sum(axis=1)
    return pdeg == 0, pdeg == 1


class GeneratingFunction:
    """``F(p1, x2) = <p1, phi(x2)> + f(p1, x2)`` in a flat chart.

    ``strict`` enforces the micromorphism constraints on the remainder.  Frozen
    evolution generating functions of Hamiltonians that move the zero section
    are built with ``strict=False``: they describe a symplectomorphism germ,
    not a micromorphism with core.
    """

    def __init__(self, core: CoreMap, remainder: Jet, p_vars: Sequence[str],
                 x_vars: Sequence[str], base: Sequence[float] | None = None,
                 strict: bool = True, exact: bool = False, total: Jet | None = None):
        self.p_vars = tuple(p_vars)
        self.x_vars = tuple(x_vars)
        self.k, self.l = len(self.p_vars), len(self.x_vars)
        if remainder.num_vars != self.k + self.l:
            raise UsageError(
                f"remainder has {remainder.num_vars} variables, expected {self.k + self.l}"
            )
        if core.dim_source != self.l or core.dim_target != self.k:
            raise UsageError("core map dimensions do not match the chart")
        self.core = core
        self.remainder = remainder
        self.base = np.array(base if base is not None else core.base, dtype=float)
        if self.base.shape != (self.l,):
            raise UsageError("base point must match the x variables")
        if not np.allclose(self.base, core.base, atol=1e-14):
            raise UsageError("generating function and core must share a base point")
        self.strict = strict
        self.exact = exact
        if total is not None:
            # keep the caller's total jet rather than re-adding <p, phi>, which
            # would perturb coefficients at roundoff level
            if total.num_vars != remainder.num_vars:
                raise UsageError("total jet does not match the chart")
            self.__dict__["F"] = total
        if strict:
            self.validate()

    @property
    def order(self) -> int:
        return self.remainder.max_order

    @property
    def variables(self) -> tuple[str, ...]:
        return self.p_vars + self.x_vars

    def validate(self, atol: float = COEFF_ATOL) -> None:
        deg0, deg1 = _p_split(self.remainder, self.k)
        c = self.remainder.array
        if np.any(np.abs(c[deg0]) > atol):
            raise MalformedGeneratingFunction("remainder does not vanish at p = 0")
        if np.any(np.abs(c[deg1]) > atol):
            raise MalformedGeneratingFunction("remainder has a term linear in p")

    # jets -----------------------------------------------------------------

    @cached_property
    def F(self) -> Jet:
        """Total generating function as a jet in ``(p1, x2 - base)``."""
        n = self.k + self.l
        total = self.remainder
        if self.order == 0:
            return total
        positions = list(range(self.k, n))
        for i, phi_i in enumerate(self.core.jets(self.order - 1)):
            total = total + phi_i.embed(n, positions).mul_var(i)
        return total

    @cached_property
    def _d1(self) -> list[Jet]:
        return self.F.gradient()

    @cached_property
    def _d2(self) -> list[list[Jet]]:
        return [d.gradient() for d in self._d1]

    @cached_property
    def _df(self) -> list[Jet]:
        return self.remainder.gradient()

    def _point(self, p1, x2) -> np.ndarray:
        return np.concatenate([_vec(p1, self.k, "p1"), _vec(x2, self.l, "x2") - self.base])

    def _eval(self, jets: Sequence[Jet], y: np.ndarray) -> np.ndarray:
        vals = monomial_values(self.k + self.l, self.order, y)
        out = []
        for j in jets:
            out.append(vals[: basis_size(j.num_vars, j.max_order)] @ j.array)
        return np.array(out)

    def value(self, p1, x2) -> float:
        return float(self._eval([self.F], self._point(p1, x2))[0])

    def grad(self, p1, x2) -> tuple[np.ndarray, np.ndarray]:
        """``(d_p F, d_x F)`` at a point."""
        g = self._eval(self._d1, self._point(p1, x2))
        return g[: self.k], g[self.k:]

    def hessian(self, p1, x2) -> np.ndarray:
        """Full second-derivative matrix in ``(p1, x2)``."""
        n = self.k + self.l
        flat = self._eval([h for row in self._d2 for h in row], self._point(p1, x2))
        return flat.reshape(n, n)

    def local_data(self, p1, x2) -> tuple[float, np.ndarray, np.ndarray]:
        """Value, gradient and Hessian of ``F`` from one monomial evaluation."""
        n = self.k + self.l
        jets = [self.F] + self._d1 + [h for row in self._d2 for h in row]
        out = self._eval(jets, self._point(p1, x2))
        return float(out[0]), out[1: n + 1], out[n + 1:].reshape(n, n)

    def remainder_grad(self, p1, x2) -> tuple[np.ndarray, np.ndarray]:
        y = self._point(p1, x2)
        g = self._eval(self._df, y)
        if not self.exact and self.order >= 1:
            top = self._eval([self.remainder.degree_part(self.order)], y)[0]
            if abs(top) > 1e-8:
                warnings.warn(
                    f"top-order terms contribute {abs(top):.2e} at this point; "
                    "the truncation may be inaccurate", TruncationWarning, stacklevel=3)
        return g[: self.k], g[self.k:]

    # constructors ---------------------------------------------------------

    @classmethod
    def from_total(cls, F: Jet, p_vars: Sequence[str], x_vars: Sequence[str],
                   base: Sequence[float] | None = None, strict: bool = True,
                   exact: bool = False) -> GeneratingFunction:
        """Split a total jet ``F`` into core ``d_p F(0, .)`` and remainder."""
        k, l = len(p_vars), len(x_vars)
        base = np.zeros(l) if base is None else np.asarray(base, dtype=float)
        phi_jets = [F.partial(i).restrict(range(k, k + l)) for i in range(k)]
        if F.max_order == 0:
            phi_jets = [Jet.zero(l, 0) for _ in range(k)]
        core = CoreMap.from_jets(phi_jets, base, exact=exact)
        remainder = F
        positions = list(range(k, k + l))
        for i, phi_i in enumerate(phi_jets):
            remainder = remainder - phi_i.embed(k + l, positions).mul_var(i)
        return cls(core, remainder, p_vars, x_vars, base, strict=strict, exact=exact, total=F)

    @classmethod
    def from_expr(cls, core: str | Sequence[str], remainder: str, p_vars: Sequence[str],
                  x_vars: Sequence[str], order: int,
                  base: Sequence[float] | None = None) -> GeneratingFunction:
        core_map = CoreMap.from_expr(core, x_vars, base)
        tree = parse(remainder)
        variables = list(p_vars) + list(x_vars)
        rbase = [0.0] * len(p_vars) + list(core_map.base)
        f = lower_to_jet(tree, variables, rbase, order)
        return cls(core_map, f, p_vars, x_vars, core_map.base,
                   exact=core_map.exact and is_polynomial(tree))

    def to_json(self) -> dict:
        if self.core.exprs is not None:
            core = {"expr": list(self.core.exprs)}
        else:
            core = {"jet": [j.to_json(self.x_vars)
                            for j in self.core.jets(max(self.order - 1, 0))]}
        return {
            "core": core,
            "remainder": self.remainder.to_json(self.variables),
            "p_vars": list(self.p_vars),
            "x_vars": list(self.x_vars),
            "base": self.base.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict, order: int | None = None) -> GeneratingFunction:
        p_vars, x_vars = list(data["p_vars"]), list(data["x_vars"])
        base = data.get("base")
        rem = data.get("remainder", {"expr": "0"})
        # bare strings / lists are shorthand for {"expr": ...}
        if isinstance(rem, str):
            rem = {"expr": rem}
        if not isinstance(rem, dict):
            raise UsageError("remainder must be an expression string or an object")
        if "expr" in rem:
            if order is None:
                order = int(data.get("order", 8))
            variables = p_vars + x_vars
            rbase = [0.0] * len(p_vars) + list(base or [0.0] * len(x_vars))
            tree = parse(rem["expr"])
            f = lower_to_jet(tree, variables, rbase, order)
            rem_exact = is_polynomial(tree)
        else:
            f, names = Jet.from_json(rem)
            if names != p_vars + x_vars:
                raise UsageError("remainder variables must be p_vars followed by x_vars")
            rem_exact = bool(data.get("exact", False))
        core_spec = data["core"]
        if isinstance(core_spec, (str, list)):
            core_spec = {"expr": [core_spec] if isinstance(core_spec, str) else core_spec}
        if not isinstance(core_spec, dict):
            raise UsageError("core must be a list of expressions or an object")
        if "expr" in core_spec:
            core = CoreMap.from_expr(core_spec["expr"], x_vars, base)
        else:
            jets = [Jet.from_json(j)[0] for j in core_spec["jet"]]
            core = CoreMap.from_jets(jets, base, exact=rem_exact)
        return cls(core, f, p_vars, x_vars, core.base, exact=core.exact and rem_exact)


def identity_genfun(dim: int = 1, order: int = 8, base: Sequence[float] | None = None,
                    p_vars: Sequence[str] | None = None,
                    x_vars: Sequence[str] | None = None) -> GeneratingFunction:
    """``E(p, x) = <p, x>``, the generating function of the identity."""
    p_vars = p_vars or ([f"p{i}" for i in range(dim)] if dim > 1 else ["p"])
    x_vars = x_vars or ([f"x{i}" for i in range(dim)] if dim > 1 else ["x"])
    core = CoreMap.identity(dim, base)
    return GeneratingFunction(core, Jet.zero(2 * dim, order), p_vars, x_vars, core.base,
                              exact=True)


def cotangent_lift(phi: CoreMap, order: int = 8, p_vars: Sequence[str] | None = None,
                   x_vars: Sequence[str] | None = None) -> GeneratingFunction:
    """Generating function ``<p1, phi(x2)>`` with zero remainder."""
    k, l = phi.dim_target, phi.dim_source
    p_vars = p_vars or ([f"p{i}" for i in range(k)] if k > 1 else ["p"])
    x_vars = x_vars or ([f"x{i}" for i in range(l)] if l > 1 else ["x"])
    return GeneratingFunction(phi, Jet.zero(k + l, order), p_vars, x_vars, phi.base,
                              exact=phi.exact)


def tensor(F: GeneratingFunction, G: GeneratingFunction) -> GeneratingFunction:
    """Generating function of the product micromorphism ``F (x) G``."""
    order = min(F.order, G.order)
    k, l = F.k + G.k, F.l + G.l
    fF = F.remainder.truncate(order).embed(k + l, list(range(F.k)) + [k + i for i in range(F.l)])
    fG = G.remainder.truncate(order).embed(
        k + l, [F.k + i for i in range(G.k)] + [k + F.l + i for i in range(G.l)])
    cF, cG = F.core, G.core

    def fn(x):
        return np.concatenate([cF(x[: F.l]), cG(x[F.l:])])

    def jac(x):
        out = np.zeros((k, l))
        out[: F.k, : F.l] = cF.jacobian(x[: F.l])
        out[F.k:, F.l:] = cG.jacobian(x[F.l:])
        return out

    def jet_source(m: int, center: np.ndarray):
        left = [j.embed(l, range(F.l)) for j in cF.jets(m, center[: F.l])]
        right = [j.embed(l, range(F.l, l)) for j in cG.jets(m, center[F.l:])]
        return tuple(left + right)

    core = CoreMap(l, k, fn, jac, jet_source, tuple(cF.base) + tuple(cG.base),
                   cF.exact and cG.exact)
    p_vars = _unique_names(F.p_vars + G.p_vars)
    x_vars = _unique_names(F.x_vars + G.x_vars)
    return GeneratingFunction(core, fF + fG, p_vars, x_vars, core.base,
                              strict=F.strict and G.strict, exact=F.exact and G.exact)


def _unique_names(names: Sequence[str]) -> tuple[str, ...]:
    seen: dict[str, int] = {}
    out = []
    for n in names:
        if n in seen:
            seen[n] += 1
            out.append(f"{n}{seen[n]}")
        else:
            seen[n] = 0
            out.append(n)
    return tuple(out)


# --------------------------------------------------------------------------
# operations on generating functions


def sample_relation(F: GeneratingFunction, p1, x2) -> RelationPoint:
    """``(p1, phi(x2) + d_p f, (T*phi) p1 + d_x f, x2)``."""
    p1 = _vec(p1, F.k, "p1")
    x2 = _vec(x2, F.l, "x2")
    dpf, dxf = F.remainder_grad(p1, x2)
    return RelationPoint(p1, F.core(x2) + dpf, F.core.cotangent(x2, p1) + dxf, x2)


def core_of(F: GeneratingFunction, samples: int = 5, seed: int = 0) -> CoreMap:
    """Recover ``phi = d_p F(0, .)`` from the total jet and check it against the stored core."""
    k, l = F.k, F.l
    Fj = F.F
    at_zero = Fj.restrict(range(k, k + l))
    if at_zero.max_abs() > COEFF_ATOL:
        raise MalformedGeneratingFunction("F(0, x) does not vanish")
    if Fj.max_order == 0:
        jets = [Jet.zero(l, 0) for _ in range(k)]
    else:
        jets = [Fj.partial(i).restrict(range(k, k + l)) for i in range(k)]
    recovered = CoreMap.from_jets(jets, F.base, exact=F.exact)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        x = F.base + rng.uniform(-0.1, 0.1, l)
        if not np.allclose(recovered(x), F.core(x), atol=1e-10, rtol=0):
            raise MalformedGeneratingFunction(
                f"stored core disagrees with d_p F(0, x) at x = {x.tolist()}")
    return recovered


def deformation_map(F: GeneratingFunction, pt: RelationPoint) -> RelationPoint:
    """``R(p1, x1, p2, x2) = (p1, x1 + d_p f, p2 + d_x f, x2)``."""
    dpf, dxf = F.remainder_grad(pt.p1, pt.x2)
    return RelationPoint(pt.p1, pt.x1 + dpf, pt.p2 + dxf, pt.x2)


def lift_point(phi: CoreMap, p1, x2) -> RelationPoint:
    """Point ``((p1, phi(x2)), ((T*phi) p1, x2))`` of the cotangent lift."""
    return canonical_embedding(phi, np.zeros(phi.dim_target), np.zeros(phi.dim_source), p1, x2)


def omega_bar(pt_a: RelationPoint, pt_b: RelationPoint) -> float:
    """``(-dp1^dx1 + dp2^dx2)`` evaluated on two tangent vectors stored as points."""
    return float(-(pt_a.p1 @ pt_b.x1 - pt_b.p1 @ pt_a.x1)
                 + (pt_a.p2 @ pt_b.x2 - pt_b.p2 @ pt_a.x2))


def lagrangian_defect(sampler: Callable[[np.ndarray], RelationPoint], base, h: float = 1e-4,
                      trials: int = 50, seed: int = 0) -> float:
    """Largest ``|omega_bar(d1, d2)|`` over random unit tangent pairs at ``sampler(base)``."""
    base = _vec(base, name="base")
    m = len(base)
    try:
        cols = []
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            cols.append((sampler(base + e).as_array() - sampler(base - e).as_array()) / (2 * h))
        template = sampler(base)
    except (ArithmeticError, ValueError) as exc:
        raise NumericFailure(f"sampler evaluation failed: {exc}") from exc
    jac = np.column_stack(cols)
    sizes = [len(template.p1), len(template.x1), len(template.p2), len(template.x2)]
    cuts = np.cumsum(sizes)[:-1]

    def as_point(v: np.ndarray) -> RelationPoint:
        return RelationPoint(*np.split(v, cuts))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        a, b = rng.normal(size=m), rng.normal(size=m)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        worst = max(worst, abs(omega_bar(as_point(jac @ a), as_point(jac @ b))))
    return worst


def relation_sampler(F: GeneratingFunction) -> Callable[[np.ndarray], RelationPoint]:
    """Sampler ``u = (p1, x2) -> sample_relation(F, p1, x2)`` for ``lagrangian_defect``."""
    def sampler(u):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            return sample_relation(F, u[: F.k], u[F.k:])
    return sampler


# --------------------------------------------------------------------------
# Morse-Bott classification


@dataclass
class MorseBottSample:
    point: np.ndarray
    verdict: str  # "clean" | "degenerate"
    kernel_dim: int
    singular_values: np.ndarray
    angle: float


@dataclass
class MorseBottReport:
    samples: list[MorseBottSample] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return all(s.verdict == "clean" for s in self.samples)

    @property
    def verdict(self) -> str:
        return "clean" if self.clean else "degenerate"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "samples": [
                {"point": s.point.tolist(), "verdict": s.verdict, "kernel_dim": s.kernel_dim,
                 "singular_values": s.singular_values.tolist(), "angle": s.angle}
                for s in self.samples
            ],
        }


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_GRAD_STEP) -> np.ndarray:
    g = np.zeros(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_hessian(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_HESS_STEP) -> np.ndarray:
    n = len(x)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej)
                                 - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return H


def morse_bott_check(f: Callable[[np.ndarray], float], critical_param: Callable, samples,
                     tol: float = 1e-6, angle_tol: float = 1e-4) -> MorseBottReport:
    """Sample-based test that the critical submanifold parametrised by
    ``critical_param`` is nondegenerate (Hessian kernel = tangent space)."""
    report = MorseBottReport()
    for s in samples:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        c = len(s)
        x = _vec(critical_param(s), name="critical point")
        n = len(x)
        grad = fd_gradient(lambda y: float(f(y)), x)
        if np.linalg.norm(grad) >= tol:
            raise UsageError(f"sample {x.tolist()} is not critical: |grad f| = {np.linalg.norm(grad):.3e}")
        H = fd_hessian(lambda y: float(f(y)), x)
        _, sv, vt = np.linalg.svd(H)
        smax = sv[0] if len(sv) else 0.0
        if c:
            cols = []
            for i in range(c):
                e = np.zeros(c)
                e[i] = FD_HESS_STEP
                cols.append((_vec(critical_param(s + e)) - _vec(critical_param(s - e)))
                            / (2 * FD_HESS_STEP))
            tangent, tsv, _ = np.linalg.svd(np.column_stack(cols), full_matrices=False)
            if tsv[-1] < 1e-8 * max(tsv[0], 1e-300):
                raise DegeneracyError("critical_param is not an immersion at this sample")
        else:
            tangent = np.zeros((n, 0))
        if smax == 0.0:
            ok = c == n
            report.samples.append(MorseBottSample(x, "clean" if ok else "degenerate", n, sv,
                                                  0.0))
            continue
        kernel = vt[sv < tol * smax].T
        kdim = kernel.shape[1]
        angle = 0.0
        if kdim and c:
            residual = kernel - tangent @ (tangent.T @ kernel)
            angle = float(np.linalg.norm(residual, 2))
        ok = kdim == c and angle < angle_tol
        report.samples.append(MorseBottSample(x, "clean" if ok else "degenerate", kdim, sv, angle))
    return report
