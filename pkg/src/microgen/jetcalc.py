"""Truncated multivariate Taylor series (jets).

A :class:`Jet` in ``n`` variables of order ``M`` stores every coefficient of
total degree ``<= M`` in a flat vector indexed by a graded monomial basis.
The basis is graded, so the monomials of degree ``<= d`` always form a prefix
of the vector; truncation to a lower order is a slice.

Products use a cached table of index pairs ``(i, j) -> k`` with
``alpha_i + alpha_j = alpha_k`` and ``|alpha_k| <= M``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainViolation, OrderUnderflow, UsageError

DEFAULT_ATOL = 1e-12


# --------------------------------------------------------------------------
# monomial bookkeeping


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _basis(n: int, order: int):
    exps = [alpha for d in range(order + 1) for alpha in _compositions(d, n)]
    exps = np.array(exps, dtype=np.int64).reshape(len(exps), n)
    degrees = exps.sum(axis=1)
    # counts[d] = number of monomials of degree <= d
    counts = np.searchsorted(degrees, np.arange(order + 1), side="right")
    radix = order + 1
    weights = radix ** np.arange(n, dtype=np.int64)
    keys = exps @ weights
    sorter = np.argsort(keys)
    index = {tuple(int(a) for a in row): i for i, row in enumerate(exps)}
    exps.setflags(write=False)
    return exps, degrees, counts, weights, keys[sorter], sorter, index


def _lookup(n: int, order: int, alphas: np.ndarray) -> np.ndarray:
    _, _, _, weights, sorted_keys, sorter, _ = _basis(n, order)
    pos = np.searchsorted(sorted_keys, alphas @ weights)
    return sorter[pos]


def basis_size(n: int, order: int) -> int:
    return math.comb(n + order, n)


def monomials(n: int, order: int) -> np.ndarray:
    """Exponent rows of the graded basis (read-only)."""
    return _basis(n, order)[0]


@lru_cache(maxsize=None)
def _mul_table(n: int, order: int):
    exps, degrees, counts, *_ = _basis(n, order)
    rows_i, rows_j, rows_k = [], [], []
    for i in range(len(exps)):
        nj = counts[order - degrees[i]]
        js = np.arange(nj)
        ks = _lookup(n, order, exps[i] + exps[:nj])
        rows_i.append(np.full(nj, i))
        rows_j.append(js)
        rows_k.append(ks)
    return np.concatenate(rows_i), np.concatenate(rows_j), np.concatenate(rows_k)


@lru_cache(maxsize=None)
def _partial_table(n: int, order: int, var: int):
    exps = _basis(n, order)[0]
    src = np.nonzero(exps[:, var] > 0)[0]
    lowered = exps[src].copy()
    lowered[:, var] -= 1
    dst = _lookup(n, order - 1, lowered)
    return src, dst, exps[src, var].astype(float)


@lru_cache(maxsize=None)
def _reindex_table(n_old: int, n_new: int, order: int, positions: tuple[int, ...]):
    old = _basis(n_old, order)[0]
    new = np.zeros((len(old), n_new), dtype=np.int64)
    new[:, list(positions)] = old
    return _lookup(n_new, order, new)


# --------------------------------------------------------------------------
# the jet type


class Jet:
    """Immutable truncated power series in ``num_vars`` variables.

    Coefficients live in a flat vector over the graded basis; ``coeffs`` gives
    the sparse ``{multi-index: value}`` view (zeros omitted).
    """

    __slots__ = ("num_vars", "max_order", "_c")

    def __init__(self, num_vars: int, max_order: int, coeffs=None):
        if num_vars < 1:
            raise UsageError("a jet needs at least one variable")
        if max_order < 0:
            raise UsageError("max_order must be nonnegative")
        self.num_vars = int(num_vars)
        self.max_order = int(max_order)
        size = basis_size(self.num_vars, self.max_order)
        if coeffs is None:
            c = np.zeros(size)
        elif isinstance(coeffs, Mapping):
            c = np.zeros(size)
            index = _basis(self.num_vars, self.max_order)[6]
            for alpha, value in coeffs.items():
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != self.num_vars or min(alpha) < 0:
                    raise UsageError(f"bad multi-index {alpha} for {self.num_vars} variables")
                if sum(alpha) > self.max_order:
                    raise UsageError(f"multi-index {alpha} exceeds order {self.max_order}")
                c[index[alpha]] += float(value)
        else:
            c = np.array(coeffs, dtype=float)
            if c.shape != (size,):
                raise UsageError(f"coefficient vector must have length {size}")
        c.setflags(write=False)
        self._c = c

    # constructors ---------------------------------------------------------

    @classmethod
    def zero(cls, num_vars: int, max_order: int) -> Jet:
        return cls(num_vars, max_order)

    @classmethod
    def constant(cls, value: float, num_vars: int, max_order: int) -> Jet:
        c = np.zeros(basis_size(num_vars, max_order))
        c[0] = value
        return cls(num_vars, max_order, c)

    @classmethod
    def variable(cls, index: int, num_vars: int, max_order: int, value: float = 0.0) -> Jet:
        """The coordinate jet ``value + y_index``."""
        if not 0 <= index < num_vars:
            raise UsageError(f"variable index {index} out of range")
        c = np.zeros(basis_size(num_vars, max_order))
        c[0] = value
        if max_order >= 1:
            c[1 + index] = 1.0
        return cls(num_vars, max_order, c)

    @classmethod
    def _raw(cls, num_vars: int, max_order: int, c: np.ndarray) -> Jet:
        out = cls.__new__(cls)
        out.num_vars = num_vars
        out.max_order = max_order
        c.setflags(write=False)
        out._c = c
        return out

    # views ----------------------------------------------------------------

    @property
    def array(self) -> np.ndarray:
        return self._c

    @property
    def coeffs(self) -> dict[tuple[int, ...], float]:
        exps = monomials(self.num_vars, self.max_order)
        nz = np.nonzero(self._c)[0]
        return {tuple(int(a) for a in exps[i]): float(self._c[i]) for i in nz}

    def __getitem__(self, alpha: Sequence[int]) -> float:
        alpha = tuple(alpha)
        if sum(alpha) > self.max_order:
            return 0.0
        return float(self._c[_basis(self.num_vars, self.max_order)[6][alpha]])

    @property
    def constant_term(self) -> float:
        return float(self._c[0])

    def degree_part(self, d: int) -> Jet:
        """Homogeneous component of degree ``d``."""
        _, degrees, *_ = _basis(self.num_vars, self.max_order)
        return Jet._raw(self.num_vars, self.max_order, np.where(degrees == d, self._c, 0.0))

    def __repr__(self) -> str:
        terms = ", ".join(f"{k}: {v:.6g}" for k, v in list(self.coeffs.items())[:8])
        more = ", ..." if np.count_nonzero(self._c) > 8 else ""
        return f"Jet(n={self.num_vars}, order={self.max_order}, {{{terms}{more}}})"

    # order handling ------------------------------------------------------

    def truncate(self, order: int) -> Jet:
        if order > self.max_order:
            raise OrderUnderflow(f"cannot raise order {self.max_order} to {order} by truncation")
        if order == self.max_order:
            return self
        n = basis_size(self.num_vars, order)
        return Jet._raw(self.num_vars, order, self._c[:n].copy())

    def extend(self, order: int) -> Jet:
        """Pad with zeros up to ``order``; only meaningful for exact polynomials."""
        if order <= self.max_order:
            return self.truncate(order)
        c = np.zeros(basis_size(self.num_vars, order))
        c[: len(self._c)] = self._c
        return Jet._raw(self.num_vars, order, c)

    def embed(self, num_vars: int, positions: Sequence[int]) -> Jet:
        """Re-express in a larger variable set; variable i becomes ``positions[i]``."""
        positions = tuple(int(p) for p in positions)
        if len(positions) != self.num_vars:
            raise UsageError("embed needs one position per variable")
        idx = _reindex_table(self.num_vars, num_vars, self.max_order, positions)
        c = np.zeros(basis_size(num_vars, self.max_order))
        c[idx] = self._c
        return Jet._raw(num_vars, self.max_order, c)

    # arithmetic -----------------------------------------------------------

    def _coerce(self, other) -> Jet:
        if isinstance(other, Jet):
            if other.num_vars != self.num_vars:
                raise UsageError(
                    f"variable-count mismatch: {self.num_vars} vs {other.num_vars}"
                )
            return other
        return Jet.constant(float(other), self.num_vars, self.max_order)

    def __add__(self, other) -> Jet:
        other = self._coerce(other)
        m = min(self.max_order, other.max_order)
        n = basis_size(self.num_vars, m)
        return Jet._raw(self.num_vars, m, self._c[:n] + other._c[:n])

    __radd__ = __add__

    def __neg__(self) -> Jet:
        return Jet._raw(self.num_vars, self.max_order, -self._c)

    def __sub__(self, other) -> Jet:
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> Jet:
        return self._coerce(other) - self

    def scale(self, factor: float) -> Jet:
        return Jet._raw(self.num_vars, self.max_order, self._c * float(factor))

    def __mul__(self, other) -> Jet:
        if not isinstance(other, Jet):
            return self.scale(other)
        other = self._coerce(other)
        m = min(self.max_order, other.max_order)
        a = self._c[: basis_size(self.num_vars, m)]
        b = other._c[: basis_size(self.num_vars, m)]
        size = len(a)
        if not a[1:].any():
            return Jet._raw(self.num_vars, m, b * a[0])
        if not b[1:].any():
            return Jet._raw(self.num_vars, m, a * b[0])
        ti, tj, tk = _mul_table(self.num_vars, m)
        c = np.bincount(tk, weights=a[ti] * b[tj], minlength=size)
        return Jet._raw(self.num_vars, m, c)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Jet:
        if isinstance(other, Jet):
            return self * jet_elementary("pow_n", other, -1)
        return self.scale(1.0 / float(other))

    def __rtruediv__(self, other) -> Jet:
        return jet_elementary("pow_n", self, -1) * float(other)

    def __pow__(self, n: int) -> Jet:
        if isinstance(n, (int, np.integer)) and n >= 0:
            result = Jet.constant(1.0, self.num_vars, self.max_order)
            base = self
            while n:
                if n & 1:
                    result = result * base
                n >>= 1
                if n:
                    base = base * base
            return result
        return jet_elementary("pow_n", self, n)

    def mul_var(self, index: int) -> Jet:
        """Multiply by coordinate ``index``; the result has order ``max_order + 1``."""
        if not 0 <= index < self.num_vars:
            raise UsageError(f"variable index {index} out of range")
        exps = monomials(self.num_vars, self.max_order)
        shifted = exps.copy()
        shifted[:, index] += 1
        dst = _lookup(self.num_vars, self.max_order + 1, shifted)
        c = np.zeros(basis_size(self.num_vars, self.max_order + 1))
        c[dst] = self._c
        return Jet._raw(self.num_vars, self.max_order + 1, c)

    # calculus -------------------------------------------------------------

    def partial(self, index: int) -> Jet:
        if not 0 <= index < self.num_vars:
            raise UsageError(f"variable index {index} out of range")
        if self.max_order == 0:
            return Jet.zero(self.num_vars, 0)
        src, dst, factor = _partial_table(self.num_vars, self.max_order, index)
        c = np.zeros(basis_size(self.num_vars, self.max_order - 1))
        c[dst] = self._c[src] * factor
        return Jet._raw(self.num_vars, self.max_order - 1, c)

    def gradient(self) -> list[Jet]:
        return [self.partial(i) for i in range(self.num_vars)]

    def __call__(self, point) -> float | np.ndarray:
        return jet_eval(self, point)

    def substitute(self, index: int, value: float) -> Jet:
        """Fix variable ``index`` at a number; the result lives in the other variables.

        This is polynomial substitution: the order is kept, so terms of the
        result near ``max_order`` are exact only if the data were polynomial.
        """
        if self.num_vars == 1:
            raise UsageError("cannot substitute the only variable of a jet")
        exps = monomials(self.num_vars, self.max_order)
        rest = [i for i in range(self.num_vars) if i != index]
        factors = float(value) ** exps[:, index]
        dst = _lookup(self.num_vars - 1, self.max_order, exps[:, rest])
        c = np.bincount(dst, weights=self._c * factors,
                        minlength=basis_size(self.num_vars - 1, self.max_order))
        return Jet._raw(self.num_vars - 1, self.max_order, c)

    def restrict(self, keep: Sequence[int]) -> Jet:
        """Set every variable not in ``keep`` to zero; result is in the kept variables."""
        keep = list(keep)
        exps = monomials(self.num_vars, self.max_order)
        drop = [i for i in range(self.num_vars) if i not in keep]
        sel = np.nonzero(exps[:, drop].sum(axis=1) == 0)[0] if drop else np.arange(len(exps))
        c = np.zeros(basis_size(len(keep), self.max_order))
        c[_lookup(len(keep), self.max_order, exps[sel][:, keep])] = self._c[sel]
        return Jet._raw(len(keep), self.max_order, c)

    def blocks(self, index: int) -> list[Jet]:
        """Coefficients of ``y_index**k`` as jets in the remaining variables.

        Block ``k`` has order ``max_order - k``.
        """
        if self.num_vars == 1:
            return [Jet.constant(float(c), 1, 0) for c in self._c]
        exps = monomials(self.num_vars, self.max_order)
        rest = [i for i in range(self.num_vars) if i != index]
        out = []
        for k in range(self.max_order + 1):
            sel = np.nonzero(exps[:, index] == k)[0]
            order = self.max_order - k
            c = np.zeros(basis_size(self.num_vars - 1, order))
            c[_lookup(self.num_vars - 1, order, exps[sel][:, rest])] = self._c[sel]
            out.append(Jet._raw(self.num_vars - 1, order, c))
        return out

    def compose(self, args: Sequence[Jet], order: int | None = None) -> Jet:
        return jet_compose(self, args, order)

    # comparison / serialisation ------------------------------------------

    def allclose(self, other: Jet, atol: float = DEFAULT_ATOL) -> bool:
        return jet_equal(self, other, atol)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self._c))) if len(self._c) else 0.0

    def to_json(self, names: Sequence[str] | None = None) -> dict:
        names = list(names) if names is not None else [f"y{i}" for i in range(self.num_vars)]
        if len(names) != self.num_vars:
            raise UsageError("one name per variable required")
        return {
            "vars": names,
            "order": self.max_order,
            "coeffs": {",".join(map(str, k)): v for k, v in self.coeffs.items()},
        }

    @classmethod
    def from_json(cls, data: Mapping) -> tuple[Jet, list[str]]:
        names = list(data["vars"])
        coeffs = {}
        for key, value in data.get("coeffs", {}).items():
            alpha = tuple(int(a) for a in str(key).split(",")) if str(key) else ()
            coeffs[alpha] = value
        return cls(len(names), int(data["order"]), coeffs), names


# --------------------------------------------------------------------------
# functional interface


def jet_add(a: Jet, b: Jet) -> Jet:
    return a + b


def jet_mul(a: Jet, b: Jet) -> Jet:
    return a * b


def jet_partial(f: Jet, var_index: int) -> Jet:
    return f.partial(var_index)


def jet_equal(a: Jet, b: Jet, atol: float = DEFAULT_ATOL) -> bool:
    if a.num_vars != b.num_vars:
        return False
    m = min(a.max_order, b.max_order)
    n = basis_size(a.num_vars, m)
    if np.any(np.abs(a.array[n:]) > atol) or np.any(np.abs(b.array[n:]) > atol):
        # data beyond the common order must be negligible for equality
        return False
    return bool(np.all(np.abs(a.array[:n] - b.array[:n]) <= atol))


def monomial_values(num_vars: int, order: int, point) -> np.ndarray:
    """Values of every basis monomial at ``point`` (batch axes allowed)."""
    x = np.asarray(point, dtype=float)
    if x.shape[-1:] != (num_vars,):
        raise UsageError(f"point must have {num_vars} components, got shape {x.shape}")
    return np.prod(x[..., None, :] ** monomials(num_vars, order), axis=-1)


def jet_eval(f: Jet, point) -> float | np.ndarray:
    """Evaluate the truncated polynomial; ``point`` may carry leading batch axes."""
    out = monomial_values(f.num_vars, f.max_order, point) @ f.array
    return float(out) if out.ndim == 0 else out


def jet_compose(f: Jet, args: Sequence[Jet], order: int | None = None) -> Jet:
    """Substitute jets ``args`` for the variables of ``f``.

    Arguments may have nonzero constant terms; polynomial composition then
    re-centres ``f`` implicitly. The output order is the common order of
    ``f`` and the arguments unless a lower ``order`` is requested.
    """
    args = list(args)
    if len(args) != f.num_vars:
        raise UsageError(f"arity mismatch: f has {f.num_vars} variables, got {len(args)} args")
    m = args[0].num_vars
    for a in args:
        if a.num_vars != m:
            raise UsageError("composition arguments must share a variable count")
    common = min([f.max_order] + [a.max_order for a in args])
    if order is None:
        order = common
    elif order > common:
        raise OrderUnderflow(f"requested order {order} exceeds available order {common}")
    args = [a.truncate(order) for a in args]
    one = Jet.constant(1.0, m, order)

    exps = monomials(f.num_vars, f.max_order)
    nz = np.nonzero(f.array)[0]
    if len(nz) == 0:
        return Jet.zero(m, order)

    powers: list[list[Jet]] = [[one] for _ in range(f.num_vars)]

    def power(v: int, e: int) -> Jet:
        lst = powers[v]
        while len(lst) <= e:
            lst.append(lst[-1] * args[v])
        return lst[e]

    last = f.num_vars - 1
    groups: dict[tuple[int, ...], list[tuple[int, float]]] = {}
    for i in nz:
        alpha = tuple(int(a) for a in exps[i])
        groups.setdefault(alpha[:last], []).append((alpha[last], float(f.array[i])))

    prefix_cache: dict[tuple[int, ...], Jet] = {(): one}

    def prefix_product(alpha: tuple[int, ...]) -> Jet:
        if alpha in prefix_cache:
            return prefix_cache[alpha]
        head = prefix_product(alpha[:-1])
        e = alpha[-1]
        val = head if e == 0 else head * power(len(alpha) - 1, e)
        prefix_cache[alpha] = val
        return val

    size = basis_size(m, order)
    total = np.zeros(size)
    for prefix, items in groups.items():
        inner = np.zeros(size)
        for e, coef in items:
            inner += coef * power(last, e).array
        pp = prefix_product(prefix)
        total += (pp * Jet._raw(m, order, inner)).array
    return Jet._raw(m, order, total)


def _univariate_taylor(name: str, c: float, order: int, n: float | None = None) -> list[float]:
    if name == "exp":
        e = math.exp(c)
        return [e / math.factorial(k) for k in range(order + 1)]
    if name == "log":
        if c <= 0:
            raise DomainViolation(f"log of nonpositive constant term {c}")
        return [math.log(c)] + [(-1) ** (k + 1) / (k * c**k) for k in range(1, order + 1)]
    if name in ("sin", "cos"):
        s, co = math.sin(c), math.cos(c)
        cycle = [s, co, -s, -co] if name == "sin" else [co, -s, -co, s]
        return [cycle[k % 4] / math.factorial(k) for k in range(order + 1)]
    if name in ("sqrt", "pow_n"):
        if name == "sqrt":
            if c <= 0:
                raise DomainViolation(f"sqrt of nonpositive constant term {c}")
            n = 0.5
        assert n is not None
        if c < 0 and float(n) != int(n):
            raise DomainViolation(f"non-integer power {n} of negative constant term {c}")
        out, binom = [], 1.0
        for k in range(order + 1):
            out.append(binom * c ** (n - k))
            binom *= (n - k) / (k + 1)
        return out
    raise UsageError(f"unknown elementary function {name!r}")


def jet_elementary(name: str, f: Jet, n: float | None = None) -> Jet:
    """Apply exp/log/sin/cos/sqrt/pow_n to a jet via its univariate Taylor series."""
    c = f.constant_term
    if name == "pow_n":
        if n is None:
            raise UsageError("pow_n needs an exponent")
        if float(n) == int(n) and int(n) >= 0:
            return f ** int(n)
        if c == 0:
            raise DomainViolation(f"power {n} of a jet with zero constant term")
    coeffs = _univariate_taylor(name, c, f.max_order, n)
    g = f - c
    result = Jet.constant(coeffs[-1], f.num_vars, f.max_order)
    for a in reversed(coeffs[:-1]):
        result = result * g + a
    return result


def coordinate_jets(num_vars: int, order: int, base: Iterable[float] | None = None) -> list[Jet]:
    base = list(base) if base is not None else [0.0] * num_vars
    return [Jet.variable(i, num_vars, order, base[i]) for i in range(num_vars)]
