"""Matrix Lie algebras: exp, log, BCH and the symmetry generating function.

``S_G(v, w, mu) = <mu, log(exp v exp w)>`` generates the group-multiplication
relation on ``T*g*``.  Its associativity is checked numerically and the
relation ``W_G`` of a hamiltonian action is sampled for lagrangian checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainViolation, NumericFailure, UsageError
from .genfun import RelationPoint

STRUCTURE_ATOL = 1e-12
COMMUTE_RTOL = 1e-14

L_X = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
L_Y = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
L_Z = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
SL2_E = np.array([[0.0, 1.0], [0.0, 0.0]])
SL2_F = np.array([[0.0, 0.0], [1.0, 0.0]])
SL2_H = np.array([[1.0, 0.0], [0.0, -1.0]])

BASES: dict[str, tuple[np.ndarray, ...]] = {
    "so3": (L_X, L_Y, L_Z),
    "sl2": (SL2_E, SL2_F, SL2_H),
    "abelian": (np.array([[1.0]]),),
}


@dataclass(frozen=True, eq=False)
class MatLieElement:
    """A ``d x d`` matrix tagged with its algebra (``so3``, ``sl2``, ``abelian`` or ``generic``)."""

    entries: np.ndarray
    algebra: str = "generic"
    basis: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.array(self.entries, dtype=float)
        if X.ndim != 2 or X.shape[0] != X.shape[1]:
            raise UsageError("Lie algebra elements must be square matrices")
        if self.algebra == "so3":
            if X.shape != (3, 3) or np.max(np.abs(X + X.T)) > STRUCTURE_ATOL:
                raise UsageError("so3 elements must be antisymmetric 3x3 matrices")
        elif self.algebra == "sl2":
            if X.shape != (2, 2) or abs(np.trace(X)) > STRUCTURE_ATOL:
                raise UsageError("sl2 elements must be traceless 2x2 matrices")
        elif self.algebra not in ("generic", "abelian"):
            raise UsageError(f"unknown algebra tag {self.algebra!r}")
        X.setflags(write=False)
        object.__setattr__(self, "entries", X)
        if self.basis is None and self.algebra in BASES:
            object.__setattr__(self, "basis", BASES[self.algebra])

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_coords(cls, coords: Sequence[float], algebra: str = "so3",
                    basis: Sequence[np.ndarray] | None = None) -> MatLieElement:
        basis = tuple(np.asarray(b, dtype=float) for b in basis) if basis is not None else BASES[algebra]
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (len(basis),):
            raise UsageError(f"need {len(basis)} coordinates for this algebra")
        return cls(sum(c * b for c, b in zip(coords, basis)), algebra, basis)

    def coords(self) -> np.ndarray:
        """Coefficients against the fixed basis (least squares for generic bases)."""
        if self.basis is None:
            return self.entries.ravel().copy()
        A = np.column_stack([b.ravel() for b in self.basis])
        sol, *_ = np.linalg.lstsq(A, self.entries.ravel(), rcond=None)
        return sol

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def _like(self, X: np.ndarray) -> MatLieElement:
        if self.algebra == "so3":
            X = (X - X.T) / 2
        elif self.algebra == "sl2":
            X = X - np.trace(X) / 2 * np.eye(2)
        return MatLieElement(X, self.algebra, self.basis)

    def __add__(self, other: MatLieElement) -> MatLieElement:
        return self._like(self.entries + other.entries)

    def __sub__(self, other: MatLieElement) -> MatLieElement:
        return self._like(self.entries - other.entries)

    def __neg__(self) -> MatLieElement:
        return self._like(-self.entries)

    def __mul__(self, c: float) -> MatLieElement:
        return self._like(float(c) * self.entries)

    __rmul__ = __mul__

    def bracket(self, other: MatLieElement) -> MatLieElement:
        A, B = self.entries, other.entries
        return self._like(A @ B - B @ A)


@dataclass(frozen=True)
class CoAlgebraElement:
    """``mu`` in coordinates dual to the algebra basis; the pairing is Euclidean."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if not np.all(np.isfinite(mu)):
            raise UsageError("coalgebra coordinates must be finite")
        object.__setattr__(self, "mu", mu)

    def pair(self, X: MatLieElement) -> float:
        c = X.coords()
        if c.shape != self.mu.shape:
            raise UsageError("coalgebra element does not match the algebra dimension")
        return float(self.mu @ c)


def _as_matrix(X) -> np.ndarray:
    return X.entries if isinstance(X, MatLieElement) else np.asarray(X, dtype=float)


# --------------------------------------------------------------------------
# exp / log


def mat_exp(X) -> np.ndarray:
    """Scaling and squaring with a Taylor series."""
    A = _as_matrix(X)
    d = A.shape[0]
    nrm = float(np.linalg.norm(A, 1))
    s = max(0, int(np.ceil(np.log2(nrm / 0.25)))) if nrm > 0.25 else 0
    A = A / 2.0 ** s
    term = np.eye(d)
    out = np.eye(d)
    for k in range(1, 30):
        term = term @ A / k
        out = out + term
        if np.max(np.abs(term)) <= 1e-18 * max(1.0, np.max(np.abs(out))):
            break
    for _ in range(s):
        out = out @ out
    return out


def _sqrtm_db(M: np.ndarray, iters: int = 60) -> np.ndarray:
    """Principal square root by the Denman-Beavers iteration."""
    Y, Z = M.copy(), np.eye(M.shape[0])
    for _ in range(iters):
        Yn = (Y + np.linalg.inv(Z)) / 2
        Zn = (Z + np.linalg.inv(Y)) / 2
        change = np.max(np.abs(Yn - Y))
        Y, Z = Yn, Zn
        if change <= 1e-13 * max(1.0, np.max(np.abs(Y))):
            # quadratic convergence: one more pass reaches roundoff
            return (Y + np.linalg.inv(Z)) / 2
    raise NumericFailure("matrix square root did not converge")


def mat_log(M, algebra: str = "generic", basis=None) -> MatLieElement:
    """Principal logarithm for ``||M - I||_2 < 1``: square roots, then the Mercator series."""
    M = np.asarray(_as_matrix(M), dtype=float)
    d = M.shape[0]
    I = np.eye(d)
    dist = float(np.linalg.norm(M - I, 2))
    if not dist < 1.0:
        raise DomainViolation(f"||M - I|| = {dist:.4f} is outside the logarithm's domain")
    k = 0
    while float(np.linalg.norm(M - I, 2)) > 0.25:
        M = _sqrtm_db(M)
        k += 1
    A = M - I
    power = A.copy()
    out = np.zeros_like(A)
    for j in range(1, 60):
        out = out + ((-1) ** (j + 1)) * power / j
        power = power @ A
        if np.max(np.abs(power)) <= 1e-18:
            break
    return _tagged(out * 2.0 ** k, algebra, basis)


def _tagged(X: np.ndarray, algebra: str, basis) -> MatLieElement:
    """Project roundoff back onto the algebra before tagging."""
    if algebra == "so3":
        X = (X - X.T) / 2
    elif algebra == "sl2":
        X = X - np.trace(X) / X.shape[0] * np.eye(X.shape[0])
    return MatLieElement(X, algebra, tuple(basis) if basis is not None else None)


def bch(v: MatLieElement, w: MatLieElement) -> MatLieElement:
    """``log(exp v exp w)``, computed numerically."""
    if v.dim != w.dim:
        raise UsageError("BCH arguments must have the same size")
    A, B = v.entries, w.entries
    scale = np.linalg.norm(A) * np.linalg.norm(B)
    if v.algebra == "abelian" or np.linalg.norm(A @ B - B @ A) <= COMMUTE_RTOL * scale:
        # commuting arguments: exp(v) exp(w) = exp(v + w); a commutator at
        # roundoff level would only perturb the result at roundoff level
        return _tagged(A + B, v.algebra, v.basis)
    return mat_log(mat_exp(v) @ mat_exp(w), v.algebra, v.basis)


def symmetry_genfun(v: MatLieElement, w: MatLieElement, mu: CoAlgebraElement) -> float:
    """``S_G(v, w, mu) = <mu, log(exp v exp w)>``."""
    return mu.pair(bch(v, w))


def assoc_defect(u: MatLieElement, v: MatLieElement, w: MatLieElement,
                 mu: CoAlgebraElement) -> float:
    """``|<mu, bch(bch(u, v), w) - bch(u, bch(v, w))>|``."""
    left = bch(bch(u, v), w)
    right = bch(u, bch(v, w))
    return abs(mu.pair(left) - mu.pair(right))


def random_element(rng: np.random.Generator, algebra: str, norm: float) -> MatLieElement:
    """Random element with Frobenius norm exactly ``norm``."""
    basis = BASES[algebra]
    X = MatLieElement.from_coords(rng.normal(size=len(basis)), algebra)
    return X * (norm / X.norm()) if X.norm() > 0 else X


# --------------------------------------------------------------------------
# the symmetry relation W_G


def so3_action(g: np.ndarray, p: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cotangent lift of the rotation action on ``R^3``: ``(p, q) -> (g p, g q)``."""
    return g @ p, g @ q


def so3_momentum(p: np.ndarray, q: np.ndarray, convention: str = "pxq") -> np.ndarray:
    """Angular momentum in the ``(L_x, L_y, L_z)`` coordinates.

    ``pxq`` gives ``p x q``, the sign that makes ``W_G`` lagrangian for the
    form used here; ``textbook`` gives ``q x p``.
    """
    if convention == "pxq":
        return np.cross(p, q)
    if convention == "textbook":
        return np.cross(q, p)
    raise UsageError(f"unknown momentum convention {convention!r}")


def ad_matrix(v: MatLieElement) -> np.ndarray:
    """Matrix of ``ad_v`` in the algebra basis: column ``b`` holds ``[v, e_b]``."""
    if v.basis is None:
        raise UsageError("ad_matrix needs an algebra basis")
    return np.column_stack([v.bracket(MatLieElement(b, v.algebra, v.basis)).coords()
                            for b in v.basis])


def dexp_matrix(v: MatLieElement, side: str = "right", terms: int = 30) -> np.ndarray:
    """Right-trivialised ``(e^ad - 1)/ad`` or left-trivialised ``(1 - e^-ad)/ad``."""
    A = ad_matrix(v)
    if side == "left":
        A = -A
    elif side != "right":
        raise UsageError("side must be 'right' or 'left'")
    out = np.zeros_like(A)
    term = np.eye(A.shape[0])
    fact = 1.0
    for k in range(terms):
        fact *= k + 1
        out = out + term / fact
        term = term @ A
    return out


@dataclass(frozen=True)
class SymmetrySample:
    """``((v, mu), z, g z)`` with ``mu = j(exp(v) z)`` as displayed.

    ``mu_chart`` is ``mu`` transported by the right-trivialised ``dexp_v``;
    it is the momentum conjugate to ``v`` in the flat exponential chart.
    """

    v: np.ndarray
    mu: np.ndarray
    mu_chart: np.ndarray
    z: tuple[np.ndarray, np.ndarray]
    gz: tuple[np.ndarray, np.ndarray]

    def as_relation_point(self, chart: str = "exp") -> RelationPoint:
        """Flatten to ``p1 = (v, p)``, ``x1 = (mu, q)``, ``p2 = P``, ``x2 = Q``."""
        if chart not in ("exp", "displayed"):
            raise UsageError("chart must be 'exp' or 'displayed'")
        mu = self.mu_chart if chart == "exp" else self.mu
        return RelationPoint(np.concatenate([self.v, self.z[0]]),
                             np.concatenate([mu, self.z[1]]),
                             self.gz[0], self.gz[1])


def symmetry_relation_sample(action: Callable, j: Callable, v: MatLieElement,
                             z: tuple[np.ndarray, np.ndarray]) -> SymmetrySample:
    """``((v, j(exp(v) z)), z, exp(v) z)``."""
    p, q = (np.asarray(a, dtype=float) for a in z)
    P, Q = action(mat_exp(v), p, q)
    mu = np.atleast_1d(np.asarray(j(P, Q), dtype=float))
    mu_chart = dexp_matrix(v).T @ mu if v.basis is not None else mu
    return SymmetrySample(v.coords(), mu, mu_chart, (p, q), (np.asarray(P), np.asarray(Q)))


def symmetry_sampler(action: Callable, j: Callable, algebra: str = "so3", basis=None,
                     chart: str = "exp") -> Callable[[np.ndarray], RelationPoint]:
    """Sampler ``u = (v coords, p, q) -> point of W_G`` for ``lagrangian_defect``."""
    m = len(basis) if basis is not None else len(BASES[algebra])

    def sampler(u):
        u = np.asarray(u, dtype=float)
        v = MatLieElement.from_coords(u[:m], algebra, basis)
        n = (len(u) - m) // 2
        sample = symmetry_relation_sample(action, j, v, (u[m: m + n], u[m + n:]))
        return sample.as_relation_point(chart)

    return sampler
