"""Probabilistic coherence spaces over finite webs.

A :class:`Pcs` carries two finite families of nonnegative vectors on its
web: ``tests`` (generators of a predual, so that membership is
``<x, t> <= 1`` for every test) and ``gens`` (points of the unit ball whose
closed convex down-closed hull is, or approximates, the ball).  Linear
negation swaps the two families, which is what makes every construction
below finitely computable.

Two flags record how faithful the finite families are:

* ``exact`` -- the tests cut out the unit ball exactly, so the norm
  ``max_t <x, t>`` is exact.  When false it is a certified lower bound.
* ``gens_exact`` -- the generators span the unit ball exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import StructuralError

TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pcs:
    web: tuple
    tests: np.ndarray
    gens: np.ndarray
    exact: bool = True
    gens_exact: bool = True
    name: str = ""
    # set only on exponentials, to evaluate power series directly
    base: "Pcs | None" = field(default=None, repr=False)
    degree: int | None = None

    def __post_init__(self):
        n = len(self.web)
        if len(set(self.web)) != n:
            raise StructuralError("web atoms must be distinct")
        for fam in ("tests", "gens"):
            a = _frozen(getattr(self, fam))
            if a.shape[1] != n:
                raise StructuralError(f"{fam} have {a.shape[1]} columns for a web of {n} atoms")
            if (a < 0).any() or not np.isfinite(a).all():
                raise StructuralError(f"{fam} must be finite and nonnegative")
            object.__setattr__(self, fam, a)
        object.__setattr__(self, "_idx", {a: i for i, a in enumerate(self.web)})

    @property
    def dim(self) -> int:
        return len(self.web)

    def index(self, atom) -> int:
        try:
            return self._idx[atom]
        except (KeyError, TypeError):
            raise StructuralError(f"{atom!r} is not in the web of {self.name or 'this PCS'}") from None

    def vector(self, coeffs) -> "PcsVector":
        """Build a vector from a mapping ``atom -> value`` or a dense sequence."""
        if isinstance(coeffs, Mapping):
            v = np.zeros(self.dim)
            for a, c in coeffs.items():
                v[self.index(a)] = c
        else:
            v = np.asarray(coeffs, dtype=float)
            if v.shape != (self.dim,):
                raise StructuralError(f"expected {self.dim} coefficients, got shape {v.shape}")
        return PcsVector(self, v)

    def contains(self, x, tol: float = TOL) -> bool:
        """Membership of a raw coefficient array (test pairings all <= 1)."""
        x = np.asarray(x, dtype=float)
        if (x < -tol).any():
            return False
        return bool((self.tests @ x <= 1.0 + tol).all())

    def pairing_max(self, x) -> float:
        return float(np.max(self.tests @ np.asarray(x, dtype=float)))

    def coordinate_bounds(self) -> np.ndarray:
        """``b_a >= sup {x_a : x in the ball}``, derived from the tests."""
        top = self.tests.max(axis=0)
        with np.errstate(divide="ignore"):
            return np.where(top > 0, 1.0 / np.where(top > 0, top, 1.0), np.inf)

    def is_nondegenerate(self) -> bool:
        return bool((self.gens.max(axis=0) > 0).all() and (self.tests.max(axis=0) > 0).all())

    def to_json(self) -> dict:
        return {
            "web": [_atom_json(a) for a in self.web],
            "tests": self.tests.tolist(),
            "gens": self.gens.tolist(),
            "exact": self.exact,
            "gens_exact": self.gens_exact,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Pcs":
        return cls(tuple(_atom_unjson(a) for a in obj["web"]), obj["tests"], obj["gens"],
                   exact=obj.get("exact", True), gens_exact=obj.get("gens_exact", True))

    def __repr__(self) -> str:
        return f"Pcs({self.name or '?'}, |web|={self.dim}, exact={self.exact})"


def _atom_json(a):
    if isinstance(a, tuple):
        return [_atom_json(b) for b in a]
    return a


def _atom_unjson(a):
    if isinstance(a, list):
        return tuple(_atom_unjson(b) for b in a)
    return a


class NormBound(NamedTuple):
    value: float
    exact: bool


@dataclass(frozen=True, eq=False)
class PcsVector:
    pcs: Pcs
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.pcs.dim,):
            raise StructuralError("coefficient vector does not match the web")
        if (c < 0).any() or not np.isfinite(c).all():
            raise StructuralError("PCS coefficients must be finite and nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __getitem__(self, atom) -> float:
        return float(self.coeffs[self.pcs.index(atom)])

    def norm(self) -> float:
        return self.pcs.pairing_max(self.coeffs)

    def norm_bound(self) -> NormBound:
        return NormBound(self.norm(), self.pcs.exact)

    def is_member(self, tol: float = TOL) -> bool:
        return self.pcs.contains(self.coeffs, tol)

    def pair(self, other) -> float:
        other = other.coeffs if isinstance(other, PcsVector) else np.asarray(other, dtype=float)
        return math.fsum(self.coeffs * other)

    def _check(self, other: "PcsVector"):
        if other.pcs is not self.pcs and other.pcs.web != self.pcs.web:
            raise StructuralError("vectors live on different webs")

    def __add__(self, other: "PcsVector") -> "PcsVector":
        self._check(other)
        return PcsVector(self.pcs, self.coeffs + other.coeffs)

    def scale(self, lam: float) -> "PcsVector":
        if lam < 0:
            raise StructuralError("cone scalars are nonnegative")
        return PcsVector(self.pcs, lam * self.coeffs)

    __rmul__ = __mul__ = scale

    def __le__(self, other: "PcsVector") -> bool:
        self._check(other)
        return bool((self.coeffs <= other.coeffs).all())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PcsVector):
            return NotImplemented
        return self.pcs.web == other.pcs.web and bool((self.coeffs == other.coeffs).all())

    __hash__ = None

    @classmethod
    def lincomb(cls, weights, vectors: Sequence["PcsVector"]) -> "PcsVector":
        pcs = vectors[0].pcs
        for v in vectors:
            vectors[0]._check(v)
        stacked = np.stack([w * v.coeffs for w, v in zip(weights, vectors, strict=True)])
        return cls(pcs, np.array([math.fsum(col) for col in stacked.T]))

    def as_mapping(self) -> dict:
        return {a: float(c) for a, c in zip(self.pcs.web, self.coeffs) if c != 0}


# ---------------------------------------------------------------------------
# Constructions
# ---------------------------------------------------------------------------


def one() -> Pcs:
    return Pcs(("*",), [[1.0]], [[1.0]], name="1")


def bot() -> Pcs:
    return orth(one(), name="bot")


def orth(x: Pcs, name: str | None = None) -> Pcs:
    return Pcs(x.web, x.gens, x.tests, exact=x.gens_exact, gens_exact=x.exact,
               name=name if name is not None else f"({x.name})^")


def with_(x: Pcs, y: Pcs) -> Pcs:
    """Cartesian product: tests are injected, generators are all pairs."""
    web = tuple((0, a) for a in x.web) + tuple((1, b) for b in y.web)
    zx, zy = np.zeros(x.dim), np.zeros(y.dim)
    tests = [np.concatenate([t, zy]) for t in x.tests] + [np.concatenate([zx, s]) for s in y.tests]
    gens = [np.concatenate([g, h]) for g in x.gens for h in y.gens]
    return Pcs(web, tests, gens, exact=x.exact and y.exact,
               gens_exact=x.gens_exact and y.gens_exact, name=f"{x.name}&{y.name}")


def plus(x: Pcs, y: Pcs) -> Pcs:
    """Coproduct, whose norm is the sum of the component norms."""
    out = orth(with_(orth(x), orth(y)))
    return Pcs(out.web, out.tests, out.gens, out.exact, out.gens_exact, name=f"{x.name}+{y.name}")


def tensor(x: Pcs, y: Pcs) -> Pcs:
    """Tensor product.  Simple-tensor tests only give a lower bound of the norm."""
    web = tuple((a, b) for a in x.web for b in y.web)
    gens = [np.kron(g, h) for g in x.gens for h in y.gens]
    tests = [np.kron(t, s) for t in x.tests for s in y.tests]
    return Pcs(web, tests, gens, exact=False, gens_exact=x.gens_exact and y.gens_exact,
               name=f"{x.name}(x){y.name}")


def limpl(x: Pcs, y: Pcs) -> Pcs:
    """Linear maps ``x -o y`` as matrices indexed by ``(a, b)``."""
    out = orth(tensor(x, orth(y)))
    return Pcs(out.web, out.tests, out.gens, out.exact, out.gens_exact, name=f"{x.name}-o{y.name}")


def multisets(web: Sequence[Hashable], d: int) -> list[tuple]:
    """Multisets of size ``<= d`` over ``web`` as tuples sorted by web position."""
    out = []
    for k in range(d + 1):
        for idx in itertools.combinations_with_replacement(range(len(web)), k):
            out.append(tuple(web[i] for i in idx))
    return out


def _monomials(x: np.ndarray, index_sets: list[tuple[int, ...]]) -> np.ndarray:
    return np.array([math.prod(x[i] for i in m) for m in index_sets])


@lru_cache(maxsize=64)
def bang(x: Pcs, d: int = 6, samples: int = 0, seed: int = 0) -> Pcs:
    """Exponential truncated at multisets of size ``d``.

    Generators are the promotions of the generators of ``x``, of their
    barycenter and of ``samples`` seeded random convex combinations.  Tests
    are the scaled coordinate functionals ``e_m / prod b^m`` where ``b``
    bounds the coordinates of the ball of ``x``; both families are valid
    but incomplete, so both flags are false.
    """
    if d < 0:
        raise StructuralError("truncation degree must be >= 0")
    web = tuple(multisets(x.web, d))
    idx = [tuple(x.index(a) for a in m) for m in web]
    points = list(x.gens) + [x.gens.mean(axis=0)]
    if samples:
        rng = np.random.default_rng(seed)
        for w in rng.dirichlet(np.ones(len(x.gens)), size=samples):
            points.append(w @ x.gens)
    gens = [_monomials(p, idx) for p in points]
    b = x.coordinate_bounds()
    tests = np.diag([1.0 / math.prod(b[i] for i in m) for m in idx])
    return Pcs(web, tests, gens, exact=False, gens_exact=False,
               name=f"!{d}({x.name})", base=x, degree=d)


def snat(k: int) -> Pcs:
    """Subprobability distributions on ``{0..k}``: the l1 ball."""
    n = k + 1
    return Pcs(tuple(range(n)), np.ones((1, n)), np.eye(n), name=f"Snat{k}")


def orth_snat(k: int) -> Pcs:
    """Dual of :func:`snat`: the l-infinity ball."""
    return orth(snat(k), name=f"OrthSnat{k}")


def boolean() -> Pcs:
    return plus(one(), one())


_CONSTRUCTORS = {
    "one": one, "bot": bot, "with": with_, "plus": plus, "orth": orth,
    "tensor": tensor, "limpl": limpl, "bang": bang,
}


def build(constructor: str, *args, **kwargs) -> Pcs:
    try:
        fn = _CONSTRUCTORS[constructor]
    except KeyError:
        raise StructuralError(f"unknown PCS constructor {constructor!r}") from None
    return fn(*args, **kwargs)


def biorthogonal_defect(x: Pcs) -> float:
    """Largest ``<g, t> - 1`` over generators and tests (<= 0 when sane)."""
    return float(np.max(x.gens @ x.tests.T)) - 1.0


# ---------------------------------------------------------------------------
# Module-level vector operations
# ---------------------------------------------------------------------------


def membership(x: PcsVector, tol: float = TOL) -> bool:
    return x.is_member(tol)


def norm(x: PcsVector) -> float:
    return x.norm()


def tensor_vector(x: PcsVector, y: PcsVector) -> PcsVector:
    return PcsVector(tensor(x.pcs, y.pcs), np.kron(x.coeffs, y.coeffs))


def tensor_norm_upper(pairs: Sequence[tuple[PcsVector, PcsVector]]) -> float:
    """l1 decomposition bound ``||sum x_i (x) y_i|| <= sum ||x_i|| ||y_i||``."""
    return math.fsum(x.norm() * y.norm() for x, y in pairs)


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PcsMatrix:
    source: Pcs
    target: Pcs
    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.shape != (self.source.dim, self.target.dim):
            raise StructuralError(f"entries have shape {e.shape}, expected "
                                  f"{(self.source.dim, self.target.dim)}")
        if (e < 0).any() or not np.isfinite(e).all():
            raise StructuralError("matrix entries must be finite and nonnegative")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @classmethod
    def identity(cls, x: Pcs) -> "PcsMatrix":
        return cls(x, x, np.eye(x.dim))

    @classmethod
    def from_mapping(cls, source: Pcs, target: Pcs, entries: Mapping) -> "PcsMatrix":
        e = np.zeros((source.dim, target.dim))
        for (a, b), v in entries.items():
            e[source.index(a), target.index(b)] = v
        return cls(source, target, e)

    def as_vector(self) -> PcsVector:
        return PcsVector(limpl(self.source, self.target), self.entries.ravel())

    def is_morphism(self, tol: float = TOL) -> bool:
        """Unit ball of the source mapped into the unit ball of the target."""
        return all(self.target.contains(g @ self.entries, tol) for g in self.source.gens)

    def norm(self) -> float:
        return max(self.target.pairing_max(g @ self.entries) for g in self.source.gens)


def _same_web(a: Pcs, b: Pcs, what: str):
    if a is not b and a.web != b.web:
        raise StructuralError(f"web mismatch in {what}")


def mat_apply(t: PcsMatrix, x: PcsVector) -> PcsVector:
    """``(t.x)_b = sum_a t_{a,b} x_a``."""
    _same_web(t.source, x.pcs, "mat_apply")
    out = np.array([math.fsum(col) for col in (x.coeffs[:, None] * t.entries).T])
    return PcsVector(t.target, out)


def mat_compose(t2: PcsMatrix, t1: PcsMatrix) -> PcsMatrix:
    """``t2 . t1`` -- the matrix product taken in reversed order."""
    _same_web(t1.target, t2.source, "mat_compose")
    return PcsMatrix(t1.source, t2.target, t1.entries @ t2.entries)


# ---------------------------------------------------------------------------
# Exponential: promotion and power series
# ---------------------------------------------------------------------------


def promote(x: PcsVector, d: int = 6) -> PcsVector:
    """``x^!`` truncated at degree ``d``: coefficient ``prod x_a^{m(a)}`` at ``m``."""
    target = bang(x.pcs, d)
    idx = [tuple(x.pcs.index(a) for a in m) for m in target.web]
    return PcsVector(target, _monomials(x.coeffs, idx))


def series_matrix(base: Pcs, target: Pcs, coeffs: Mapping, degree: int = 6) -> PcsMatrix:
    """Power series ``{(multiset, b): t_{m,b}}`` as a matrix ``!base -o target``."""
    src = bang(base, degree)
    e = np.zeros((src.dim, target.dim))
    for (m, b), v in coeffs.items():
        m = tuple(sorted(m, key=base.index))
        if len(m) > degree:
            raise StructuralError(f"multiset of size {len(m)} exceeds truncation degree {degree}")
        e[src.index(m), target.index(b)] = v
    return PcsMatrix(src, target, e)


def power_series_apply(t: PcsMatrix, x: PcsVector) -> PcsVector:
    """``Fun t(x)_b = sum_m t_{m,b} x^m``, evaluated monomial by monomial."""
    src = t.source
    if src.base is None:
        raise StructuralError("power series need a matrix whose source is an exponential")
    _same_web(src.base, x.pcs, "power_series_apply")
    out = np.zeros(t.target.dim)
    for j in range(t.target.dim):
        terms = []
        for i, m in enumerate(src.web):
            c = t.entries[i, j]
            if c:
                terms.append(c * math.prod(x[a] for a in m))
        out[j] = math.fsum(terms)
    return PcsVector(t.target, out)


def convolution_series(a: Sequence[float], k: int, d: int) -> PcsMatrix:
    """Scalar analytic map ``u -> sum_n a_n ||u * ... * u||`` on ``Snat{k}``.

    Coefficient at multiset ``m`` is ``|m|!/m! * a_{|m|}`` (``a`` padded with
    zeros past its length); ``m!`` is the product of multiplicity factorials.
    """
    base = snat(k)
    src = bang(base, d)
    e = np.zeros((src.dim, 1))
    for i, m in enumerate(src.web):
        n = len(m)
        if n < len(a):
            mult = math.prod(math.factorial(m.count(v)) for v in set(m))
            e[i, 0] = math.factorial(n) / mult * a[n]
    return PcsMatrix(src, one(), e)
