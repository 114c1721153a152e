"""Totally monotonic and analytic maps on finite-dimensional cones.

Multisets of coordinates are sorted tuples of indices: ``(0, 0, 2)`` is the
monomial ``x0^2 x2``.  :class:`AnalyticSeries` stores plain monomial
coefficients, ``f(x) = sum_m c_m x^m``.  :class:`SymCoeffs` stores a
symmetric n-linear form in the symmetrized monomial basis::

    h(u1, ..., un) = sum over i in [dim]^n of c_{sort(i)} * prod_k uk[i_k]

so that on the diagonal ``h(x, ..., x) = sum_m c_m * n!/m! * x^m``.  The
factor ``n!/m!`` is the only conversion between the two conventions.

Unit balls are given as :class:`~conesem.pcs.Pcs` objects; the default is
the l1 ball (the unit ball of the cone of finite measures on ``dim``
points).
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.stats import qmc

from . import pcs as _pcs
from .errors import BallViolation, StructuralError

MONO_TOL = 1e-10


def _multinomial(m: tuple) -> int:
    """``|m|! / m!`` -- the number of distinct orderings of ``m``."""
    out = math.factorial(len(m))
    for v in set(m):
        out //= math.factorial(m.count(v))
    return out


def _mono(x, m) -> float:
    return math.prod(x[i] for i in m)


def default_ball(dim: int) -> _pcs.Pcs:
    return _pcs.snat(dim - 1)


# ---------------------------------------------------------------------------
# Series and symmetric forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AnalyticSeries:
    dim: int
    coeffs: Mapping
    max_degree: int | None = None

    def __post_init__(self):
        clean = {}
        for m, c in self.coeffs.items():
            m = tuple(sorted(m))
            c = float(c)
            if c < 0 or not math.isfinite(c):
                raise StructuralError(f"coefficient at {m} must be finite and nonnegative")
            if any(not 0 <= i < self.dim for i in m):
                raise StructuralError(f"multiset {m} has a coordinate outside dimension {self.dim}")
            if c:
                clean[m] = clean.get(m, 0.0) + c
        ordered = dict(sorted(clean.items(), key=lambda kv: (len(kv[0]), kv[0])))
        object.__setattr__(self, "coeffs", ordered)
        deg = max((len(m) for m in ordered), default=0)
        if self.max_degree is None:
            object.__setattr__(self, "max_degree", deg)
        elif deg > self.max_degree:
            raise StructuralError(f"coefficient of degree {deg} exceeds max_degree {self.max_degree}")

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise StructuralError(f"expected a point of dimension {self.dim}")
        return math.fsum(c * _mono(x, m) for m, c in self.coeffs.items())

    def coefficient(self, m) -> float:
        return self.coeffs.get(tuple(sorted(m)), 0.0)

    @property
    def degree(self) -> int:
        return max((len(m) for m in self.coeffs), default=0)

    def constant(self) -> float:
        return self.coeffs.get((), 0.0)

    def homogeneous_degree(self) -> int | None:
        degs = {len(m) for m in self.coeffs}
        return degs.pop() if len(degs) == 1 else (0 if not degs else None)

    def component(self, n: int) -> "AnalyticSeries":
        return AnalyticSeries(self.dim, {m: c for m, c in self.coeffs.items() if len(m) == n},
                              self.max_degree)

    def truncate(self, n: int) -> "AnalyticSeries":
        return AnalyticSeries(self.dim, {m: c for m, c in self.coeffs.items() if len(m) <= n},
                              min(n, self.max_degree))

    def __add__(self, other: "AnalyticSeries") -> "AnalyticSeries":
        return AnalyticSeries.lincomb([1.0, 1.0], [self, other])

    def scale(self, lam: float) -> "AnalyticSeries":
        return AnalyticSeries.lincomb([lam], [self])

    @classmethod
    def lincomb(cls, weights, series: Sequence["AnalyticSeries"]) -> "AnalyticSeries":
        dim = series[0].dim
        if any(s.dim != dim for s in series):
            raise StructuralError("series of different dimensions")
        acc = defaultdict(list)
        for w, s in zip(weights, series, strict=True):
            for m, c in s.coeffs.items():
                acc[m].append(w * c)
        return cls(dim, {m: math.fsum(v) for m, v in acc.items()},
                   max(s.max_degree for s in series))

    def norm(self, ball: _pcs.Pcs | None = None, samples: int = 256) -> float:
        """Sampled sup over the unit ball: a lower bound of the true norm."""
        return sampled_sup(self, ball or default_ball(self.dim), samples)

    def allclose(self, other: "AnalyticSeries", tol: float = 1e-12) -> bool:
        keys = set(self.coeffs) | set(other.coeffs)
        return all(abs(self.coefficient(m) - other.coefficient(m)) <= tol for m in keys)

    def to_json(self) -> dict:
        return {"dim": self.dim, "maxDegree": self.max_degree,
                "coeffs": [[list(m), c] for m, c in self.coeffs.items()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "AnalyticSeries":
        return cls(obj["dim"], {tuple(m): c for m, c in obj["coeffs"]}, obj.get("maxDegree"))

    def __repr__(self) -> str:
        terms = " + ".join(f"{c:g}*x{list(m)}" if m else f"{c:g}" for m, c in self.coeffs.items())
        return f"AnalyticSeries(dim={self.dim}, {terms or '0'})"


@dataclass(frozen=True, eq=False)
class SymCoeffs:
    arity: int
    dim: int
    coeffs: Mapping

    def __post_init__(self):
        clean = {}
        for m, c in self.coeffs.items():
            m = tuple(sorted(m))
            if len(m) != self.arity:
                raise StructuralError(f"multiset {m} does not have size {self.arity}")
            if any(not 0 <= i < self.dim for i in m):
                raise StructuralError(f"multiset {m} has a coordinate outside dimension {self.dim}")
            if c < 0:
                raise StructuralError("symmetric coefficients must be nonnegative")
            if c:
                clean[m] = float(c)
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    def __call__(self, *args) -> float:
        return eval_multilinear(self, args)

    def diagonal(self) -> AnalyticSeries:
        """The induced homogeneous polynomial ``x -> h(x, ..., x)``."""
        return AnalyticSeries(self.dim, {m: c * _multinomial(m) for m, c in self.coeffs.items()},
                              self.arity)

    def sup_norm(self, ball: _pcs.Pcs | None = None) -> float:
        """Sup over products of generators of the ball.

        A multilinear map with nonnegative coefficients attains its sup over
        a product of down-closed convex hulls at a tuple of generators, so
        this is exact whenever the ball's generators are.
        """
        ball = ball or default_ball(self.dim)
        return max(self(*gs) for gs in itertools.product(ball.gens, repeat=self.arity))

    def allclose(self, other: "SymCoeffs", tol: float = 1e-10) -> bool:
        keys = set(self.coeffs) | set(other.coeffs)
        return (self.arity == other.arity and self.dim == other.dim
                and all(abs(self.coeffs.get(m, 0.0) - other.coeffs.get(m, 0.0)) <= tol for m in keys))


def eval_multilinear(h: SymCoeffs, args: Sequence) -> float:
    if len(args) != h.arity:
        raise StructuralError(f"form of arity {h.arity} applied to {len(args)} arguments")
    args = [np.asarray(a, dtype=float) for a in args]
    if any(a.shape != (h.dim,) for a in args):
        raise StructuralError(f"arguments must have dimension {h.dim}")
    terms = []
    for seq in itertools.product(range(h.dim), repeat=h.arity):
        c = h.coeffs.get(tuple(sorted(seq)))
        if c:
            terms.append(c * math.prod(a[i] for a, i in zip(args, seq)))
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# Ball sampling
# ---------------------------------------------------------------------------


def _simplex_lattice(k: int, res: int) -> Iterable[np.ndarray]:
    for comp in itertools.product(range(res + 1), repeat=k - 1):
        if sum(comp) <= res:
            yield np.array(list(comp) + [res - sum(comp)], dtype=float) / res


def sample_ball(ball: _pcs.Pcs, n: int = 256, seed: int = 0, lattice: int = 12) -> np.ndarray:
    """Deterministic points on the maximal face of ``ball``.

    Generators, a simplex lattice of convex combinations of generators (its
    resolution divides by 1..4, so the barycenters of multisets of size
    <= 4 are hit exactly) and scrambled Sobol weights; every point is
    rescaled to norm one.
    """
    g = ball.gens
    k = len(g)
    weights = list(np.eye(k))
    if k <= 4:
        weights += list(_simplex_lattice(k, lattice))
    if k > 1 and n > 0:
        sob = qmc.Sobol(d=k, scramble=True, seed=seed).random(n)
        e = -np.log(np.clip(sob, 1e-300, None))
        weights += list(e / e.sum(axis=1, keepdims=True))
    pts = []
    for w in weights:
        p = w @ g
        nrm = ball.pairing_max(p)
        if nrm > 0:
            pts.append(p / nrm)
    return np.unique(np.array(pts), axis=0)


def sampled_sup(f: Callable, ball: _pcs.Pcs, samples: int = 256, seed: int = 0) -> float:
    return max(float(f(p)) for p in sample_ball(ball, samples, seed))


# ---------------------------------------------------------------------------
# Iterated differences and total monotonicity
# ---------------------------------------------------------------------------


class FDiff(NamedTuple):
    plus: float | np.ndarray
    minus: float | np.ndarray

    @property
    def delta(self):
        return self.plus - self.minus

    def violation(self, tol: float = MONO_TOL) -> bool:
        return bool(np.any(np.asarray(self.minus) > np.asarray(self.plus) + tol))


def parity_subsets(n: int) -> tuple[list[tuple], list[tuple]]:
    """Subsets of ``range(n)`` split by the parity of ``n - |I|`` (even, odd)."""
    even, odd = [], []
    for k in range(n + 1):
        for sub in itertools.combinations(range(n), k):
            (even if (n - k) % 2 == 0 else odd).append(sub)
    return even, odd


def _fsum_any(vals: list):
    if not vals:
        return 0.0
    if isinstance(vals[0], np.ndarray):
        stacked = np.stack(vals)
        return np.array([math.fsum(c) for c in stacked.reshape(len(vals), -1).T]).reshape(vals[0].shape)
    return math.fsum(vals)


def fdiff(f: Callable, us: Sequence, x, ball: _pcs.Pcs | None = None) -> FDiff:
    """Parity sums ``sum_{I} f(x + sum_{i in I} u_i)`` over even / odd complements."""
    x = np.asarray(x, dtype=float)
    us = [np.asarray(u, dtype=float) for u in us]
    if ball is not None and not ball.contains(x + sum(us, np.zeros_like(x))):
        raise BallViolation("x + sum(us) is outside the unit ball")
    even, odd = parity_subsets(len(us))

    def at(sub):
        return f(x + sum((us[i] for i in sub), np.zeros_like(x)))

    return FDiff(_fsum_any([at(s) for s in even]), _fsum_any([at(s) for s in odd]))


class Witness(NamedTuple):
    order: int
    x: np.ndarray
    us: list
    plus: float
    minus: float


class MonotoneReport(NamedTuple):
    passed: bool
    checked: int
    witness: Witness | None


def _admissible(rng, ball: _pcs.Pcs, n: int):
    g = ball.gens
    z = rng.dirichlet(np.ones(len(g))) @ g
    z = z / max(ball.pairing_max(z), 1e-300) * rng.uniform(0.0, 1.0) ** (1.0 / max(ball.dim, 1))
    parts = rng.dirichlet(np.ones(n + 1), size=ball.dim).T * z
    return parts[0], list(parts[1:])


def check_total_monotone(f: Callable, ball: _pcs.Pcs, max_order: int = 4, samples: int = 500,
                         seed: int = 0, tol: float = MONO_TOL) -> MonotoneReport:
    """Draw admissible ``(x, u1..un)`` and test ``minus <= plus + tol`` per order."""
    checked = 0
    for order in range(1, max_order + 1):
        rng = np.random.default_rng([seed, order])
        for _ in range(samples):
            x, us = _admissible(rng, ball, order)
            d = fdiff(f, us, x)
            checked += 1
            if d.violation(tol):
                return MonotoneReport(False, checked, Witness(order, x, us, d.plus, d.minus))
    return MonotoneReport(True, checked, None)


# ---------------------------------------------------------------------------
# Polarization and Taylor grading
# ---------------------------------------------------------------------------


def polarize(f: AnalyticSeries, n: int | None = None) -> SymCoeffs:
    """The unique symmetric n-linear form whose diagonal is ``f``.

    ``h(e_{m1}, ..., e_{mn}) = fdiff(f, (e_{m1}, ..., e_{mn}), 0) / n!``.
    """
    deg = f.homogeneous_degree()
    if n is None:
        if deg is None:
            raise StructuralError("polarize() needs a homogeneous polynomial")
        n = deg
    elif f.coeffs and deg != n:
        raise StructuralError(f"polynomial is not homogeneous of degree {n}")
    basis = np.eye(f.dim)
    zero = np.zeros(f.dim)
    coeffs = {}
    for m in itertools.combinations_with_replacement(range(f.dim), n):
        d = fdiff(f, [basis[i] for i in m], zero)
        coeffs[m] = max(d.delta, 0.0) / math.factorial(n)
    return SymCoeffs(n, f.dim, coeffs)


def taylor_grade(f: AnalyticSeries) -> list[AnalyticSeries]:
    return [f.component(n) for n in range(f.max_degree + 1)]


# ---------------------------------------------------------------------------
# Local cones, shifts and composition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LocalCone:
    """Displacements at ``base`` inside ``ball``, with the gauge norm."""

    ball: _pcs.Pcs
    base: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.base, dtype=float)
        if not self.ball.contains(b):
            raise BallViolation("base point of a local cone must lie in the unit ball")
        object.__setattr__(self, "base", b)

    def norm(self, u) -> float:
        """``1 / sup {lam : base + lam*u in ball}`` (``inf`` if no such lam > 0)."""
        u = np.asarray(u, dtype=float)
        up = self.ball.tests @ u
        slack = 1.0 - self.ball.tests @ self.base
        out = 0.0
        for a, s in zip(up, slack):
            if a > 0:
                if s <= 0:
                    return math.inf
                out = max(out, a / s)
        return out

    def contains(self, u, tol: float = 1e-12) -> bool:
        return self.norm(u) <= 1.0 + tol


def _poly_mul(p: dict, q: dict) -> dict:
    out = defaultdict(float)
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            out[tuple(sorted(m1 + m2))] += c1 * c2
    return out


def local_shift(f: AnalyticSeries, x0, ball: _pcs.Pcs | None = None) -> AnalyticSeries:
    """Series of ``u -> f(x0 + u)``.

    Degree-l coefficients collect ``C(n, l) * h_n(u^l, x0^(n-l))`` over the
    polarizations ``h_n`` of the homogeneous components of ``f``.
    """
    x0 = np.asarray(x0, dtype=float)
    ball = ball or default_ball(f.dim)
    if not ball.contains(x0):
        raise BallViolation("shift point is outside the unit ball")
    acc = defaultdict(list)
    for n, comp in enumerate(taylor_grade(f)):
        if not comp.coeffs:
            continue
        h = polarize(comp, n)
        for seq in itertools.product(range(f.dim), repeat=n):
            c = h.coeffs.get(tuple(sorted(seq)))
            if not c:
                continue
            for l in range(n + 1):
                w = math.comb(n, l) * c * math.prod(x0[i] for i in seq[l:])
                if w:
                    acc[tuple(sorted(seq[:l]))].append(w)
    return AnalyticSeries(f.dim, {m: math.fsum(t) for m, t in acc.items()}, f.max_degree)


def _compositions(l: int, n: int) -> Iterable[tuple[int, ...]]:
    """Ordered ``sigma`` in ``{1..}^n`` with ``sum(sigma) == l``."""
    if n == 0:
        if l == 0:
            yield ()
        return
    for first in range(1, l - n + 2):
        for rest in _compositions(l - first, n - 1):
            yield (first,) + rest


def compose_series(g: AnalyticSeries, f: AnalyticSeries | Sequence[AnalyticSeries],
                   out_degree: int, check: bool = True,
                   ball: _pcs.Pcs | None = None) -> AnalyticSeries:
    """Series of ``x -> g(f(x))`` truncated at ``out_degree``.

    ``f`` has one series per coordinate of ``g``'s domain.  When ``f(0) != 0``
    the outer map is first shifted to ``f(0)`` so that the inner map vanishes
    at the origin.
    """
    fs = [f] if isinstance(f, AnalyticSeries) else list(f)
    if len(fs) != g.dim:
        raise StructuralError(f"outer series has dimension {g.dim}, inner map has {len(fs)} outputs")
    dim = fs[0].dim
    if any(fi.dim != dim for fi in fs):
        raise StructuralError("inner series have different dimensions")
    gball = default_ball(g.dim)
    if check:
        for p in sample_ball(ball or default_ball(dim), 64):
            if not gball.contains([fi(p) for fi in fs], 1e-9):
                raise BallViolation("inner map sends the unit ball outside the outer domain")
    f0 = np.array([fi.constant() for fi in fs])
    if f0.any():
        g = local_shift(g, f0, gball if check else _free_ball(g.dim))
        fs = [AnalyticSeries(dim, {m: c for m, c in fi.coeffs.items() if m}, fi.max_degree)
              for fi in fs]
    grades = [taylor_grade(fi) for fi in fs]

    def inner(j: int, k: int) -> dict:
        return dict(grades[j][k].coeffs) if k < len(grades[j]) else {}

    out = defaultdict(list)
    if g.constant():
        out[()].append(g.constant())
    for n in range(1, g.degree + 1):
        comp = g.component(n)
        if not comp.coeffs:
            continue
        h = polarize(comp, n)
        for l in range(n, out_degree + 1):
            for sigma in _compositions(l, n):
                for seq in itertools.product(range(g.dim), repeat=n):
                    c = h.coeffs.get(tuple(sorted(seq)))
                    if not c:
                        continue
                    poly = {(): c}
                    for j, k in zip(seq, sigma):
                        poly = _poly_mul(poly, inner(j, k))
                        if not poly:
                            break
                    for m, v in poly.items():
                        out[m].append(v)
    return AnalyticSeries(dim, {m: math.fsum(v) for m, v in out.items() if len(m) <= out_degree},
                          out_degree)


def gradient(f: AnalyticSeries, x0) -> np.ndarray:
    """Degree-one part of the shift of ``f`` at ``x0``, as a dense vector."""
    lin = local_shift(f, x0, _free_ball(f.dim)).component(1)
    return np.array([lin.coefficient((i,)) for i in range(f.dim)])


def _free_ball(dim: int) -> _pcs.Pcs:
    return _pcs.Pcs(tuple(range(dim)), np.zeros((1, dim)), np.eye(dim), name="free")
