"""Finite measurable spaces, the cone of finite measures, kernels and paths.

Every space here is finite, so any bounded family indexed by a space is a
measurable path and integrals reduce to finite weighted sums.  All
reductions go through :func:`math.fsum`, which is correctly rounded and
therefore independent of summation order: results are bit-identical no
matter how the terms were produced (sequentially or by a worker pool).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Callable, Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import OrderError, StructuralError

PRUNE_FLOOR = 1e-15


# ---------------------------------------------------------------------------
# Spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Space:
    """A finite measurable space.

    ``discrete`` spaces are labelled by arbitrary hashable labels; their
    points are the labels.  ``grid`` spaces discretize ``[lo, hi)`` into
    ``bins`` equal cells; their points are bin indices and the value of a
    point is its bin center.
    """

    kind: str
    labels: tuple = ()
    lo: float = 0.0
    hi: float = 0.0
    bins: int = 0

    def __post_init__(self):
        if self.kind == "grid":
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
                raise StructuralError(f"grid requires finite lo < hi, got [{self.lo}, {self.hi}]")
            if int(self.bins) != self.bins or self.bins < 1:
                raise StructuralError(f"grid requires bins >= 1, got {self.bins}")
        elif self.kind == "discrete":
            if len(set(self.labels)) != len(self.labels):
                raise StructuralError("discrete labels must be distinct")
            if not self.labels:
                raise StructuralError("discrete space needs at least one label")
        else:
            raise StructuralError(f"unknown space kind {self.kind!r}")

    @classmethod
    def discrete(cls, labels: Iterable[Hashable]) -> "Space":
        return cls("discrete", labels=tuple(labels))

    @classmethod
    def grid(cls, lo: float, hi: float, bins: int) -> "Space":
        return cls("grid", lo=float(lo), hi=float(hi), bins=int(bins))

    @property
    def is_grid(self) -> bool:
        return self.kind == "grid"

    @cached_property
    def _index(self) -> dict:
        return {p: i for i, p in enumerate(self.labels)}

    def __len__(self) -> int:
        return self.bins if self.is_grid else len(self.labels)

    def points(self) -> list:
        return list(range(self.bins)) if self.is_grid else list(self.labels)

    def __contains__(self, point) -> bool:
        if self.is_grid:
            return isinstance(point, (int, np.integer)) and 0 <= point < self.bins
        try:
            return point in self._index
        except TypeError:
            return False

    def index(self, point) -> int:
        if self.is_grid:
            if point in self:
                return int(point)
        else:
            i = self._index.get(point) if _hashable(point) else None
            if i is not None:
                return i
        raise StructuralError(f"{point!r} is not a point of {self}")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    def center(self, i: int) -> float:
        return self.lo + (i + 0.5) * (self.hi - self.lo) / self.bins

    def value(self, point):
        """Label of a discrete point, center of a grid bin."""
        return self.center(point) if self.is_grid else point

    def bin_edges(self, i: int) -> tuple[float, float]:
        w = self.hi - self.lo
        return self.lo + i * w / self.bins, self.lo + (i + 1) * w / self.bins

    def locate(self, r: float) -> tuple[int, bool]:
        """Bin containing real ``r`` and whether it had to be clamped."""
        if not self.is_grid:
            raise StructuralError("locate() needs a grid space")
        if not math.isfinite(r):
            raise StructuralError(f"cannot locate non-finite value {r}")
        i = math.floor((r - self.lo) * self.bins / (self.hi - self.lo))
        if i < 0:
            return 0, True
        if i >= self.bins:
            # hi itself belongs to the last bin
            return self.bins - 1, r > self.hi
        return i, False

    def product(self, other: "Space") -> "Space":
        return Space.discrete((a, b) for a in self.points() for b in other.points())

    def to_json(self) -> dict:
        if self.is_grid:
            return {"kind": "grid", "lo": self.lo, "hi": self.hi, "bins": self.bins}
        return {"kind": "discrete", "labels": [_jsonable(p) for p in self.labels]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Space":
        if obj["kind"] == "grid":
            return cls.grid(obj["lo"], obj["hi"], obj["bins"])
        return cls.discrete(_untuple(p) for p in obj["labels"])

    def __repr__(self) -> str:
        if self.is_grid:
            return f"Space.grid({self.lo}, {self.hi}, {self.bins})"
        if len(self.labels) > 6:
            return f"Space.discrete(<{len(self.labels)} labels>)"
        return f"Space.discrete({list(self.labels)!r})"


def _hashable(x) -> bool:
    try:
        hash(x)
    except TypeError:
        return False
    return True


def _jsonable(p):
    if isinstance(p, tuple):
        return [_jsonable(q) for q in p]
    if isinstance(p, np.integer):
        return int(p)
    return p


def _untuple(p):
    if isinstance(p, list):
        return tuple(_untuple(q) for q in p)
    return p


# ---------------------------------------------------------------------------
# Finite measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """A finite measure on a finite space, stored sparsely.

    ``lost_mass`` and ``clamped`` are diagnostics: mass discarded by partial
    push-forwards or pruning, and the number of atoms that had to be clamped
    onto a grid boundary.  They do not take part in equality.
    """

    space: Space
    mass: Mapping = field(default_factory=dict)
    lost_mass: float = 0.0
    clamped: int = 0

    def __post_init__(self):
        items = []
        for p, m in self.mass.items():
            m = float(m)
            if not math.isfinite(m) or m < 0:
                raise OrderError(f"mass at {p!r} must be finite and nonnegative, got {m}")
            if m > 0:
                items.append((self.space.index(p), p, m))
        items.sort(key=lambda t: t[0])
        object.__setattr__(self, "mass", {p: m for _, p, m in items})

    # cone structure ------------------------------------------------------

    def norm(self) -> float:
        return math.fsum(self.mass.values())

    total = norm

    def __getitem__(self, point) -> float:
        return self.mass.get(point, 0.0)

    def support(self) -> list:
        return list(self.mass)

    def is_zero(self) -> bool:
        return not self.mass

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteMeasure):
            return NotImplemented
        return self.space == other.space and self.mass == other.mass

    __hash__ = None

    def __add__(self, other: "FiniteMeasure") -> "FiniteMeasure":
        return add(self, other)

    def __mul__(self, lam: float) -> "FiniteMeasure":
        return scale(lam, self)

    __rmul__ = __mul__

    def __sub__(self, other: "FiniteMeasure") -> "FiniteMeasure":
        return sub(self, other)

    def __le__(self, other: "FiniteMeasure") -> bool:
        _same_space(self, other)
        return all(m <= other[p] for p, m in self.mass.items())

    @classmethod
    def lincomb(cls, weights: Sequence[float], measures: Sequence["FiniteMeasure"],
                floor: float = PRUNE_FLOOR) -> "FiniteMeasure":
        space = measures[0].space
        acc: dict = {}
        for w, mu in zip(weights, measures, strict=True):
            if mu.space != space:
                raise StructuralError(f"cannot combine measures on {space} and {mu.space}")
            if w < 0:
                raise OrderError(f"negative weight {w} in a cone combination")
            for p, m in mu.mass.items():
                acc.setdefault(p, []).append(w * m)
        lost = math.fsum(w * mu.lost_mass for w, mu in zip(weights, measures))
        clamped = sum(mu.clamped for mu in measures)
        return _build(space, {p: math.fsum(v) for p, v in acc.items()}, lost, clamped, floor)

    def scale(self, lam: float) -> "FiniteMeasure":
        return scale(lam, self)

    def mean(self) -> float:
        """Expectation of the point values (numeric spaces only)."""
        tot = self.norm()
        if tot == 0:
            raise OrderError("mean of the zero measure")
        return math.fsum(m * self.space.value(p) for p, m in self.mass.items()) / tot

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "mass": [[_jsonable(p), m] for p, m in self.mass.items()],
            "lost_mass": self.lost_mass,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "FiniteMeasure":
        space = Space.from_json(obj["space"])
        return cls(space, {_untuple(p): m for p, m in obj["mass"]}, obj.get("lost_mass", 0.0))

    def histogram_rows(self) -> list[tuple[float, float, float]]:
        if not self.space.is_grid:
            raise StructuralError("histogram rows need a grid space")
        return [(*self.space.bin_edges(i), self[i]) for i in range(self.space.bins)]

    def __repr__(self) -> str:
        body = ", ".join(f"{p!r}: {m:.6g}" for p, m in list(self.mass.items())[:8])
        more = ", ..." if len(self.mass) > 8 else ""
        return f"FiniteMeasure({self.space!r}, {{{body}{more}}})"


def _build(space, mass, lost=0.0, clamped=0, floor=PRUNE_FLOOR) -> FiniteMeasure:
    kept = {}
    pruned = []
    for p, m in mass.items():
        if m >= floor and m > 0:
            kept[p] = m
        elif m > 0:
            pruned.append(m)
    if pruned:
        lost = lost + math.fsum(pruned)
    return FiniteMeasure(space, kept, lost, clamped)


def _same_space(a, b):
    if a.space != b.space:
        raise StructuralError(f"space mismatch: {a.space} vs {b.space}")


def zero(space: Space) -> FiniteMeasure:
    return FiniteMeasure(space, {})


def atom(space: Space, point, mass: float = 1.0) -> FiniteMeasure:
    """Point mass at an existing point of ``space`` (bin index for grids)."""
    return FiniteMeasure(space, {point: mass})


def dirac(space: Space, point) -> FiniteMeasure:
    """Dirac mass.  On a grid ``point`` is a real, snapped to its bin."""
    if space.is_grid:
        i, clamped = space.locate(float(point))
        return FiniteMeasure(space, {i: 1.0}, clamped=int(clamped))
    return FiniteMeasure(space, {point: 1.0})


def add(mu1: FiniteMeasure, mu2: FiniteMeasure) -> FiniteMeasure:
    return FiniteMeasure.lincomb([1.0, 1.0], [mu1, mu2])


def scale(lam: float, mu: FiniteMeasure) -> FiniteMeasure:
    if lam < 0 or not math.isfinite(lam):
        raise OrderError(f"cone scalars must be finite and nonnegative, got {lam}")
    return FiniteMeasure.lincomb([lam], [mu])


def sub(mu2: FiniteMeasure, mu1: FiniteMeasure) -> FiniteMeasure:
    """``mu2 - mu1``; defined only when ``mu1 <= mu2`` pointwise."""
    _same_space(mu1, mu2)
    if not mu1 <= mu2:
        bad = next(p for p, m in mu1.mass.items() if m > mu2[p])
        raise OrderError(f"subtraction undefined: {mu1[bad]} > {mu2[bad]} at {bad!r}")
    out = {p: m - mu1[p] for p, m in mu2.mass.items()}
    return FiniteMeasure(mu2.space, {p: m for p, m in out.items() if m > 0},
                         max(mu2.lost_mass - mu1.lost_mass, 0.0))


# ---------------------------------------------------------------------------
# Push-forwards
# ---------------------------------------------------------------------------

_UNDEFINED = (ValueError, ArithmeticError, TypeError)


def _push(items: Iterable[tuple[Any, float]], target: Space, lost: float = 0.0,
          clamped: int = 0, floor: float = PRUNE_FLOOR) -> FiniteMeasure:
    """Accumulate ``(target value, mass)`` pairs into a measure on ``target``.

    A value of ``None`` means the map was undefined there: the mass is lost.
    """
    acc: dict = {}
    dropped = []
    for v, m in items:
        if v is None:
            dropped.append(m)
            continue
        if target.is_grid:
            if not isinstance(v, (int, float, np.number)) or not math.isfinite(v):
                dropped.append(m)
                continue
            p, c = target.locate(float(v))
            clamped += c
        else:
            if not _hashable(v) or v not in target:
                dropped.append(m)
                continue
            p = target.labels[target.index(v)]
        acc.setdefault(p, []).append(m)
    if dropped:
        lost = lost + math.fsum(dropped)
    return _build(target, {p: math.fsum(v) for p, v in acc.items()}, lost, clamped, floor)


def _safe(fn, *args):
    try:
        v = fn(*args)
    except _UNDEFINED:
        return None
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def pushforward(fn: Callable, mu: FiniteMeasure, target: Space | None = None,
                floor: float = PRUNE_FLOOR) -> FiniteMeasure:
    """Image measure ``nu(V) = mu(fn^-1 V)``.

    ``fn`` receives point values (labels, or bin centers on a grid) and
    returns target values.  Where ``fn`` raises or returns ``None``/NaN the
    atom's mass is dropped and reported in ``lost_mass``.
    """
    target = mu.space if target is None else target
    sp = mu.space
    items = ((_safe(fn, sp.value(p)), m) for p, m in mu.mass.items())
    return _push(items, target, mu.lost_mass, mu.clamped, floor)


def product_measure(mu: FiniteMeasure, nu: FiniteMeasure,
                    floor: float = PRUNE_FLOOR) -> FiniteMeasure:
    space = mu.space.product(nu.space)
    mass = {(p, q): m * n for p, m in mu.mass.items() for q, n in nu.mass.items()}
    lost = mu.lost_mass * nu.norm() + nu.lost_mass * mu.norm()
    return _build(space, mass, lost, mu.clamped + nu.clamped, floor)


def binop_pushforward(op: Callable[[Any, Any], Any], mu: FiniteMeasure, nu: FiniteMeasure,
                      target: Space, floor: float = PRUNE_FLOOR) -> FiniteMeasure:
    """Push ``op`` forward along the product ``mu x nu``.

    Equivalent to ``pushforward(lambda ab: op(*ab), product_measure(mu, nu))``
    but without materializing the product space.
    """
    smu, snu = mu.space, nu.space
    vals_nu = [(snu.value(q), n) for q, n in nu.mass.items()]
    items = ((_safe(op, smu.value(p), b), m * n)
             for p, m in mu.mass.items() for b, n in vals_nu)
    lost = mu.lost_mass * nu.norm() + nu.lost_mass * mu.norm()
    return _push(items, target, lost, mu.clamped + nu.clamped, floor)


def convolve(u: Sequence[float], v: Sequence[float]) -> list[float]:
    """Convolution of two finite sequences as the push-forward of addition."""
    su, sv = Space.discrete(range(len(u))), Space.discrete(range(len(v)))
    target = Space.discrete(range(len(u) + len(v) - 1))
    mu = FiniteMeasure(su, dict(enumerate(u)))
    nu = FiniteMeasure(sv, dict(enumerate(v)))
    out = binop_pushforward(lambda a, b: a + b, mu, nu, target, floor=0.0)
    return [out[n] for n in target.points()]


# ---------------------------------------------------------------------------
# Generic cone helpers used by integration
# ---------------------------------------------------------------------------


def cone_lincomb(weights: Sequence[float], elems: Sequence[Any]):
    """Nonnegative linear combination of cone elements of a single type."""
    first = elems[0]
    if isinstance(first, (int, float, np.floating)):
        return math.fsum(w * e for w, e in zip(weights, elems, strict=True))
    if isinstance(first, np.ndarray):
        stacked = np.stack([w * e for w, e in zip(weights, elems, strict=True)])
        return np.array([math.fsum(col) for col in stacked.reshape(len(elems), -1).T]
                        ).reshape(first.shape)
    return type(first).lincomb(weights, elems)


def cone_norm(e) -> float:
    if isinstance(e, (int, float, np.floating)):
        return abs(float(e))
    if isinstance(e, np.ndarray):
        return math.fsum(np.abs(e).ravel())
    return e.norm()


# ---------------------------------------------------------------------------
# Paths and integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Path:
    """A bounded family of cone elements indexed by the points of a space.

    ``values`` is a mapping from points, or a callable evaluated on demand.
    """

    space: Space
    values: Mapping | Callable

    def __call__(self, point):
        if callable(self.values):
            return self.values(point)
        return self.values[point]

    def norm(self) -> float:
        return max(cone_norm(self(p)) for p in self.space.points())

    @classmethod
    def lincomb(cls, weights, paths: Sequence["Path"]) -> "Path":
        space = paths[0].space
        if any(b.space != space for b in paths):
            raise StructuralError("cannot combine paths over different spaces")
        weights = list(weights)
        return cls(space, {p: cone_lincomb(weights, [b(p) for b in paths])
                           for p in space.points()})


def dirac_path(space: Space) -> Path:
    return Path(space, lambda p: atom(space, p))


def integrate_path(beta: Path, mu: FiniteMeasure, workers: int | None = None):
    """``sum_r mu{r} * beta(r)`` over the support of ``mu``.

    With ``workers > 1`` the path is evaluated on a thread pool; the result
    is bit-identical to the sequential one.
    """
    if beta.space != mu.space:
        raise StructuralError(f"path over {beta.space} integrated against measure on {mu.space}")
    pts = list(mu.mass)
    if not pts:
        return _scale_any(0.0, beta(beta.space.points()[0]))
    if workers and workers > 1 and len(pts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(beta, pts))
    else:
        vals = [beta(p) for p in pts]
    out = cone_lincomb([mu.mass[p] for p in pts], vals)
    if isinstance(out, FiniteMeasure) and mu.lost_mass:
        out = replace(out, lost_mass=out.lost_mass + mu.lost_mass)
    return out


def _scale_any(lam, e):
    return cone_lincomb([lam], [e])


class FubiniResult(NamedTuple):
    x_first: Any
    y_first: Any
    product: Any


def flatten(eta: Path, inner: Space) -> Path:
    """Uncurry a path of paths into a path over the product space."""
    space = eta.space.product(inner)
    return Path(space, lambda rs: eta(rs[0])(rs[1]))


def fubini_swap(eta: Path, mu: FiniteMeasure, nu: FiniteMeasure) -> FubiniResult:
    """Integrate ``eta(r)(s)`` against ``mu(dr) nu(ds)`` in both orders and on
    the product space."""
    if eta.space != mu.space:
        raise StructuralError("outer path and first measure live on different spaces")
    x_first = integrate_path(integrate_path(eta, mu), nu)
    y_first = integrate_path(Path(mu.space, lambda r: integrate_path(eta(r), nu)), mu)
    prod = integrate_path(flatten(eta, nu.space), product_measure(mu, nu, floor=0.0))
    return FubiniResult(x_first, y_first, prod)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Kernel:
    """A measure-valued map from ``source`` points to measures on ``target``.

    Missing rows are the zero measure.
    """

    source: Space
    target: Space
    rows: Mapping = field(default_factory=dict)

    def __post_init__(self):
        for p, row in self.rows.items():
            self.source.index(p)
            if row.space != self.target:
                raise StructuralError(f"row {p!r} lives on {row.space}, expected {self.target}")

    def row(self, point) -> FiniteMeasure:
        self.source.index(point)
        r = self.rows.get(point)
        return r if r is not None else zero(self.target)

    def as_path(self) -> Path:
        return Path(self.source, self.row)

    def sup_mass(self) -> float:
        return max((self.row(p).norm() for p in self.source.points()), default=0.0)

    def is_substochastic(self, tol: float = 1e-12) -> bool:
        return self.sup_mass() <= 1.0 + tol

    @classmethod
    def identity(cls, space: Space) -> "Kernel":
        return cls(space, space, {p: atom(space, p) for p in space.points()})

    @classmethod
    def from_matrix(cls, source: Space, target: Space, matrix) -> "Kernel":
        a = np.asarray(matrix, dtype=float)
        if a.shape != (len(source), len(target)):
            raise StructuralError(f"matrix shape {a.shape} does not match spaces")
        tp = target.points()
        return cls(source, target, {
            p: FiniteMeasure(target, {tp[j]: a[i, j] for j in range(len(tp)) if a[i, j] > 0})
            for i, p in enumerate(source.points())})

    def to_matrix(self) -> np.ndarray:
        tp = self.target.points()
        return np.array([[self.row(p)[q] for q in tp] for p in self.source.points()])

    def __eq__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        return (self.source == other.source and self.target == other.target
                and all(self.row(p) == other.row(p) for p in self.source.points()))

    __hash__ = None


def kernel_apply(kappa: Kernel, mu: FiniteMeasure) -> FiniteMeasure:
    if mu.space != kappa.source:
        raise StructuralError(f"kernel source {kappa.source} does not match measure space {mu.space}")
    return integrate_path(kappa.as_path(), mu)


def kernel_compose(kappa2: Kernel, kappa1: Kernel) -> Kernel:
    """``kappa2 . kappa1``: first ``kappa1``, then ``kappa2``."""
    if kappa1.target != kappa2.source:
        raise StructuralError("kernels do not compose: target/source mismatch")
    return Kernel(kappa1.source, kappa2.target,
                  {p: kernel_apply(kappa2, kappa1.row(p)) for p in kappa1.source.points()})
