"""Finite-depth model of the Cantor space as an equalizer of PCS morphisms.

The web is the set of binary strings; a vector is additive when every
string carries the sum of its two children.  Additive vectors of depth
``d`` are exactly the finite measures on the ``2^d`` clopen cylinders of
length-``d`` strings.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Mapping

from .errors import OrderError, StructuralError
from .measure import FiniteMeasure, Space

DEFAULT_DEPTH = 10


def strings(depth: int, exact_length: int | None = None) -> list[str]:
    lengths = [exact_length] if exact_length is not None else range(depth + 1)
    return ["".join(bits) for k in lengths for bits in itertools.product("01", repeat=k)]


@dataclass(frozen=True, eq=False)
class TreeVector:
    depth: int
    coeffs: Mapping

    def __post_init__(self):
        if self.depth < 0:
            raise StructuralError("depth must be >= 0")
        clean = {}
        for s, v in self.coeffs.items():
            if len(s) > self.depth or set(s) - {"0", "1"}:
                raise StructuralError(f"{s!r} is not a binary string of length <= {self.depth}")
            v = float(v)
            if v < 0 or not math.isfinite(v):
                raise OrderError(f"coefficient at {s!r} must be finite and nonnegative")
            if v:
                clean[s] = v
        object.__setattr__(self, "coeffs", dict(sorted(clean.items(), key=lambda kv: (len(kv[0]), kv[0]))))

    def __getitem__(self, s: str) -> float:
        return self.coeffs.get(s, 0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TreeVector):
            return NotImplemented
        return self.depth == other.depth and self.coeffs == other.coeffs

    __hash__ = None

    def __add__(self, other: "TreeVector") -> "TreeVector":
        if other.depth != self.depth:
            raise StructuralError("tree vectors of different depths")
        keys = set(self.coeffs) | set(other.coeffs)
        return TreeVector(self.depth, {s: self[s] + other[s] for s in keys})

    def scale(self, lam: float) -> "TreeVector":
        return TreeVector(self.depth, {s: lam * v for s, v in self.coeffs.items()})

    def norm(self) -> float:
        return antichain_norm(self)

    def to_json(self) -> dict:
        return {"depth": self.depth, "coeffs": [[s, v] for s, v in self.coeffs.items()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "TreeVector":
        return cls(obj["depth"], {s: v for s, v in obj["coeffs"]})


def coin_flip(depth: int = DEFAULT_DEPTH) -> TreeVector:
    return TreeVector(depth, {s: 2.0 ** -len(s) for s in strings(depth)})


def is_additive(x: TreeVector, tol: float = 1e-12) -> bool:
    return all(abs(x[s] - x[s + "0"] - x[s + "1"]) <= tol
               for s in strings(x.depth - 1) if x.depth > 0)


def antichain_norm(x: TreeVector) -> float:
    """Largest sum of ``x`` over a prefix-antichain of the depth-``d`` web.

    Sums are exact rationals, so the result is the correctly rounded sup.
    """
    best = {s: Fraction(x[s]) for s in strings(x.depth, x.depth)}
    for k in range(x.depth - 1, -1, -1):
        for s in strings(x.depth, k):
            best[s] = max(Fraction(x[s]), best[s + "0"] + best[s + "1"])
    return float(best[""])


def theta_apply(x: TreeVector) -> TreeVector:
    """``(theta x)_t = x_{t0} + x_{t1}``; one level shallower than ``x``."""
    if x.depth == 0:
        raise StructuralError("theta needs depth >= 1")
    return TreeVector(x.depth - 1, {t: x[t + "0"] + x[t + "1"] for t in strings(x.depth - 1)})


def restrict(x: TreeVector, depth: int) -> TreeVector:
    return TreeVector(depth, {s: v for s, v in x.coeffs.items() if len(s) <= depth})


def is_equalized(x: TreeVector, tol: float = 1e-12) -> bool:
    """Whether ``theta x`` agrees with ``x`` on strings shorter than the depth."""
    tx = theta_apply(x)
    return all(abs(tx[s] - x[s]) <= tol for s in strings(x.depth - 1))


def leaf_space(depth: int) -> Space:
    return Space.discrete(strings(depth, depth))


def to_measure(x: TreeVector, tol: float = 1e-12) -> FiniteMeasure:
    """Measure on the length-``d`` cylinders carried by an additive vector."""
    if not is_additive(x, tol):
        raise OrderError("only additive tree vectors define measures")
    return FiniteMeasure(leaf_space(x.depth), {s: x[s] for s in strings(x.depth, x.depth) if x[s]})


def from_measure(mu: FiniteMeasure) -> TreeVector:
    """``x_s = mu(cylinder of s)``."""
    leaves = mu.space.labels
    depth = len(leaves[0])
    if mu.space != leaf_space(depth):
        raise StructuralError("measure must live on the leaf space of some depth")
    acc = {s: [] for s in strings(depth)}
    for leaf, m in mu.mass.items():
        for k in range(depth + 1):
            acc[leaf[:k]].append(m)
    return TreeVector(depth, {s: math.fsum(v) for s, v in acc.items() if v})
