"""Denotational evaluator for the probabilistic PCF.

Real-typed values are finite measures.  Internally a :class:`RealDist` keeps
two parts: exact atoms (value -> mass) and a histogram on the run grid.
Point masses stay exact through primitives and sampling; they are snapped
onto the grid only when a result is reported, when a histogram operand is
involved, or when the number of atoms exceeds :data:`EXACT_CAP`.
"""

from __future__ import annotations

import math
import operator
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Mapping

import numpy as np

from ..errors import ContractViolation, StructuralError
from ..measure import PRUNE_FLOOR, FiniteMeasure, Space, cone_lincomb
from .parser import parse
from .syntax import (REAL, UNIT, App, Arrow, Binop, Choice, Fix, Lam, Let, Num, Term, Type,
                     Unif, Unop, Var, free_vars)
from .typecheck import typecheck

EXACT_CAP = 1 << 19
MONOTONE_TOL = 1e-12
RECURSION_LIMIT = 10_000

_SCALAR = {"log": math.log, "sqrt": math.sqrt, "cos": math.cos, "exp": math.exp,
           "neg": operator.neg}
_VECTOR = {"log": np.log, "sqrt": np.sqrt, "cos": np.cos, "exp": np.exp, "neg": np.negative}
_BIN_SCALAR = {"plus": operator.add, "mult": operator.mul}
_BIN_VECTOR = {"plus": np.add, "mult": np.multiply}


@dataclass(frozen=True)
class GridConfig:
    """Per-run discretization.

    ``unif_bins`` of ``None`` makes ``unif`` the uniform mass over the run
    grid's cells meeting ``[0, 1]``; an integer ``n`` makes it ``n`` exact
    atoms at the midpoints ``(i + 1/2) / n``.
    """

    lo: float = -6.0
    hi: float = 6.0
    bins: int = 1200
    prune_floor: float = PRUNE_FLOOR
    fix_unfold: int = 64
    fix_tol: float = 1e-12
    unif_bins: int | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.fix_unfold < 1:
            raise StructuralError("fix_unfold must be >= 1")
        if self.fix_tol < 0 or self.prune_floor < 0:
            raise StructuralError("fix_tol and prune_floor must be >= 0")
        if self.unif_bins is not None and self.unif_bins < 1:
            raise StructuralError("unif_bins must be >= 1")
        self.space  # validates lo, hi, bins

    @cached_property
    def space(self) -> Space:
        return Space.grid(self.lo, self.hi, self.bins)

    @cached_property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.bins) + 0.5) * (self.hi - self.lo) / self.bins

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "bins": self.bins, "prune_floor": self.prune_floor,
                "fix_unfold": self.fix_unfold, "fix_tol": self.fix_tol,
                "unif_bins": self.unif_bins}


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RealDist:
    cfg: GridConfig
    atoms: dict = field(default_factory=dict)
    grid: np.ndarray | None = None
    lost: float = 0.0
    clamped: int = 0

    @classmethod
    def make(cls, cfg, atoms, grid=None, lost=0.0, clamped=0) -> "RealDist":
        if grid is not None and not grid.any():
            grid = None
        if len(atoms) > EXACT_CAP:
            g, l2, c2 = _snap(cfg, np.fromiter(atoms, float, len(atoms)),
                              np.fromiter(atoms.values(), float, len(atoms)))
            grid = g if grid is None else grid + g
            atoms, lost, clamped = {}, lost + l2, clamped + c2
        return cls(cfg, atoms, grid, lost, clamped)

    @classmethod
    def zero(cls, cfg) -> "RealDist":
        return cls(cfg)

    @classmethod
    def point(cls, cfg, value: float, mass: float = 1.0) -> "RealDist":
        return cls(cfg, {float(value): mass})

    def total(self) -> float:
        parts = list(self.atoms.values())
        if self.grid is not None:
            parts.extend(self.grid.tolist())
        return math.fsum(parts)

    norm = total

    def single(self) -> tuple[float, float] | None:
        if self.grid is None and len(self.atoms) == 1:
            return next(iter(self.atoms.items()))
        return None

    def items(self) -> list[tuple[float, float]]:
        """(value, mass) pairs: exact atoms first, then nonempty grid cells."""
        out = list(self.atoms.items())
        if self.grid is not None:
            nz = np.flatnonzero(self.grid)
            out.extend(zip(self.cfg.centers[nz].tolist(), self.grid[nz].tolist()))
        return out

    def gridded(self) -> np.ndarray:
        g = np.zeros(self.cfg.bins) if self.grid is None else self.grid
        if self.atoms:
            g2, _, _ = _snap(self.cfg, np.fromiter(self.atoms, float, len(self.atoms)),
                             np.fromiter(self.atoms.values(), float, len(self.atoms)))
            g = g + g2
        return g

    def leq(self, other: "RealDist", tol: float = MONOTONE_TOL) -> bool:
        if self.grid is None and other.grid is None:
            return all(m <= other.atoms.get(v, 0.0) + tol for v, m in self.atoms.items())
        return bool(np.all(self.gridded() <= other.gridded() + tol))

    @classmethod
    def lincomb(cls, weights, dists) -> "RealDist":
        cfg = dists[0].cfg
        acc: dict = {}
        grid = None
        lost, clamped = [], 0
        for w, d in zip(weights, dists, strict=True):
            if w == 0:
                continue
            for v, m in d.atoms.items():
                acc[v] = acc.get(v, 0.0) + w * m
            if d.grid is not None:
                grid = w * d.grid if grid is None else grid + w * d.grid
            lost.append(w * d.lost)
            clamped += d.clamped
        return cls.make(cfg, {v: m for v, m in acc.items() if m > 0}, grid,
                        math.fsum(lost), clamped)

    def to_measure(self) -> FiniteMeasure:
        cfg = self.cfg
        g = np.zeros(cfg.bins) if self.grid is None else self.grid
        lost, clamped = self.lost, self.clamped
        if self.atoms:
            g2, l2, c2 = _snap(cfg, np.fromiter(self.atoms, float, len(self.atoms)),
                               np.fromiter(self.atoms.values(), float, len(self.atoms)))
            g, lost, clamped = g + g2, lost + l2, clamped + c2
        small = (g > 0) & (g < cfg.prune_floor)
        if small.any():
            lost += math.fsum(g[small].tolist())
        keep = np.flatnonzero((g > 0) & ~small)
        return FiniteMeasure(cfg.space, dict(zip(keep.tolist(), g[keep].tolist())), lost, clamped)

    @classmethod
    def from_measure(cls, cfg, mu: FiniteMeasure) -> "RealDist":
        if mu.space == cfg.space:
            g = np.zeros(cfg.bins)
            for i, m in mu.mass.items():
                g[i] = m
            return cls.make(cfg, {}, g, mu.lost_mass, mu.clamped)
        atoms = {}
        for p, m in mu.mass.items():
            v = mu.space.value(p)
            if not isinstance(v, (int, float, np.number)):
                raise StructuralError(f"real-typed measure has non-numeric point {p!r}")
            atoms[float(v)] = atoms.get(float(v), 0.0) + m
        return cls.make(cfg, atoms, None, mu.lost_mass, mu.clamped)

    def key(self):
        s = self.single()
        if s is None:
            return None
        return ("r", s[0], math.copysign(1.0, s[0]), s[1], self.lost, self.clamped)


def _snap(cfg: GridConfig, values: np.ndarray, masses: np.ndarray):
    """Histogram of ``(values, masses)`` on the run grid, plus lost mass and clamp count."""
    finite = np.isfinite(values)
    lost = math.fsum(masses[~finite].tolist()) if not finite.all() else 0.0
    v, m = values[finite], masses[finite]
    idx = np.floor((v - cfg.lo) * cfg.bins / (cfg.hi - cfg.lo))
    clamped = int(np.count_nonzero(idx < 0) + np.count_nonzero((idx >= cfg.bins) & (v > cfg.hi)))
    idx = np.clip(idx, 0, cfg.bins - 1).astype(np.intp)
    return np.bincount(idx, weights=m, minlength=cfg.bins), lost, clamped


def _safe(fn, *args):
    try:
        v = fn(*args)
    except (ValueError, ArithmeticError):
        return None
    return v if math.isfinite(v) else None


@dataclass(frozen=True, eq=False)
class FunValue:
    ty: Arrow
    fn: Callable

    def __call__(self, v):
        return self.fn(v)

    @classmethod
    def lincomb(cls, weights, funs) -> "FunValue":
        weights, funs = list(weights), list(funs)
        return cls(funs[0].ty, lambda v: cone_lincomb(weights, [f(v) for f in funs]))


Value = Any  # RealDist | float | FunValue internally; FiniteMeasure | float | FunValue publicly


@dataclass(frozen=True)
class FixReport:
    iterations: int
    residual: float
    converged: bool


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------


class Evaluator:
    """Evaluates typechecked terms under one :class:`GridConfig`.

    Results of subterms whose free variables are bound to point masses or
    scalars are memoized, so nested sampling over ``n`` atoms costs ``O(n)``
    evaluations of subterms that depend on one sample only.
    """

    def __init__(self, cfg: GridConfig | None = None):
        self.cfg = cfg or GridConfig()
        self.fix_reports: list[FixReport] = []
        self._memo: dict = {}
        self._fv: dict = {}
        self._local = threading.local()
        self._pool: ThreadPoolExecutor | None = None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # values --------------------------------------------------------------

    def bottom(self, ty: Type) -> Value:
        if ty == REAL:
            return RealDist.zero(self.cfg)
        if ty == UNIT:
            return 0.0
        return FunValue(ty, lambda _v: self.bottom(ty.cod))

    def unif(self) -> RealDist:
        cfg = self.cfg
        if cfg.unif_bins is not None:
            n = cfg.unif_bins
            return RealDist.make(cfg, {(i + 0.5) / n: 1.0 / n for i in range(n)})
        edges = cfg.lo + np.arange(cfg.bins + 1) * (cfg.hi - cfg.lo) / cfg.bins
        g = np.clip(np.minimum(edges[1:], 1.0) - np.maximum(edges[:-1], 0.0), 0.0, None)
        below = min(max(cfg.lo, 0.0), 1.0)
        above = 1.0 - max(min(cfg.hi, 1.0), 0.0)
        clamped = 0
        if below > 0:
            g[0] += below
            clamped += 1
        if above > 0:
            g[-1] += above
            clamped += 1
        return RealDist.make(cfg, {}, g, 0.0, clamped)

    def unop(self, op: str, d: RealDist) -> RealDist:
        cfg = self.cfg
        f = _SCALAR[op]
        atoms, lost = {}, [d.lost]
        for v, m in d.atoms.items():
            r = _safe(f, v)
            if r is None:
                lost.append(m)
            else:
                atoms[r] = atoms.get(r, 0.0) + m
        grid, clamped = None, d.clamped
        if d.grid is not None:
            nz = np.flatnonzero(d.grid)
            with np.errstate(all="ignore"):
                vals = _VECTOR[op](cfg.centers[nz])
            grid, l2, c2 = _snap(cfg, vals, d.grid[nz])
            lost.append(l2)
            clamped += c2
        return RealDist.make(cfg, atoms, grid, math.fsum(lost), clamped)

    def binop(self, op: str, a: RealDist, b: RealDist) -> RealDist:
        cfg = self.cfg
        lost = [a.lost * b.total(), b.lost * a.total()]
        clamped = a.clamped + b.clamped
        atoms: dict = {}
        pending = []  # (values, masses) pairs that go straight to the grid
        if a.atoms and b.atoms:
            if len(a.atoms) * len(b.atoms) <= EXACT_CAP:
                f = _BIN_SCALAR[op]
                for va, ma in a.atoms.items():
                    for vb, mb in b.atoms.items():
                        r = _safe(f, va, vb)
                        if r is None:
                            lost.append(ma * mb)
                        else:
                            atoms[r] = atoms.get(r, 0.0) + ma * mb
            else:
                pending.append((_arr(a.atoms), _arr(b.atoms)))
        ga, gb = _grid_arr(cfg, a), _grid_arr(cfg, b)
        if ga is not None:
            if b.atoms:
                pending.append((ga, _arr(b.atoms)))
            if gb is not None:
                pending.append((ga, gb))
        if gb is not None and a.atoms:
            pending.append((_arr(a.atoms), gb))
        grid = None
        for (va, ma), (vb, mb) in pending:
            with np.errstate(all="ignore"):
                vals = _BIN_VECTOR[op].outer(va, vb).ravel()
            g, l2, c2 = _snap(cfg, vals, np.multiply.outer(ma, mb).ravel())
            grid = g if grid is None else grid + g
            lost.append(l2)
            clamped += c2
        return RealDist.make(cfg, atoms, grid, math.fsum(lost), clamped)

    # evaluation ----------------------------------------------------------

    def eval(self, t: Term, env: Mapping[str, Value]) -> Value:
        key = self._memo_key(t, env)
        if key is not None:
            hit = self._memo.get(key)
            if hit is not None:
                return hit
        v = self._eval(t, env)
        if key is not None:
            self._memo[key] = v
        return v

    def _memo_key(self, t: Term, env):
        entry = self._fv.get(id(t))
        if entry is None:
            # the term is kept alive so its id cannot be reused
            entry = self._fv[id(t)] = (t, tuple(sorted(free_vars(t))))
        parts = [id(t)]
        for name in entry[1]:
            v = env[name]
            if isinstance(v, RealDist):
                k = v.key()
            elif isinstance(v, float):
                k = ("u", v, math.copysign(1.0, v))
            else:
                k = None
            if k is None:
                return None
            parts.append(k)
        return tuple(parts)

    def _eval(self, t: Term, env) -> Value:
        cfg = self.cfg
        match t:
            case Var(name):
                return env[name]
            case Num(value):
                return RealDist.point(cfg, value)
            case Unif():
                return self.unif()
            case Lam(name, ty, body):
                # the codomain is only needed for fix, which reads the domain
                return FunValue(Arrow(ty, None), lambda v: self.eval(body, {**env, name: v}))
            case App(fn, arg):
                return self.eval(fn, env)(self.eval(arg, env))
            case Unop(op, arg):
                return self.unop(op, self.eval(arg, env))
            case Binop(op, left, right):
                return self.binop(op, self.eval(left, env), self.eval(right, env))
            case Choice(p, left, right):
                branches = [(w, b) for w, b in ((p, left), (1.0 - p, right)) if w > 0]
                return cone_lincomb([w for w, _ in branches],
                                    [self.eval(b, env) for _, b in branches])
            case Let(name, bound, body):
                return self._let(name, self.eval(bound, env), body, env)
            case Fix(body):
                return self._fix(self.eval(body, env))
        raise StructuralError(f"cannot evaluate {t!r}")

    def _let(self, name, nu: RealDist, body, env) -> Value:
        def at(v):
            return self.eval(body, {**env, name: RealDist.point(self.cfg, v)})

        single = nu.single()
        if single is not None:
            v, m = single
            out = at(v) if m == 1.0 else cone_lincomb([m], [at(v)])
        else:
            pts = nu.items()
            if not pts:
                out = cone_lincomb([0.0], [at(0.0)])
            else:
                vals = self._map(at, [v for v, _ in pts])
                out = cone_lincomb([m for _, m in pts], vals)
        if nu.lost and isinstance(out, RealDist):
            out = RealDist.make(self.cfg, out.atoms, out.grid, out.lost + nu.lost, out.clamped)
        return out

    def _map(self, fn, xs):
        workers = self.cfg.workers
        if not workers or workers <= 1 or len(xs) < 2 or getattr(self._local, "inside", False):
            return [fn(x) for x in xs]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=workers)

        def task(x):
            self._local.inside = True
            return fn(x)

        return list(self._pool.map(task, xs))

    # fixpoints -----------------------------------------------------------

    def _fix(self, step: FunValue) -> Value:
        ty = step.ty.dom  # a step has type s => s
        iterates = [self.bottom(ty)]

        def chain(n):
            while len(iterates) <= n:
                iterates.append(step(iterates[-1]))
            return iterates[n]

        return self._resolve(ty, chain)

    def _resolve(self, ty: Type, chain: Callable[[int], Value]) -> Value:
        """Least upper bound of ``chain`` at type ``ty``.

        At function types this is taken pointwise; at ground types the chain
        is unfolded until two consecutive iterates differ by at most
        ``fix_tol`` in norm, or ``fix_unfold`` steps.
        """
        if isinstance(ty, Arrow):
            return FunValue(ty, lambda a: self._resolve(ty.cod, lambda n: chain(n)(a)))
        prev = chain(0)
        delta, converged, n = math.inf, False, 0
        for n in range(1, self.cfg.fix_unfold + 1):
            cur = chain(n)
            if isinstance(cur, RealDist):
                ok = prev.leq(cur)
                delta = abs(cur.total() - prev.total())
            else:
                ok = prev <= cur + MONOTONE_TOL
                delta = abs(cur - prev)
            if not ok:
                raise ContractViolation(f"fixpoint iterate {n} is not above iterate {n - 1}",
                                        witness=(n, prev, cur))
            prev = cur
            if delta <= self.cfg.fix_tol:
                converged = True
                break
        self.fix_reports.append(FixReport(n, delta, converged))
        return prev


def _arr(atoms: dict) -> tuple[np.ndarray, np.ndarray]:
    n = len(atoms)
    return np.fromiter(atoms, float, n), np.fromiter(atoms.values(), float, n)


def _grid_arr(cfg, d: RealDist):
    if d.grid is None:
        return None
    nz = np.flatnonzero(d.grid)
    return cfg.centers[nz], d.grid[nz]


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def value_type(v) -> Type:
    if isinstance(v, FiniteMeasure):
        return REAL
    if isinstance(v, (int, float)):
        return UNIT
    if isinstance(v, FunValue):
        return v.ty
    raise StructuralError(f"not a PCF value: {v!r}")


def _to_public(ev: Evaluator, v, ty: Type):
    if ty == REAL:
        return v.to_measure()
    if ty == UNIT:
        return float(v)
    return FunValue(ty, lambda a: _to_public(ev, v(_from_public(ev, a, ty.dom)), ty.cod))


def _from_public(ev: Evaluator, v, ty: Type):
    if ty == REAL:
        if isinstance(v, RealDist):
            return v
        return RealDist.from_measure(ev.cfg, v)
    if ty == UNIT:
        return float(v)
    return FunValue(ty, lambda a: _from_public(ev, v(_to_public(ev, a, ty.dom)), ty.cod))


@dataclass
class ProgramResult:
    value: Any
    type: Type
    fix_reports: list[FixReport]

    @property
    def residual(self) -> float:
        return max((r.residual for r in self.fix_reports), default=0.0)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.fix_reports)

    @property
    def lost_mass(self) -> float:
        return self.value.lost_mass if isinstance(self.value, FiniteMeasure) else 0.0

    @property
    def clamped(self) -> int:
        return self.value.clamped if isinstance(self.value, FiniteMeasure) else 0


def evaluate(term: Term, env: Mapping[str, Value] | None = None,
             cfg: GridConfig | None = None) -> ProgramResult:
    """Typecheck and evaluate ``term``; ``env`` binds free variables to public values."""
    env = dict(env or {})
    types = {k: value_type(v) for k, v in env.items()}
    ty = typecheck(term, types)
    if sys.getrecursionlimit() < RECURSION_LIMIT:
        sys.setrecursionlimit(RECURSION_LIMIT)
    with Evaluator(cfg) as ev:
        inner = {k: _from_public(ev, v, types[k]) for k, v in env.items()}
        out = ev.eval(term, inner)
        value = _to_public(ev, out, ty)
        return ProgramResult(value, ty, ev.fix_reports)


def run_program(text: str, cfg: GridConfig | None = None,
                env: Mapping[str, Value] | None = None) -> ProgramResult:
    return evaluate(parse(text, free=(env or {}).keys()), env, cfg)


GEOMETRIC = "(fix (lam f: real => real. lam x: real. choice 0.5 x (f plus(x, 1.0)))) 0.0"
GEOMETRIC_CONFIG = GridConfig(lo=-0.5, hi=99.5, bins=100, fix_unfold=64, fix_tol=0.0)


def run_geometric(cfg: GridConfig | None = None) -> ProgramResult:
    """Geometric loop: stop with probability 1/2, otherwise recurse on ``x + 1``.

    Mass ``2^-(k+1)`` lands on the cell of ``k``; the fixpoint residual
    accounts for the unexplored tail.
    """
    return run_program(GEOMETRIC, cfg or GEOMETRIC_CONFIG)
