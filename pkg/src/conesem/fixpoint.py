"""Least fixpoints by Kleene iteration from the bottom of a unit ball."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ContractViolation

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10**6
_GUARD = 1e-12


class TraceRow(NamedTuple):
    iteration: int
    norm: float
    delta: float


@dataclass
class FixpointResult:
    value: float | np.ndarray
    iterations: int
    converged: bool
    residual: float
    trace: list[TraceRow] = field(default_factory=list)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "norm", "delta"])
        for row in self.trace:
            w.writerow([row.iteration, repr(row.norm), repr(row.delta)])
        return buf.getvalue()


def _l1(x) -> float:
    if isinstance(x, np.ndarray):
        return math.fsum(np.abs(x).ravel())
    return abs(float(x))


def kleene_fixpoint(f: Callable, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    bottom: float | np.ndarray = 0.0, norm: Callable = _l1,
                    in_ball: Callable | None = None, keep_trace: bool = True) -> FixpointResult:
    """Iterate ``x_{n+1} = f(x_n)`` from ``bottom``.

    Stops once ``norm(x_{n+1} - x_n) <= tol`` or after ``max_iter`` steps.
    Every iterate must stay in the unit ball (``norm <= 1`` by default) and
    the sequence must be nondecreasing; either failure raises
    :class:`ContractViolation` carrying the offending iterate.
    """
    if in_ball is None:
        def in_ball(v):
            return bool(np.all(np.asarray(v) >= -_GUARD)) and norm(v) <= 1.0 + _GUARD
    x = bottom
    trace = []
    delta = math.inf
    for n in range(1, max_iter + 1):
        nxt = f(x)
        if not in_ball(nxt):
            raise ContractViolation(f"iterate {n} left the unit ball", witness=(n, nxt))
        if np.any(np.asarray(nxt) < np.asarray(x) - _GUARD):
            raise ContractViolation(f"iterate {n} decreased: map is not monotone here",
                                    witness=(n, x, nxt))
        delta = norm(np.asarray(nxt) - np.asarray(x)) if isinstance(nxt, np.ndarray) \
            else abs(nxt - x)
        x = nxt
        if keep_trace:
            trace.append(TraceRow(n, norm(x), delta))
        if delta <= tol:
            return FixpointResult(x, n, True, delta, trace)
    return FixpointResult(x, max_iter, False, delta, trace)


# Named one-dimensional families used by the CLI and the acceptance suite.

def halfplus(x):
    return 0.5 + 0.25 * x * x


def sqrtfam(u: float) -> Callable:
    """``v -> u/2 + v^2/2``; least fixpoint ``1 - sqrt(1 - u)`` for ``u <= 1``."""
    return lambda v: 0.5 * u + 0.5 * v * v


def pathological(u: float) -> Callable:
    """``v -> u + v - u v``: least fixpoint 0 at ``u = 0`` and 1 for ``u > 0``."""
    return lambda v: u + v - u * v


BUILTINS = {
    "halfplus": lambda: halfplus,
    "sqrtfam": sqrtfam,
    "pathological": pathological,
}
