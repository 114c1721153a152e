"""Seeded invariant suites run by ``conesem check``.

Every case draws from its own generator ``default_rng([seed, case_index])``
so results do not depend on scheduling; ``workers`` only changes how cases
and path integrals are fanned out.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import analytic as an
from . import cantor as ca
from . import measure as me
from . import pcs as pc
from .errors import OrderError

EXACT = 1e-12


@dataclass
class CaseResult:
    name: str
    passed: bool
    checked: int
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.detail = {k: v.item() if isinstance(v, np.generic) else v for k, v in self.detail.items()}

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "checked": self.checked,
                "detail": self.detail}


@dataclass
class SuiteReport:
    suite: str
    seed: int
    cases: list[CaseResult]

    @property
    def passed(self) -> int:
        return sum(c.passed for c in self.cases)

    @property
    def failed(self) -> int:
        return len(self.cases) - self.passed

    @property
    def ok(self) -> bool:
        return self.failed == 0

    def to_json(self) -> dict:
        return {"suite": self.suite, "seed": self.seed, "passed": self.passed,
                "failed": self.failed, "cases": [c.to_json() for c in self.cases]}


Case = Callable[[np.random.Generator, int], CaseResult]


def _run(name: str, cases: list[Case], seed: int, workers: int | None) -> SuiteReport:
    def go(ic):
        i, case = ic
        return case(np.random.default_rng([seed, i]), workers or 1)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(go, enumerate(cases)))
    else:
        results = [go(ic) for ic in enumerate(cases)]
    return SuiteReport(name, seed, results)


def _worst(errs) -> float:
    return max(errs, default=0.0)


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def random_measure(rng, space: me.Space, density: float = 0.7, total: float | None = None):
    pts = space.points()
    mass = {p: float(rng.uniform(0.05, 1.0)) for p in pts if rng.random() < density}
    if not mass:
        mass = {pts[0]: 1.0}
    if total is not None:
        s = math.fsum(mass.values())
        mass = {p: total * m / s for p, m in mass.items()}
    return me.FiniteMeasure(space, mass)


def random_kernel(rng, source: me.Space, target: me.Space) -> me.Kernel:
    rows = {}
    for p in source.points():
        rows[p] = random_measure(rng, target, total=float(rng.uniform(0.2, 1.0)))
    return me.Kernel(source, target, rows)


def _int_space(n: int) -> me.Space:
    return me.Space.discrete(range(n))


def measure_dist(a: me.FiniteMeasure, b: me.FiniteMeasure) -> float:
    keys = set(a.mass) | set(b.mass)
    return max((abs(a[p] - b[p]) for p in keys), default=0.0)


def value_dist(a, b) -> float:
    if isinstance(a, me.FiniteMeasure):
        return measure_dist(a, b)
    return float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))


# ---------------------------------------------------------------------------
# measure-axioms
# ---------------------------------------------------------------------------


def _cone_laws(rng, workers) -> CaseResult:
    errs, n = [], 100
    for _ in range(n):
        sp = _int_space(int(rng.integers(1, 9)))
        a, b, c = (random_measure(rng, sp) for _ in range(3))
        lam, mu = (float(x) for x in rng.uniform(0, 2, 2))
        errs += [measure_dist(a + b, b + a), measure_dist((a + b) + c, a + (b + c)),
                 measure_dist(me.scale(lam, a + b), me.scale(lam, a) + me.scale(lam, b)),
                 measure_dist(me.scale(lam + mu, a), me.scale(lam, a) + me.scale(mu, a)),
                 abs((a + b).norm() - a.norm() - b.norm()), abs(me.scale(lam, a).norm() - lam * a.norm())]
    return CaseResult("cone-laws", _worst(errs) <= EXACT, n, {"max_error": _worst(errs)})


def _subtraction(rng, workers) -> CaseResult:
    bad, n = 0, 100
    for _ in range(n):
        sp = _int_space(int(rng.integers(1, 9)))
        # dyadic masses make (b - a) + a == b exact
        a = me.FiniteMeasure(sp, {p: int(rng.integers(0, 64)) / 64 for p in sp.points()})
        b = a + me.FiniteMeasure(sp, {p: int(rng.integers(0, 64)) / 64 for p in sp.points()})
        if (b - a) + a != b:
            bad += 1
        bigger = a + me.FiniteMeasure(sp, {sp.points()[0]: 0.5})
        try:
            me.sub(a, bigger)
            bad += 1
        except OrderError:
            pass
    return CaseResult("partial-subtraction", bad == 0, n, {"failures": bad})


def _pushforward(rng, workers) -> CaseResult:
    errs, n = [], 100
    for _ in range(n):
        sp = _int_space(int(rng.integers(1, 12)))
        mu = random_measure(rng, sp)
        k1, k2 = (int(v) for v in rng.integers(1, 5, 2))
        mid, tgt = _int_space(max(sp.points()) // k1 + 1), _int_space(max(sp.points()) // (k1 * k2) + 1)
        f, g = (lambda x: x // k1), (lambda y: y // k2)
        direct = me.pushforward(lambda x: g(f(x)), mu, tgt)
        staged = me.pushforward(g, me.pushforward(f, mu, mid), tgt)
        errs += [measure_dist(direct, staged), abs(direct.norm() - mu.norm())]
    return CaseResult("pushforward-functoriality", _worst(errs) <= EXACT, n,
                      {"max_error": _worst(errs)})


def _kernels(rng, workers) -> CaseResult:
    errs, bad, n = [], 0, 100
    for _ in range(n):
        a, b, c = (_int_space(int(k)) for k in rng.integers(1, 9, 3))
        k1, k2 = random_kernel(rng, a, b), random_kernel(rng, b, c)
        comp = me.kernel_compose(k2, k1)
        errs.append(float(np.max(np.abs(comp.to_matrix() - k1.to_matrix() @ k2.to_matrix()))))
        for unit_first in (True, False):
            u = me.Kernel.identity(b if unit_first else a)
            side = me.kernel_compose(u, k1) if unit_first else me.kernel_compose(k1, u)
            errs.append(float(np.max(np.abs(side.to_matrix() - k1.to_matrix()))))
        if not comp.is_substochastic():
            bad += 1
    ok = _worst(errs) <= EXACT and bad == 0
    return CaseResult("kernel-composition", ok, n, {"max_error": _worst(errs), "not_substochastic": bad})


def brute_convolution(u, v) -> list[float]:
    out = [[] for _ in range(len(u) + len(v) - 1)]
    for i, x in enumerate(u):
        for j, y in enumerate(v):
            out[i + j].append(x * y)
    return [math.fsum(t) for t in out]


def _convolution(rng, workers) -> CaseResult:
    errs, n = [], 100

    def close(a, b):
        m = max(len(a), len(b))
        a, b = list(a) + [0.0] * (m - len(a)), list(b) + [0.0] * (m - len(b))
        return max(abs(x - y) for x, y in zip(a, b))

    for _ in range(n):
        u, v, w = ([float(x) for x in rng.uniform(0, 1, int(rng.integers(1, 7)))] for _ in range(3))
        errs += [close(me.convolve([1.0], u), u), close(me.convolve(u, v), me.convolve(v, u)),
                 close(me.convolve(me.convolve(u, v), w), me.convolve(u, me.convolve(v, w))),
                 close(me.convolve(u, v), brute_convolution(u, v))]
    return CaseResult("convolution", _worst(errs) <= EXACT, n, {"max_error": _worst(errs)})


def measure_axioms(seed: int = 0, workers: int | None = None) -> SuiteReport:
    return _run("measure-axioms", [_cone_laws, _subtraction, _pushforward, _kernels, _convolution],
                seed, workers)


# ---------------------------------------------------------------------------
# fubini
# ---------------------------------------------------------------------------


def _fubini(rng, workers) -> CaseResult:
    errs, n = [], 200
    for i in range(n):
        x, y = _int_space(int(rng.integers(1, 6))), _int_space(int(rng.integers(1, 6)))
        mu, nu = random_measure(rng, x), random_measure(rng, y)
        if i % 2:
            z = _int_space(int(rng.integers(1, 5)))
            table = {(r, s): random_measure(rng, z, total=float(rng.uniform(0, 1)))
                     for r in x.points() for s in y.points()}
        else:
            table = {(r, s): float(rng.uniform(0, 1)) for r in x.points() for s in y.points()}
        eta = me.Path(x, lambda r, t=table, y=y: me.Path(y, lambda s, r=r: t[(r, s)]))
        res = me.fubini_swap(eta, mu, nu)
        errs += [value_dist(res.x_first, res.y_first), value_dist(res.x_first, res.product)]
    return CaseResult("fubini-orders", _worst(errs) <= EXACT, n, {"max_error": _worst(errs)})


def _change_of_variable(rng, workers) -> CaseResult:
    errs, n = [], 200
    for _ in range(n):
        x = _int_space(int(rng.integers(1, 10)))
        k = int(rng.integers(1, 4))
        y = _int_space(max(x.points()) // k + 1)
        mu = random_measure(rng, x)
        beta_vals = {s: float(rng.uniform(0, 1)) for s in y.points()}
        beta = me.Path(y, beta_vals)
        lhs = me.integrate_path(beta, me.pushforward(lambda r: r // k, mu, y), workers=workers)
        rhs = me.integrate_path(me.Path(x, lambda r: beta_vals[r // k]), mu, workers=workers)
        errs.append(abs(lhs - rhs))
    return CaseResult("change-of-variable", _worst(errs) <= EXACT, n, {"max_error": _worst(errs)})


def fubini(seed: int = 0, workers: int | None = None) -> SuiteReport:
    return _run("fubini", [_fubini, _change_of_variable], seed, workers)


# ---------------------------------------------------------------------------
# monotone
# ---------------------------------------------------------------------------


def bool_series(order: int = 8) -> an.AnalyticSeries:
    """``sum_{n=1..order} 2^n x0^n x1^n``: zero on both vertices of the Bool ball."""
    return an.AnalyticSeries(2, {(0,) * n + (1,) * n: 2.0 ** n for n in range(1, order + 1)})


def pathological_pair(x) -> float:
    return x[0] + x[1] - x[0] * x[1]


def _bool_example(rng, workers) -> CaseResult:
    f = bool_series()
    rep = an.check_total_monotone(f, pc.boolean(), max_order=4, samples=500,
                                  seed=int(rng.integers(2**32)))
    half = f([0.5, 0.5])
    ok = rep.passed and f([1.0, 0.0]) == 0.0 and f([0.0, 1.0]) == 0.0 and abs(half - 0.99609375) <= EXACT
    return CaseResult("bool-series", ok, rep.checked, {"f_half": half, "monotone": rep.passed})


def _pathological_witness(rng, workers) -> CaseResult:
    errs, n = [], 50
    for _ in range(n):
        a, b = (float(v) for v in rng.uniform(0, 1, 2))
        d = an.fdiff(pathological_pair, [np.array([a, 0.0]), np.array([0.0, b])], np.zeros(2))
        errs.append(abs(d.delta + a * b))
    rep = an.check_total_monotone(pathological_pair, pc.with_(pc.one(), pc.one()), max_order=2,
                                  samples=200, seed=int(rng.integers(2**32)))
    w = rep.witness
    ok = _worst(errs) <= EXACT and not rep.passed and w is not None and w.order == 2
    detail = {"max_error": _worst(errs), "witness_order": None if w is None else w.order,
              "witness_delta": None if w is None else float(w.plus - w.minus)}
    return CaseResult("pathological-witness", ok, n, detail)


def random_series(rng, dim: int, degree: int, terms: int = 4) -> an.AnalyticSeries:
    coeffs = {}
    for _ in range(terms):
        k = int(rng.integers(0, degree + 1))
        m = tuple(sorted(int(i) for i in rng.integers(0, dim, k)))
        coeffs[m] = coeffs.get(m, 0.0) + float(rng.uniform(0, 1))
    return an.AnalyticSeries(dim, coeffs)


def _composition(rng, workers) -> CaseResult:
    bad, n = 0, 10
    for _ in range(n):
        dim = int(rng.integers(1, 3))
        ball = an.default_ball(dim)
        f = random_series(rng, dim, 2)
        g = random_series(rng, 1, 3)
        h = an.compose_series(g, f, out_degree=6, check=False)
        if any(c < 0 for c in h.coeffs.values()):
            bad += 1
            continue
        rep = an.check_total_monotone(h, ball, max_order=3, samples=60, seed=int(rng.integers(2**32)))
        bad += not rep.passed
    return CaseResult("composition-stability", bad == 0, n, {"failures": bad})


def monotone(seed: int = 0, workers: int | None = None) -> SuiteReport:
    return _run("monotone", [_bool_example, _pathological_witness, _composition], seed, workers)


# ---------------------------------------------------------------------------
# polarize
# ---------------------------------------------------------------------------


def random_symcoeffs(rng, max_arity: int = 4, max_dim: int = 3) -> an.SymCoeffs:
    n, dim = int(rng.integers(1, max_arity + 1)), int(rng.integers(1, max_dim + 1))
    ms = list(itertools.combinations_with_replacement(range(dim), n))
    return an.SymCoeffs(n, dim, {m: float(rng.uniform(0, 1)) for m in ms if rng.random() < 0.7})


def _polarization(rng, workers) -> CaseResult:
    errs, bound_fail, n = [], 0, 100
    for _ in range(n):
        h = random_symcoeffs(rng)
        f = h.diagonal()
        back = an.polarize(f, h.arity)
        keys = set(h.coeffs) | set(back.coeffs)
        errs.append(max((abs(h.coeffs.get(m, 0.0) - back.coeffs.get(m, 0.0)) for m in keys), default=0.0))
        ball = an.default_ball(h.dim)
        k = h.arity
        if back.sup_norm(ball) > k ** k / math.factorial(k) * an.sampled_sup(f, ball, 64) + 1e-12:
            bound_fail += 1
    ok = _worst(errs) <= 1e-10 and bound_fail == 0
    return CaseResult("polarize-roundtrip", ok, n, {"max_error": _worst(errs), "bound_failures": bound_fail})


def polarize(seed: int = 0, workers: int | None = None) -> SuiteReport:
    return _run("polarize", [_polarization], seed, workers)


# ---------------------------------------------------------------------------
# pcs
# ---------------------------------------------------------------------------


def constructed_spaces() -> list[pc.Pcs]:
    s, o, b = pc.snat(3), pc.orth_snat(2), pc.boolean()
    return [pc.one(), pc.bot(), s, o, b, pc.with_(s, o), pc.plus(s, b), pc.tensor(s, o),
            pc.tensor(b, b), pc.limpl(s, o), pc.limpl(b, s), pc.bang(b, 3), pc.bang(s, 2)]


def _snat_norms(rng, workers) -> CaseResult:
    errs, n = [], 100
    for _ in range(n):
        k = int(rng.integers(0, 6))
        v = rng.uniform(0, 1, k + 1)
        errs += [abs(pc.snat(k).vector(v).norm() - math.fsum(v)),
                 abs(pc.orth_snat(k).vector(v).norm() - float(v.max()))]
    return CaseResult("snat-norms", _worst(errs) <= EXACT, n, {"max_error": _worst(errs)})


def _tensor_norms(rng, workers) -> CaseResult:
    errs, n = [], 100
    for _ in range(n):
        x = pc.snat(int(rng.integers(0, 4))) if rng.random() < 0.5 else pc.orth_snat(int(rng.integers(0, 4)))
        y = pc.snat(int(rng.integers(0, 4))) if rng.random() < 0.5 else pc.orth_snat(int(rng.integers(0, 4)))
        u, v = x.vector(rng.uniform(0, 1, x.dim)), y.vector(rng.uniform(0, 1, y.dim))
        errs.append(abs(pc.tensor_vector(u, v).norm() - u.norm() * v.norm()))
    return CaseResult("tensor-norms", _worst(errs) <= EXACT, n, {"max_error": _worst(errs)})


def _biorthogonal(rng, workers) -> CaseResult:
    spaces = constructed_spaces()
    worst = max(pc.biorthogonal_defect(x) for x in spaces)
    same = all(pc.orth(pc.orth(x)).web == x.web
               and np.array_equal(pc.orth(pc.orth(x)).tests, x.tests)
               and np.array_equal(pc.orth(pc.orth(x)).gens, x.gens) for x in spaces)
    return CaseResult("biorthogonal", worst <= EXACT and same, len(spaces),
                      {"max_defect": worst, "double_orth_identity": same})


def _convolution_series(rng, workers) -> CaseResult:
    errs, n = [], 20
    for _ in range(n):
        k, d = int(rng.integers(0, 3)), int(rng.integers(1, 5))
        a = [float(x) for x in rng.dirichlet(np.ones(d + 1))]
        t = pc.convolution_series(a, k, d)
        u = pc.snat(k).vector(rng.dirichlet(np.ones(k + 1)) * rng.uniform(0, 1))
        direct = math.fsum(a_n * math.fsum(_conv_power(list(u.coeffs), n)) for n, a_n in enumerate(a))
        errs.append(abs(pc.power_series_apply(t, u).coeffs[0] - direct))
    return CaseResult("convolution-series", _worst(errs) <= EXACT, n, {"max_error": _worst(errs)})


def _conv_power(u: list[float], n: int) -> list[float]:
    out = [1.0]
    for _ in range(n):
        out = me.convolve(out, u)
    return out


def pcs(seed: int = 0, workers: int | None = None) -> SuiteReport:
    return _run("pcs", [_snat_norms, _tensor_norms, _biorthogonal, _convolution_series], seed, workers)


# ---------------------------------------------------------------------------
# cantor
# ---------------------------------------------------------------------------


def random_tree(rng, depth: int) -> ca.TreeVector:
    return ca.TreeVector(depth, {s: float(rng.uniform(0, 1)) for s in ca.strings(depth)
                                 if rng.random() < 0.6})


def random_additive(rng, depth: int) -> ca.TreeVector:
    leaves = {s: float(rng.uniform(0, 1)) for s in ca.strings(depth, depth)}
    return ca.from_measure(me.FiniteMeasure(ca.leaf_space(depth), leaves))


def antichains(depth: int) -> list[tuple[str, ...]]:
    """All prefix-antichains of binary strings of length ``<= depth`` (brute force)."""
    web = ca.strings(depth)
    out = []
    for r in range(len(web) + 1):
        for combo in itertools.combinations(web, r):
            if all(not (a.startswith(b) or b.startswith(a)) for a, b in itertools.combinations(combo, 2)):
                out.append(combo)
    return out


def _antichain_dp(rng, workers) -> CaseResult:
    chains = antichains(3)
    errs, n = [], 50
    for _ in range(n):
        x = random_tree(rng, 3)
        brute = max(math.fsum(x[s] for s in c) for c in chains)
        errs.append(abs(ca.antichain_norm(x) - brute))
    return CaseResult("antichain-dp", _worst(errs) == 0.0, n,
                      {"max_error": _worst(errs), "antichains": len(chains)})


def _cantor_roundtrip(rng, workers) -> CaseResult:
    bad, errs, n = 0, [], 50
    for _ in range(n):
        x = random_additive(rng, int(rng.integers(1, 7)))
        if ca.from_measure(ca.to_measure(x)) != x:
            bad += 1
        errs += [abs(ca.antichain_norm(x) - x[""]), abs(ca.to_measure(x).norm() - x[""])]
    ok = bad == 0 and _worst(errs) <= EXACT
    return CaseResult("measure-roundtrip", ok, n, {"failures": bad, "max_error": _worst(errs)})


def _equalizer(rng, workers) -> CaseResult:
    bad, n = 0, 50
    for i in range(n):
        d = int(rng.integers(1, 6))
        x = random_additive(rng, d) if i % 2 == 0 else random_tree(rng, d)
        if ca.is_additive(x) != ca.is_equalized(x):
            bad += 1
        if ca.antichain_norm(ca.theta_apply(x)) > ca.antichain_norm(x) + EXACT:
            bad += 1
    return CaseResult("theta-equalizer", bad == 0, n, {"failures": bad})


def cantor(seed: int = 0, workers: int | None = None) -> SuiteReport:
    return _run("cantor", [_antichain_dp, _cantor_roundtrip, _equalizer], seed, workers)


SUITES = {
    "measure-axioms": measure_axioms,
    "fubini": fubini,
    "monotone": monotone,
    "polarize": polarize,
    "pcs": pcs,
    "cantor": cantor,
}
