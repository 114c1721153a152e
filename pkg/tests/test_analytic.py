import itertools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conesem import analytic as an
from conesem import pcs as pc
from conesem.errors import BallViolation, StructuralError
from conesem.suites import bool_series, pathological_pair, random_series, random_symcoeffs


def series_from_sympy(expr, symbols) -> an.AnalyticSeries:
    poly = sp.Poly(sp.expand(expr), *symbols)
    coeffs = {}
    for exps, c in poly.terms():
        coeffs[tuple(i for i, e in enumerate(exps) for _ in range(e))] = float(c)
    return an.AnalyticSeries(len(symbols), coeffs)


def to_sympy(f: an.AnalyticSeries, symbols):
    return sum(sp.Rational(c) * sp.Mul(*[symbols[i] for i in m]) for m, c in f.coeffs.items())


x0, x1 = sp.symbols("x0 x1")


class TestSeries:
    def test_negative_coefficients_rejected(self):
        with pytest.raises(StructuralError):
            an.AnalyticSeries(1, {(0,): -1.0})

    def test_degree_bound_enforced(self):
        with pytest.raises(StructuralError):
            an.AnalyticSeries(1, {(0, 0, 0): 1.0}, max_degree=2)

    def test_grading(self):
        f = an.AnalyticSeries(1, {(): 0.5, (0, 0): 0.25})
        parts = an.taylor_grade(f)
        assert [p.coeffs for p in parts] == [{(): 0.5}, {}, {(0, 0): 0.25}]

    def test_reconstruction_from_grades(self):
        rng = np.random.default_rng(2)
        f = random_series(rng, 2, 4)
        for _ in range(20):
            x = rng.dirichlet([1, 1, 1])[:2]
            assert math.fsum(p(x) for p in an.taylor_grade(f)) == pytest.approx(f(x), abs=1e-12)

    def test_json_roundtrip(self):
        f = an.AnalyticSeries(2, {(0, 1): 0.5, (): 0.1}, max_degree=3)
        back = an.AnalyticSeries.from_json(f.to_json())
        assert back.coeffs == f.coeffs and back.max_degree == 3


class TestMultilinear:
    def test_cross_term(self):
        h = an.SymCoeffs(2, 2, {(0, 1): 0.5})
        assert h([1.0, 0.0], [0.0, 1.0]) == 0.5

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        h = an.SymCoeffs(3, 3, {m: rng.uniform() for m in itertools.combinations_with_replacement(range(3), 3)})
        args = [rng.uniform(0, 1, 3) for _ in range(3)]
        ref = h(*args)
        for perm in itertools.permutations(args):
            assert h(*perm) == pytest.approx(ref, abs=1e-14)

    def test_diagonal_matches_hand_expansion(self):
        # h(u,v) = a u0 v0 + b (u0 v1 + u1 v0) + c u1 v1, so h(x,x) = a x0^2 + 2b x0 x1 + c x1^2
        h = an.SymCoeffs(2, 2, {(0, 0): 0.3, (0, 1): 0.2, (1, 1): 0.1})
        assert h.diagonal().coeffs == {(0, 0): 0.3, (0, 1): 0.4, (1, 1): 0.1}

    def test_arity_mismatch(self):
        with pytest.raises(StructuralError):
            an.SymCoeffs(2, 2, {(0,): 1.0})


class TestDifferences:
    def test_first_order(self):
        f = an.AnalyticSeries(1, {(0, 0): 1.0})
        assert an.fdiff(f, [[0.5]], [0.25]).delta == pytest.approx(0.5)

    def test_order_zero_is_value(self):
        f = an.AnalyticSeries(1, {(0,): 0.3, (): 0.1})
        d = an.fdiff(f, [], [0.5])
        assert d.plus == f([0.5]) and d.minus == 0.0

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_pathological_second_difference(self, a, b):
        d = an.fdiff(pathological_pair, [np.array([a, 0.0]), np.array([0.0, b])], np.zeros(2))
        assert d.delta == pytest.approx(-a * b, abs=1e-12)

    def test_parity_subsets(self):
        for n in range(5):
            even, odd = an.parity_subsets(n)
            assert len(even) == len(odd) + (n == 0) == max(2 ** (n - 1), 1)
            assert all((n - len(s)) % 2 == 0 for s in even)

    def test_recurrence_in_the_last_displacement(self):
        # an order-n difference is the order-(n-1) difference at x+u_n minus the one at x
        rng = np.random.default_rng(8)
        f = random_series(rng, 2, 4)
        for n in range(1, 5):
            parts = rng.dirichlet(np.ones(n + 2), size=2).T[: n + 1] * 0.9
            x, us = parts[0], list(parts[1:])
            lhs = an.fdiff(f, us, x).delta
            rhs = an.fdiff(f, us[:-1], x + us[-1]).delta - an.fdiff(f, us[:-1], x).delta
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_ball_guard(self):
        f = an.AnalyticSeries(1, {(0,): 1.0})
        with pytest.raises(BallViolation):
            an.fdiff(f, [[0.8]], [0.5], ball=pc.snat(0))


class TestTotalMonotone:
    def test_bool_series_passes(self):
        f = bool_series()
        rep = an.check_total_monotone(f, pc.boolean(), max_order=4, samples=200, seed=1)
        assert rep.passed and rep.checked == 800
        assert f([1.0, 0.0]) == 0.0 and f([0.0, 1.0]) == 0.0
        assert f([0.5, 0.5]) == pytest.approx(1 - 2**-8, abs=1e-12)

    def test_pathological_pair_fails_at_order_two(self):
        rep = an.check_total_monotone(pathological_pair, pc.with_(pc.one(), pc.one()), max_order=2,
                                      samples=200, seed=3)
        assert not rep.passed and rep.witness.order == 2
        w = rep.witness
        assert w.plus - w.minus < 0

    def test_linear_maps_pass(self):
        rng = np.random.default_rng(9)
        m = pc.PcsMatrix(pc.snat(2), pc.orth_snat(1), rng.uniform(0, 1, (3, 2)))
        rep = an.check_total_monotone(lambda x: m.entries.T @ x, pc.snat(2), max_order=3, samples=50)
        assert rep.passed


class TestPolarize:
    def test_product_of_coordinates(self):
        h = an.polarize(an.AnalyticSeries(2, {(0, 1): 1.0}))
        assert h.coeffs == {(0, 1): 0.5}

    def test_linear_map_is_itself(self):
        f = an.AnalyticSeries(3, {(0,): 0.2, (2,): 0.7})
        assert an.polarize(f).coeffs == {(0,): 0.2, (2,): 0.7}

    def test_requires_homogeneous(self):
        with pytest.raises(StructuralError):
            an.polarize(an.AnalyticSeries(1, {(): 1.0, (0,): 1.0}))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_roundtrip(self, seed):
        h = random_symcoeffs(np.random.default_rng(seed))
        assert an.polarize(h.diagonal(), h.arity).allclose(h, 1e-10)

    def test_norm_bound(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            h = random_symcoeffs(rng)
            f = h.diagonal()
            n = h.arity
            assert an.polarize(f, n).sup_norm() <= n**n / math.factorial(n) * f.norm() + 1e-12


class TestShiftAndCompose:
    def test_shift_of_square(self):
        g = an.local_shift(an.AnalyticSeries(1, {(0, 0): 1.0}), [0.5])
        assert g.allclose(an.AnalyticSeries(1, {(): 0.25, (0,): 1.0, (0, 0): 1.0}))

    def test_shift_at_origin_is_identity(self):
        f = random_series(np.random.default_rng(0), 2, 3)
        assert an.local_shift(f, [0.0, 0.0]).allclose(f)

    def test_shift_matches_sympy(self):
        rng = np.random.default_rng(1)
        f = random_series(rng, 2, 3)
        p = np.array([0.25, 0.375])
        want = series_from_sympy(to_sympy(f, [x0, x1]).subs({x0: x0 + sp.Rational(1, 4), x1: x1 + sp.Rational(3, 8)},
                                                         simultaneous=True), [x0, x1])
        assert an.local_shift(f, p).allclose(want, 1e-12)
        assert an.local_shift(f, p).constant() == pytest.approx(f(p), abs=1e-12)

    def test_shift_point_outside_ball(self):
        with pytest.raises(BallViolation):
            an.local_shift(an.AnalyticSeries(1, {(0,): 1.0}), [1.5])

    def test_compose_square_after_polynomial(self):
        g = an.AnalyticSeries(1, {(0, 0): 1.0})
        f = an.AnalyticSeries(1, {(0,): 1.0, (0, 0): 1.0})
        got = an.compose_series(g, f, 4, check=False)
        assert got.allclose(an.AnalyticSeries(1, {(0, 0): 1.0, (0, 0, 0): 2.0, (0, 0, 0, 0): 1.0}))

    def test_compose_with_identity(self):
        f = an.AnalyticSeries(1, {(0,): 0.3, (0, 0, 0): 0.2})
        ident = an.AnalyticSeries(1, {(0,): 1.0})
        assert an.compose_series(ident, f, 2).allclose(f.truncate(2))

    def test_compose_agrees_with_nested_evaluation(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            g = random_series(rng, 2, 3).scale(0.2)
            fs = [random_series(rng, 1, 3).scale(0.1) for _ in range(2)]
            comp = an.compose_series(g, fs, 9, check=False)
            x = np.array([0.3])
            assert comp(x) == pytest.approx(g(np.array([fi(x) for fi in fs])), abs=1e-12)

    def test_compose_matches_sympy(self):
        rng = np.random.default_rng(5)
        g = random_series(rng, 1, 3)
        f = random_series(rng, 2, 2)
        want = series_from_sympy(to_sympy(g, [x0]).subs(x0, to_sympy(f, [x0, x1])), [x0, x1])
        got = an.compose_series(g, f, 6, check=False)
        assert got.allclose(want, 1e-12)

    def test_compose_ball_check(self):
        g = an.AnalyticSeries(1, {(0,): 1.0})
        f = an.AnalyticSeries(1, {(0,): 3.0})
        with pytest.raises(BallViolation):
            an.compose_series(g, f, 2)

    def test_gradient_against_central_differences(self):
        rng = np.random.default_rng(30)
        f = random_series(rng, 3, 4)
        p = np.array([0.2, 0.1, 0.3])
        step = 1e-5
        fd = [(f(p + step * e) - f(p - step * e)) / (2 * step) for e in np.eye(3)]
        np.testing.assert_allclose(an.gradient(f, p), fd, atol=1e-6, rtol=0)

    def test_local_cone_norm(self):
        cone = an.LocalCone(pc.snat(1), np.array([0.25, 0.25]))
        assert cone.norm([0.5, 0.0]) == pytest.approx(1.0)
        assert cone.contains([0.25, 0.25]) and not cone.contains([1.0, 0.0])
