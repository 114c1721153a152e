import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from conesem import pcs as pc
from conesem.errors import StructuralError


def lp_norm_in_convex_hull(gens, x):
    """Oracle: smallest lam with x <= lam * (convex combination of gens)."""
    k, n = gens.shape
    # variables: weights w_1..w_k >= 0, minimize sum w subject to gens^T w >= x
    res = linprog(np.ones(k), A_ub=-gens.T, b_ub=-x, bounds=[(0, None)] * k, method="highs")
    assert res.status == 0
    return res.fun


class TestSnat:
    def test_snat_norm_is_l1(self):
        assert pc.snat(3).vector([0.1, 0.2, 0.3, 0.1]).norm() == pytest.approx(0.7)

    def test_orth_snat_norm_is_sup(self):
        assert pc.orth_snat(3).vector([0.1, 0.5, 0.3, 0.2]).norm() == 0.5

    def test_flags_swap_under_orth(self):
        t = pc.tensor(pc.snat(1), pc.snat(1))
        assert not t.exact and t.gens_exact
        o = pc.orth(t)
        assert o.exact and not o.gens_exact

    def test_boolean_norm(self):
        b = pc.boolean()
        assert b.vector([0.5, 0.5]).norm() == 1.0
        assert not b.vector([0.7, 0.7]).is_member()

    def test_double_orth_is_identity(self):
        for x in (pc.snat(2), pc.orth_snat(2), pc.boolean(), pc.limpl(pc.snat(1), pc.boolean())):
            xx = pc.orth(pc.orth(x))
            assert xx.web == x.web
            assert np.array_equal(xx.tests, x.tests) and np.array_equal(xx.gens, x.gens)


class TestConstructions:
    def test_generators_are_members_of_every_space(self):
        spaces = [pc.one(), pc.bot(), pc.with_(pc.snat(1), pc.boolean()), pc.plus(pc.snat(2), pc.one()),
                  pc.tensor(pc.boolean(), pc.orth_snat(1)), pc.limpl(pc.snat(2), pc.orth_snat(1)),
                  pc.bang(pc.boolean(), 3)]
        for x in spaces:
            assert pc.biorthogonal_defect(x) <= 1e-12, x.name

    def test_plus_norm_is_sum(self):
        x = pc.plus(pc.orth_snat(1), pc.orth_snat(2))
        v = x.vector([0.2, 0.4, 0.1, 0.3, 0.2])
        assert v.norm() == pytest.approx(0.4 + 0.3)

    def test_with_norm_is_max(self):
        x = pc.with_(pc.snat(1), pc.snat(1))
        assert x.vector([0.2, 0.3, 0.6, 0.1]).norm() == pytest.approx(0.7)

    def test_tensor_of_simple_vectors(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x, y = pc.snat(2), pc.orth_snat(1)
            u, v = x.vector(rng.uniform(0, 1, 3)), y.vector(rng.uniform(0, 1, 2))
            assert pc.tensor_vector(u, v).norm() == pytest.approx(u.norm() * v.norm(), abs=1e-12)

    def test_limpl_norm_matches_operator_norm(self):
        x, y = pc.snat(2), pc.orth_snat(1)
        rng = np.random.default_rng(1)
        e = rng.uniform(0, 1, (3, 2))
        m = pc.PcsMatrix(x, y, e)
        # norm of a matrix into the sup-ball from the simplex: largest entry
        assert m.norm() == pytest.approx(e.max())
        assert m.as_vector().norm() == pytest.approx(e.max())

    def test_gens_span_snat_ball(self):
        x = pc.snat(2)
        v = np.array([0.1, 0.2, 0.3])
        assert lp_norm_in_convex_hull(x.gens, v) == pytest.approx(x.vector(v).norm())

    def test_unknown_constructor(self):
        with pytest.raises(StructuralError):
            pc.build("nope")

    def test_json_roundtrip(self):
        x = pc.with_(pc.snat(1), pc.boolean())
        back = pc.Pcs.from_json(x.to_json())
        assert back.web == x.web and np.array_equal(back.tests, x.tests)


class TestMatrices:
    def test_compose_is_reversed_product(self):
        a, b, c = pc.snat(1), pc.snat(2), pc.snat(0)
        t1 = pc.PcsMatrix(a, b, [[0.1, 0.2, 0.3], [0.0, 0.5, 0.5]])
        t2 = pc.PcsMatrix(b, c, [[1.0], [0.5], [0.25]])
        comp = pc.mat_compose(t2, t1)
        x = a.vector([0.3, 0.6])
        assert pc.mat_apply(comp, x) == pc.mat_apply(t2, pc.mat_apply(t1, x))

    def test_identity_morphism(self):
        x = pc.boolean()
        assert pc.PcsMatrix.identity(x).is_morphism()


class TestExponential:
    def test_bang_web_is_multisets(self):
        b = pc.bang(pc.snat(1), 2)
        assert len(b.web) == math.comb(2 + 2, 2)
        assert () in b.web and (0, 1) in b.web

    def test_promotion_is_monomials(self):
        x = pc.snat(1).vector([0.2, 0.5])
        p = pc.promote(x, 3)
        assert p[(0, 0, 1)] == pytest.approx(0.2 * 0.2 * 0.5)
        assert p[()] == 1.0

    def test_power_series_apply(self):
        base = pc.snat(1)
        t = pc.series_matrix(base, pc.one(), {((0, 1), "*"): 2.0, ((), "*"): 0.5}, degree=2)
        out = pc.power_series_apply(t, base.vector([0.3, 0.4]))
        assert out.coeffs[0] == pytest.approx(0.5 + 2 * 0.12)

    def test_series_degree_guard(self):
        with pytest.raises(StructuralError):
            pc.series_matrix(pc.snat(0), pc.one(), {((0, 0, 0), "*"): 1.0}, degree=2)

    def test_convolution_series_against_direct_sum(self):
        a = [0.1, 0.2, 0.3, 0.4]
        t = pc.convolution_series(a, k=2, d=3)
        u = np.array([0.2, 0.1, 0.3])
        want = sum(a_n * u.sum() ** n for n, a_n in enumerate(a))
        assert pc.power_series_apply(t, pc.snat(2).vector(u)).coeffs[0] == pytest.approx(want, abs=1e-12)

    def test_convolution_series_coefficient(self):
        t = pc.convolution_series([0.0, 0.0, 1.0], k=1, d=2)
        src = t.source
        assert t.entries[src.index((0, 1)), 0] == 2.0
        assert t.entries[src.index((0, 0)), 0] == 1.0

    def test_multisets_count(self):
        for n, d in itertools.product(range(1, 4), range(4)):
            assert len(pc.multisets(tuple(range(n)), d)) == math.comb(n + d, d)


class TestBallsAndBounds:
    def test_convex_and_down_closed(self):
        rng = np.random.default_rng(2)
        for x in (pc.snat(2), pc.orth_snat(2), pc.boolean(), pc.with_(pc.snat(1), pc.boolean()),
                  pc.limpl(pc.snat(1), pc.orth_snat(1))):
            for _ in range(20):
                a, b = (x.vector(rng.dirichlet(np.ones(len(x.gens))) @ x.gens) for _ in range(2))
                assert a.is_member() and b.is_member()
                lam = rng.uniform()
                assert x.vector(lam * a.coeffs + (1 - lam) * b.coeffs).is_member()
                assert x.vector(a.coeffs * rng.uniform(0, 1, x.dim)).is_member()

    def test_tensor_norm_is_bracketed(self):
        rng = np.random.default_rng(3)
        x, y = pc.boolean(), pc.snat(1)
        pairs = [(x.vector(rng.dirichlet([1, 1]) * 0.5), y.vector(rng.dirichlet([1, 1]))) for _ in range(3)]
        total = pc.tensor(x, y).vector(sum(np.kron(u.coeffs, v.coeffs) for u, v in pairs))
        bound = total.norm_bound()
        assert not bound.exact
        assert bound.value <= pc.tensor_norm_upper(pairs) + 1e-12

    def test_promotion_examples(self):
        p = pc.promote(pc.snat(1).vector([0.5, 0.5]), 2)
        assert dict(zip(p.pcs.web, p.coeffs)) == {(): 1.0, (0,): 0.5, (1,): 0.5,
                                                  (0, 0): 0.25, (0, 1): 0.25, (1, 1): 0.25}
        z = pc.promote(pc.snat(1).vector([0.0, 0.0]), 3)
        assert z[()] == 1.0 and z.coeffs.sum() == 1.0

    def test_promotion_is_monotone(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            lo = rng.uniform(0, 0.5, 3)
            hi = lo + rng.uniform(0, 0.1, 3)
            assert np.all(pc.promote(pc.snat(2).vector(lo), 3).coeffs
                          <= pc.promote(pc.snat(2).vector(hi), 3).coeffs)

    def test_morphisms_preserve_membership(self):
        rng = np.random.default_rng(5)
        x, y = pc.snat(2), pc.boolean()
        for _ in range(50):
            t = pc.PcsMatrix(x, y, rng.dirichlet([1, 1], 3) * rng.uniform(0, 1, (3, 1)))
            assert t.is_morphism()
            u = x.vector(rng.dirichlet(np.ones(3)) * rng.uniform())
            assert pc.mat_apply(t, u).is_member()
