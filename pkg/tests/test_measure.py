import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conesem.errors import OrderError, StructuralError
from conesem.measure import (FiniteMeasure, Kernel, Path, Space, atom, binop_pushforward,
                             convolve, dirac, dirac_path, fubini_swap, integrate_path,
                             kernel_apply, kernel_compose, product_measure, pushforward, scale,
                             sub, zero)

# masses below the prune floor are dropped by every operation
masses = st.one_of(st.just(0.0), st.floats(min_value=1e-9, max_value=10.0))
dyadics = st.integers(min_value=0, max_value=2**20).map(lambda k: k / 2**10)


def measure_on(space, values):
    return FiniteMeasure(space, dict(zip(space.points(), values)))


@st.composite
def measure_triples(draw, elems=masses):
    n = draw(st.integers(1, 6))
    sp = Space.discrete(range(n))
    return tuple(measure_on(sp, draw(st.lists(elems, min_size=n, max_size=n))) for _ in range(3))


def dense(mu):
    return np.array([mu[p] for p in mu.space.points()])


class TestSpace:
    def test_dirac_snaps_to_containing_bin(self):
        g = Space.grid(0, 1, 10)
        mu = dirac(g, 0.34)
        assert mu.support() == [3]
        assert g.center(3) == pytest.approx(0.35)

    def test_upper_edge_belongs_to_last_bin(self):
        g = Space.grid(0, 1, 10)
        assert g.locate(1.0) == (9, False)
        assert g.locate(1.5) == (9, True)
        assert g.locate(-0.1) == (0, True)

    def test_invalid_grids_rejected(self):
        with pytest.raises(StructuralError):
            Space.grid(1, 0, 4)
        with pytest.raises(StructuralError):
            Space.grid(0, 1, 0)

    def test_json_roundtrip(self):
        for sp in (Space.grid(-2, 3, 7), Space.discrete(["a", "b"]), Space.discrete([(0, 1), (1, 0)])):
            assert Space.from_json(sp.to_json()) == sp


class TestFiniteMeasure:
    def test_negative_mass_rejected(self):
        with pytest.raises(OrderError):
            FiniteMeasure(Space.discrete([0]), {0: -1.0})

    def test_zero_entries_dropped_and_sorted(self):
        sp = Space.discrete("abc")
        mu = FiniteMeasure(sp, {"c": 1.0, "a": 0.0, "b": 2.0})
        assert list(mu.mass) == ["b", "c"]
        assert mu.norm() == 3.0

    def test_norm_is_total_mass(self):
        sp = Space.discrete(range(3))
        assert measure_on(sp, [0.1, 0.2, 0.3]).norm() == math.fsum([0.1, 0.2, 0.3])

    def test_negative_scalar_rejected(self):
        with pytest.raises(OrderError):
            scale(-1.0, atom(Space.discrete([0]), 0))

    def test_subtraction_outside_order_fails(self):
        sp = Space.discrete(range(2))
        with pytest.raises(OrderError):
            sub(measure_on(sp, [1, 0]), measure_on(sp, [0.5, 1]))

    def test_mismatched_spaces_rejected(self):
        with pytest.raises(StructuralError):
            atom(Space.discrete([0]), 0) + atom(Space.discrete([1]), 1)

    def test_prune_floor_moves_mass_to_lost(self):
        sp = Space.discrete(range(2))
        mu = FiniteMeasure.lincomb([1.0], [measure_on(sp, [1.0, 1e-17])])
        assert mu.support() == [0]
        assert mu.lost_mass == 1e-17

    def test_json_roundtrip(self):
        sp = Space.discrete([(0, "x"), (1, "y")])
        mu = FiniteMeasure(sp, {(0, "x"): 0.25, (1, "y"): 0.5}, lost_mass=0.125)
        back = FiniteMeasure.from_json(mu.to_json())
        assert back == mu and back.lost_mass == 0.125

    def test_histogram_rows(self):
        g = Space.grid(0, 1, 4)
        rows = dirac(g, 0.6).histogram_rows()
        assert rows[2] == (0.5, 0.75, 1.0)
        assert sum(r[2] for r in rows) == 1.0

    @given(measure_triples())
    def test_cone_laws(self, abc):
        a, b, c = abc
        assert a + b == b + a
        left, right = (a + b) + c, a + (b + c)
        for p in a.space.points():
            assert left[p] == pytest.approx(right[p], abs=1e-12)
        assert (a + b).norm() == pytest.approx(a.norm() + b.norm(), abs=1e-12)
        assert a <= a + b

    @given(measure_triples(dyadics))
    def test_subtraction_inverts_addition_on_dyadics(self, abc):
        a, b, _ = abc
        assert (a + b) - a == b

    @given(measure_triples())
    def test_subtraction_inverts_addition_to_rounding(self, abc):
        a, b, _ = abc
        back = (a + b) - a
        for p in a.space.points():
            assert back[p] == pytest.approx(b[p], rel=1e-15, abs=4 * math.ulp(a[p] + b[p]))


class TestPushforward:
    def test_partial_map_loses_mass(self):
        sp = Space.discrete([-1.0, 4.0])
        mu = measure_on(sp, [0.25, 0.75])
        out = pushforward(math.sqrt, mu, Space.discrete([2.0]))
        assert out[2.0] == 0.75
        assert out.lost_mass == 0.25

    def test_merges_atoms(self):
        sp = Space.discrete(range(4))
        out = pushforward(lambda k: k % 2, measure_on(sp, [0.1, 0.2, 0.3, 0.4]), Space.discrete([0, 1]))
        assert out[0] == pytest.approx(0.4) and out[1] == pytest.approx(0.6)

    def test_clamping_counted(self):
        g = Space.grid(0, 1, 4)
        out = pushforward(lambda r: r + 10, dirac(g, 0.1), g)
        assert out.support() == [3] and out.clamped == 1

    def test_discrete_target_uses_canonical_labels(self):
        sp = Space.discrete([0, 1])
        out = pushforward(lambda k: float(2 * k), measure_on(sp, [0.5, 0.5]), Space.discrete([0, 2]))
        assert list(out.mass) == [0, 2]
        assert all(type(p) is int for p in out.mass)

    @given(measure_triples())
    def test_binop_equals_pushforward_of_product(self, abc):
        mu, nu, _ = abc
        target = Space.discrete(range(11))
        direct = binop_pushforward(lambda a, b: a + b, mu, nu, target, floor=0.0)
        via_product = pushforward(lambda ab: ab[0] + ab[1], product_measure(mu, nu, floor=0.0), target, floor=0.0)
        for p in target.points():
            assert direct[p] == pytest.approx(via_product[p], abs=1e-12)

    @given(st.lists(masses, min_size=1, max_size=6), st.lists(masses, min_size=1, max_size=6))
    def test_convolution_matches_numpy(self, u, v):
        np.testing.assert_allclose(convolve(u, v), np.convolve(u, v), atol=1e-12, rtol=0)

    def test_convolution_unit(self):
        assert convolve([1.0], [0.2, 0.3]) == [0.2, 0.3]
        assert convolve([0.5, 0.5], [0.5, 0.5]) == [0.25, 0.5, 0.25]


class TestPaths:
    def test_dirac_path_integrates_to_the_measure(self):
        sp = Space.discrete(range(5))
        mu = measure_on(sp, [0.1, 0, 0.3, 0.2, 0.4])
        assert integrate_path(dirac_path(sp), mu) == mu

    def test_scalar_path(self):
        sp = Space.discrete(range(3))
        beta = Path(sp, {0: 1.0, 1: 2.0, 2: 3.0})
        assert integrate_path(beta, measure_on(sp, [0.5, 0.25, 0.25])) == 1.75

    def test_zero_measure(self):
        sp = Space.discrete(range(3))
        assert integrate_path(Path(sp, {0: 1.0, 1: 2.0, 2: 3.0}), zero(sp)) == 0.0

    @given(measure_triples())
    def test_linear_in_the_measure(self, abc):
        mu, nu, vals = abc
        beta = Path(mu.space, lambda p: vals[p] + 1.0)
        lhs = integrate_path(beta, FiniteMeasure.lincomb([0.3, 0.7], [mu, nu], floor=0.0))
        rhs = 0.3 * integrate_path(beta, mu) + 0.7 * integrate_path(beta, nu)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_workers_bit_identical(self):
        rng = np.random.default_rng(3)
        sp, tgt = Space.discrete(range(200)), Space.discrete(range(7))
        rows = {p: FiniteMeasure(tgt, dict(enumerate(rng.uniform(0, 1, 7)))) for p in sp.points()}
        beta = Path(sp, rows)
        mu = measure_on(sp, rng.uniform(0, 1, 200))
        seq = integrate_path(beta, mu)
        par = integrate_path(beta, mu, workers=8)
        assert seq.mass == par.mass

    def test_fubini_against_einsum(self):
        rng = np.random.default_rng(11)
        x, y, z = (Space.discrete(range(n)) for n in (3, 4, 5))
        table = rng.uniform(0, 1, (3, 4, 5))
        eta = Path(x, lambda r: Path(y, lambda s: FiniteMeasure(z, dict(enumerate(table[r, s])))))
        mu, nu = measure_on(x, rng.uniform(0, 1, 3)), measure_on(y, rng.uniform(0, 1, 4))
        oracle = np.einsum("rsz,r,s->z", table, dense(mu), dense(nu))
        res = fubini_swap(eta, mu, nu)
        for out in res:
            np.testing.assert_allclose(dense(out), oracle, atol=1e-12, rtol=0)


class TestKernels:
    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(5)
        a, b, c = (Space.discrete(range(n)) for n in (3, 5, 2))
        m1, m2 = rng.uniform(0, 0.2, (3, 5)), rng.uniform(0, 0.5, (5, 2))
        k = kernel_compose(Kernel.from_matrix(b, c, m2), Kernel.from_matrix(a, b, m1))
        np.testing.assert_allclose(k.to_matrix(), m1 @ m2, atol=1e-12, rtol=0)
        assert k.is_substochastic()

    def test_identity_is_a_unit(self):
        rng = np.random.default_rng(6)
        a, b = Space.discrete(range(3)), Space.discrete(range(4))
        k = Kernel.from_matrix(a, b, rng.uniform(0, 0.25, (3, 4)))
        for composed in (kernel_compose(Kernel.identity(b), k), kernel_compose(k, Kernel.identity(a))):
            np.testing.assert_allclose(composed.to_matrix(), k.to_matrix(), atol=1e-15, rtol=0)

    def test_apply_is_vector_matrix_product(self):
        a, b = Space.discrete(range(2)), Space.discrete(range(3))
        m = np.array([[0.1, 0.2, 0.3], [0.5, 0.0, 0.5]])
        mu = measure_on(a, [0.4, 0.6])
        np.testing.assert_allclose(dense(kernel_apply(Kernel.from_matrix(a, b, m), mu)),
                                   np.array([0.4, 0.6]) @ m, atol=1e-15)

    def test_mismatch_rejected(self):
        a, b = Space.discrete(range(2)), Space.discrete(range(3))
        k = Kernel.identity(a)
        with pytest.raises(StructuralError):
            kernel_compose(k, Kernel.identity(b))

    def test_missing_rows_are_zero(self):
        a = Space.discrete(range(2))
        assert Kernel(a, a, {}).row(1).is_zero()
