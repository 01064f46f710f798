import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pgica.errors import InvalidParameter, NonFinite, NotPositiveDefinite, SingularMatrix
from pgica.numerics import (
    RngStream,
    as_matrix,
    condition_number,
    inverse,
    log_abs_det,
    lu_det_inverse,
    matrix_from_csv,
    matrix_from_json,
    matrix_to_csv,
    matrix_to_json,
    rng_draw,
    solve_spd,
)


def leibniz_det(a):
    """Permutation-sum determinant, independent of any factorization."""
    n = a.shape[0]
    total = 0.0
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        total += (-1) ** inv * math.prod(a[i, perm[i]] for i in range(n))
    return total


def random_spd(n, seed):
    g = np.random.default_rng(seed)
    b = g.standard_normal((n, n))
    return b @ b.T + n * np.eye(n)


class TestLuDetInverse:
    def test_identity(self):
        det, inv = lu_det_inverse(np.eye(3))
        assert det == 1.0
        np.testing.assert_array_equal(inv, np.eye(3))

    def test_diagonal(self):
        det, inv = lu_det_inverse([[2, 0], [0, 0.5]])
        assert det == 1.0
        np.testing.assert_allclose(inv, [[0.5, 0], [0, 2]])

    def test_random_residual(self):
        a = np.random.default_rng(7).standard_normal((4, 4)) + 2 * np.eye(4)
        _, inv = lu_det_inverse(a)
        assert np.max(np.abs(a @ inv - np.eye(4))) < 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_det_matches_leibniz(self, seed):
        a = np.random.default_rng(seed).standard_normal((5, 5))
        det, _ = lu_det_inverse(a)
        assert det == pytest.approx(leibniz_det(a), rel=1e-10)

    def test_permutation_sign(self):
        p = np.array([[0.0, 1, 0], [0, 0, 1], [1, 0, 0]])
        assert lu_det_inverse(p)[0] == pytest.approx(1.0)
        assert lu_det_inverse(p[[1, 0, 2]])[0] == pytest.approx(-1.0)

    def test_singular(self):
        with pytest.raises(SingularMatrix):
            lu_det_inverse([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularMatrix):
            lu_det_inverse(np.zeros((2, 2)))

    def test_nonfinite_and_shape(self):
        with pytest.raises(NonFinite):
            lu_det_inverse([[np.nan, 0], [0, 1]])
        with pytest.raises(ValueError):
            lu_det_inverse(np.ones((2, 3)))

    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(np.float64, (4, 4), elements=st.floats(-3, 3)))
    def test_det_product_with_inverse(self, a):
        a = a + 7 * np.eye(4)
        d1, inv = lu_det_inverse(a)
        d2, _ = lu_det_inverse(inv)
        assert d1 * d2 == pytest.approx(1.0, rel=1e-8)

    def test_log_abs_det(self):
        a = np.diag([2.0, -3.0, 0.5])
        assert log_abs_det(a) == pytest.approx(math.log(3.0))
        np.testing.assert_allclose(inverse(a), np.diag([0.5, -1 / 3, 2.0]))


class TestSolveSpd:
    def test_trivial(self):
        np.testing.assert_allclose(solve_spd(np.eye(2), [[3.0], [4.0]]), [[3.0], [4.0]])
        np.testing.assert_allclose(solve_spd([[4.0, 0], [0, 9]], [[8.0], [27]]), [[2.0], [3.0]])

    def test_residual(self):
        m = random_spd(5, 11)
        b = np.random.default_rng(12).standard_normal((5, 3))
        x = solve_spd(m, b)
        assert np.linalg.norm(m @ x - b) <= 1e-10 * np.linalg.norm(b)

    @pytest.mark.parametrize("n", [1, 2, 7, 16])
    def test_agrees_with_lu(self, n):
        m = random_spd(n, n)
        b = np.random.default_rng(n + 100).standard_normal((n, 2))
        _, inv = lu_det_inverse(m)
        np.testing.assert_allclose(solve_spd(m, b), inv @ b, atol=1e-9)

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            solve_spd([[1.0, 2.0], [2.0, 1.0]], [[1.0], [1.0]])

    def test_not_symmetric(self):
        with pytest.raises(ValueError):
            solve_spd([[1.0, 0.5], [0.0, 1.0]], [[1.0], [1.0]])


class TestSerialization:
    def test_json_roundtrip(self):
        a = np.random.default_rng(0).standard_normal((3, 2))
        line = matrix_to_json(a)
        assert line.startswith('{"rows":3,"cols":2,"data":[')
        np.testing.assert_array_equal(matrix_from_json(line), a)

    def test_csv_roundtrip_exact(self):
        a = np.random.default_rng(1).standard_normal((4, 3)) * 1e-7
        text = matrix_to_csv(a)
        assert text.count("\n") == 4 and "," in text
        np.testing.assert_array_equal(matrix_from_csv(text), a)

    def test_bad_length(self):
        with pytest.raises(ValueError):
            matrix_from_json('{"rows":2,"cols":2,"data":[1,2,3]}')

    def test_rejects_nonfinite(self):
        with pytest.raises(NonFinite):
            as_matrix([[1.0, np.inf]])


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(5, 2).gen.standard_normal(10)
        b = RngStream(5, 2).gen.standard_normal(10)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ_and_uncorrelated(self):
        a = RngStream(5, 0).gen.standard_normal(100_000)
        b = RngStream(5, 1).gen.standard_normal(100_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(a.size)

    def test_uniform_mean(self):
        s = RngStream(1, 0)
        u = np.array([rng_draw(s, "uniform01") for _ in range(100_000)])
        assert abs(u.mean() - 0.5) < 3 / math.sqrt(12 * u.size)

    def test_normal_moments(self):
        s = RngStream(1, 1)
        z = np.array([rng_draw(s, "standard_normal") for _ in range(100_000)])
        assert abs(z.mean()) < 3 / math.sqrt(z.size)
        assert z.var() == pytest.approx(1.0, rel=0.05)

    def test_exponential_mean(self):
        s = RngStream(1, 2)
        e = np.array([rng_draw(s, "exponential", 4.0) for _ in range(50_000)])
        assert abs(e.mean() - 0.25) < 3 * e.std() / math.sqrt(e.size)

    def test_inverse_gaussian_mean(self):
        s = RngStream(1, 3)
        x = np.array([rng_draw(s, "inverse_gaussian", 2.0, 1.0) for _ in range(100_000)])
        assert abs(x.mean() - 2.0) < 3 * x.std() / math.sqrt(x.size)

    @pytest.mark.parametrize("args", [("exponential", 0.0), ("inverse_gaussian", -1.0, 1.0),
                                      ("inverse_gaussian", 1.0, 0.0), ("gamma",)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameter):
            rng_draw(RngStream(0), *args)

    def test_substream(self):
        s = RngStream(3, 4).substream(2)
        assert (s.seed, s.stream_id) == (3, 6)


def test_condition_number():
    assert condition_number(np.diag([10.0, 1.0])) == pytest.approx(10.0)
