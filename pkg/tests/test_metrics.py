import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy.optimize import linear_sum_assignment

from pgica.errors import DegenerateColumn, NonFinite
from pgica.metrics import (
    MetricsReport,
    align_sources,
    amari_distance,
    brute_force_assignment,
    evaluate,
    hungarian,
    random_signed_permutation,
    read_csv_rows,
    rmse,
    rows_to_csv,
    signed_perm_distance,
    signed_perm_distance_brute,
    src,
)
from pgica.numerics import RngStream


class TestHungarian:
    def test_identity_favoring(self):
        np.testing.assert_array_equal(hungarian(1 - np.eye(4)), np.arange(4))

    def test_swap(self):
        np.testing.assert_array_equal(hungarian([[1.0, 0.0], [0.0, 1.0]]), [1, 0])

    def test_brute_force_6x6(self):
        C = np.random.default_rng(13).standard_normal((6, 6))
        p = hungarian(C)
        assert C[np.arange(6), p].sum() == pytest.approx(brute_force_assignment(C)[0], abs=1e-12)

    def test_tie_break_lexicographic(self):
        assert list(hungarian(np.zeros((3, 3)))) == [0, 1, 2]
        C = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
        assert list(hungarian(C)) == [0, 1, 2]

    @settings(max_examples=60, deadline=None)
    @given(hnp.arrays(np.float64, st.integers(1, 5).map(lambda n: (n, n)), elements=st.floats(-10, 10)))
    def test_optimal_vs_scipy(self, C):
        p = hungarian(C)
        assert sorted(p) == list(range(C.shape[0]))
        r, c = linear_sum_assignment(C)
        assert C[np.arange(len(p)), p].sum() == pytest.approx(C[r, c].sum(), abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(hnp.arrays(np.float64, (4, 4), elements=st.integers(0, 2).map(float)))
    def test_lexicographic_smallest_among_optima(self, C):
        best = brute_force_assignment(C)[0]
        optima = [p for p in itertools.permutations(range(4))
                  if abs(C[np.arange(4), list(p)].sum() - best) < 1e-12]
        assert tuple(hungarian(C)) == min(optima)


class TestAlignment:
    def setup_method(self):
        self.S = RngStream(17, 0).gen.laplace(size=(500, 4))

    def test_identity(self):
        al = align_sources(self.S, self.S)
        np.testing.assert_array_equal(al.permutation, np.arange(4))
        np.testing.assert_array_equal(al.signs, np.ones(4))
        np.testing.assert_allclose(al.matched_abs_corr, 1.0)

    def test_swap_negated(self):
        S = self.S[:, :2]
        al = align_sources(-S[:, ::-1], S)
        np.testing.assert_array_equal(al.permutation, [1, 0])
        np.testing.assert_array_equal(al.signs, [-1, -1])
        np.testing.assert_allclose(al.apply(-S[:, ::-1]), S)

    def test_noisy(self):
        noisy = self.S + 0.1 * RngStream(17, 1).gen.standard_normal(self.S.shape)
        al = align_sources(noisy, self.S)
        np.testing.assert_array_equal(al.permutation, np.arange(4))
        assert al.matched_abs_corr.min() >= 0.95

    def test_equivariance(self):
        D = random_signed_permutation(4, RngStream(3, 0))
        al = align_sources(self.S @ D.T, self.S)
        np.testing.assert_allclose(al.apply(self.S @ D.T), self.S, atol=1e-12)

    def test_mixing_alignment_keeps_product(self):
        A = RngStream(4, 0).gen.standard_normal((4, 4))
        D = random_signed_permutation(4, RngStream(4, 1))
        S_hat = self.S @ D.T
        A_hat = A @ D.T
        al = align_sources(S_hat, self.S)
        np.testing.assert_allclose(al.apply(S_hat) @ al.apply_mixing(A_hat).T, S_hat @ A_hat.T, atol=1e-12)

    def test_degenerate(self):
        bad = self.S.copy()
        bad[:, 2] = 3.0
        with pytest.raises(DegenerateColumn):
            align_sources(bad, self.S)


class TestAmari:
    def test_hand_example(self):
        assert amari_distance([[1.0, 1.0], [0.0, 1.0]], np.eye(2)) == 1.0

    def test_zero_at_truth(self):
        W = RngStream(5, 0).gen.standard_normal((4, 4))
        assert amari_distance(W, W) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_scaled_signed_permutation_invariance(self, seed):
        g = RngStream(seed, 0)
        W_true = g.gen.standard_normal((4, 4))
        W_hat = g.gen.standard_normal((4, 4))
        D = random_signed_permutation(4, g)
        L = np.diag(g.gen.uniform(0.2, 5.0, 4))
        assert amari_distance(D @ W_true, W_true) == pytest.approx(0.0, abs=1e-10)
        assert amari_distance(L @ D @ W_true, W_true) == pytest.approx(0.0, abs=1e-10)
        assert amari_distance(D @ W_hat, W_true) == pytest.approx(amari_distance(W_hat, W_true), abs=1e-10)

    def test_row_rescaling_not_general(self):
        # the index is scale-free only when the estimate already recovers the truth
        W_hat = np.array([[1.0, 0.5], [0.2, 1.0]])
        L = np.diag([1.0, 10.0])
        assert amari_distance(L @ W_hat, np.eye(2)) != pytest.approx(amari_distance(W_hat, np.eye(2)))

    def test_bounds(self):
        # the scaling allows values up to d, not 1
        g = RngStream(8, 0).gen
        for _ in range(20):
            v = amari_distance(g.standard_normal((3, 3)), g.standard_normal((3, 3)))
            assert 0.0 <= v <= 3.0 + 1e-12


class TestSrcRmse:
    def test_src(self):
        S = RngStream(1, 0).gen.standard_normal((10_000, 3))
        assert src(S, S) == pytest.approx(1.0)
        assert src(0.5 * S, S) == pytest.approx(1.0)
        N = RngStream(1, 1).gen.standard_normal((10_000, 3))
        assert src(N, S) <= 0.05

    def test_src_invariance(self):
        S = RngStream(2, 0).gen.laplace(size=(300, 4))
        D = random_signed_permutation(4, RngStream(2, 1))
        est = S @ D.T + 0.2 * RngStream(2, 2).gen.standard_normal(S.shape)
        a = src(align_sources(est, S).apply(est), S)
        est2 = est @ random_signed_permutation(4, RngStream(2, 3)).T
        b = src(align_sources(est2, S).apply(est2), S)
        assert a == pytest.approx(b, abs=1e-10)

    def test_rmse(self):
        g = RngStream(3, 0).gen
        S, A = g.standard_normal((50, 3)), g.standard_normal((3, 3))
        assert rmse(S @ A.T, S, A) == pytest.approx(0.0, abs=1e-14)
        assert rmse(S @ A.T + 0.3, S, A) == pytest.approx(0.3)


class TestSignedPermDistance:
    def test_trivial(self):
        W0 = RngStream(6, 0).gen.standard_normal((3, 3))
        assert signed_perm_distance(W0, W0) == 0.0
        assert signed_perm_distance(np.diag([1.0, -1.0]) @ W0[:2, :2], W0[:2, :2]) == 0.0

    def test_brute_force(self):
        g = np.random.default_rng(19)
        W, W0 = g.standard_normal((4, 4)), g.standard_normal((4, 4))
        assert signed_perm_distance(W, W0) == pytest.approx(signed_perm_distance_brute(W, W0), abs=1e-12)

    def test_not_scale_invariant(self):
        W0 = np.eye(3)
        assert signed_perm_distance(2 * W0, W0) == pytest.approx(np.sqrt(3))

    @pytest.mark.parametrize("seed", range(5))
    def test_signed_perm_invariance(self, seed):
        g = RngStream(seed, 3)
        W, W0 = g.gen.standard_normal((4, 4)), g.gen.standard_normal((4, 4))
        D = random_signed_permutation(4, g)
        assert signed_perm_distance(D @ W, W0) == pytest.approx(signed_perm_distance(W, W0), abs=1e-10)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_local_equals_frobenius(self, d):
        g = RngStream(d, 9).gen
        W0 = g.standard_normal((d, d)) + 2 * np.eye(d)
        gap = min(signed_perm_distance_brute(D, W0) for D in _orbit_others(W0))
        delta = g.standard_normal((d, d))
        delta *= 0.49 * gap / 2 / np.linalg.norm(delta)
        assert signed_perm_distance(W0 + delta, W0) == pytest.approx(np.linalg.norm(delta), rel=1e-12)


def _orbit_others(W0):
    d = W0.shape[0]
    for p in itertools.permutations(range(d)):
        for s in itertools.product((1.0, -1.0), repeat=d):
            M = np.asarray(s)[:, None] * W0[list(p)]
            if not np.allclose(M, W0):
                yield M


class TestReport:
    def test_evaluate_truth(self):
        g = RngStream(7, 0).gen
        S = g.laplace(size=(400, 3))
        A = g.standard_normal((3, 3)) + 3 * np.eye(3)
        X = S @ A.T
        rep = evaluate(X, np.linalg.inv(A), S, A)
        assert rep.amari == pytest.approx(0.0, abs=1e-10)
        assert rep.src == pytest.approx(1.0)
        assert rep.rmse == pytest.approx(0.0, abs=1e-10)
        assert rep.d_pm == pytest.approx(0.0, abs=1e-10)

    def test_nonfinite(self):
        with pytest.raises(NonFinite):
            MetricsReport(np.nan, 1.0, 0.0)

    def test_csv_roundtrip(self):
        rows = [{"method": "em", "family": "sech", "n": 500, "d": 4, "sigma": 0.01, "seed": 3,
                 "amari": 0.1, "src": 0.9, "rmse": 0.01, "d_pm": 0.2, "runtime_ms": ""}]
        text = rows_to_csv(rows)
        assert text.splitlines()[0] == "method,family,n,d,sigma,seed,amari,src,rmse,d_pm,runtime_ms"
        back = read_csv_rows(text)
        assert float(back[0]["amari"]) == 0.1 and back[0]["runtime_ms"] == ""
