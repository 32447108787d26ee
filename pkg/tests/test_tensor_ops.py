"""Tensor primitive tests against independent brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tucksearch import SvdResult, fold, mode_product, truncated_svd, unfold

rng = np.random.default_rng(42)


def oracle_unfold(t, mode):
    """Index-by-index matricization: row = fixed `mode` index, column = the
    remaining indices in ascending axis order, row-major."""
    shape = t.shape
    rest = [ax for ax in range(4) if ax != mode]
    out = np.zeros((shape[mode], int(np.prod([shape[ax] for ax in rest]))))
    for idx in np.ndindex(*shape):
        col = 0
        for ax in rest:
            col = col * shape[ax] + idx[ax]
        out[idx[mode], col] = t[idx]
    return out


def oracle_mode_product(t, m, mode):
    new_shape = list(t.shape)
    new_shape[mode] = m.shape[0]
    out = np.zeros(new_shape)
    for idx in np.ndindex(*out.shape):
        acc = 0.0
        for k in range(t.shape[mode]):
            src = list(idx)
            src[mode] = k
            acc += m[idx[mode], k] * t[tuple(src)]
        out[idx] = acc
    return out


def oracle_gram_svd(m, k):
    """Top-k singular values via the eigendecomposition of the smaller Gram
    matrix (independent route from the LAPACK SVD driver)."""
    if m.shape[0] <= m.shape[1]:
        gram = m @ m.T
    else:
        gram = m.T @ m
    evals = np.linalg.eigvalsh(gram)[::-1]
    return np.sqrt(np.clip(evals[:k], 0.0, None))


class TestUnfoldFold:
    def test_mode0_rows_are_slices(self):
        t = rng.standard_normal((2, 3, 1, 1))
        m = unfold(t, 0)
        assert m.shape == (2, 3)
        np.testing.assert_array_equal(m[0], t[0, :, 0, 0])
        np.testing.assert_array_equal(m[1], t[1, :, 0, 0])

    def test_against_index_oracle_all_modes(self):
        t = rng.standard_normal((3, 4, 2, 5))
        for mode in range(4):
            np.testing.assert_array_equal(unfold(t, mode), oracle_unfold(t, mode))

    def test_zero_tensor(self):
        t = np.zeros((2, 2, 3, 3))
        for mode in range(4):
            m = unfold(t, mode)
            assert m.shape[0] == t.shape[mode]
            assert not m.any()

    def test_round_trip_many_random(self):
        for _ in range(100):
            shape = tuple(int(x) for x in rng.integers(1, 5, size=4))
            t = rng.standard_normal(shape)
            for mode in range(4):
                np.testing.assert_array_equal(fold(unfold(t, mode), mode, shape), t)

    @given(
        st.tuples(*(st.integers(1, 4) for _ in range(4))),
        st.integers(0, 3),
        st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, shape, mode, seed):
        t = np.random.default_rng(seed).standard_normal(shape)
        np.testing.assert_array_equal(fold(unfold(t, mode), mode, shape), t)

    def test_bad_mode_rejected(self):
        t = np.zeros((1, 1, 1, 1))
        with pytest.raises(ValueError, match="mode"):
            unfold(t, 4)
        with pytest.raises(ValueError, match="mode"):
            unfold(t, -1)
        with pytest.raises(ValueError, match="mode"):
            fold(np.zeros((1, 1)), 5, (1, 1, 1, 1))

    def test_fold_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not match"):
            fold(np.zeros((2, 5)), 0, (2, 2, 2, 1))

    def test_non_tensor4_rejected(self):
        with pytest.raises(ValueError, match="4-way"):
            unfold(np.zeros((2, 2, 2)), 0)

    def test_non_finite_rejected(self):
        t = np.zeros((1, 1, 1, 2))
        t[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            unfold(t, 0)


class TestModeProduct:
    def test_identity_matrix_is_noop(self):
        t = rng.standard_normal((3, 4, 2, 2))
        for mode in range(4):
            np.testing.assert_allclose(
                mode_product(t, np.eye(t.shape[mode]), mode), t, rtol=0, atol=0
            )

    def test_zero_matrix_zeroes(self):
        t = rng.standard_normal((2, 3, 2, 2))
        out = mode_product(t, np.zeros((5, 3)), 1)
        assert out.shape == (2, 5, 2, 2)
        assert not out.any()

    def test_against_quadruple_loop_oracle(self):
        for _ in range(20):
            shape = tuple(int(x) for x in rng.integers(1, 5, size=4))
            mode = int(rng.integers(0, 4))
            t = rng.standard_normal(shape)
            m = rng.standard_normal((int(rng.integers(1, 5)), shape[mode]))
            np.testing.assert_allclose(
                mode_product(t, m, mode), oracle_mode_product(t, m, mode), atol=1e-12
            )

    def test_matches_fold_unfold_definition(self):
        t = rng.standard_normal((2, 3, 4, 2))
        m = rng.standard_normal((5, 4))
        via_def = fold(m @ unfold(t, 2), 2, (2, 3, 5, 2))
        np.testing.assert_array_equal(mode_product(t, m, 2), via_def)

    def test_extent_mismatch_rejected(self):
        with pytest.raises(ValueError, match="extent"):
            mode_product(np.zeros((2, 3, 1, 1)), np.zeros((4, 5)), 1)

    @given(st.integers(0, 3), st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_linearity_property(self, mode, seed):
        r = np.random.default_rng(seed)
        t = r.standard_normal((2, 3, 2, 2))
        a = r.standard_normal((3, t.shape[mode]))
        b = r.standard_normal((3, t.shape[mode]))
        lhs = mode_product(t, a + b, mode)
        rhs = mode_product(t, a, mode) + mode_product(t, b, mode)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestTruncatedSvd:
    def test_diagonal_known_values(self):
        m = np.diag([3.0, 2.0, 1.0])
        res = truncated_svd(m, 2)
        np.testing.assert_allclose(res.s, [3.0, 2.0], atol=1e-12)

    def test_rank_one_exact(self):
        u = rng.standard_normal(6)
        v = rng.standard_normal(4)
        m = np.outer(u, v)
        res = truncated_svd(m, 1)
        np.testing.assert_allclose(res.reconstruct(), m, atol=1e-12)
        np.testing.assert_allclose(res.s[0], np.linalg.norm(u) * np.linalg.norm(v), rtol=1e-12)

    def test_truncation_error_vs_gram_oracle(self):
        m = rng.standard_normal((8, 6))
        res = truncated_svd(m, 3)
        all_s = oracle_gram_svd(m, 6)
        want = np.sqrt(np.sum(all_s[3:] ** 2))
        got = np.linalg.norm(m - res.reconstruct())
        np.testing.assert_allclose(got, want, atol=1e-8)

    def test_singulars_match_gram_oracle(self):
        for _ in range(25):
            rows, cols = (int(x) for x in rng.integers(2, 10, size=2))
            m = rng.standard_normal((rows, cols))
            k = int(rng.integers(1, min(rows, cols) + 1))
            res = truncated_svd(m, k)
            np.testing.assert_allclose(res.s, oracle_gram_svd(m, k), rtol=1e-6, atol=1e-9)

    def test_full_rank_reconstructs(self):
        m = rng.standard_normal((5, 7))
        res = truncated_svd(m, 5)
        np.testing.assert_allclose(res.reconstruct(), m, atol=1e-8)

    def test_orthonormal_columns(self):
        m = rng.standard_normal((9, 5))
        res = truncated_svd(m, 4)
        np.testing.assert_allclose(res.u.T @ res.u, np.eye(4), atol=1e-8)
        np.testing.assert_allclose(res.v.T @ res.v, np.eye(4), atol=1e-8)

    def test_zero_matrix(self):
        res = truncated_svd(np.zeros((4, 3)), 2)
        np.testing.assert_array_equal(res.s, [0.0, 0.0])
        np.testing.assert_allclose(res.u.T @ res.u, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(res.v.T @ res.v, np.eye(2), atol=1e-12)

    def test_k_out_of_range_rejected(self):
        m = np.zeros((3, 5))
        with pytest.raises(ValueError, match="out of range"):
            truncated_svd(m, 0)
        with pytest.raises(ValueError, match="out of range"):
            truncated_svd(m, 4)

    def test_result_shapes(self):
        res = truncated_svd(rng.standard_normal((7, 4)), 2)
        assert isinstance(res, SvdResult)
        assert res.u.shape == (7, 2)
        assert res.s.shape == (2,)
        assert res.v.shape == (4, 2)
        assert res.s[0] >= res.s[1] >= 0.0
