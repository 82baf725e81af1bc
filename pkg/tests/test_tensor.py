from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tncond.errors import ConvergenceError, DimensionError, LegNotFound, PartitionError, TooLargeToMaterialize
from tncond.tensor import (
    CenteredUniform,
    DenseTensor,
    Uniform,
    contract_pair,
    dist_from_dict,
    frobenius_norm,
    gram_spectral_norm,
    kron,
    matricize,
    random_tensor,
    spectral_norm,
)


def T(legs, data):
    return DenseTensor(tuple(legs), np.asarray(data, dtype=float))


class TestDenseTensor:
    def test_rejects_duplicate_legs(self):
        with pytest.raises(ValueError):
            T("aa", np.zeros((2, 2)))

    def test_rejects_leg_count_mismatch(self):
        with pytest.raises(DimensionError):
            T("abc", np.zeros((2, 2)))

    def test_data_is_read_only(self):
        t = T("ab", np.ones((2, 2)))
        with pytest.raises(ValueError):
            t.data[0, 0] = 5.0

    def test_transpose_and_axis(self):
        t = random_tensor((2, 3, 4), seed=0, legs="xyz")
        u = t.transpose("zxy")
        assert u.dims == (4, 2, 3)
        np.testing.assert_array_equal(u.data, np.transpose(t.data, (2, 0, 1)))
        with pytest.raises(LegNotFound):
            t.axis("w")

    def test_add_aligns_legs(self):
        a = random_tensor((2, 3), seed=1, legs="ab")
        b = a.transpose("ba")
        np.testing.assert_allclose((a + b).data, 2 * a.data)
        np.testing.assert_allclose((a - b).data, 0)


class TestContractPair:
    def test_identity_times_vector(self):
        out = contract_pair(T("rc", np.eye(2)), T("i", [3, 4]), [("c", "i")])
        assert out.legs == ("r",)
        np.testing.assert_array_equal(out.data, [3, 4])

    def test_matrix_product_by_hand(self):
        a = T("rc", [[1, 2], [3, 4]])
        b = T("RC", [[5, 6], [7, 8]])
        out = contract_pair(a, b, [("c", "R")])
        np.testing.assert_array_equal(out.data, [[19, 22], [43, 50]])

    def test_matches_loop_sum(self):
        rng = np.random.default_rng(0)
        a = T("ijk", rng.standard_normal((2, 3, 2)))
        b = T("lm", rng.standard_normal((2, 4)))
        out = contract_pair(a, b, [("k", "l")])
        ref = np.zeros((2, 3, 4))
        for i, j, m, k in itertools.product(range(2), range(3), range(4), range(2)):
            ref[i, j, m] += a.data[i, j, k] * b.data[k, m]
        assert out.legs == ("i", "j", "m")
        np.testing.assert_allclose(out.data, ref, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            contract_pair(T("ab", np.ones((2, 3))), T("c", np.ones(2)), [("b", "c")])

    def test_unknown_leg(self):
        with pytest.raises(LegNotFound):
            contract_pair(T("ab", np.ones((2, 3))), T("c", np.ones(3)), [("z", "c")])

    @given(st.floats(-3, 3), st.integers(0, 2**16))
    @settings(max_examples=25, deadline=None)
    def test_bilinear(self, alpha, seed):
        rng = np.random.default_rng(seed)
        a1 = T("ij", rng.standard_normal((3, 2)))
        a2 = T("ij", rng.standard_normal((3, 2)))
        b = T("jk", rng.standard_normal((2, 4)))
        lhs = contract_pair(alpha * a1 + a2, b, [("j", "j")]).data
        rhs = alpha * contract_pair(a1, b, [("j", "j")]).data + contract_pair(a2, b, [("j", "j")]).data
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


class TestMatricize:
    def test_order_two_is_the_matrix(self):
        data = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(matricize(T("ab", data), "a", "b").matrix, data)

    def test_index_arithmetic(self):
        data = np.arange(8.0).reshape(2, 2, 2)
        m = matricize(T("abc", data), "ab", "c").matrix
        assert m.shape == (4, 2)
        for a, b, c in itertools.product(range(2), repeat=3):
            assert m[2 * a + b, c] == data[a, b, c]

    def test_round_trip_is_exact(self):
        t = random_tensor((2, 3, 4), seed=3, legs="abc")
        back = matricize(t, "ca", "b").to_tensor().transpose("abc")
        np.testing.assert_array_equal(back.data, t.data)

    @pytest.mark.parametrize("rows,cols", [("ab", "a"), ("a", "c"), ("ab", "")])
    def test_bad_partition(self, rows, cols):
        t = random_tensor((2, 2, 2), seed=0, legs="abc")
        with pytest.raises(PartitionError):
            matricize(t, rows, cols)

    @given(st.permutations("abcd"), st.integers(0, 4))
    @settings(max_examples=30, deadline=None)
    def test_frobenius_invariant_and_spectral_below(self, order, split):
        t = random_tensor((2, 3, 2, 2), seed=11, legs="abcd")
        m = matricize(t, order[:split], order[split:])
        assert frobenius_norm(m) == pytest.approx(frobenius_norm(t), rel=1e-14)
        assert spectral_norm(m) <= frobenius_norm(m) * (1 + 1e-12)


class TestNorms:
    def test_frobenius_cases(self):
        assert frobenius_norm(np.zeros((3, 3))) == 0.0
        assert frobenius_norm(T("ab", np.eye(2))) == pytest.approx(np.sqrt(2))
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 4, 5))
        assert frobenius_norm(x) == pytest.approx(np.sqrt(sum(v * v for v in x.ravel())), rel=1e-12)

    def test_spectral_identity_and_rank_one(self):
        assert spectral_norm(np.eye(3)) == pytest.approx(1.0)
        u = np.array([2.0, 0.0])
        v = np.array([0.0, 3.0, 0.0])
        assert spectral_norm(np.outer(u, v)) == pytest.approx(6.0)

    def test_spectral_matches_svd(self):
        rng = np.random.default_rng(5)
        for shape in [(8, 5), (5, 8)]:
            a = rng.standard_normal(shape)
            assert spectral_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], rel=1e-8)

    def test_start_vector_in_null_space_restarts(self):
        # all-ones start is annihilated; the random restart finds the norm
        a = np.array([[1.0, -1.0]])
        assert spectral_norm(a) == pytest.approx(np.sqrt(2))

    def test_non_convergence_reports_best(self):
        a = np.diag([1.0, 0.999999])
        with pytest.raises(ConvergenceError) as info:
            spectral_norm(a + 1e-3 * np.ones((2, 2)), tol=1e-300, max_iter=3)
        assert info.value.best is not None

    def test_gram_spectral_norm(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((7, 4))
        assert gram_spectral_norm(x.T @ x) == pytest.approx(np.linalg.norm(x, 2), rel=1e-8)


class TestKron:
    def test_scalar_times_identity(self):
        a = matricize(T("ab", [[2.0]]), "a", "b")
        b = matricize(T("cd", np.eye(2)), "c", "d")
        np.testing.assert_array_equal(kron(a, b).matrix, [[2, 0], [0, 2]])

    def test_identities(self):
        a = matricize(T("ab", np.eye(2)), "a", "b")
        b = matricize(T("cd", np.eye(3)), "c", "d")
        np.testing.assert_array_equal(kron(a, b).matrix, np.eye(6))

    def test_block_layout_and_norms(self):
        rng = np.random.default_rng(4)
        a = matricize(T("ab", rng.standard_normal((2, 2))), "a", "b")
        b = matricize(T("cd", rng.standard_normal((3, 2))), "c", "d")
        k = kron(a, b).matrix
        ref = np.block([[a.matrix[i, j] * b.matrix for j in range(2)] for i in range(2)])
        np.testing.assert_allclose(k, ref)
        assert spectral_norm(k) == pytest.approx(spectral_norm(a) * spectral_norm(b), rel=1e-10)
        assert frobenius_norm(k) == pytest.approx(frobenius_norm(a) * frobenius_norm(b), rel=1e-10)

    def test_cap(self):
        a = matricize(T("ab", np.ones((4, 4))), "a", "b")
        b = matricize(T("cd", np.ones((4, 4))), "c", "d")
        with pytest.raises(TooLargeToMaterialize):
            kron(a, b, cap=100)


class TestRandom:
    def test_determinism(self):
        np.testing.assert_array_equal(random_tensor((3, 3), seed=9).data, random_tensor((3, 3), seed=9).data)

    def test_centered_uniform_variance(self):
        x = random_tensor((10**6,), CenteredUniform(1e-3), seed=1).data
        assert abs(x.var() / 1e-6 - 1) < 0.05
        assert np.abs(x).max() <= 1e-3 * np.sqrt(3)

    def test_uniform_range(self):
        x = random_tensor((1000,), Uniform(-1, 1), seed=2).data
        assert x.min() >= -1 and x.max() <= 1

    def test_dist_from_dict(self):
        assert dist_from_dict({"name": "uniform", "lo": 0, "hi": 1}) == Uniform(0.0, 1.0)
        assert dist_from_dict({"name": "centered-uniform", "sigma": 2}) == CenteredUniform(2.0)
        with pytest.raises(ValueError):
            dist_from_dict({"name": "cauchy"})
