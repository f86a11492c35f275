import numpy as np
import pytest

from cgplingam.graphs import (
    DagMatrix,
    PolyCoeffs,
    commutator_norm,
    geometric_inverse_check,
    graph_polynomial,
    is_dag,
    kron_vec_apply,
    n_coeffs,
    spectral_radius,
    unvec,
    vec,
)

from conftest import random_dag_weights


class TestVec:
    def test_column_major_stacking(self):
        m = np.array([[1.0, 3.0], [2.0, 4.0]])
        assert np.array_equal(vec(m), [1.0, 2.0, 3.0, 4.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(4, 7))
        assert np.array_equal(unvec(vec(m), 4), m)

    @pytest.mark.parametrize("seed", range(20))
    def test_vec_of_triple_product_identity(self, seed):
        # vec(A B C) = (C' kron A) vec(B), explicit Kronecker oracle
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        c = rng.normal(size=(2, 5))
        lhs = vec(a @ b @ c)
        rhs = np.kron(c.T, a) @ vec(b)
        assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestGraphPolynomial:
    def test_linear_term_only_returns_a(self, rng):
        a = random_dag_weights(5, rng)
        assert np.allclose(graph_polynomial(a, [0.0, 1.0]), a)

    def test_zero_matrix_gives_constant_times_identity(self):
        a = np.zeros((4, 4))
        out = graph_polynomial(a, [2.5, 1.0, -3.0])
        assert np.allclose(out, 2.5 * np.eye(4))

    def test_hand_computed_two_by_two(self):
        # A^2 = 0, so I + 2A + 3A^2 = [[1,0],[1,1]]
        a = np.array([[0.0, 0.0], [0.5, 0.0]])
        out = graph_polynomial(a, [1.0, 2.0, 3.0])
        assert np.allclose(out, [[1.0, 0.0], [1.0, 1.0]])

    @pytest.mark.parametrize("j", range(4))
    def test_indicator_coefficients_give_matrix_power(self, j, rng):
        a = random_dag_weights(5, rng)
        c = np.zeros(4)
        c[j] = 1.0
        assert np.allclose(graph_polynomial(a, c), np.linalg.matrix_power(a, j))

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_direct_power_accumulation(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(4, 4)) * 0.3
        c = rng.normal(size=4)
        oracle = sum(c[j] * np.linalg.matrix_power(a, j) for j in range(4))
        assert np.allclose(graph_polynomial(a, c), oracle, atol=1e-12)

    def test_rejects_empty_coefficients(self):
        with pytest.raises(ValueError):
            graph_polynomial(np.eye(2), [])

    def test_accepts_dag_matrix(self):
        d = DagMatrix(np.array([[0.0, 0.0], [0.5, 0.0]]))
        assert np.allclose(graph_polynomial(d, [0.0, 1.0]), d.weights)


class TestIsDag:
    def test_strictly_lower_triangular(self):
        a = np.tril(np.ones((4, 4)), k=-1)
        assert is_dag(a)

    def test_two_cycle(self):
        assert not is_dag(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_self_loop(self):
        assert not is_dag(np.array([[0.5]]))

    @pytest.mark.parametrize("seed", range(30))
    def test_permuted_random_dag(self, seed):
        rng = np.random.default_rng(seed)
        assert is_dag(random_dag_weights(6, rng))

    def test_small_weight_cycle_still_detected(self):
        # binarized support: tiny but structural weights cannot hide a cycle
        a = np.array([[0.0, 1e-3], [1e-3, 0.0]])
        assert not is_dag(a)

    def test_numerical_dust_ignored(self):
        a = np.array([[0.0, 1e-14], [1e-14, 0.0]])
        assert is_dag(a)


class TestSpectralRadius:
    @pytest.mark.parametrize("seed", range(10))
    def test_nilpotent_is_zero(self, seed):
        rng = np.random.default_rng(seed)
        assert spectral_radius(random_dag_weights(5, rng)) < 1e-8

    def test_scaled_identity(self):
        assert spectral_radius(0.9 * np.eye(3)) == pytest.approx(0.9)

    def test_two_by_two_characteristic_polynomial(self):
        a = np.array([[0.0, 0.3], [0.4, 0.0]])
        assert spectral_radius(a) == pytest.approx(np.sqrt(0.12), abs=1e-12)


class TestCommutatorNorm:
    def test_matrix_and_its_square_commute(self, rng):
        a = rng.normal(size=(4, 4))
        assert commutator_norm(a, a @ a) < 1e-10

    @pytest.mark.parametrize("seed", range(10))
    def test_polynomials_in_same_matrix_commute(self, seed):
        rng = np.random.default_rng(seed)
        a = random_dag_weights(5, rng)
        p = graph_polynomial(a, rng.normal(size=3))
        q = graph_polynomial(a, rng.normal(size=4))
        assert commutator_norm(p, q) < 1e-10

    def test_shift_matrices(self):
        up = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert commutator_norm(up, up.T) == pytest.approx(np.sqrt(2.0))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            commutator_norm(np.eye(2), np.eye(3))


class TestKronVecApply:
    def test_identity_sandwich(self, rng):
        b = rng.normal(size=(3, 3))
        assert np.allclose(kron_vec_apply(np.eye(3), np.eye(3), b), vec(b))

    def test_zero_middle(self):
        out = kron_vec_apply(np.eye(2), np.eye(2), np.zeros((2, 2)))
        assert np.array_equal(out, np.zeros(4))

    @pytest.mark.parametrize("seed", range(100))
    def test_against_explicit_kronecker(self, seed):
        rng = np.random.default_rng(seed)
        na, nb, nc = rng.integers(2, 5, size=3)
        a = rng.normal(size=(na, nb))
        b = rng.normal(size=(nb, nc))
        c = rng.normal(size=(nc, na))
        oracle = np.kron(c.T, a) @ vec(b)
        assert np.max(np.abs(kron_vec_apply(c, a, b) - oracle)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kron_vec_apply(np.eye(3), np.eye(2), np.zeros((2, 2)))


class TestGeometricInverseCheck:
    def test_five_node_dag_terms_four(self, rng):
        a = random_dag_weights(5, rng)
        assert geometric_inverse_check(a, 4) < 1e-10

    def test_zero_matrix_zero_terms(self):
        assert geometric_inverse_check(np.zeros((3, 3)), 0) == pytest.approx(0.0)

    def test_scaled_shift_against_dense_inverse(self):
        a = 0.5 * np.diag(np.ones(2), k=-1)
        assert geometric_inverse_check(a, 2) < 1e-12
        # truncating early leaves exactly the dropped A^2 term
        oracle = np.linalg.norm(
            np.linalg.inv(np.eye(3) - a) - (np.eye(3) + a), "fro"
        )
        assert geometric_inverse_check(a, 1) == pytest.approx(oracle, abs=1e-14)

    def test_negative_terms_rejected(self):
        with pytest.raises(ValueError):
            geometric_inverse_check(np.zeros((2, 2)), -1)


class TestDagMatrix:
    def test_valid_construction(self, rng):
        d = DagMatrix(random_dag_weights(5, rng))
        assert d.n == 5
        assert spectral_radius(d.weights) < 1e-8

    def test_rejects_cycle(self):
        with pytest.raises(ValueError, match="cycle"):
            DagMatrix(np.array([[0.0, 0.6], [0.6, 0.0]]))

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(ValueError, match="diagonal"):
            DagMatrix(np.array([[1e-13, 0.0], [0.5, 0.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            DagMatrix(np.zeros((2, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            DagMatrix(np.array([[0.0, 0.0], [np.inf, 0.0]]))

    def test_support_thresholding(self):
        d = DagMatrix(np.array([[0.0, 0.0], [0.5, 0.0]]))
        assert d.support().sum() == 1


class TestPolyCoeffs:
    @pytest.mark.parametrize("order,expected", [(1, 2), (2, 5), (3, 9), (10, 65)])
    def test_length_formula(self, order, expected):
        assert n_coeffs(order) == expected

    def test_lag_accessor_offsets(self):
        # lag i spans [ (i-1)(i+2)/2, ... ), i+1 entries each
        c = PolyCoeffs(order=3, coeffs=np.arange(9.0))
        assert np.array_equal(c.lag(1), [0.0, 1.0])
        assert np.array_equal(c.lag(2), [2.0, 3.0, 4.0])
        assert np.array_equal(c.lag(3), [5.0, 6.0, 7.0, 8.0])

    def test_lag_out_of_range(self):
        c = PolyCoeffs(order=2, coeffs=np.zeros(5))
        with pytest.raises(ValueError):
            c.lag(0)
        with pytest.raises(ValueError):
            c.lag(3)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError, match="length"):
            PolyCoeffs(order=2, coeffs=np.zeros(4))

    def test_from_lags_roundtrip(self, rng):
        lags = [rng.normal(size=i + 1) for i in range(1, 4)]
        c = PolyCoeffs.from_lags(lags)
        assert c.order == 3
        for i in range(1, 4):
            assert np.array_equal(c.lag(i), lags[i - 1])

    def test_from_lags_length_check(self):
        with pytest.raises(ValueError):
            PolyCoeffs.from_lags([np.zeros(3)])

    def test_filter_matrix_is_graph_polynomial(self, rng):
        a = random_dag_weights(4, rng)
        c = PolyCoeffs(order=2, coeffs=rng.normal(size=5))
        expected = graph_polynomial(a, c.lag(2))
        assert np.allclose(c.filter_matrix(a, 2), expected)
