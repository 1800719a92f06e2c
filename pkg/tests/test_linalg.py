import numpy as np
import pytest

from curvlasso.linalg import SparseMatrix, dense_svd, matvec, matvec_t, spectral_norm, thin_qr

from conftest import diag_sparse, random_sparse


class TestSparseMatrix:
    def test_invariants_checked(self):
        with pytest.raises(ValueError):
            SparseMatrix(2, 2, np.array([0, 1]), np.array([0]), np.array([1.0]))
        with pytest.raises(ValueError):  # decreasing row_ptr
            SparseMatrix(2, 2, np.array([0, 2, 1]), np.array([0, 1]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):  # column index out of range
            SparseMatrix(1, 2, np.array([0, 1]), np.array([2]), np.array([1.0]))
        with pytest.raises(ValueError):  # non-increasing within a row
            SparseMatrix(1, 3, np.array([0, 2]), np.array([1, 1]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):  # NaN value
            SparseMatrix(1, 1, np.array([0, 1]), np.array([0]), np.array([np.nan]))

    def test_from_dense_roundtrip(self, rng):
        M = rng.standard_normal((7, 5))
        M[rng.random((7, 5)) < 0.5] = 0.0
        assert np.array_equal(SparseMatrix.from_dense(M).toarray(), M)

    def test_row_sq_norms(self, rng):
        A = random_sparse(rng, 20, 9, density=0.25)
        expected = (A.toarray() ** 2).sum(axis=1)
        np.testing.assert_allclose(A.row_sq_norms(), expected, rtol=1e-14)


class TestMatvec:
    def test_identity(self):
        A = diag_sparse([1.0, 1.0])
        np.testing.assert_array_equal(matvec(A, np.array([3.0, -1.0])), [3.0, -1.0])

    def test_small_exact(self):
        A = SparseMatrix.from_dense([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matvec(A, np.ones(2)), [3.0, 7.0])

    def test_transpose_small(self):
        A = SparseMatrix.from_dense([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        np.testing.assert_array_equal(matvec_t(A, np.ones(3)), [2.0, 2.0])

    def test_dimension_mismatch(self):
        A = diag_sparse([1.0, 2.0])
        with pytest.raises(ValueError):
            matvec(A, np.ones(3))
        with pytest.raises(ValueError):
            matvec_t(A, np.ones(3))

    def test_matches_dense_oracle(self, rng):
        # densify-and-multiply oracle, 100 random instances
        for _ in range(100):
            n, d = rng.integers(1, 50, size=2)
            A = random_sparse(rng, n, d, density=0.3)
            D = A.toarray()
            x = rng.standard_normal(d)
            y = rng.standard_normal(n)
            np.testing.assert_allclose(matvec(A, x), D @ x, rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(matvec_t(A, y), D.T @ y, rtol=1e-12, atol=1e-14)

    def test_dense_fallback_same_result(self, rng):
        A = random_sparse(rng, 30, 20, density=0.9)  # above the fallback threshold
        x = rng.standard_normal(20)
        np.testing.assert_allclose(matvec(A, x), A.toarray() @ x, rtol=1e-12)


class TestThinQR:
    def test_identity(self):
        np.testing.assert_array_equal(thin_qr(np.eye(4)), np.eye(4))

    def test_duplicate_column_dropped(self, rng):
        M = rng.standard_normal((10, 4))
        M[:, 3] = M[:, 1]
        Q = thin_qr(M)
        assert Q.shape == (10, 3)
        np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-10)

    def test_orthogonality_and_range(self, rng):
        M = rng.standard_normal((40, 8))
        Q = thin_qr(M)
        assert np.max(np.abs(Q.T @ Q - np.eye(Q.shape[1]))) <= 1e-10
        resid = M - Q @ (Q.T @ M)
        assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(M)

    def test_zero_input(self):
        assert thin_qr(np.zeros((5, 3))).shape == (5, 0)

    def test_orthogonality_invariant_many(self, rng):
        for _ in range(25):
            n = int(rng.integers(3, 30))
            k = int(rng.integers(1, n + 1))
            # ill-conditioned inputs: correlated columns
            base = rng.standard_normal((n, k))
            M = base + 0.999 * np.roll(base, 1, axis=1)
            Q = thin_qr(M)
            if Q.shape[1]:
                assert np.max(np.abs(Q.T @ Q - np.eye(Q.shape[1]))) <= 1e-10


class TestDenseSVD:
    def test_diagonal(self):
        U, S, V = dense_svd(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(S, [3.0, 1.0])
        # signed permutations
        np.testing.assert_allclose(np.abs(U), np.eye(2), atol=1e-12)
        np.testing.assert_allclose(np.abs(V), np.eye(2), atol=1e-12)

    def test_zero(self):
        _, S, _ = dense_svd(np.zeros((3, 2)))
        np.testing.assert_array_equal(S, np.zeros(2))

    def test_reconstruction(self, rng):
        M = rng.standard_normal((12, 7))
        U, S, V = dense_svd(M)
        err = np.max(np.abs(M - U @ np.diag(S) @ V.T))
        assert err <= 1e-10 * np.linalg.norm(M)
        assert np.all(np.diff(S) <= 0) and np.all(S >= 0)
        np.testing.assert_allclose(U.T @ U, np.eye(7), atol=1e-9)
        np.testing.assert_allclose(V.T @ V, np.eye(7), atol=1e-9)

    def test_permutation_invariance(self, rng):
        M = rng.standard_normal((9, 6))
        _, S, _ = dense_svd(M)
        P = rng.permutation(9)
        Q = rng.permutation(6)
        _, S2, _ = dense_svd(M[P][:, Q])
        np.testing.assert_allclose(np.sort(S), np.sort(S2), atol=1e-10)

    def test_size_precondition(self):
        with pytest.raises(ValueError):
            dense_svd(np.zeros((10001, 10001)))


class TestSpectralNorm:
    def test_diagonal(self):
        sigma, converged = spectral_norm(diag_sparse([5.0, 2.0]))
        assert converged
        assert abs(sigma - 5.0) <= 1e-8

    def test_rank_one(self, rng):
        u = rng.standard_normal(8)
        u *= 2.0 / np.linalg.norm(u)
        v = rng.standard_normal(5)
        v *= 3.0 / np.linalg.norm(v)
        sigma, _ = spectral_norm(SparseMatrix.from_dense(np.outer(u, v)))
        assert abs(sigma - 6.0) <= 1e-8

    def test_matches_dense_svd(self, rng):
        A = random_sparse(rng, 30, 20, density=0.4)
        sigma, _ = spectral_norm(A)
        _, S, _ = dense_svd(A.toarray())
        assert abs(sigma - S[0]) <= 1e-8 * S[0]

    def test_bracketing_invariant(self, rng):
        for _ in range(20):
            A = random_sparse(rng, 15, 10, density=0.5)
            if A.nnz == 0:
                continue
            sigma, _ = spectral_norm(A)
            fro = np.sqrt(A.frobenius_sq())
            col_max = np.sqrt((A.toarray() ** 2).sum(axis=0).max())
            assert sigma <= fro * (1 + 1e-10)
            assert sigma >= col_max * (1 - 1e-8)

    def test_zero_matrix_rejected(self):
        Z = SparseMatrix(2, 2, np.array([0, 0, 0]), np.array([], dtype=np.int64), np.array([]))
        with pytest.raises(ValueError):
            spectral_norm(Z)
