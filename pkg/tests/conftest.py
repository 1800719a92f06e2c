import numpy as np
import pytest
import scipy.sparse as sp

from curvlasso.linalg import SparseMatrix


def random_sparse(rng, n, d, density=0.3):
    """Random CSR matrix with Gaussian nonzeros."""
    mask = rng.random((n, d)) < density
    dense = np.where(mask, rng.standard_normal((n, d)), 0.0)
    return SparseMatrix.from_scipy(sp.csr_matrix(dense))


def diag_sparse(values):
    """Sparse diagonal (possibly rectangular) matrix from a value list."""
    values = np.asarray(values, dtype=float)
    return SparseMatrix.from_dense(np.diag(values))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
