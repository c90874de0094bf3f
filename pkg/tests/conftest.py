import numpy as np
import pytest
import scipy.sparse as sp

from s3vmkit.dataio import Dataset
from s3vmkit.kernels import KernelBlocks


def dataset_from_dense(X, labels):
    """Fully labeled Dataset from a dense array (test helper)."""
    X = np.asarray(X, dtype=np.float64)
    return Dataset(
        X=sp.csr_matrix(X),
        labels=np.asarray(labels, dtype=np.int8),
        labeled_idx=np.arange(X.shape[0]),
        unlabeled_idx=np.empty(0, dtype=int),
        n_features=X.shape[1],
    )


def blocks_from_matrices(K_ll, K_lu, K_uu, d, Y):
    """KernelBlocks with caches recomputed by direct summation."""
    K_ll = np.asarray(K_ll, dtype=np.float64)
    K_lu = np.asarray(K_lu, dtype=np.float64)
    K_uu = np.asarray(K_uu, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    return KernelBlocks(
        K_ll=K_ll, K_lu=K_lu, K_uu=K_uu, d=d,
        rowsum_uu=K_uu.sum(axis=1),
        ylabelsum_lu=Y @ K_lu,
        diag_uu=np.ascontiguousarray(np.diag(K_uu)),
        y_labeled=Y,
    )


@pytest.fixture
def rbf_blocks():
    """Small random rbf-like blocks (d=1) with labels of both signs."""
    rng = np.random.default_rng(123)
    nl, nu = 3, 8
    Xl = rng.uniform(0, 1, (nl, 4))
    Xu = rng.uniform(0, 1, (nu, 4))

    def rbf(A, B):
        d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
        return np.exp(-d2)

    Y = np.array([1.0, -1.0, 1.0])
    K_uu = rbf(Xu, Xu)
    np.fill_diagonal(K_uu, 1.0)
    return blocks_from_matrices(rbf(Xl, Xl), rbf(Xl, Xu), K_uu, 1.0, Y), Y
