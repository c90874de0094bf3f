"""Kernel block matrices between labeled and unlabeled samples, with cached sums."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dataio import Dataset

SYMMETRY_TOL = 1e-12
_DENSE_FRACTION = 0.5


class KernelBoundError(ValueError):
    """Kernel entries exceed the bound d required by the set-function premise."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.  d_override forces the entry bound."""

    kind: str
    gamma: float | None = None
    d_override: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and (self.gamma is None or self.gamma <= 0):
            raise ValueError("rbf kernel requires gamma > 0")
        if self.d_override is not None and self.d_override <= 0:
            raise ValueError("d_override must be positive")

    def canonical(self) -> str:
        return f"{self.kind}:{self.gamma!r}:{self.d_override!r}"

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical().encode()).digest()[:16]


def _as_2d(x) -> sp.csr_matrix:
    if sp.issparse(x):
        return x.tocsr()
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return sp.csr_matrix(arr)


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    """Kernel value between two feature vectors (sparse rows or dense 1-D)."""
    a, b = _as_2d(x), _as_2d(x2)
    dot = float((a @ b.T).toarray()[0, 0])
    if spec.kind == "linear":
        return dot
    sq = float((a.multiply(a)).sum() + (b.multiply(b)).sum())
    dist2 = max(sq - 2.0 * dot, 0.0)
    return math.exp(-spec.gamma * dist2)


def _pairwise(spec: KernelSpec, A: sp.csr_matrix, B: sp.csr_matrix) -> np.ndarray:
    G = np.asarray((A @ B.T).todense(), dtype=np.float64)
    if spec.kind == "linear":
        return G
    sq_a = np.asarray(A.multiply(A).sum(axis=1)).ravel()
    sq_b = np.asarray(B.multiply(B).sum(axis=1)).ravel()
    dist2 = np.maximum(sq_a[:, None] + sq_b[None, :] - 2.0 * G, 0.0)
    return np.exp(-spec.gamma * dist2)


class KernelBlocks:
    """The K_ll, K_uu, K_lu blocks plus the cached sums the solvers consume.

    ``K_uu`` is None in row-on-demand mode; :meth:`uu_row` then computes rows
    lazily (the greedy path needs only the cached per-candidate sums plus one
    row per accepted element).  Instances are immutable after construction and
    safe for concurrent reads.
    """

    def __init__(self, K_ll, K_lu, K_uu, d, rowsum_uu, ylabelsum_lu, diag_uu,
                 y_labeled, spec=None, _Xu=None):
        self.K_ll = K_ll
        self.K_lu = K_lu
        self.K_uu = K_uu
        self.d = float(d)
        self.rowsum_uu = rowsum_uu
        self.ylabelsum_lu = ylabelsum_lu
        self.diag_uu = diag_uu
        self.y_labeled = y_labeled
        self.spec = spec
        self._Xu = _Xu

    @property
    def n_labeled(self) -> int:
        return self.K_lu.shape[0]

    @property
    def n_unlabeled(self) -> int:
        return self.K_lu.shape[1]

    def uu_row(self, j: int) -> np.ndarray:
        """Row j of K_uu, materialized or computed on demand."""
        if self.K_uu is not None:
            return self.K_uu[j]
        if self._Xu is None or self.spec is None:
            raise ValueError("row-on-demand unavailable: no unlabeled samples retained")
        return _pairwise(self.spec, self._Xu[j], self._Xu)[0]

    def uu_submatrix(self, idx: np.ndarray) -> np.ndarray:
        if self.K_uu is not None:
            return self.K_uu[np.ix_(idx, idx)]
        return np.vstack([self.uu_row(j)[idx] for j in idx])


def _infer_d(X: sp.csr_matrix, spec: KernelSpec, n_features: int) -> float:
    if spec.kind == "rbf":
        return 1.0
    if spec.d_override is not None:
        return float(spec.d_override)
    density = X.nnz / max(X.shape[0] * n_features, 1)
    if density > _DENSE_FRACTION:
        return float(n_features)
    return float(math.ceil(X.nnz / max(X.shape[0], 1)))


def build_blocks(d: Dataset, spec: KernelSpec, materialize_uu: bool = True,
                 chunk: int = 512) -> KernelBlocks:
    """Compute the three kernel blocks, the bound d, and the per-candidate caches.

    Linear kernels require the feature values already inside [0, 1]; entries
    exceeding the inferred d raise KernelBoundError and demand a d_override.
    """
    Xl = d.X[d.labeled_idx]
    Xu = d.X[d.unlabeled_idx]
    y = d.labeled_labels().astype(np.float64)

    if spec.kind == "linear" and d.X.nnz:
        vmin, vmax = d.X.data.min(), d.X.data.max()
        if vmin < -1e-12 or vmax > 1.0 + 1e-9:
            raise ValueError(
                "linear kernel expects feature values in [0, 1]; run "
                "normalize_features first"
            )

    bound = _infer_d(d.X, spec, d.n_features)

    K_ll = _pairwise(spec, Xl, Xl)
    K_lu = _pairwise(spec, Xl, Xu)
    n_u = Xu.shape[0]

    if materialize_uu:
        K_uu = _pairwise(spec, Xu, Xu)
        if spec.kind == "rbf":
            np.fill_diagonal(K_uu, 1.0)
        if K_uu.size and np.abs(K_uu - K_uu.T).max() > SYMMETRY_TOL:
            raise AssertionError("K_uu asymmetry exceeds tolerance")
        rowsum_uu = K_uu.sum(axis=1)
        diag_uu = np.ascontiguousarray(np.diag(K_uu))
        max_entry = max(K_uu.max() if K_uu.size else 0.0,
                        K_lu.max() if K_lu.size else 0.0,
                        K_ll.max() if K_ll.size else 0.0)
    else:
        K_uu = None
        rowsum_uu = np.zeros(n_u)
        diag_uu = np.zeros(n_u)
        max_entry = max(K_lu.max() if K_lu.size else 0.0,
                        K_ll.max() if K_ll.size else 0.0)
        for start in range(0, n_u, chunk):
            block = _pairwise(spec, Xu[start:start + chunk], Xu)
            if spec.kind == "rbf":
                for i in range(block.shape[0]):
                    block[i, start + i] = 1.0
            rowsum_uu[start:start + chunk] = block.sum(axis=1)
            diag_uu[start:start + chunk] = block[
                np.arange(block.shape[0]), np.arange(start, start + block.shape[0])
            ]
            if block.size:
                max_entry = max(max_entry, block.max())

    if max_entry > bound + 1e-9:
        raise KernelBoundError(
            f"kernel entry {max_entry:.6g} exceeds d={bound:.6g}; pass a "
            f"d_override of at least {max_entry:.6g}"
        )

    ylabelsum_lu = y @ K_lu if K_lu.size else np.zeros(n_u)

    return KernelBlocks(
        K_ll=K_ll, K_lu=K_lu, K_uu=K_uu, d=bound,
        rowsum_uu=rowsum_uu, ylabelsum_lu=ylabelsum_lu, diag_uu=diag_uu,
        y_labeled=y, spec=spec,
        _Xu=None if materialize_uu else Xu.tocsr(),
    )


_MAGIC = b"S3KB"
_VERSION = 1


def save_blocks(blocks: KernelBlocks, path) -> None:
    """Write blocks to a binary cache: header + row-major little-endian float64."""
    if blocks.K_uu is None:
        raise ValueError("row-on-demand blocks cannot be cached")
    digest = blocks.spec.digest() if blocks.spec is not None else bytes(16)
    header = _MAGIC + struct.pack(
        "<IQQd16s", _VERSION, blocks.n_labeled, blocks.n_unlabeled, blocks.d, digest
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (blocks.K_ll, blocks.K_lu, blocks.K_uu, blocks.rowsum_uu,
                    blocks.ylabelsum_lu, blocks.diag_uu, blocks.y_labeled):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_blocks(path, spec: KernelSpec | None = None) -> KernelBlocks:
    """Read a binary block cache; verifies magic and, when given, the spec hash."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("not a kernel block cache")
        version, n_l, n_u, d, digest = struct.unpack("<IQQd16s", fh.read(44))
        if version != _VERSION:
            raise ValueError(f"unsupported cache version {version}")
        if spec is not None and digest != spec.digest():
            raise ValueError("cache was built for a different kernel spec")

        def read(shape):
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            return np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)

        K_ll = read((n_l, n_l))
        K_lu = read((n_l, n_u))
        K_uu = read((n_u, n_u))
        rowsum_uu = read((n_u,))
        ylabelsum_lu = read((n_u,))
        diag_uu = read((n_u,))
        y_labeled = read((n_l,))

    return KernelBlocks(
        K_ll=K_ll, K_lu=K_lu, K_uu=K_uu, d=d,
        rowsum_uu=rowsum_uu, ylabelsum_lu=ylabelsum_lu, diag_uu=diag_uu,
        y_labeled=y_labeled, spec=spec,
    )
