"""Sparse dataset loading, feature normalization and labeled/unlabeled splits."""

from __future__ import annotations

import gzip
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

UNKNOWN = 0


class ParseError(ValueError):
    """Malformed input text (carries a line number where possible)."""


class EmptyDataError(ParseError):
    """Input contained no samples."""


@dataclass(frozen=True)
class Dataset:
    """Sparse samples with labels in {+1, -1, unknown} and an L/U index partition.

    ``labels`` is 0 (unknown) on unlabeled positions.  When the dataset was
    produced by :func:`make_split`, ``truth`` holds the full ground-truth
    labels; it exists for accuracy scoring only and must never be read by a
    solver.
    """

    X: sp.csr_matrix
    labels: np.ndarray
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray
    n_features: int
    truth: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        n = self.X.shape[0]
        if len(self.labels) != n:
            raise ValueError("labels length does not match sample count")
        part = np.concatenate([self.labeled_idx, self.unlabeled_idx])
        if len(part) != n or len(np.unique(part)) != n:
            raise ValueError("labeled_idx and unlabeled_idx must partition the samples")
        lab = self.labels[self.labeled_idx]
        if len(lab) and not np.all(np.abs(lab) == 1):
            raise ValueError("labeled samples must carry labels in {+1, -1}")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    def labeled_labels(self) -> np.ndarray:
        """Labels of the labeled partition, in labeled_idx order."""
        return self.labels[self.labeled_idx]

    def positive_ratio_unlabeled(self) -> float:
        """True fraction of +1 among unlabeled samples (needs ground truth)."""
        if self.truth is None:
            raise ValueError("dataset carries no ground truth for the unlabeled part")
        t = self.truth[self.unlabeled_idx]
        return float(np.mean(t == 1))


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a fully labeled dataset into labeled/unlabeled parts."""

    n_labeled: int
    seed: int
    stratified: bool = True

    def __post_init__(self):
        if self.n_labeled < 2:
            raise ValueError("n_labeled must be at least 2")


def parse_libsvm(text: str | bytes, binary_map: bool = False) -> Dataset:
    """Parse libsvm-format text into a fully labeled Dataset.

    Each nonempty line is ``<label> <idx>:<val> ...`` with strictly increasing
    1-based feature indices.  Labels map to +1 when positive, -1 otherwise;
    more than two distinct raw labels is an error unless ``binary_map`` is set.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")

    raw_labels = []
    rows, cols, vals = [], [], []
    n_features = 0
    n_rows = 0

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            y = float(tokens[0])
        except ValueError:
            raise ParseError(f"line {lineno}: invalid label {tokens[0]!r}") from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, _, val_s = tok.partition(":")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"line {lineno}: invalid feature token {tok!r}") from None
            if idx <= prev:
                raise ParseError(
                    f"line {lineno}: feature indices must be strictly increasing "
                    f"(got {idx} after {prev})"
                )
            prev = idx
            rows.append(n_rows)
            cols.append(idx - 1)
            vals.append(val)
        n_features = max(n_features, prev)
        raw_labels.append(y)
        n_rows += 1

    if n_rows == 0:
        raise EmptyDataError("input contains no samples")

    distinct = set(raw_labels)
    if len(distinct) > 2 and not binary_map:
        raise ParseError(
            f"{len(distinct)} distinct labels found; pass binary_map=True to fold "
            "them onto {+1, -1}"
        )

    labels = np.where(np.asarray(raw_labels) > 0, 1, -1).astype(np.int8)
    X = sp.csr_matrix(
        (np.asarray(vals, dtype=np.float64), (rows, cols)),
        shape=(n_rows, n_features),
    )
    all_idx = np.arange(n_rows)
    return Dataset(
        X=X,
        labels=labels,
        labeled_idx=all_idx,
        unlabeled_idx=np.empty(0, dtype=int),
        n_features=n_features,
    )


def serialize_libsvm(d: Dataset) -> str:
    """Inverse of parse_libsvm for fully labeled datasets."""
    if len(d.unlabeled_idx):
        raise ValueError("cannot serialize a dataset with unknown labels")
    lines = []
    X = d.X.tocsr()
    for i in range(d.n_samples):
        start, end = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(
            f"{j + 1}:{v:.17g}" for j, v in zip(X.indices[start:end], X.data[start:end])
        )
        lines.append(f"{'+1' if d.labels[i] > 0 else '-1'} {feats}".rstrip())
    return "\n".join(lines) + "\n"


def load_dataset(path: str | Path, binary_map: bool = False) -> Dataset:
    """Read a libsvm file from disk; .gz paths are decompressed transparently."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz" or raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_libsvm(raw, binary_map=binary_map)


def normalize_features(d: Dataset) -> Dataset:
    """Min-max scale every feature column to [0, 1].

    Implicit zeros count as value 0 for the per-column min/max, so columns
    with a nonnegative minimum keep their sparsity pattern.  Columns with a
    negative minimum are densified honestly; constant columns map to 0.
    """
    if d.n_samples == 0:
        raise EmptyDataError("cannot normalize an empty dataset")

    n, F = d.X.shape
    X = d.X.tocsc()
    data = X.data.astype(np.float64, copy=True)
    indptr, indices = X.indptr, X.indices

    nnz_col = np.diff(indptr)
    col_min = np.zeros(F)
    col_max = np.zeros(F)
    nonempty = nnz_col > 0
    if nonempty.any():
        col_min[nonempty] = np.minimum.reduceat(data, indptr[:-1][nonempty])
        col_max[nonempty] = np.maximum.reduceat(data, indptr[:-1][nonempty])
    has_implicit = nnz_col < n
    lo = np.where(has_implicit, np.minimum(col_min, 0.0), col_min)
    hi = np.where(has_implicit, np.maximum(col_max, 0.0), col_max)
    span = hi - lo

    col_of = np.repeat(np.arange(F), nnz_col)
    scalable = span[col_of] > 0
    data[scalable] = (data[scalable] - lo[col_of][scalable]) / span[col_of][scalable]
    data[~scalable] = 0.0

    out = sp.csc_matrix((data, indices.copy(), indptr.copy()), shape=(n, F))

    # Columns whose minimum is negative give implicit zeros a nonzero image.
    densify = np.flatnonzero(has_implicit & (lo < 0) & (span > 0))
    if len(densify):
        fill_rows, fill_cols, fill_vals = [], [], []
        for j in densify:
            explicit = indices[indptr[j]:indptr[j + 1]]
            missing = np.setdiff1d(np.arange(n), explicit, assume_unique=True)
            fill_rows.extend(missing)
            fill_cols.extend([j] * len(missing))
            fill_vals.extend([-lo[j] / span[j]] * len(missing))
        out = out + sp.csc_matrix((fill_vals, (fill_rows, fill_cols)), shape=(n, F))

    out = out.tocsr()
    out.eliminate_zeros()
    return Dataset(
        X=out,
        labels=d.labels.copy(),
        labeled_idx=d.labeled_idx.copy(),
        unlabeled_idx=d.unlabeled_idx.copy(),
        n_features=d.n_features,
        truth=None if d.truth is None else d.truth.copy(),
    )


def make_split(d: Dataset, s: SplitSpec) -> Dataset:
    """Partition a fully labeled dataset into n_labeled L samples and the rest U.

    Deterministic for a fixed seed.  Ground truth moves to the ``truth``
    shadow array; the returned labels expose only the labeled part.
    """
    if len(d.unlabeled_idx):
        raise ValueError("make_split needs a fully labeled dataset")
    n = d.n_samples
    if s.n_labeled >= n:
        raise ValueError(f"n_labeled={s.n_labeled} must be smaller than {n} samples")

    rng = np.random.default_rng(s.seed)
    perm = rng.permutation(n)
    if s.stratified:
        classes = np.unique(d.labels)
        if len(classes) < 2:
            raise ValueError("stratified split impossible: single-class data")
        first_pos = perm[np.argmax(d.labels[perm] == 1)]
        first_neg = perm[np.argmax(d.labels[perm] == -1)]
        chosen = [first_pos, first_neg]
        for i in perm:
            if len(chosen) == s.n_labeled:
                break
            if i != first_pos and i != first_neg:
                chosen.append(i)
        labeled = np.sort(np.asarray(chosen))
    else:
        labeled = np.sort(perm[: s.n_labeled])

    mask = np.zeros(n, dtype=bool)
    mask[labeled] = True
    unlabeled = np.flatnonzero(~mask)

    labels = np.where(mask, d.labels, UNKNOWN).astype(np.int8)
    return Dataset(
        X=d.X,
        labels=labels,
        labeled_idx=labeled,
        unlabeled_idx=unlabeled,
        n_features=d.n_features,
        truth=d.labels.copy(),
    )


@dataclass(frozen=True)
class RegistryEntry:
    """One dataset record of the benchmark registry file."""

    name: str
    path: str
    C: float
    cstar_over_c: float
    r: float
    n_labeled: int


_REGISTRY_KEYS = {"name", "path", "C", "Cstar_over_C", "r", "n_labeled"}


def parse_registry(text: str) -> list[RegistryEntry]:
    """Parse the flat key=value registry format; ``name=`` starts a record."""
    records: list[dict] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or key not in _REGISTRY_KEYS:
            raise ParseError(f"line {lineno}: expected one of {sorted(_REGISTRY_KEYS)}=value")
        if key == "name":
            records.append({})
        if not records:
            raise ParseError(f"line {lineno}: {key}= before any name=")
        records[-1][key] = value

    entries = []
    for rec in records:
        missing = _REGISTRY_KEYS - set(rec)
        if missing:
            raise ParseError(f"registry entry {rec.get('name', '?')!r} missing {sorted(missing)}")
        entries.append(
            RegistryEntry(
                name=rec["name"],
                path=rec["path"],
                C=float(rec["C"]),
                cstar_over_c=float(rec["Cstar_over_C"]),
                r=float(rec["r"]),
                n_labeled=int(rec["n_labeled"]),
            )
        )
    return entries
