"""Dense pairwise Euclidean distance matrix over image features."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DataError, FeatureMatrix

_CACHE_MAGIC = b"DMAT1"


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric N x N matrix of feature-space distances, keyed by image id."""

    ids: tuple[str, ...]
    d: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.d, dtype=np.float64)
        n = len(self.ids)
        if m.shape != (n, n):
            raise ValueError(f"distance matrix shape {m.shape} does not match {n} ids")
        if not np.all(np.isfinite(m)):
            raise ValueError("non-finite distance entries")
        m.setflags(write=False)
        object.__setattr__(self, "d", m)

    def __len__(self) -> int:
        return len(self.ids)


def pairwise_euclidean(features: FeatureMatrix, normalize: bool = False) -> DistanceMatrix:
    """Compute all pairwise Euclidean distances between feature rows.

    Parameters
    ----------
    features : FeatureMatrix
        N rows of D-dimensional vectors, N >= 1.
    normalize : bool
        When true, each row is L2-normalized before distances are taken.
        Rows with zero norm are rejected.

    Returns
    -------
    DistanceMatrix with d[i, j] = ||x_i - x_j||_2.

    Distances are accumulated from squared coordinate differences in double
    precision, row by row, so the result is deterministic and exactly
    symmetric with a zero diagonal.
    """
    vectors = features.vectors
    n = vectors.shape[0]
    if n < 1:
        raise DataError("empty feature matrix")
    if normalize:
        norms = np.sqrt(np.einsum("ij,ij->i", vectors, vectors))
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            bad = [features.ids[i] for i in zero[:10]]
            raise DataError(f"zero-norm feature rows cannot be normalized: {bad}")
        vectors = vectors / norms[:, np.newaxis]
    d = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        diff = vectors - vectors[i]
        d[i] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(tuple(features.ids), d)


def save_cache(dm: DistanceMatrix, path: str | Path) -> None:
    """Write a DistanceMatrix to the binary cache format.

    Layout: magic ``DMAT1``; N as 8-byte little-endian unsigned; each id as a
    4-byte little-endian unsigned byte length followed by UTF-8 bytes; then the
    strict upper triangle (diagonal excluded) row-major as 8-byte little-endian
    floats.
    """
    path = Path(path)
    n = len(dm)
    upper = dm.d[np.triu_indices(n, k=1)]
    with path.open("wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<Q", n))
        for image_id in dm.ids:
            raw = image_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(upper, dtype="<f8").tobytes())


def _read_exact(fh, size: int, name: str) -> bytes:
    raw = fh.read(size)
    if len(raw) != size:
        raise DataError(f"{name}: truncated cache file")
    return raw


def load_cache(path: str | Path) -> DistanceMatrix:
    """Read a DistanceMatrix from the binary cache format."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(len(_CACHE_MAGIC))
        if magic != _CACHE_MAGIC:
            raise DataError(f"{path.name}: bad magic bytes {magic!r}")
        (n,) = struct.unpack("<Q", _read_exact(fh, 8, path.name))
        ids = []
        for _ in range(n):
            (length,) = struct.unpack("<I", _read_exact(fh, 4, path.name))
            ids.append(_read_exact(fh, length, path.name).decode("utf-8"))
        count = n * (n - 1) // 2
        raw = _read_exact(fh, count * 8, path.name)
        upper = np.frombuffer(raw, dtype="<f8")
    d = np.zeros((n, n), dtype=np.float64)
    iu = np.triu_indices(n, k=1)
    d[iu] = upper
    d[(iu[1], iu[0])] = upper
    return DistanceMatrix(tuple(ids), d)
