"""PCA truncated at a cumulative explained-variance threshold."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FitError

DEFAULT_VARIANCE_THRESHOLD = 0.99

_MAGIC = b"MADP"
_VERSION = 1
_HEADER = struct.Struct("<4sIIId")


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Truncated PCA basis.

    ``components`` has orthonormal rows (k x d); ``explained_variance`` is
    descending; ``explained_ratio_cumulative`` is nondecreasing in (0, 1];
    k is the smallest count whose cumulative ratio reaches ``threshold``.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_ratio_cumulative: np.ndarray
    threshold: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[0]


def fit_pca(X, threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> PcaModel:
    """Principal components of the rows of X, truncated at ``threshold``.

    Equivalent to an eigendecomposition of the unbiased (1/(n-1)) sample
    covariance of mean-centered data; computed via SVD.  Each component is
    oriented so its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-d data matrix, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise FitError(f"insufficient samples for PCA: n={n} < 2")
    if d < 1:
        raise DataError("data matrix has no columns")
    if not 0.0 < threshold <= 1.0:
        raise DataError(f"variance threshold must be in (0,1], got {threshold}")

    mean = X.mean(axis=0)
    centered = X - mean
    # Singular values of the centered matrix give covariance eigenvalues
    # s^2/(n-1) without forming the d x d covariance.
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    variances = (s * s) / (n - 1)
    total = variances.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise FitError("degenerate variance: data has zero total variance")

    r = min(n - 1, d)
    variances = variances[:r]
    vt = vt[:r]
    cumulative = np.cumsum(variances) / total
    reached = np.flatnonzero(cumulative >= threshold)
    # Finite-precision cumsum can land a hair under 1.0 at full rank.
    k = int(reached[0]) + 1 if reached.size else r

    components = vt[:k].copy()
    flip = components[np.arange(k), np.abs(components).argmax(axis=1)] < 0
    components[flip] *= -1.0

    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=variances[:k].copy(),
        explained_ratio_cumulative=cumulative[:k].copy(),
        threshold=float(threshold),
    )


def pca_transform(model: PcaModel, x) -> np.ndarray:
    """Project x (a d-vector or an n x d matrix) onto the retained basis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise DataError(
            f"dimension mismatch: expected {model.dim}, got {x.shape[-1]}"
        )
    return (x - model.mean) @ model.components.T


def pca_to_bytes(model: PcaModel) -> bytes:
    """Little-endian binary blob; see pca_from_bytes for the layout."""
    parts = [
        _HEADER.pack(_MAGIC, _VERSION, model.dim, model.k, model.threshold),
        model.mean.astype("<f8").tobytes(),
        model.components.astype("<f8").tobytes(),
        model.explained_variance.astype("<f8").tobytes(),
        model.explained_ratio_cumulative.astype("<f8").tobytes(),
    ]
    return b"".join(parts)


def pca_from_bytes(blob: bytes) -> PcaModel:
    if len(blob) < _HEADER.size:
        raise DataError("PCA blob truncated: missing header")
    magic, version, d, k, threshold = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise DataError(f"unsupported PCA blob version {version}")
    sizes = (d, k * d, k, k)
    expected = _HEADER.size + 8 * sum(sizes)
    if len(blob) != expected:
        raise DataError(
            f"PCA blob length mismatch: expected {expected} bytes, got {len(blob)}"
        )
    offset = _HEADER.size
    arrays = []
    for count in sizes:
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset))
        offset += 8 * count
    mean, components, variance, cumulative = arrays
    return PcaModel(
        mean=mean.astype(np.float64),
        components=components.astype(np.float64).reshape(k, d),
        explained_variance=variance.astype(np.float64),
        explained_ratio_cumulative=cumulative.astype(np.float64),
        threshold=float(threshold),
    )
