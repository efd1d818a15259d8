"""Linear SVM probe trained on PCA-reduced features.

Label convention, fixed artifact-wide: attack = +1, bonafide = -1, so the
signed distance to the hyperplane is higher for more attack-like samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .dataset import DatasetHandle
from .errors import DataError, FitError
from .pca import DEFAULT_VARIANCE_THRESHOLD, PcaModel, fit_pca, pca_transform

DEFAULT_C = 1.0

_MAGIC = b"MADS"
_VERSION = 1
_HEADER = struct.Struct("<4sIIdd")


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Hyperplane of the binary probe: score(x) = weights . x + bias."""

    weights: np.ndarray
    bias: float
    c_param: float
    objective_history: tuple = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class SupervisedDetector:
    """PCA front end plus linear SVM, trained on both classes."""

    pca: PcaModel
    svm: SvmModel
    extractor_name: str

    def __post_init__(self):
        if self.svm.k != self.pca.k:
            raise DataError(
                f"svm dimension {self.svm.k} does not match pca output {self.pca.k}"
            )

    def score(self, x) -> np.ndarray:
        """Margin scores for raw feature rows; higher = more attack-like."""
        return svm_score(self.svm, pca_transform(self.pca, x))


def train_svm(X, y, c_param: float = DEFAULT_C, tol: float = 1e-4,
              max_iter: int = 100_000) -> SvmModel:
    """L2-regularized hinge-loss minimizer, solved in the dual by SMO.

    Objective: (1/2)||w||^2 + C sum_i max(0, 1 - y_i (w.x_i + b)) with an
    unregularized bias.  The maximal-violating-pair working set makes the
    iteration order, and hence the model, deterministic.  Terminates when
    the KKT violation m - M drops to ``tol``.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2:
        raise DataError(f"expected a 2-d data matrix, got shape {X.shape}")
    n, k = X.shape
    if y.shape[0] != n:
        raise DataError(f"label count {y.shape[0]} does not match {n} rows")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature values")
    if not np.all(np.abs(y) == 1.0):
        raise DataError("labels must be in {-1,+1}")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise FitError("degenerate labels: both classes required")
    if c_param <= 0:
        raise DataError(f"c_param must be positive, got {c_param}")

    C = float(c_param)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective (1/2)aQa - e.a
    sq = np.einsum("ij,ij->i", X, X)
    kcache: dict[int, np.ndarray] = {}
    cache_rows = max(2, int(256e6 / (8 * n)))  # ~256 MB of Gram rows

    def kernel_row(i: int) -> np.ndarray:
        row = kcache.get(i)
        if row is None:
            if len(kcache) >= cache_rows:
                kcache.pop(next(iter(kcache)))
            row = X @ X[i]
            kcache[i] = row
        return row

    if max_iter < 1:
        raise DataError(f"max_iter must be >= 1, got {max_iter}")
    history = []
    neg_inf = -np.inf
    for _ in range(max_iter):
        v = -y * grad
        up = ((alpha < C) & (y > 0)) | ((alpha > 0) & (y < 0))
        low = ((alpha < C) & (y < 0)) | ((alpha > 0) & (y > 0))
        i = int(np.argmax(np.where(up, v, neg_inf)))
        m, M = v[i], np.min(np.where(low, v, -neg_inf))
        history.append(0.5 * (alpha @ grad - alpha.sum()))
        if m - M <= tol:
            break

        # Second-order pair selection: among violators, maximize the
        # guaranteed decrease (m - v_t)^2 / eta_t of the dual objective.
        ki = kernel_row(i)
        eta_all = np.maximum(sq[i] + sq - 2.0 * ki, 1e-12)
        gain = np.where(low & (v < m), (m - v) ** 2 / eta_all, neg_inf)
        j = int(np.argmax(gain))

        eta = max(sq[i] + sq[j] - 2.0 * ki[j], 1e-12)
        step = (m - v[j]) / eta
        cap_i = C - alpha[i] if y[i] > 0 else alpha[i]
        cap_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(step, cap_i, cap_j)
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        grad += step * y * (ki - kernel_row(j))
    else:
        raise FitError(
            f"SVM did not converge within {max_iter} iterations "
            f"(violation {m - M:.3e} > tol {tol:.1e})"
        )

    # Snap multipliers that stopped within rounding of the box bounds.
    alpha[np.abs(alpha) < 1e-10] = 0.0
    alpha[np.abs(alpha - C) < 1e-10] = C
    weights = (alpha * y) @ X
    bias = 0.5 * (m + M)
    return SvmModel(
        weights=weights,
        bias=float(bias),
        c_param=C,
        objective_history=tuple(history),
    )


def svm_score(model: SvmModel, x) -> np.ndarray | float:
    """Signed distance w.x + b for one k-vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.k:
        raise DataError(f"dimension mismatch: expected {model.k}, got {x.shape[-1]}")
    out = x @ model.weights + model.bias
    return float(out) if out.ndim == 0 else out


def train_supervised_detector(
    handle: DatasetHandle,
    c_param: float = DEFAULT_C,
    threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    max_iter: int = 1_000_000,
) -> SupervisedDetector:
    """Fit PCA on all training rows of the view, then the SVM on top.

    The iteration budget is deliberately higher than the train_svm default:
    realistic training sets with many near-margin points routinely need a
    few hundred thousand working-set steps, each of which is cheap.
    """
    X = handle.rows_for()
    labels = np.array(
        [1.0 if e.label == "attack" else -1.0 for e in handle.manifest]
    )
    extractors = {e.extractor for e in handle.manifest}
    if len(extractors) > 1:
        raise DataError(f"mixed extractors in training view: {sorted(extractors)}")
    if not (np.any(labels > 0) and np.any(labels < 0)):
        raise FitError("degenerate labels: both classes required")
    pca = fit_pca(X, threshold=threshold)
    svm = train_svm(
        pca_transform(pca, X), labels, c_param=c_param, max_iter=max_iter
    )
    return SupervisedDetector(
        pca=pca, svm=svm, extractor_name=next(iter(extractors))
    )


def svm_to_bytes(model: SvmModel) -> bytes:
    header = _HEADER.pack(_MAGIC, _VERSION, model.k, model.bias, model.c_param)
    return header + model.weights.astype("<f8").tobytes()


def svm_from_bytes(blob: bytes) -> SvmModel:
    if len(blob) < _HEADER.size:
        raise DataError("SVM blob truncated: missing header")
    magic, version, k, bias, c_param = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise DataError(f"unsupported SVM blob version {version}")
    expected = _HEADER.size + 8 * k
    if len(blob) != expected:
        raise DataError(
            f"SVM blob length mismatch: expected {expected} bytes, got {len(blob)}"
        )
    weights = np.frombuffer(blob, dtype="<f8", count=k, offset=_HEADER.size)
    return SvmModel(weights=weights.astype(np.float64), bias=bias, c_param=c_param)
