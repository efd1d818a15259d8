"""Gaussian mixture over bonafide features, selected by cross-validated D-EER.

Detector score convention: minus log-likelihood, so attacks (expected to be
unlikely under the bonafide model) score high.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .dataset import DatasetHandle
from .errors import DataError, FitError
from .metrics import ScoreSet, deer
from .pca import DEFAULT_VARIANCE_THRESHOLD, PcaModel, fit_pca, pca_transform

DEFAULT_K_GRID = (1, 2, 4, 8, 16, 32, 64, 128, 256)
COV_TYPES = ("diagonal", "spherical")
VARIANCE_FLOOR = 1e-6
DEFAULT_FOLDS = 4

_LN_2PI = float(np.log(2.0 * np.pi))

_MAGIC = b"MADG"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Mixture of axis-aligned Gaussians.

    ``covariances`` holds per-dimension variances (K x k) for cov_type
    "diagonal" and one shared variance per component (K,) for "spherical".
    """

    n_components: int
    cov_type: str
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    avg_ll_history: tuple = field(default=(), repr=False)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class GridCell:
    """One model-selection grid entry with its per-fold validation D-EERs."""

    n_components: int
    cov_type: str
    fold_deers: tuple
    mean_deer: float


@dataclass(frozen=True)
class GmmSelectionReport:
    folds: int
    grid: tuple
    chosen: tuple
    skipped: tuple = ()
    fallback: bool = False


def selection_report_to_json(report: GmmSelectionReport) -> dict:
    return {
        "folds": report.folds,
        "chosen": {"n_components": report.chosen[0], "cov_type": report.chosen[1]},
        "fallback": report.fallback,
        "skipped": [
            {"n_components": k, "cov_type": cov} for k, cov in report.skipped
        ],
        "grid": [
            {
                "n_components": cell.n_components,
                "cov_type": cell.cov_type,
                "fold_deers": list(cell.fold_deers),
                "mean_deer": cell.mean_deer,
            }
            for cell in report.grid
        ],
    }


def _variance_matrix(model: GmmModel) -> np.ndarray:
    if model.cov_type == "spherical":
        return np.broadcast_to(
            model.covariances[:, None], (model.n_components, model.dim)
        )
    return model.covariances


def _component_log_prob(X, weights, means, variances) -> np.ndarray:
    """log(w_j N(x_i; mu_j, var_j)) for all i, j, via two matmuls."""
    k = X.shape[1]
    inv = 1.0 / variances
    quad = (
        (X * X) @ inv.T
        - 2.0 * (X @ (means * inv).T)
        + np.sum(means * means * inv, axis=1)
    )
    logdet = np.sum(np.log(variances), axis=1)
    return np.log(weights) - 0.5 * (k * _LN_2PI + logdet + quad)


def _kmeanspp_centers(X, K, rng) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return X[chosen].copy()


def fit_gmm(X, n_components: int, cov_type: str, seed=0, tol: float = 1e-5,
            max_iter: int = 200) -> GmmModel:
    """EM fit of a K-component mixture with diagonal or spherical covariance.

    Components are seeded kmeans++-style; variances are floored at 1e-6.
    A component that loses all responsibility is re-seeded at the least
    likely training point once; a second collapse is an error.  The average
    log-likelihood is nondecreasing between EM steps (a re-seed restarts
    the recorded history).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected a 2-d data matrix, got shape {X.shape}")
    n, k = X.shape
    K = int(n_components)
    if K < 1:
        raise DataError(f"n_components must be >= 1, got {n_components}")
    if n < K:
        raise FitError(f"more components than samples: K={K} > n={n}")
    if cov_type not in COV_TYPES:
        raise DataError(f"cov_type must be one of {COV_TYPES}, got {cov_type!r}")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature values")

    rng = np.random.default_rng(seed)
    global_var = np.maximum(X.var(axis=0), VARIANCE_FLOOR)
    means = _kmeanspp_centers(X, K, rng)
    variances = np.tile(global_var, (K, 1))
    if cov_type == "spherical":
        variances[:] = variances.mean(axis=1, keepdims=True)
    weights = np.full(K, 1.0 / K)

    sq = X * X
    history: list[float] = []
    reseeded = False
    for _ in range(max_iter):
        log_joint = _component_log_prob(X, weights, means, variances)
        ll = logsumexp(log_joint, axis=1)
        avg_ll = float(ll.mean())
        if history and avg_ll - history[-1] < tol * max(1.0, abs(history[-1])):
            history.append(avg_ll)
            break
        history.append(avg_ll)

        resp = np.exp(log_joint - ll[:, None])
        counts = resp.sum(axis=0)
        empty = counts < 1e-10
        if np.any(empty):
            if reseeded:
                raise FitError("empty mixture component recurred after re-seed")
            reseeded = True
            order = np.argsort(ll)
            for rank, j in enumerate(np.flatnonzero(empty)):
                means[j] = X[order[rank % n]]
                variances[j] = (
                    global_var.mean() if cov_type == "spherical" else global_var
                )
                weights[j] = 1.0 / K
            weights /= weights.sum()
            history.clear()
            continue

        weights = counts / n
        means = (resp.T @ X) / counts[:, None]
        second = (resp.T @ sq) / counts[:, None]
        raw = second - means * means
        if cov_type == "spherical":
            sph = np.maximum(raw.mean(axis=1, keepdims=True), VARIANCE_FLOOR)
            variances = np.repeat(sph, k, axis=1)
        else:
            variances = np.maximum(raw, VARIANCE_FLOOR)

    covariances = variances[:, 0].copy() if cov_type == "spherical" else variances
    return GmmModel(
        n_components=K,
        cov_type=cov_type,
        weights=weights.copy(),
        means=means.copy(),
        covariances=np.array(covariances, dtype=np.float64),
        avg_ll_history=tuple(history),
    )


def gmm_log_likelihood(model: GmmModel, x) -> np.ndarray | float:
    """log-density of the mixture at x (a k-vector or batch of rows)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != model.dim:
        raise DataError(
            f"dimension mismatch: expected {model.dim}, got {X.shape[1]}"
        )
    out = logsumexp(
        _component_log_prob(X, model.weights, model.means, _variance_matrix(model)),
        axis=1,
    )
    return float(out[0]) if single else out


def as_diagonal(model: GmmModel) -> GmmModel:
    """Spherical model expressed in diagonal form (identical densities)."""
    if model.cov_type == "diagonal":
        return model
    return GmmModel(
        n_components=model.n_components,
        cov_type="diagonal",
        weights=model.weights,
        means=model.means,
        covariances=np.array(_variance_matrix(model)),
        avg_ll_history=model.avg_ll_history,
    )


def _fold_indices(n, folds, rng) -> list:
    order = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(order, folds)]


def _fit_seed(seed, tag, K, cov_type, fold):
    return np.random.SeedSequence(
        [int(seed), tag, int(K), COV_TYPES.index(cov_type), int(fold)]
    )


def _cv_grid(bonafide, attack, K_grid, cov_types, folds, seed,
             pca_threshold=None):
    """Mean validation D-EER for each grid cell; folds partition both sets.

    When pca_threshold is given, a PCA is refit per fold on the bonafide
    training portion and applied to that fold's validation sets.
    """
    n_b, n_a = bonafide.shape[0], attack.shape[0]
    if n_b < folds:
        raise DataError(f"need at least {folds} bonafide samples, got {n_b}")
    if n_a < folds:
        raise DataError(f"need at least {folds} attack samples, got {n_a}")
    for cov_type in cov_types:
        if cov_type not in COV_TYPES:
            raise DataError(f"cov_type must be one of {COV_TYPES}, got {cov_type!r}")

    bona_folds = _fold_indices(n_b, folds, np.random.default_rng([int(seed), 0, 0]))
    attack_folds = _fold_indices(n_a, folds, np.random.default_rng([int(seed), 0, 1]))
    min_train = min(n_b - fold.size for fold in bona_folds)

    prepared = []
    for f in range(folds):
        hold_b = np.zeros(n_b, dtype=bool)
        hold_b[bona_folds[f]] = True
        train = bonafide[~hold_b]
        val_b = bonafide[hold_b]
        val_a = attack[attack_folds[f]]
        if pca_threshold is not None:
            pca = fit_pca(train, threshold=pca_threshold)
            train = pca_transform(pca, train)
            val_b = pca_transform(pca, val_b)
            val_a = pca_transform(pca, val_a)
        prepared.append((train, val_b, val_a))

    grid, skipped = [], []
    for K in K_grid:
        for cov_type in cov_types:
            if K > min_train:
                skipped.append((int(K), cov_type))
                continue
            fold_deers = []
            for f, (train, val_b, val_a) in enumerate(prepared):
                model = fit_gmm(
                    train, K, cov_type, seed=_fit_seed(seed, 1, K, cov_type, f)
                )
                scores = ScoreSet(
                    bonafide_scores=-gmm_log_likelihood(model, val_b),
                    attack_scores=-gmm_log_likelihood(model, val_a),
                )
                fold_deers.append(deer(scores))
            grid.append(
                GridCell(
                    n_components=int(K),
                    cov_type=cov_type,
                    fold_deers=tuple(fold_deers),
                    mean_deer=float(np.mean(fold_deers)),
                )
            )
    if not grid:
        raise FitError("every grid cell was skipped: folds too small for K_grid")

    chosen = min(
        grid,
        key=lambda c: (c.mean_deer, c.n_components, 0 if c.cov_type == "spherical" else 1),
    )
    report = GmmSelectionReport(
        folds=folds,
        grid=tuple(grid),
        chosen=(chosen.n_components, chosen.cov_type),
        skipped=tuple(skipped),
    )
    return report


def select_gmm(bonafide_train, attack_train, K_grid=DEFAULT_K_GRID,
               cov_types=COV_TYPES, folds=DEFAULT_FOLDS, seed=0):
    """Pick (K, cov_type) by mean 4-fold validation D-EER, refit on all data.

    Ties break toward smaller K, then spherical over diagonal.  Returns the
    refit model and the selection report.
    """
    bonafide_train = np.asarray(bonafide_train, dtype=np.float64)
    attack_train = np.asarray(attack_train, dtype=np.float64)
    report = _cv_grid(bonafide_train, attack_train, K_grid, cov_types, folds, seed)
    K, cov_type = report.chosen
    model = fit_gmm(
        bonafide_train, K, cov_type, seed=_fit_seed(seed, 2, K, cov_type, folds)
    )
    return model, report


@dataclass(frozen=True, eq=False)
class OneClassDetector:
    """Bonafide-only detector: score = -log-likelihood under the mixture."""

    pca: PcaModel
    gmm: GmmModel
    extractor_name: str

    def __post_init__(self):
        if self.gmm.dim != self.pca.k:
            raise DataError(
                f"gmm dimension {self.gmm.dim} does not match pca output {self.pca.k}"
            )

    def score(self, x) -> np.ndarray:
        """Scores for raw feature rows; higher = more attack-like."""
        return -gmm_log_likelihood(self.gmm, pca_transform(self.pca, x))


def train_oneclass_detector(
    handle: DatasetHandle,
    attack_train: DatasetHandle | None = None,
    threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    K_grid=DEFAULT_K_GRID,
    cov_types=COV_TYPES,
    folds=DEFAULT_FOLDS,
    seed=0,
):
    """One-class pipeline: PCA on bonafide only, then the selected mixture.

    ``handle`` must contain only bonafide samples; ``attack_train`` samples
    enter model selection only (never the fit).  During cross-validation
    the PCA is refit per fold on the fold's bonafide training portion.
    Without attack samples, selection falls back to (K=1, spherical).
    """
    for e in handle.manifest:
        if e.label != "bonafide":
            raise DataError(
                f"one-class training slice contains attack sample {e.sample_id}"
            )
    if len(handle) == 0:
        raise DataError("one-class training slice is empty")
    extractors = {e.extractor for e in handle.manifest}
    if attack_train is not None:
        extractors |= {e.extractor for e in attack_train.manifest}
    if len(extractors) > 1:
        raise DataError(f"mixed extractors in training view: {sorted(extractors)}")

    bonafide = handle.rows_for()
    if attack_train is None or len(attack_train) == 0:
        K, cov_type = 1, "spherical"
        report = GmmSelectionReport(
            folds=folds, grid=(), chosen=(K, cov_type), fallback=True
        )
    else:
        attacks = attack_train.rows_for()
        report = _cv_grid(
            bonafide, attacks, K_grid, cov_types, folds, seed,
            pca_threshold=threshold,
        )
        K, cov_type = report.chosen

    pca = fit_pca(bonafide, threshold=threshold)
    gmm = fit_gmm(
        pca_transform(pca, bonafide), K, cov_type,
        seed=_fit_seed(seed, 2, K, cov_type, folds),
    )
    detector = OneClassDetector(
        pca=pca, gmm=gmm, extractor_name=next(iter(extractors))
    )
    return detector, report


def gmm_to_bytes(model: GmmModel) -> bytes:
    header = _HEADER.pack(
        _MAGIC, _VERSION, model.n_components, model.dim,
        COV_TYPES.index(model.cov_type),
    )
    return b"".join([
        header,
        model.weights.astype("<f8").tobytes(),
        model.means.astype("<f8").tobytes(),
        np.asarray(model.covariances).astype("<f8").tobytes(),
    ])


def gmm_from_bytes(blob: bytes) -> GmmModel:
    if len(blob) < _HEADER.size:
        raise DataError("GMM blob truncated: missing header")
    magic, version, K, k, cov_code = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise DataError(f"unsupported GMM blob version {version}")
    if cov_code >= len(COV_TYPES):
        raise DataError(f"unknown covariance code {cov_code}")
    cov_type = COV_TYPES[cov_code]
    n_cov = K if cov_type == "spherical" else K * k
    expected = _HEADER.size + 8 * (K + K * k + n_cov)
    if len(blob) != expected:
        raise DataError(
            f"GMM blob length mismatch: expected {expected} bytes, got {len(blob)}"
        )
    offset = _HEADER.size
    weights = np.frombuffer(blob, dtype="<f8", count=K, offset=offset)
    offset += 8 * K
    means = np.frombuffer(blob, dtype="<f8", count=K * k, offset=offset)
    offset += 8 * K * k
    cov = np.frombuffer(blob, dtype="<f8", count=n_cov, offset=offset)
    return GmmModel(
        n_components=K,
        cov_type=cov_type,
        weights=weights.astype(np.float64),
        means=means.astype(np.float64).reshape(K, k),
        covariances=(
            cov.astype(np.float64) if cov_type == "spherical"
            else cov.astype(np.float64).reshape(K, k)
        ),
    )
