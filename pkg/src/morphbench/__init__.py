"""Morphing-attack-detection benchmark harness over pre-extracted features."""

import os as _os

# Honor the thread cap before any BLAS-backed library is loaded; user-set
# values for the specific variables take precedence.
_cap = _os.environ.get("MORPHBENCH_THREADS")
if _cap and _cap.isdigit() and int(_cap) > 0:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _cap)

from .dataset import (
    DatasetHandle,
    Filter,
    SynthSpec,
    assign_splits,
    concat_handles,
    select,
    split_identity_disjoint,
    synth_dataset,
)
from .detectors import load_detector, save_detector
from .errors import DataError, FitError, MorphbenchError
from .features import FeatureMatrix, read_features, write_features
from .gmm import (
    GmmModel,
    GmmSelectionReport,
    OneClassDetector,
    fit_gmm,
    gmm_log_likelihood,
    select_gmm,
    train_oneclass_detector,
)
from .manifest import ManifestEntry, family_of, load_manifest, save_manifest
from .metrics import RocCurve, ScoreSet, deer, format_percent, roc
from .pca import PcaModel, fit_pca, pca_transform
from .scenarios import (
    ReportTable,
    ScenarioConfig,
    load_scenario_configs,
    report_to_json_bytes,
    report_to_text,
    run_matrix,
    run_scenario,
)
from .svm import SupervisedDetector, SvmModel, svm_score, train_supervised_detector, train_svm

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DatasetHandle",
    "FeatureMatrix",
    "Filter",
    "FitError",
    "GmmModel",
    "GmmSelectionReport",
    "ManifestEntry",
    "MorphbenchError",
    "OneClassDetector",
    "PcaModel",
    "ReportTable",
    "RocCurve",
    "ScenarioConfig",
    "ScoreSet",
    "SupervisedDetector",
    "SvmModel",
    "SynthSpec",
    "assign_splits",
    "concat_handles",
    "deer",
    "family_of",
    "fit_gmm",
    "fit_pca",
    "format_percent",
    "gmm_log_likelihood",
    "load_detector",
    "load_manifest",
    "load_scenario_configs",
    "pca_transform",
    "read_features",
    "report_to_json_bytes",
    "report_to_text",
    "roc",
    "run_matrix",
    "run_scenario",
    "save_detector",
    "save_manifest",
    "select",
    "select_gmm",
    "split_identity_disjoint",
    "svm_score",
    "synth_dataset",
    "train_oneclass_detector",
    "train_supervised_detector",
    "train_svm",
    "write_features",
]
