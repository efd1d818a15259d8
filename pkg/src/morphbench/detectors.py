"""Detector container files: PCA blob plus SVM or GMM blob, with a JSON
sidecar (written next to the container at <path>.json) recording training
provenance."""

from __future__ import annotations

import json
import struct

from .errors import DataError
from .gmm import (
    GmmSelectionReport,
    OneClassDetector,
    gmm_from_bytes,
    gmm_to_bytes,
    selection_report_to_json,
)
from .ioutil import atomic_write_bytes
from .pca import pca_from_bytes, pca_to_bytes
from .svm import SupervisedDetector, svm_from_bytes, svm_to_bytes

_MAGIC = b"MADC"
_VERSION = 1
_HEADER = struct.Struct("<4sIB")
_KIND_CODES = {"supervised": 1, "one_class": 2}
_LEN = struct.Struct("<I")


def detector_kind(detector) -> str:
    if isinstance(detector, SupervisedDetector):
        return "supervised"
    if isinstance(detector, OneClassDetector):
        return "one_class"
    raise DataError(f"not a detector: {type(detector).__name__}")


def detector_to_bytes(detector) -> bytes:
    kind = detector_kind(detector)
    pca_blob = pca_to_bytes(detector.pca)
    if kind == "supervised":
        payload = svm_to_bytes(detector.svm)
    else:
        payload = gmm_to_bytes(detector.gmm)
    return b"".join([
        _HEADER.pack(_MAGIC, _VERSION, _KIND_CODES[kind]),
        _LEN.pack(len(pca_blob)), pca_blob,
        _LEN.pack(len(payload)), payload,
    ])


def detector_from_bytes(blob: bytes, extractor_name: str):
    if len(blob) < _HEADER.size:
        raise DataError("detector container truncated: missing header")
    magic, version, kind_code = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise DataError(f"unsupported detector container version {version}")
    kinds = {code: kind for kind, code in _KIND_CODES.items()}
    if kind_code not in kinds:
        raise DataError(f"unknown detector kind code {kind_code}")

    offset = _HEADER.size
    parts = []
    for _ in range(2):
        if len(blob) < offset + _LEN.size:
            raise DataError("detector container truncated: missing blob length")
        (length,) = _LEN.unpack_from(blob, offset)
        offset += _LEN.size
        if len(blob) < offset + length:
            raise DataError("detector container truncated: blob payload")
        parts.append(blob[offset:offset + length])
        offset += length
    if offset != len(blob):
        raise DataError(f"detector container has {len(blob) - offset} trailing bytes")

    pca = pca_from_bytes(parts[0])
    if kinds[kind_code] == "supervised":
        return SupervisedDetector(
            pca=pca, svm=svm_from_bytes(parts[1]), extractor_name=extractor_name
        )
    return OneClassDetector(
        pca=pca, gmm=gmm_from_bytes(parts[1]), extractor_name=extractor_name
    )


def _sidecar_path(path) -> str:
    return f"{path}.json"


def save_detector(path, detector, manifest_digest: str, seed=None,
                  selection: GmmSelectionReport | None = None):
    """Write the container and its JSON sidecar atomically."""
    kind = detector_kind(detector)
    sidecar = {
        "schema_version": 1,
        "kind": kind,
        "extractor_name": detector.extractor_name,
        "pca_threshold": detector.pca.threshold,
        "manifest_digest": manifest_digest,
    }
    if kind == "supervised":
        sidecar["c_param"] = detector.svm.c_param
    else:
        sidecar["seed"] = seed
        if selection is not None:
            sidecar["model_selection"] = selection_report_to_json(selection)
    atomic_write_bytes(path, detector_to_bytes(detector))
    atomic_write_bytes(
        _sidecar_path(path),
        (json.dumps(sidecar, indent=2, sort_keys=True) + "\n").encode("utf-8"),
    )


def load_detector(path):
    """Load (detector, sidecar dict) from a container written by save_detector."""
    sidecar_path = _sidecar_path(path)
    try:
        with open(sidecar_path, "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read detector sidecar {sidecar_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed detector sidecar {sidecar_path}: {exc}") from exc
    if not isinstance(sidecar, dict) or "extractor_name" not in sidecar:
        raise DataError(f"detector sidecar {sidecar_path} missing extractor_name")
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read detector container {path}: {exc}") from exc
    detector = detector_from_bytes(blob, str(sidecar["extractor_name"]))
    if detector_kind(detector) != sidecar.get("kind"):
        raise DataError(
            f"detector sidecar kind {sidecar.get('kind')!r} does not match container"
        )
    return detector, sidecar
