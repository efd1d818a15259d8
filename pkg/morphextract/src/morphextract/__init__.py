"""Feature extraction adapter: images in, manifest + feature files out.

Aligns face images to a canonical 256x256 crop via five landmarks, runs a
named backbone over them, and writes the manifest CSV and binary feature
file consumed by the evaluation harness.
"""

from .align import CROP_SIZE, TEMPLATE, align_face
from .backbones import (
    ExtractorSpec,
    ToyBackbone,
    build_backbone,
    known_names,
    spec_for,
)
from .errors import AlignmentError, BackboneError, ExtractError, MetadataError
from .extract import (
    ExtractReport,
    MetadataRecord,
    read_landmarks,
    read_metadata,
    run_extraction,
)
from .outputs import ManifestRow, write_features, write_manifest

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "BackboneError",
    "CROP_SIZE",
    "ExtractError",
    "ExtractReport",
    "ExtractorSpec",
    "ManifestRow",
    "MetadataError",
    "MetadataRecord",
    "TEMPLATE",
    "ToyBackbone",
    "align_face",
    "build_backbone",
    "known_names",
    "read_landmarks",
    "read_metadata",
    "run_extraction",
    "spec_for",
    "write_features",
    "write_manifest",
]
