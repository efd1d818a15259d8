"""The extraction pipeline: metadata CSV + images -> manifest + features.

Images are loaded, landmark-aligned to 256x256, batched through the
selected backbone, and written out in metadata order.  Per-image problems
(unreadable file, missing or degenerate landmarks) are skipped, logged,
and counted; structural problems (malformed metadata, duplicate sample
ids, a backbone producing the wrong width) abort the run.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .align import align_face
from .backbones import ExtractorSpec
from .errors import AlignmentError, MetadataError
from .outputs import ManifestRow, write_features, write_manifest

log = logging.getLogger("morphextract")

METADATA_REQUIRED = (
    "image_path",
    "source_dataset",
    "label",
    "attack_algorithm",
    "domain",
    "identities",
)
METADATA_OPTIONAL = ("sample_id", "attack_family")

IDENTITY_SEPARATOR = "|"


@dataclass(frozen=True)
class MetadataRecord:
    """One input row: where the image is and what the sample is."""

    image_path: str
    row: ManifestRow


@dataclass(frozen=True)
class ExtractReport:
    """Outcome counts of one extraction run."""

    extracted: int
    skipped_unreadable: int
    skipped_alignment: int


def read_metadata(path, extractor_name: str) -> list[MetadataRecord]:
    """Parse the input metadata CSV into validated records.

    ``sample_id`` defaults to the image path's stem; ids must come out
    unique either way.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise MetadataError(f"{path}: empty metadata file")
            fields = tuple(reader.fieldnames)
            missing = set(METADATA_REQUIRED) - set(fields)
            if missing:
                raise MetadataError(
                    f"{path}: missing metadata columns {sorted(missing)}"
                )
            unknown = set(fields) - set(METADATA_REQUIRED) - set(METADATA_OPTIONAL)
            if unknown:
                raise MetadataError(
                    f"{path}: unknown metadata columns {sorted(unknown)}"
                )
            records = []
            seen_ids = set()
            for row in reader:
                line = reader.line_num
                image_path = (row.get("image_path") or "").strip()
                if not image_path:
                    raise MetadataError(f"{path} line {line}: empty image_path")
                sample_id = (row.get("sample_id") or "").strip() or Path(
                    image_path
                ).stem
                if sample_id in seen_ids:
                    raise MetadataError(
                        f"{path} line {line}: duplicate sample_id {sample_id!r}"
                    )
                seen_ids.add(sample_id)
                identities = tuple(
                    part for part in (row.get("identities") or "").split(
                        IDENTITY_SEPARATOR
                    ) if part
                )
                try:
                    manifest_row = ManifestRow(
                        sample_id=sample_id,
                        source_dataset=(row.get("source_dataset") or "").strip(),
                        label=(row.get("label") or "").strip(),
                        attack_algorithm=(row.get("attack_algorithm") or "").strip()
                        or None,
                        attack_family=(row.get("attack_family") or "").strip()
                        or None,
                        domain=(row.get("domain") or "").strip(),
                        identities=identities,
                        extractor=extractor_name,
                    )
                except MetadataError as exc:
                    raise MetadataError(f"{path} line {line}: {exc}") from exc
                records.append(MetadataRecord(image_path=image_path,
                                              row=manifest_row))
            return records
    except OSError as exc:
        raise MetadataError(f"cannot read metadata {path}: {exc}") from exc


def read_landmarks(path) -> dict[str, np.ndarray]:
    """Landmark table: image_path plus x1,y1,...,x5,y5 per line."""
    expected = ["image_path"] + [
        f"{axis}{i}" for i in range(1, 6) for axis in ("x", "y")
    ]
    table: dict[str, np.ndarray] = {}
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != expected:
                raise MetadataError(
                    f"{path}: landmark header must be {','.join(expected)}"
                )
            for row in reader:
                if not row:
                    continue
                if len(row) != 11:
                    raise MetadataError(
                        f"{path} line {reader.line_num}: expected 11 fields"
                    )
                try:
                    points = np.array(
                        [float(v) for v in row[1:]], dtype=np.float64
                    ).reshape(5, 2)
                except ValueError as exc:
                    raise MetadataError(
                        f"{path} line {reader.line_num}: {exc}"
                    ) from exc
                table[row[0]] = points
    except OSError as exc:
        raise MetadataError(f"cannot read landmarks {path}: {exc}") from exc
    return table


def _load_image(path: Path) -> np.ndarray | None:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, UnidentifiedImageError, ValueError):
        return None


def run_extraction(
    images_root,
    records: list[MetadataRecord],
    spec: ExtractorSpec,
    backbone,
    landmarks: dict[str, np.ndarray],
    out_features,
    out_manifest,
    batch_size: int = 32,
) -> ExtractReport:
    """Align, embed, and write; returns the outcome counts.

    Output order follows the metadata order of the surviving samples, so
    a rerun over identical inputs produces byte-identical files.
    """
    if batch_size < 1:
        raise MetadataError(f"batch_size must be >= 1, got {batch_size}")
    root = Path(images_root)

    kept_rows: list[ManifestRow] = []
    feature_blocks: list[np.ndarray] = []
    pending: list[np.ndarray] = []
    unreadable = 0
    misaligned = 0

    def flush():
        if pending:
            feature_blocks.append(backbone.embed(np.stack(pending)))
            pending.clear()

    for record in records:
        image = _load_image(root / record.image_path)
        if image is None:
            unreadable += 1
            log.warning("unreadable image skipped: %s", record.image_path)
            continue
        points = landmarks.get(record.image_path)
        if points is None:
            misaligned += 1
            log.warning("no landmarks, skipped: %s", record.image_path)
            continue
        try:
            crop = align_face(image, points)
        except AlignmentError as exc:
            misaligned += 1
            log.warning("alignment failed, skipped: %s (%s)",
                        record.image_path, exc)
            continue
        pending.append(crop)
        kept_rows.append(record.row)
        if len(pending) >= batch_size:
            flush()
    flush()

    features = (
        np.concatenate(feature_blocks, axis=0)
        if feature_blocks
        else np.zeros((0, spec.output_dim), dtype=np.float32)
    )
    write_features([r.sample_id for r in kept_rows], features, out_features)
    write_manifest(kept_rows, out_manifest)
    return ExtractReport(
        extracted=len(kept_rows),
        skipped_unreadable=unreadable,
        skipped_alignment=misaligned,
    )
