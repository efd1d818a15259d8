"""Writers for the downstream harness's two input files.

The feature file (MADF, little-endian: magic, version u32, dim u32,
count u32, null-terminated UTF-8 sample ids, then count x dim float32
rows) and the manifest CSV with its fixed nine-column header are the
interface to the evaluation harness; both are produced here exactly to
that contract and are verified against the harness's ``validate``
subcommand in the tests.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import MetadataError

MADF_MAGIC = b"MADF"
MADF_VERSION = 1
_MADF_HEADER = struct.Struct("<4sIII")

MANIFEST_HEADER = (
    "sample_id",
    "source_dataset",
    "label",
    "attack_algorithm",
    "attack_family",
    "domain",
    "split",
    "identities",
    "extractor",
)

IDENTITY_SEPARATOR = "|"
LABELS = ("bonafide", "attack")
DOMAINS = ("digital", "print_scan")

# Families of the algorithm names the harness knows; anything else must
# carry an explicit family or the manifest will be rejected downstream.
ALGORITHM_FAMILY = {
    "LB-Complete": "LB",
    "LB-Combined": "LB",
    "SG2-W": "GAN",
    "SG2-W+": "GAN",
    "MIPGAN": "GAN",
    "MorDIFF": "Diff",
}
FAMILIES = ("LB", "GAN", "Diff")


@dataclass(frozen=True)
class ManifestRow:
    """One output manifest line, checked against the harness's invariants."""

    sample_id: str
    source_dataset: str
    label: str
    attack_algorithm: str | None
    attack_family: str | None
    domain: str
    identities: tuple[str, ...]
    extractor: str

    def __post_init__(self):
        object.__setattr__(self, "identities", tuple(self.identities))
        sid = self.sample_id
        if not sid or "\x00" in sid:
            raise MetadataError(f"invalid sample_id {sid!r}")
        if not self.source_dataset:
            raise MetadataError(f"sample {sid}: empty source_dataset")
        if self.label not in LABELS:
            raise MetadataError(f"sample {sid}: unknown label {self.label!r}")
        if self.domain not in DOMAINS:
            raise MetadataError(f"sample {sid}: unknown domain {self.domain!r}")
        if not self.extractor:
            raise MetadataError(f"sample {sid}: empty extractor")
        for ident in self.identities:
            if not ident or IDENTITY_SEPARATOR in ident or "\x00" in ident:
                raise MetadataError(f"sample {sid}: invalid identity {ident!r}")
        if self.label == "bonafide":
            if self.attack_algorithm or self.attack_family:
                raise MetadataError(
                    f"sample {sid}: bonafide row carries attack fields"
                )
            if len(self.identities) != 1:
                raise MetadataError(
                    f"sample {sid}: bonafide row needs exactly 1 identity"
                )
        else:
            if not self.attack_algorithm:
                raise MetadataError(f"sample {sid}: attack row missing algorithm")
            if len(self.identities) != 2 or self.identities[0] == self.identities[1]:
                raise MetadataError(
                    f"sample {sid}: attack row needs 2 distinct identities"
                )
            derived = ALGORITHM_FAMILY.get(self.attack_algorithm)
            if self.attack_family is None:
                if derived is None:
                    raise MetadataError(
                        f"sample {sid}: unknown algorithm "
                        f"{self.attack_algorithm!r} needs an explicit family"
                    )
            elif self.attack_family not in FAMILIES:
                raise MetadataError(
                    f"sample {sid}: unknown attack_family {self.attack_family!r}"
                )
            elif derived is not None and derived != self.attack_family:
                raise MetadataError(
                    f"sample {sid}: family {self.attack_family!r} contradicts "
                    f"algorithm {self.attack_algorithm!r}"
                )


def _atomic_write(path, data: bytes) -> None:
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def features_to_bytes(sample_ids, rows: np.ndarray) -> bytes:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    ids = tuple(sample_ids)
    if rows.ndim != 2 or rows.shape[0] != len(ids):
        raise MetadataError(
            f"feature rows shape {rows.shape} does not match {len(ids)} ids"
        )
    if rows.size and not np.isfinite(rows).all():
        raise MetadataError("feature rows contain non-finite values")
    if len(set(ids)) != len(ids):
        raise MetadataError("duplicate sample_id in feature output")
    parts = [_MADF_HEADER.pack(MADF_MAGIC, MADF_VERSION, rows.shape[1], len(ids))]
    for sid in ids:
        parts.append(sid.encode("utf-8"))
        parts.append(b"\x00")
    parts.append(rows.tobytes())
    return b"".join(parts)


def write_features(sample_ids, rows: np.ndarray, path) -> None:
    _atomic_write(path, features_to_bytes(sample_ids, rows))


def manifest_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for r in rows:
        writer.writerow([
            r.sample_id,
            r.source_dataset,
            r.label,
            r.attack_algorithm or "",
            r.attack_family or "",
            r.domain,
            "unassigned",
            IDENTITY_SEPARATOR.join(r.identities),
            r.extractor,
        ])
    return buf.getvalue()


def write_manifest(rows, path) -> None:
    _atomic_write(path, manifest_to_csv(rows).encode("utf-8"))
