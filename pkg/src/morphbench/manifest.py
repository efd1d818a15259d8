"""Sample metadata model and the manifest CSV format.

A manifest lists every sample of a dataset: its label (bonafide or attack),
which morphing algorithm produced it, the contributing identities, the
capture domain, and which feature extractor produced its feature vector.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, replace

from .errors import DataError

LABELS = ("bonafide", "attack")
DOMAINS = ("digital", "print_scan")
SPLITS = ("train", "test", "unassigned")
FAMILIES = ("LB", "GAN", "Diff")

# Higher-level family of each known morphing algorithm.  Algorithms outside
# this table are accepted but must carry an explicit family.
ALGORITHM_FAMILY = {
    "LB-Complete": "LB",
    "LB-Combined": "LB",
    "SG2-W": "GAN",
    "SG2-W+": "GAN",
    "MIPGAN": "GAN",
    "MorDIFF": "Diff",
}

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


def family_of(algorithm: str) -> str | None:
    """Family of a known algorithm, or None if the name is not in the table."""
    return ALGORITHM_FAMILY.get(algorithm)


@dataclass(frozen=True)
class ManifestEntry:
    """One sample's metadata row.

    Bonafide entries carry exactly one identity and no attack fields; attack
    entries carry the two distinct contributing identities plus the morphing
    algorithm and its family.
    """

    sample_id: str
    source_dataset: str
    label: str
    attack_algorithm: str | None
    attack_family: str | None
    domain: str
    split: str
    identities: tuple[str, ...]
    extractor: str

    def __post_init__(self):
        object.__setattr__(self, "identities", tuple(self.identities))
        sid = self.sample_id
        if not sid:
            raise DataError("empty sample_id")
        if "\x00" in sid:
            raise DataError(f"sample_id {sid!r} contains a NUL byte")
        if not self.source_dataset:
            raise DataError(f"sample {sid}: empty source_dataset")
        if self.label not in LABELS:
            raise DataError(f"sample {sid}: unknown label {self.label!r}")
        if self.domain not in DOMAINS:
            raise DataError(f"sample {sid}: unknown domain {self.domain!r}")
        if self.split not in SPLITS:
            raise DataError(f"sample {sid}: unknown split {self.split!r}")
        if not self.extractor:
            raise DataError(f"sample {sid}: empty extractor name")
        for ident in self.identities:
            if not ident or IDENTITY_SEPARATOR in ident or "\x00" in ident:
                raise DataError(f"sample {sid}: invalid identity {ident!r}")
        if self.label == "bonafide":
            if self.attack_algorithm is not None or self.attack_family is not None:
                raise DataError(f"sample {sid}: bonafide entry carries attack fields")
            if len(self.identities) != 1:
                raise DataError(
                    f"sample {sid}: bonafide entry needs exactly 1 identity, "
                    f"got {len(self.identities)}"
                )
        else:
            if self.attack_algorithm is None:
                raise DataError(f"sample {sid}: attack entry missing attack_algorithm")
            if len(self.identities) != 2:
                raise DataError(
                    f"sample {sid}: attack entry needs exactly 2 identities, "
                    f"got {len(self.identities)}"
                )
            if self.identities[0] == self.identities[1]:
                raise DataError(f"sample {sid}: attack identities must be distinct")
            derived = family_of(self.attack_algorithm)
            if self.attack_family is None:
                if derived is None:
                    raise DataError(
                        f"sample {sid}: unknown algorithm "
                        f"{self.attack_algorithm!r} needs an explicit attack_family"
                    )
                object.__setattr__(self, "attack_family", derived)
            else:
                if self.attack_family not in FAMILIES:
                    raise DataError(
                        f"sample {sid}: unknown attack_family {self.attack_family!r}"
                    )
                if derived is not None and self.attack_family != derived:
                    raise DataError(
                        f"sample {sid}: attack_family {self.attack_family!r} "
                        f"contradicts algorithm {self.attack_algorithm!r} "
                        f"(expected {derived!r})"
                    )

    @property
    def identity_key(self) -> tuple[str, ...]:
        """Unordered identity group key: morphing is symmetric in its sources."""
        return tuple(sorted(self.identities))

    def with_split(self, split: str) -> "ManifestEntry":
        return replace(self, split=split)


def _entry_to_row(e: ManifestEntry) -> list[str]:
    return [
        e.sample_id,
        e.source_dataset,
        e.label,
        e.attack_algorithm or "",
        e.attack_family or "",
        e.domain,
        e.split,
        IDENTITY_SEPARATOR.join(e.identities),
        e.extractor,
    ]


def _entry_from_row(row: list[str], line_num: int) -> ManifestEntry:
    if len(row) != len(MANIFEST_HEADER):
        raise DataError(
            f"manifest line {line_num}: expected {len(MANIFEST_HEADER)} fields, "
            f"got {len(row)}"
        )
    (sid, source, label, algorithm, family, domain, split, identities, extractor) = row
    try:
        return ManifestEntry(
            sample_id=sid,
            source_dataset=source,
            label=label,
            attack_algorithm=algorithm or None,
            attack_family=family or None,
            domain=domain,
            split=split,
            identities=tuple(identities.split(IDENTITY_SEPARATOR)) if identities else (),
            extractor=extractor,
        )
    except DataError as exc:
        raise DataError(f"manifest line {line_num}: {exc}") from exc


def manifest_to_csv(entries) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for e in entries:
        writer.writerow(_entry_to_row(e))
    return buf.getvalue()


def manifest_from_csv(text: str) -> list[ManifestEntry]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("manifest is empty (missing header)") from None
    if tuple(header) != MANIFEST_HEADER:
        raise DataError(
            f"manifest header mismatch: expected {','.join(MANIFEST_HEADER)}"
        )
    entries = []
    seen = set()
    for row in reader:
        if not row:
            continue
        entry = _entry_from_row(row, reader.line_num)
        if entry.sample_id in seen:
            raise DataError(
                f"manifest line {reader.line_num}: duplicate sample_id "
                f"{entry.sample_id!r}"
            )
        seen.add(entry.sample_id)
        entries.append(entry)
    return entries


def load_manifest(path) -> list[ManifestEntry]:
    """Parse and validate a manifest CSV file."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    return manifest_from_csv(text)


def save_manifest(entries, path) -> None:
    from .ioutil import atomic_write_bytes

    atomic_write_bytes(path, manifest_to_csv(entries).encode("utf-8"))


def manifest_digest(entries) -> str:
    """SHA-256 of the canonical CSV serialization, for model provenance."""
    return hashlib.sha256(manifest_to_csv(entries).encode("utf-8")).hexdigest()
