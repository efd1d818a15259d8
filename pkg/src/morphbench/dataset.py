"""Dataset handles: manifest + features, filtering, splitting, synthesis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .features import FeatureMatrix
from .manifest import FAMILIES, ManifestEntry

_DEFAULT_ALGORITHMS = {
    "LB": ("LB-Complete", "LB-Combined"),
    "GAN": ("SG2-W", "SG2-W+"),
    "Diff": ("MorDIFF",),
}


@dataclass(frozen=True, eq=False)
class DatasetHandle:
    """Immutable pairing of a manifest with its feature rows."""

    manifest: tuple[ManifestEntry, ...]
    features: FeatureMatrix
    index: dict = field(repr=False)

    @classmethod
    def build(cls, manifest, features: FeatureMatrix) -> "DatasetHandle":
        manifest = tuple(manifest)
        index = {}
        row_of = {sid: i for i, sid in enumerate(features.sample_ids)}
        seen = set()
        for e in manifest:
            if e.sample_id in seen:
                raise DataError(f"duplicate sample_id {e.sample_id!r} in manifest")
            seen.add(e.sample_id)
            try:
                index[e.sample_id] = row_of[e.sample_id]
            except KeyError:
                raise DataError(
                    f"sample_id {e.sample_id!r} has no feature row"
                ) from None
        return cls(manifest=manifest, features=features, index=index)

    @property
    def dim(self) -> int:
        return self.features.dim

    def __len__(self) -> int:
        return len(self.manifest)

    def rows_for(self, entries=None) -> np.ndarray:
        """Feature rows for the given entries (default: whole manifest)."""
        if entries is None:
            entries = self.manifest
        idx = [self.index[e.sample_id] for e in entries]
        return self.features.rows[idx].reshape(len(idx), self.dim)


@dataclass(frozen=True)
class Filter:
    """Conjunction of per-field constraints; an empty set means unconstrained."""

    labels: frozenset = frozenset()
    families: frozenset = frozenset()
    algorithms: frozenset = frozenset()
    source_datasets: frozenset = frozenset()
    domains: frozenset = frozenset()
    split: frozenset = frozenset()

    def __post_init__(self):
        for name in (
            "labels",
            "families",
            "algorithms",
            "source_datasets",
            "domains",
            "split",
        ):
            value = getattr(self, name)
            if value is None:
                value = frozenset()
            elif isinstance(value, str):
                value = frozenset((value,))
            else:
                value = frozenset(value)
            object.__setattr__(self, name, value)

    def matches(self, e: ManifestEntry) -> bool:
        if self.labels and e.label not in self.labels:
            return False
        if self.families and e.attack_family not in self.families:
            return False
        if self.algorithms and e.attack_algorithm not in self.algorithms:
            return False
        if self.source_datasets and e.source_dataset not in self.source_datasets:
            return False
        if self.domains and e.domain not in self.domains:
            return False
        if self.split and e.split not in self.split:
            return False
        return True

    def combine(self, other: "Filter") -> "Filter":
        """Filter equivalent to applying self then other."""

        def conj(a, b):
            if not a:
                return b
            if not b:
                return a
            return a & b

        return Filter(
            labels=conj(self.labels, other.labels),
            families=conj(self.families, other.families),
            algorithms=conj(self.algorithms, other.algorithms),
            source_datasets=conj(self.source_datasets, other.source_datasets),
            domains=conj(self.domains, other.domains),
            split=conj(self.split, other.split),
        )


def select(handle: DatasetHandle, filt: Filter) -> DatasetHandle:
    """Samples matching the filter, as a new handle ordered by sample_id."""
    entries = sorted(
        (e for e in handle.manifest if filt.matches(e)), key=lambda e: e.sample_id
    )
    ids = tuple(e.sample_id for e in entries)
    rows = handle.features.rows[[handle.index[s] for s in ids]].reshape(
        len(ids), handle.dim
    )
    return DatasetHandle.build(
        entries, FeatureMatrix(dim=handle.dim, sample_ids=ids, rows=rows)
    )


def concat_handles(*handles: DatasetHandle) -> DatasetHandle:
    if not handles:
        raise DataError("no handles to concatenate")
    dim = handles[0].dim
    for h in handles[1:]:
        if h.dim != dim:
            raise DataError(f"feature dim mismatch: {h.dim} != {dim}")
    manifest = [e for h in handles for e in h.manifest]
    ids = tuple(s for h in handles for s in h.features.sample_ids)
    rows = np.concatenate([h.features.rows for h in handles], axis=0)
    return DatasetHandle.build(
        manifest, FeatureMatrix(dim=dim, sample_ids=ids, rows=rows)
    )


def _group_key(e: ManifestEntry):
    # All samples of one bonafide identity, or of one unordered attack pair,
    # move to the same side.  Sources are split independently.
    return (e.source_dataset, e.label, e.identity_key)


def split_identity_disjoint(manifest, train_fraction=0.8, seed=0):
    """Assign train/test splits so identities (or identity pairs) stay disjoint.

    Bonafide and attack samples of each source dataset are split separately:
    identity groups are shuffled, then assigned to the training side until it
    holds at least ``train_fraction`` of that side's samples.  The resulting
    train count overshoots the target by less than one group.
    """
    manifest = list(manifest)
    if not manifest:
        raise DataError("cannot split an empty manifest")
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0,1), got {train_fraction}")
    for e in manifest:
        if e.split != "unassigned":
            raise DataError(
                f"sample {e.sample_id}: split already assigned ({e.split})"
            )

    groups: dict = {}
    for pos, e in enumerate(manifest):
        groups.setdefault(_group_key(e), []).append(pos)

    # Identity groups of the same (source, label) side share one target.
    sides: dict = {}
    for key in groups:
        sides.setdefault(key[:2], []).append(key)

    rng = np.random.default_rng(seed)
    assignment = {}
    for side in sorted(sides):
        keys = sorted(sides[side])
        rng.shuffle(keys)
        total = sum(len(groups[k]) for k in keys)
        target = train_fraction * total
        train_count = 0
        for k in keys:
            if train_count < target:
                assignment[k] = "train"
                train_count += len(groups[k])
            else:
                assignment[k] = "test"
        if train_count == 0 or train_count == total:
            raise DataError(
                f"train_fraction {train_fraction} leaves an empty split for "
                f"source {side[0]!r} ({side[1]} side)"
            )

    return [e.with_split(assignment[_group_key(e)]) for e in manifest]


def assign_splits(handle: DatasetHandle, train_fraction=0.8, seed=0) -> DatasetHandle:
    """Handle with train/test splits assigned identity-disjointly."""
    entries = split_identity_disjoint(handle.manifest, train_fraction, seed)
    return DatasetHandle.build(entries, handle.features)


@dataclass(frozen=True)
class SynthSpec:
    """Configuration for the synthetic Gaussian dataset generator.

    Bonafide features are drawn from a unit-variance isotropic Gaussian;
    each attack family's mean is offset by ``class_separation`` standard
    deviations along a family-specific direction built from a shared
    attack axis plus a smaller family-bound deviation.
    """

    dim: int
    n_bonafide: int
    n_attack_per_family: int
    class_separation: float
    seed: int
    families: tuple[str, ...] = FAMILIES
    algorithms: dict | None = None
    source_dataset: str = "SYNTH"
    domain: str = "digital"
    split: str = "unassigned"
    extractor: str = "synth"
    identity_prefix: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise DataError(f"dim must be >= 1, got {self.dim}")
        if self.n_bonafide < 0 or self.n_attack_per_family < 0:
            raise DataError("sample counts must be >= 0")
        if self.class_separation < 0:
            raise DataError("class_separation must be >= 0")
        for fam in self.families:
            if fam not in FAMILIES:
                raise DataError(f"unknown attack family {fam!r}")


def synth_dataset(spec: SynthSpec) -> DatasetHandle:
    """Deterministic synthetic dataset for pipeline tests and benchmarks."""
    rng = np.random.default_rng(spec.seed)
    algorithms = dict(_DEFAULT_ALGORITHMS)
    if spec.algorithms:
        algorithms.update(spec.algorithms)
    p = spec.identity_prefix

    entries: list[ManifestEntry] = []
    blocks: list[np.ndarray] = []

    bona = rng.standard_normal((spec.n_bonafide, spec.dim))
    blocks.append(bona)
    for i in range(spec.n_bonafide):
        entries.append(
            ManifestEntry(
                sample_id=f"{p}b{i:05d}",
                source_dataset=spec.source_dataset,
                label="bonafide",
                attack_algorithm=None,
                attack_family=None,
                domain=spec.domain,
                split=spec.split,
                identities=(f"{p}id-b{i:05d}",),
                extractor=spec.extractor,
            )
        )

    n_pairs = spec.n_attack_per_family
    if n_pairs and spec.families:
        # A shared pool of morphing identities, reused across pairs so that
        # one identity can contribute to several morphs; the same pairings
        # are reused by every family.
        pool = max(3, int(np.ceil(1.5 * np.sqrt(2.0 * n_pairs))) + 1)
        pairs: list[tuple[str, str]] = []
        seen = set()
        while len(pairs) < n_pairs:
            i, j = rng.integers(0, pool, size=2)
            if i == j:
                continue
            key = (min(i, j), max(i, j))
            if key in seen:
                continue
            seen.add(key)
            pairs.append((f"{p}id-m{key[0]:05d}", f"{p}id-m{key[1]:05d}"))

        # Families share a common attack axis with a family-specific
        # deviation, mirroring real morphs: the artifact signal is largely
        # common across generation algorithms, the residue is family-bound.
        # Keeping the deviation small preserves near-full margin for every
        # family under a single linear scorer.
        axis = rng.standard_normal(spec.dim)
        axis /= np.linalg.norm(axis)
        for fam in spec.families:
            deviation = rng.standard_normal(spec.dim)
            deviation /= np.linalg.norm(deviation)
            direction = axis + 0.3 * deviation
            direction /= np.linalg.norm(direction)
            offset = spec.class_separation * direction
            rows = rng.standard_normal((n_pairs, spec.dim)) + offset
            blocks.append(rows)
            algos = algorithms[fam]
            for j, pair in enumerate(pairs):
                algo = algos[j % len(algos)]
                entries.append(
                    ManifestEntry(
                        sample_id=f"{p}a-{fam.lower()}-{j:05d}",
                        source_dataset=spec.source_dataset,
                        label="attack",
                        attack_algorithm=algo,
                        attack_family=None,
                        domain=spec.domain,
                        split=spec.split,
                        identities=pair,
                        extractor=spec.extractor,
                    )
                )

    rows = (
        np.concatenate(blocks, axis=0)
        if entries
        else np.zeros((0, spec.dim))
    )
    matrix = FeatureMatrix(
        dim=spec.dim,
        sample_ids=tuple(e.sample_id for e in entries),
        rows=rows.astype(np.float32),
    )
    return DatasetHandle.build(entries, matrix)
