"""Evaluation scenarios: baseline, unseen attacks, cross-source, print-scan,
and one-class, each producing a D-EER table over the test attack columns."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .dataset import DatasetHandle, Filter, concat_handles, select
from .errors import DataError
from .features import FeatureMatrix
from .gmm import (
    COV_TYPES,
    DEFAULT_FOLDS,
    DEFAULT_K_GRID,
    selection_report_to_json,
    train_oneclass_detector,
)
from .manifest import FAMILIES
from .metrics import ScoreSet, deer, format_percent
from .pca import DEFAULT_VARIANCE_THRESHOLD
from .svm import DEFAULT_C, train_supervised_detector

SCENARIOS = ("baseline", "unseen_attack", "cross_source", "print_scan", "one_class")
DETECTOR_KINDS = ("supervised", "one_class")

# Print-scan columns are per attack algorithm, named after the table layout.
PRINT_SCAN_COLUMNS = (
    ("LB-Combined", "LB-PS"),
    ("MIPGAN", "MIPGAN-PS"),
    ("MorDIFF", "DIFF-PS"),
)

REPORT_SCHEMA_VERSION = 1
CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    """One evaluation run: a detector trained and tested per the scenario."""

    scenario: str
    train_source: str
    extractor_name: str
    test_source: str = ""
    train_families: tuple = FAMILIES
    test_domain: str = ""
    detector_kind: str = "supervised"
    seed: int = 0
    pca_threshold: float = DEFAULT_VARIANCE_THRESHOLD
    c_param: float = DEFAULT_C
    k_grid: tuple = DEFAULT_K_GRID
    cov_types: tuple = COV_TYPES
    folds: int = DEFAULT_FOLDS

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise DataError(f"unknown scenario {self.scenario!r}")
        if self.detector_kind not in DETECTOR_KINDS:
            raise DataError(f"unknown detector_kind {self.detector_kind!r}")
        if not self.test_source:
            object.__setattr__(self, "test_source", self.train_source)
        if not self.test_domain:
            object.__setattr__(
                self,
                "test_domain",
                "print_scan" if self.scenario == "print_scan" else "digital",
            )
        families = tuple(self.train_families)
        for fam in families:
            if fam not in FAMILIES:
                raise DataError(f"unknown attack family {fam!r}")
        if len(set(families)) != len(families):
            raise DataError(f"duplicate train families: {families}")
        object.__setattr__(self, "train_families", families)
        object.__setattr__(self, "k_grid", tuple(int(k) for k in self.k_grid))
        object.__setattr__(self, "cov_types", tuple(self.cov_types))

        if self.scenario == "one_class" and self.detector_kind != "one_class":
            raise DataError("one_class scenario requires detector_kind=one_class")
        if self.scenario == "unseen_attack" and len(families) != 1:
            raise DataError(
                f"unseen_attack requires exactly one train family, got {families}"
            )
        if self.scenario == "cross_source" and self.train_source == self.test_source:
            raise DataError("cross_source requires train_source != test_source")
        if self.scenario == "print_scan" and self.test_domain != "print_scan":
            raise DataError("print_scan scenario requires test_domain=print_scan")

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "train_source": self.train_source,
            "test_source": self.test_source,
            "train_families": list(self.train_families),
            "test_domain": self.test_domain,
            "extractor_name": self.extractor_name,
            "detector_kind": self.detector_kind,
            "seed": self.seed,
            "pca_threshold": self.pca_threshold,
            "c_param": self.c_param,
            "k_grid": list(self.k_grid),
            "cov_types": list(self.cov_types),
            "folds": self.folds,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_json_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True, eq=False)
class ReportTable:
    """D-EER results: one row per detector, one column per test attack set."""

    scenario: str
    rows: tuple
    columns: tuple
    rates: tuple
    counts: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def cells(self) -> tuple:
        return tuple(
            tuple(format_percent(r) for r in row_rates) for row_rates in self.rates
        )


def _config_from_dict(entry: dict, index: int) -> ScenarioConfig:
    allowed = {
        "scenario", "train_source", "test_source", "train_families",
        "test_domain", "extractor_name", "detector_kind", "seed",
        "pca_threshold", "c_param", "k_grid", "cov_types", "folds",
    }
    unknown = set(entry) - allowed
    if unknown:
        raise DataError(f"run {index}: unknown config keys {sorted(unknown)}")
    for required in ("scenario", "train_source", "extractor_name"):
        if required not in entry:
            raise DataError(f"run {index}: missing required key {required!r}")
    kwargs = dict(entry)
    for key in ("train_families", "k_grid", "cov_types"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return ScenarioConfig(**kwargs)


def load_scenario_configs(path) -> list:
    """Parse the declarative run matrix: {"schema_version": 1, "runs": [...]}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError(f"config {path}: expected a JSON object at top level")
    version = doc.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise DataError(
            f"config {path}: unsupported schema_version {version!r}"
        )
    runs = doc.get("runs")
    if not isinstance(runs, list):
        raise DataError(f"config {path}: 'runs' must be a list")
    configs = []
    for i, entry in enumerate(runs):
        if not isinstance(entry, dict):
            raise DataError(f"config {path}: run {i} is not an object")
        configs.append(_config_from_dict(entry, i))
    return configs


def _restrict(handle: DatasetHandle, predicate) -> DatasetHandle:
    entries = sorted(
        (e for e in handle.manifest if predicate(e)), key=lambda e: e.sample_id
    )
    ids = tuple(e.sample_id for e in entries)
    rows = handle.features.rows[[handle.index[s] for s in ids]].reshape(
        len(ids), handle.dim
    )
    return DatasetHandle.build(
        entries, FeatureMatrix(dim=handle.dim, sample_ids=ids, rows=rows)
    )


def _normalize_handles(handles, extractor_name: str) -> DatasetHandle:
    if isinstance(handles, DatasetHandle):
        candidates = [handles]
    else:
        candidates = list(handles)
    matching = [
        h for h in candidates
        if any(e.extractor == extractor_name for e in h.manifest)
    ]
    if not matching:
        raise DataError(f"no handle provides extractor {extractor_name!r}")
    dims = {h.dim for h in matching}
    if len(dims) > 1:
        raise DataError(
            f"feature dim mismatch across handles for extractor "
            f"{extractor_name!r}: {sorted(dims)}"
        )
    merged = matching[0] if len(matching) == 1 else concat_handles(*matching)
    return _restrict(merged, lambda e: e.extractor == extractor_name)


def _require_nonempty(handle: DatasetHandle, what: str) -> DatasetHandle:
    if len(handle) == 0:
        raise DataError(f"missing slice: {what}")
    return handle


def _audit_disjoint(train: DatasetHandle, test: DatasetHandle):
    overlap = set(e.sample_id for e in train.manifest) & set(
        e.sample_id for e in test.manifest
    )
    if overlap:
        raise DataError(
            f"train/test leakage: shared sample_ids {sorted(overlap)[:5]}"
        )

    def keys(handle):
        return {
            (e.source_dataset, e.label, e.identity_key) for e in handle.manifest
        }

    shared = keys(train) & keys(test)
    if shared:
        example = sorted(shared)[0]
        raise DataError(
            f"train/test identity leakage in {example[0]} ({example[1]})"
        )


def _test_columns(config: ScenarioConfig, test_attacks: DatasetHandle):
    """Column labels with their attack slices, in table order."""
    columns = []
    if config.scenario == "print_scan":
        present = {e.attack_algorithm for e in test_attacks.manifest}
        canonical = [algo for algo, _ in PRINT_SCAN_COLUMNS]
        ordered = canonical + sorted(present - set(canonical))
        for algo in ordered:
            if algo not in present:
                continue
            label = dict(PRINT_SCAN_COLUMNS).get(algo, f"{algo}-PS")
            columns.append(
                (label, select(test_attacks, Filter(algorithms={algo})))
            )
    else:
        present = {e.attack_family for e in test_attacks.manifest}
        for fam in FAMILIES:
            if fam in present:
                columns.append(
                    (fam, select(test_attacks, Filter(families={fam})))
                )
    return columns


def run_scenario(config: ScenarioConfig, handles) -> ReportTable:
    """Train the configured detector and report per-column test D-EER.

    Training always draws from the digital domain of the train source's
    train split; the test columns come from the test source, test domain,
    test split.  Sample and identity disjointness across the boundary is
    audited, not assumed.
    """
    data = _normalize_handles(handles, config.extractor_name)

    train_bona = _require_nonempty(
        select(data, Filter(
            labels={"bonafide"}, source_datasets={config.train_source},
            domains={"digital"}, split={"train"},
        )),
        f"train bonafide ({config.train_source}, digital, train)",
    )
    train_attacks = select(data, Filter(
        labels={"attack"}, families=set(config.train_families),
        source_datasets={config.train_source}, domains={"digital"},
        split={"train"},
    ))
    test_bona = _require_nonempty(
        select(data, Filter(
            labels={"bonafide"}, source_datasets={config.test_source},
            domains={config.test_domain}, split={"test"},
        )),
        f"test bonafide ({config.test_source}, {config.test_domain}, test)",
    )
    test_attacks = _require_nonempty(
        select(data, Filter(
            labels={"attack"}, source_datasets={config.test_source},
            domains={config.test_domain}, split={"test"},
        )),
        f"test attacks ({config.test_source}, {config.test_domain}, test)",
    )

    selection_report = None
    if config.detector_kind == "supervised":
        _require_nonempty(
            train_attacks,
            f"train attacks ({config.train_source}, digital, train, "
            f"families {list(config.train_families)})",
        )
        train_view = concat_handles(train_bona, train_attacks)
        _audit_disjoint(train_view, concat_handles(test_bona, test_attacks))
        detector = train_supervised_detector(
            train_view, c_param=config.c_param, threshold=config.pca_threshold
        )
    else:
        _audit_disjoint(
            concat_handles(train_bona, train_attacks)
            if len(train_attacks) else train_bona,
            concat_handles(test_bona, test_attacks),
        )
        detector, selection_report = train_oneclass_detector(
            train_bona,
            train_attacks if len(train_attacks) else None,
            threshold=config.pca_threshold,
            K_grid=config.k_grid,
            cov_types=config.cov_types,
            folds=config.folds,
            seed=config.seed,
        )

    bona_scores = detector.score(test_bona.rows_for())
    rates, counts, labels = [], [], []
    for label, attack_slice in _test_columns(config, test_attacks):
        attack_scores = detector.score(attack_slice.rows_for())
        rates.append(deer(ScoreSet(bona_scores, attack_scores)))
        counts.append((len(test_bona), len(attack_slice)))
        labels.append(label)

    metadata = {
        "config": config.to_json_dict(),
        "config_digest": config.digest(),
        "seed": config.seed,
        "train_counts": {
            "bonafide": len(train_bona),
            "attack": len(train_attacks),
        },
    }
    if selection_report is not None:
        metadata["model_selection"] = selection_report_to_json(selection_report)

    return ReportTable(
        scenario=config.scenario,
        rows=(config.extractor_name,),
        columns=tuple(labels),
        rates=(tuple(rates),),
        counts=(tuple(counts),),
        metadata=metadata,
    )


def run_matrix(configs, handles):
    """Run each config independently; failures are collected, not fatal.

    Returns (tables, errors) with errors as (config index, message) pairs.
    """
    tables, errors = [], []
    for i, config in enumerate(configs):
        try:
            tables.append(run_scenario(config, handles))
        except DataError as exc:
            errors.append((i, str(exc)))
    return tables, errors


def report_to_json_bytes(table: ReportTable) -> bytes:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario": table.scenario,
        "rows": list(table.rows),
        "columns": list(table.columns),
        "cells": [list(row) for row in table.cells],
        "cell_rates": [list(row) for row in table.rates],
        "cell_counts": [
            [{"n_bonafide": b, "n_attack": a} for b, a in row]
            for row in table.counts
        ],
        "metadata": table.metadata,
    }
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def report_from_json_bytes(blob: bytes) -> ReportTable:
    try:
        doc = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed report JSON: {exc}") from exc
    version = doc.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise DataError(f"unsupported report schema_version {version!r}")
    try:
        return ReportTable(
            scenario=doc["scenario"],
            rows=tuple(doc["rows"]),
            columns=tuple(doc["columns"]),
            rates=tuple(tuple(row) for row in doc["cell_rates"]),
            counts=tuple(
                tuple((c["n_bonafide"], c["n_attack"]) for c in row)
                for row in doc["cell_counts"]
            ),
            metadata=doc.get("metadata", {}),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed report JSON: missing field {exc}") from exc


def report_to_text(table: ReportTable) -> str:
    """Aligned human-readable rendering, D-EER as percent with 2 decimals."""
    header = ["model"] + list(table.columns)
    body = [
        [name] + list(cells) for name, cells in zip(table.rows, table.cells)
    ]
    widths = [
        max(len(str(line[i])) for line in [header] + body)
        for i in range(len(header))
    ]
    lines = [f"scenario: {table.scenario}  (D-EER, %)"]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
    lines.append("  ".join("-" * w for w in widths))
    for line in body:
        lines.append(
            "  ".join(str(v).rjust(widths[i]) if i else str(v).ljust(widths[0])
                      for i, v in enumerate(line))
        )
    return "\n".join(lines) + "\n"
