"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .dataset import (
    DatasetHandle,
    Filter,
    concat_handles,
    select,
    split_identity_disjoint,
)
from .detectors import load_detector, save_detector
from .errors import DataError, FitError
from .features import read_features
from .gmm import train_oneclass_detector
from .ioutil import atomic_write_bytes
from .manifest import (
    FAMILIES,
    load_manifest,
    manifest_digest,
    save_manifest,
)
from .metrics import ScoreSet, deer, format_percent
from .scenarios import (
    load_scenario_configs,
    report_from_json_bytes,
    report_to_json_bytes,
    report_to_text,
    run_matrix,
)
from .svm import train_supervised_detector

log = logging.getLogger("morphbench")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SCORES_HEADER = "sample_id,label,score"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the artifact reserves 2
    # for data errors, so usage problems are rerouted to exit code 1.
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="morphbench", description=__doc__)
    parser.add_argument(
        "--log-level",
        choices=("debug", "info", "warning", "error"),
        default="warning",
        help="diagnostics verbosity on standard error",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a manifest/feature-file pair")
    p.add_argument("manifest")
    p.add_argument("features")

    p = sub.add_parser("split", help="assign identity-disjoint train/test splits")
    p.add_argument("manifest")
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a detector on the train split")
    p.add_argument("manifest")
    p.add_argument("features")
    p.add_argument("--kind", choices=("svm", "gmm"), required=True)
    p.add_argument("--pca-threshold", type=float, default=0.99)
    p.add_argument("--c", type=float, default=1.0, dest="c_param")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source", default=None, help="restrict to one source dataset")
    p.add_argument("--families", nargs="+", choices=FAMILIES, default=None,
                   help="restrict training attacks to these families")
    p.add_argument("--domain", choices=("digital", "print_scan"), default="digital")
    p.add_argument("--out", required=True)

    p = sub.add_parser("score", help="score feature rows with a trained detector")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="compute D-EER from a scores file")
    p.add_argument("--scores", required=True)

    p = sub.add_parser("run", help="execute a scenario batch")
    p.add_argument("--config", required=True)
    p.add_argument("--data", nargs=2, action="append", required=True,
                   metavar=("MANIFEST", "FEATURES"),
                   help="a manifest/feature-file pair (repeatable)")
    p.add_argument("--out", default=None, help="directory for report files")

    p = sub.add_parser("report", help="render a report JSON as a text table")
    p.add_argument("report")

    return parser


def _load_handle(manifest_path, features_path) -> DatasetHandle:
    entries = load_manifest(manifest_path)
    matrix = read_features(features_path)
    return DatasetHandle.build(entries, matrix)


def _cmd_validate(args) -> int:
    handle = _load_handle(args.manifest, args.features)
    labels = [e.label for e in handle.manifest]
    extractors = sorted({e.extractor for e in handle.manifest})
    unreferenced = len(handle.features.sample_ids) - len(handle.manifest)
    print(
        f"OK: {len(handle)} samples "
        f"({labels.count('bonafide')} bonafide, {labels.count('attack')} attack), "
        f"dim {handle.dim}, extractors: {', '.join(extractors) or '-'}"
    )
    if unreferenced:
        log.warning("%d feature rows are not referenced by the manifest",
                    unreferenced)
    return EXIT_OK


def _cmd_split(args) -> int:
    entries = load_manifest(args.manifest)
    assigned = split_identity_disjoint(entries, args.ratio, args.seed)
    save_manifest(assigned, args.out)
    counts = [e.split for e in assigned]
    print(f"split: {counts.count('train')} train, {counts.count('test')} test")
    return EXIT_OK


def _cmd_train(args) -> int:
    handle = _load_handle(args.manifest, args.features)
    base = Filter(split={"train"}, domains={args.domain})
    if args.source:
        base = base.combine(Filter(source_datasets={args.source}))
    bona = select(handle, base.combine(Filter(labels={"bonafide"})))
    attack_filter = base.combine(Filter(labels={"attack"}))
    if args.families:
        attack_filter = attack_filter.combine(Filter(families=set(args.families)))
    attacks = select(handle, attack_filter)

    if args.kind == "svm":
        if len(bona) == 0 or len(attacks) == 0:
            raise DataError(
                "svm training needs bonafide and attack samples in the train split"
            )
        view = concat_handles(bona, attacks)
        detector = train_supervised_detector(
            view, c_param=args.c_param, threshold=args.pca_threshold
        )
        digest = manifest_digest(view.manifest)
        save_detector(args.out, detector, digest)
        log.info("trained svm detector: pca k=%d", detector.pca.k)
    else:
        if len(bona) == 0:
            raise DataError("gmm training needs bonafide samples in the train split")
        detector, selection = train_oneclass_detector(
            bona,
            attacks if len(attacks) else None,
            threshold=args.pca_threshold,
            seed=args.seed,
        )
        digest = manifest_digest(bona.manifest)
        save_detector(args.out, detector, digest, seed=args.seed,
                      selection=selection)
        log.info(
            "trained gmm detector: pca k=%d, chosen %s", detector.pca.k,
            selection.chosen,
        )
    print(f"model written to {args.out}")
    return EXIT_OK


def _cmd_score(args) -> int:
    detector, sidecar = load_detector(args.model)
    handle = _load_handle(args.manifest, args.features)
    wrong = sorted({
        e.extractor for e in handle.manifest
        if e.extractor != detector.extractor_name
    })
    if wrong:
        raise DataError(
            f"manifest extractors {wrong} do not match model extractor "
            f"{detector.extractor_name!r}"
        )
    scores = detector.score(handle.rows_for())
    lines = [SCORES_HEADER]
    for entry, value in zip(handle.manifest, scores):
        lines.append(f"{entry.sample_id},{entry.label},{float(value)!r}")
    atomic_write_bytes(args.out, ("\n".join(lines) + "\n").encode("utf-8"))
    log.info("scored %d samples with %s detector", len(handle), sidecar["kind"])
    print(f"scores written to {args.out}")
    return EXIT_OK


def _read_scores(path) -> ScoreSet:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read scores {path}: {exc}") from exc
    if not lines or lines[0] != SCORES_HEADER:
        raise DataError(f"scores {path}: expected header {SCORES_HEADER!r}")
    bona, attack = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataError(f"scores {path} line {lineno}: expected 3 fields")
        _, label, raw = parts
        try:
            value = float(raw)
        except ValueError:
            raise DataError(
                f"scores {path} line {lineno}: bad score {raw!r}"
            ) from None
        if label == "bonafide":
            bona.append(value)
        elif label == "attack":
            attack.append(value)
        else:
            raise DataError(f"scores {path} line {lineno}: bad label {label!r}")
    if not bona:
        raise DataError(f"scores {path}: no bonafide scores")
    if not attack:
        raise DataError(f"scores {path}: no attack scores")
    return ScoreSet(bonafide_scores=bona, attack_scores=attack)


def _cmd_eval(args) -> int:
    rate = deer(_read_scores(args.scores))
    print(f"D-EER: {format_percent(rate)}%")
    return EXIT_OK


def _cmd_run(args) -> int:
    configs = load_scenario_configs(args.config)
    handles = [_load_handle(m, f) for m, f in args.data]
    tables, errors = run_matrix(configs, handles)

    if args.out:
        os.makedirs(args.out, exist_ok=True)
    table_iter = iter(tables)
    failed = dict(errors)
    for i, config in enumerate(configs):
        if i in failed:
            continue
        table = next(table_iter)
        if args.out:
            stem = f"{i:02d}_{table.scenario}_{config.extractor_name}"
            json_path = os.path.join(args.out, stem + ".json")
            atomic_write_bytes(json_path, report_to_json_bytes(table))
            atomic_write_bytes(
                os.path.join(args.out, stem + ".txt"),
                report_to_text(table).encode("utf-8"),
            )
            print(f"run {i}: {table.scenario} -> {json_path}")
        else:
            print(report_to_text(table), end="")
    for i, message in errors:
        print(f"run {i} failed: {message}", file=sys.stderr)
    return EXIT_DATA if errors else EXIT_OK


def _cmd_report(args) -> int:
    try:
        with open(args.report, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read report {args.report}: {exc}") from exc
    print(report_to_text(report_from_json_bytes(blob)), end="")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "split": _cmd_split,
    "train": _cmd_train,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()), stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
