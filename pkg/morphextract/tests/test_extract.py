"""Pipeline behavior: skip accounting, ordering, batching, metadata errors."""

import csv
import struct

import numpy as np
import pytest

from morphextract import (
    MetadataError,
    ToyBackbone,
    read_metadata,
    run_extraction,
    spec_for,
)


def run(image_set, tmp_path, batch_size=32, out=""):
    root, metadata_path, landmarks_path, _ = image_set
    from morphextract.extract import read_landmarks

    spec = spec_for("toy")
    records = read_metadata(metadata_path, spec.name)
    report = run_extraction(
        root,
        records,
        spec,
        ToyBackbone(spec, seed=0),
        read_landmarks(landmarks_path),
        tmp_path / f"feat{out}.madf",
        tmp_path / f"manifest{out}.csv",
        batch_size=batch_size,
    )
    return report, tmp_path / f"feat{out}.madf", tmp_path / f"manifest{out}.csv"


def test_skip_accounting(image_set, tmp_path):
    report, _, _ = run(image_set, tmp_path)
    assert report.extracted == 10
    assert report.skipped_unreadable == 1
    assert report.skipped_alignment == 1


def test_manifest_order_matches_metadata(image_set, tmp_path):
    _, _, manifest_path = run(image_set, tmp_path)
    survivors = image_set[3]
    with open(manifest_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["sample_id"] for r in rows] == survivors
    assert all(r["extractor"] == "toy" for r in rows)
    assert all(r["split"] == "unassigned" for r in rows)


def test_feature_header(image_set, tmp_path):
    _, features_path, _ = run(image_set, tmp_path)
    blob = features_path.read_bytes()
    magic, version, dim, count = struct.unpack_from("<4sIII", blob)
    assert (magic, version, dim, count) == (b"MADF", 1, 64, 10)


def parse_madf(blob):
    magic, version, dim, count = struct.unpack_from("<4sIII", blob)
    assert (magic, version) == (b"MADF", 1)
    offset = 16
    ids = []
    for _ in range(count):
        end = blob.index(b"\x00", offset)
        ids.append(blob[offset:end].decode("utf-8"))
        offset = end + 1
    rows = np.frombuffer(blob, dtype="<f4", offset=offset).reshape(count, dim)
    return ids, rows


def test_batch_size_does_not_change_output(image_set, tmp_path):
    # BLAS kernels vary with matrix shape, so only the manifest is exact;
    # features must agree to float32 round-off.
    _, f_one, m_one = run(image_set, tmp_path, batch_size=1, out="_one")
    _, f_many, m_many = run(image_set, tmp_path, batch_size=32, out="_many")
    ids_one, rows_one = parse_madf(f_one.read_bytes())
    ids_many, rows_many = parse_madf(f_many.read_bytes())
    assert ids_one == ids_many
    np.testing.assert_allclose(rows_one, rows_many, rtol=0, atol=1e-6)
    assert m_one.read_bytes() == m_many.read_bytes()


def write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


BASE_FIELDS = ["image_path", "source_dataset", "label", "attack_algorithm",
               "domain", "identities"]
BASE_ROW = {"image_path": "a.png", "source_dataset": "X", "label": "bonafide",
            "attack_algorithm": "", "domain": "digital", "identities": "p1"}


def test_duplicate_sample_id_aborts(tmp_path):
    second = dict(BASE_ROW, image_path="sub/a.png", identities="p2")
    path = tmp_path / "meta.csv"
    write_csv(path, BASE_FIELDS, [BASE_ROW, second])
    with pytest.raises(MetadataError, match="duplicate sample_id"):
        read_metadata(path, "toy")


def test_missing_column_aborts(tmp_path):
    fields = [f for f in BASE_FIELDS if f != "identities"]
    path = tmp_path / "meta.csv"
    write_csv(path, fields, [{k: BASE_ROW[k] for k in fields}])
    with pytest.raises(MetadataError, match="missing metadata columns"):
        read_metadata(path, "toy")


def test_unknown_column_aborts(tmp_path):
    path = tmp_path / "meta.csv"
    write_csv(path, BASE_FIELDS + ["mood"], [dict(BASE_ROW, mood="great")])
    with pytest.raises(MetadataError, match="unknown metadata columns"):
        read_metadata(path, "toy")


def test_bad_row_reports_line_number(tmp_path):
    bad = dict(BASE_ROW, label="attack")
    path = tmp_path / "meta.csv"
    write_csv(path, BASE_FIELDS, [BASE_ROW, bad])
    with pytest.raises(MetadataError, match="line 3"):
        read_metadata(path, "toy")


def test_empty_metadata_yields_empty_outputs(tmp_path):
    path = tmp_path / "meta.csv"
    write_csv(path, BASE_FIELDS, [])
    records = read_metadata(path, "toy")
    assert records == []
    spec = spec_for("toy")
    report = run_extraction(
        tmp_path, records, spec, ToyBackbone(spec, seed=0), {},
        tmp_path / "f.madf", tmp_path / "m.csv",
    )
    assert report.extracted == 0
    blob = (tmp_path / "f.madf").read_bytes()
    assert struct.unpack_from("<4sIII", blob) == (b"MADF", 1, 64, 0)
    assert len(blob) == 16


def test_sample_id_defaults_to_stem(tmp_path):
    path = tmp_path / "meta.csv"
    write_csv(path, BASE_FIELDS + ["sample_id"],
              [dict(BASE_ROW, sample_id=""),
               dict(BASE_ROW, image_path="b.png", sample_id="custom",
                    identities="p2")])
    records = read_metadata(path, "toy")
    assert [r.row.sample_id for r in records] == ["a", "custom"]


def test_nonpositive_batch_size_rejected(tmp_path):
    spec = spec_for("toy")
    with pytest.raises(MetadataError, match="batch_size"):
        run_extraction(tmp_path, [], spec, ToyBackbone(spec, seed=0), {},
                       tmp_path / "f.madf", tmp_path / "m.csv", batch_size=0)


def test_landmark_header_enforced(tmp_path):
    from morphextract.extract import read_landmarks

    path = tmp_path / "lm.csv"
    path.write_text("image_path,x1,y1\nfoo.png,1,2\n")
    with pytest.raises(MetadataError, match="landmark header"):
        read_landmarks(path)
