"""Manifest model and CSV round-trip checks."""

import pytest
from hypothesis import given, strategies as st

from morphbench.errors import DataError
from morphbench.manifest import (
    ALGORITHM_FAMILY,
    FAMILIES,
    ManifestEntry,
    family_of,
    load_manifest,
    manifest_digest,
    manifest_from_csv,
    manifest_to_csv,
    save_manifest,
)


def bona(sid="b0", **kw):
    base = dict(
        sample_id=sid,
        source_dataset="FRGC",
        label="bonafide",
        attack_algorithm=None,
        attack_family=None,
        domain="digital",
        split="train",
        identities=(f"id-{sid}",),
        extractor="clip",
    )
    base.update(kw)
    return ManifestEntry(**base)


def attack(sid="a0", algorithm="LB-Complete", **kw):
    base = dict(
        sample_id=sid,
        source_dataset="FRGC",
        label="attack",
        attack_algorithm=algorithm,
        attack_family=None,
        domain="digital",
        split="train",
        identities=(f"idA-{sid}", f"idB-{sid}"),
        extractor="clip",
    )
    base.update(kw)
    return ManifestEntry(**base)


def test_family_derivation_covers_all_known_algorithms():
    assert family_of("LB-Complete") == "LB"
    assert family_of("LB-Combined") == "LB"
    assert family_of("SG2-W") == "GAN"
    assert family_of("SG2-W+") == "GAN"
    assert family_of("MIPGAN") == "GAN"
    assert family_of("MorDIFF") == "Diff"
    assert family_of("nonsense") is None
    assert set(ALGORITHM_FAMILY.values()) == set(FAMILIES)


def test_attack_family_autofilled_from_algorithm():
    e = attack(algorithm="MorDIFF")
    assert e.attack_family == "Diff"


def test_attack_family_conflict_rejected():
    with pytest.raises(DataError):
        attack(algorithm="MorDIFF", attack_family="GAN")


def test_unknown_algorithm_needs_explicit_family():
    with pytest.raises(DataError):
        attack(algorithm="FutureMorph-9000")
    e = attack(algorithm="FutureMorph-9000", attack_family="GAN")
    assert e.attack_family == "GAN"


def test_bonafide_with_attack_fields_rejected():
    with pytest.raises(DataError):
        bona(attack_algorithm="LB-Complete")


def test_bonafide_needs_one_identity():
    with pytest.raises(DataError):
        bona(identities=("x", "y"))


def test_attack_needs_two_distinct_identities():
    with pytest.raises(DataError):
        attack(identities=("same", "same"))
    with pytest.raises(DataError):
        attack(identities=("only",))


def test_identity_key_is_order_free():
    a = attack(identities=("u", "v"))
    b = attack(sid="a1", identities=("v", "u"))
    assert a.identity_key == b.identity_key == ("u", "v")


def test_bad_enum_values_rejected():
    with pytest.raises(DataError):
        bona(label="genuine")
    with pytest.raises(DataError):
        bona(domain="fax")
    with pytest.raises(DataError):
        bona(split="val")
    with pytest.raises(DataError):
        bona(sample_id="")


def test_csv_round_trip_preserves_entries():
    entries = [bona(f"b{i}") for i in range(3)] + [
        attack("a0", "LB-Complete"),
        attack("a1", "SG2-W+"),
        attack("a2", "MorDIFF", domain="print_scan", split="test"),
    ]
    text = manifest_to_csv(entries)
    back = manifest_from_csv(text)
    assert back == entries


def test_file_round_trip(tmp_path):
    entries = [bona(), attack()]
    path = tmp_path / "m.csv"
    save_manifest(entries, path)
    assert load_manifest(path) == entries


def test_duplicate_sample_id_rejected():
    text = manifest_to_csv([bona("dup"), attack("a0")])
    text += manifest_to_csv([bona("dup")]).splitlines()[1] + "\n"
    with pytest.raises(DataError, match="duplicate"):
        manifest_from_csv(text)


def test_header_mismatch_rejected():
    with pytest.raises(DataError, match="header"):
        manifest_from_csv("foo,bar\n1,2\n")


def test_empty_file_rejected():
    with pytest.raises(DataError):
        manifest_from_csv("")


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        load_manifest(tmp_path / "absent.csv")


def test_digest_stable_and_content_sensitive():
    a = [bona(), attack()]
    b = [bona(), attack()]
    assert manifest_digest(a) == manifest_digest(b)
    assert manifest_digest(a) != manifest_digest([bona()])
    assert len(manifest_digest(a)) == 64


ident = st.text(
    alphabet=st.characters(min_codepoint=33, max_codepoint=126, exclude_characters="|,\"'"),
    min_size=1,
    max_size=12,
)


@given(
    sids=st.lists(ident, min_size=1, max_size=8, unique=True),
    domain=st.sampled_from(["digital", "print_scan"]),
    split=st.sampled_from(["train", "test", "unassigned"]),
)
def test_round_trip_arbitrary_ids(sids, domain, split):
    entries = [
        bona(sid, domain=domain, split=split, identities=(f"i{sid}",)) for sid in sids
    ]
    assert manifest_from_csv(manifest_to_csv(entries)) == entries
