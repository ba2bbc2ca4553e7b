import hashlib
import json
import os
import pathlib

import pytest

import taxoria

DATA = pathlib.Path(os.environ.get("TAXORIA_TEST_DATA", pathlib.Path(__file__).parents[2] / "tests" / "data"))


def read(name):
    return (DATA / name).read_text()


def test_validate_reports_stats():
    assert taxoria.validate(read("schema_org_subset.json")) == {"class_count": 85, "max_depth": 5}


def test_errors_carry_a_code():
    with pytest.raises(taxoria.TaxoriaError) as info:
        taxoria.validate(read("duplicate_sibling.json"))
    assert info.value.args[0] == "SchemaViolation"
    with pytest.raises(taxoria.TaxoriaError):
        taxoria.validate("{not json")


def test_merge_is_idempotent_and_unions():
    left, right = read("merge_left.json"), read("merge_right.json")
    assert taxoria.merge(left, left)["added"] == 0
    merged = taxoria.merge(left, right)
    assert merged["added"] == 3
    assert taxoria.validate(merged["taxonomy"])["class_count"] == 8


def test_prompt_and_replay_key():
    path = ["Thing", "Organization", "LocalBusiness", "Store", "OnlineStore"]
    prompt = taxoria.build_prompt("OnlineStore", path)
    assert prompt == read("golden_prompt_onlinestore.txt")
    assert taxoria.replay_key(prompt) == hashlib.sha256(prompt.encode()).hexdigest() + ".txt"


def test_parse_children_repairs_fenced_output():
    assert taxoria.parse_children('```json\n{"children": ["A", "B"]}\n```') == ["A", "B"]
    with pytest.raises(taxoria.TaxoriaError):
        taxoria.parse_children("no names here")


def test_cosine():
    assert taxoria.cosine([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0, abs=1e-9)
    assert taxoria.cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(2 ** -0.5, abs=1e-9)


def test_enrich_from_replay():
    out = taxoria.enrich(read("single_root.json"), str(DATA / "replay_single_root"), str(DATA / "vectors_abc.txt"))
    report = json.loads(out["report"])
    assert report["new_class_count"] == 3
    assert report["new_max_depth"] == 1
    tree = json.loads(out["taxonomy"])
    assert [c["name"] for c in tree["children"]] == ["A", "B", "C"]
    assert all(c["source"] == "llm-generated" for c in tree["children"])
    assert len(out["decisions"].splitlines()) == 3
