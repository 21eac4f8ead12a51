import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acpgraph.knowledge import (
    Assertion,
    ConceptStore,
    concept_key,
    dump_store,
    ingest_csv,
    load_store,
    neighbors,
    normalize_concept,
)


def record(rel, head, tail, weight=1.0, meta=None):
    meta = json.dumps(meta if meta is not None else {"weight": weight})
    return f"/a/[{rel},{head},{tail}]\t/r/{rel}\t{head}\t{tail}\t{meta}\n"


def test_concept_keys():
    assert concept_key("/c/en/fish") == "fish"
    assert concept_key("/c/en/person/n/wn/body") == "person"
    assert concept_key("/c/fr/poisson", "en") is None
    assert concept_key("/c/en/Ice_Cream", "en") == "ice_cream"
    assert concept_key("fish") is None


def test_normalize_concept():
    assert normalize_concept("require-01") == "require"
    assert normalize_concept("Home  Entertainment") == "home_entertainment"
    assert normalize_concept('"Paris"') == "paris"
    assert normalize_concept("amr-unknown") == "amr-unknown"


def test_ingest_reads_weight_and_strips_uris(home_equipment_store):
    s = home_equipment_store
    assert len(s) == 6
    a = s.neighbors("home")
    assert [(x.head, x.relation, x.tail, x.weight) for x in a] == [
        ("home", "UsedFor", "living", 1.0), ("home", "RelatedTo", "house", 3.46)]
    assert s.relation_vocab == ("HasContext", "RelatedTo", "UsedFor", "IsA")


def test_dedup_keeps_max_weight_and_first_position():
    lines = [
        record("RelatedTo", "/c/en/a", "/c/en/b", 1.0),
        record("IsA", "/c/en/a", "/c/en/c", 2.0),
        record("RelatedTo", "/c/en/a/n", "/c/en/b", 5.0),
        record("RelatedTo", "/c/en/a", "/c/en/b", 3.0),
    ]
    s = ingest_csv(lines)
    assert [(x.triple, x.weight) for x in s.assertions] == [
        (("a", "RelatedTo", "b"), 5.0), (("a", "IsA", "c"), 2.0)]


def test_malformed_records_are_counted():
    lines = [
        "only\tthree\tfields\n",
        record("RelatedTo", "/c/en/a", "/c/en/b", meta="not json"),
        "/a/x\t/x/bad\t/c/en/a\t/c/en/b\t{}\n",
        "/a/x\t/r/IsA\tnot-a-uri\t/c/en/b\t{}\n",
        record("IsA", "/c/en/a", "/c/en/b", -1.0),
        record("IsA", "/c/en/a", "/c/en/b", 2.0),
        "\n",
    ]
    s = ingest_csv(lines)
    assert s.skipped == 5
    assert len(s) == 1


def test_language_filter():
    lines = [record("RelatedTo", "/c/en/a", "/c/fr/b"), record("RelatedTo", "/c/en/a", "/c/en/c")]
    assert [x.tail for x in ingest_csv(lines).assertions] == ["c"]
    assert [x.tail for x in ingest_csv(lines, None).assertions] == ["b", "c"]
    assert ingest_csv(lines).skipped == 0


def test_missing_weight_defaults_to_one():
    s = ingest_csv([record("IsA", "/c/en/a", "/c/en/b", meta={"dataset": "x"})])
    assert s.assertions[0].weight == 1.0


def test_neighbors_both_directions_and_limit(home_equipment_store):
    assert [a.head for a in neighbors(home_equipment_store, "equipment")] == ["television"]
    assert len(home_equipment_store.neighbors("home", limit=1)) == 1
    assert home_equipment_store.neighbors("absent") == []
    assert "cable" in home_equipment_store and "zzz" not in home_equipment_store


def test_self_loop_indexed_once():
    s = ConceptStore.from_assertions([Assertion("a", "RelatedTo", "a")])
    assert len(s.neighbors("a")) == 1


def test_store_is_read_only(home_equipment_store):
    with pytest.raises(TypeError):
        home_equipment_store.index["x"] = (0,)


def test_invalid_assertions_rejected():
    with pytest.raises(ValueError):
        ConceptStore.from_assertions([Assertion("a", "IsA", "b", -0.5)])
    with pytest.raises(ValueError):
        ConceptStore.from_assertions([Assertion("", "IsA", "b")])


def test_store_file_round_trip(home_equipment_store):
    text = dump_store(home_equipment_store)
    again = load_store(text)
    assert again.assertions == home_equipment_store.assertions
    assert dump_store(again) == text
    with pytest.raises(ValueError, match="header"):
        load_store("cable\tIsA\tthing\t1.0\n")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcde"), st.sampled_from(["IsA", "RelatedTo"]),
                          st.sampled_from("abcde"), st.floats(0, 10, allow_nan=False)), max_size=30))
def test_ingest_is_idempotent(rows):
    lines = [record(r, f"/c/en/{h}", f"/c/en/{t}", w) for h, r, t, w in rows]
    once = ingest_csv(lines)
    twice = ingest_csv(lines + lines)
    assert once.assertions == twice.assertions
    assert load_store(dump_store(once)).assertions == once.assertions
    best = {}
    for h, r, t, w in rows:
        best[(h, r, t)] = max(best.get((h, r, t), -1.0), w)
    assert {a.triple: a.weight for a in once.assertions} == best


def test_weights_survive_exactly():
    w = float(np.nextafter(1.0, 2.0))
    s = ConceptStore.from_assertions([Assertion("a", "IsA", "b", w)])
    assert load_store(dump_store(s)).assertions[0].weight == w
