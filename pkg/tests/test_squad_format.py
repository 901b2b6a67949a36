"""SQuAD 2.0 serialization round trips, sidecar, and dataset mixing."""

from __future__ import annotations

import json

import pytest

from spanrel.errors import DatasetError
from spanrel.reduction import (
    attach_provenance,
    mix_unified,
    parse_provenance,
    parse_squad,
    provenance_records,
    reduce_dataset,
    serialize_squad,
)

from conftest import synth_corpus, synth_schema


@pytest.fixture(scope="module")
def fifty_instance_ds():
    schema = synth_schema()
    corpus = synth_corpus(25, seed=3)
    ds, _ = reduce_dataset(corpus, schema, "question")
    assert len(ds) >= 50
    return ds


def test_serialize_answerable_entry(birth_schema, birth_rc):
    ds, _ = reduce_dataset([birth_rc], birth_schema, "question")
    doc = json.loads(serialize_squad(ds))
    assert doc["version"] == "v2.0"
    paragraphs = doc["data"][0]["paragraphs"]
    assert len(paragraphs) == 1  # one paragraph per RC instance
    qas = {qa["id"]: qa for qa in paragraphs[0]["qas"]}
    fwd = qas["e1::per:date_of_birth::fwd"]
    assert fwd["is_impossible"] is False
    assert fwd["answers"] == [{"text": "1991", "answer_start": 17}]
    dead = qas["e1::per:date_of_death::fwd"]
    assert dead["is_impossible"] is True and dead["answers"] == []


def test_round_trip_preserves_fields(fifty_instance_ds):
    parsed = parse_squad(serialize_squad(fifty_instance_ds))
    assert len(parsed) == len(fifty_instance_ds)
    for orig, back in zip(fifty_instance_ds.instances, parsed.instances):
        assert back.qid == orig.qid
        assert back.context == orig.context
        assert back.question == orig.question
        assert back.answerable == orig.answerable
        assert back.answer_text == orig.answer_text
        assert back.answer_char_span == orig.answer_char_span
        assert back.provenance is None
    assert parsed.source == fifty_instance_ds.source


def test_serialize_parse_serialize_byte_identical(fifty_instance_ds):
    first = serialize_squad(fifty_instance_ds)
    second = serialize_squad(parse_squad(first))
    assert first == second


def test_parse_rejects_impossible_with_answers():
    doc = {
        "version": "v2.0",
        "data": [
            {
                "title": "t",
                "paragraphs": [
                    {
                        "context": "a b c",
                        "qas": [
                            {
                                "id": "q1",
                                "question": "what?",
                                "is_impossible": True,
                                "answers": [{"text": "a", "answer_start": 0}],
                            }
                        ],
                    }
                ],
            }
        ],
    }
    with pytest.raises(DatasetError, match="is_impossible with non-empty answers"):
        parse_squad(json.dumps(doc))


def test_parse_rejects_inconsistent_answer_start():
    doc = {
        "version": "v2.0",
        "data": [
            {
                "title": "t",
                "paragraphs": [
                    {
                        "context": "a b c",
                        "qas": [
                            {
                                "id": "q1",
                                "question": "what?",
                                "is_impossible": False,
                                "answers": [{"text": "b", "answer_start": 0}],
                            }
                        ],
                    }
                ],
            }
        ],
    }
    with pytest.raises(DatasetError, match="inconsistent with context"):
        parse_squad(json.dumps(doc))


def test_parse_malformed_document():
    with pytest.raises(DatasetError, match="malformed document"):
        parse_squad(b'{"version": "v2.0"}')


def test_provenance_sidecar_round_trip(fifty_instance_ds):
    records = provenance_records(fifty_instance_ds)
    payload = json.dumps({"meta": {"variant": "question"}, "records": records})
    _, loaded = parse_provenance(payload)
    rejoined = attach_provenance(parse_squad(serialize_squad(fifty_instance_ds)), loaded)
    for orig, back in zip(fifty_instance_ds.instances, rejoined.instances):
        assert back.provenance == orig.provenance


def test_attach_provenance_missing_record(fifty_instance_ds):
    records = provenance_records(fifty_instance_ds)
    records.pop(fifty_instance_ds.instances[0].qid)
    stripped = parse_squad(serialize_squad(fifty_instance_ds))
    with pytest.raises(DatasetError, match="no provenance record"):
        attach_provenance(stripped, records)


def test_mix_unified_deterministic(fifty_instance_ds):
    schema = synth_schema()
    other, _ = reduce_dataset(
        synth_corpus(10, seed=99, id_prefix="other"), schema, "question", source="other"
    )
    mixed1 = mix_unified(fifty_instance_ds, other, seed=13)
    mixed2 = mix_unified(fifty_instance_ds, other, seed=13)
    assert len(mixed1) == len(fifty_instance_ds) + len(other)
    assert [i.qid for i in mixed1.instances] == [i.qid for i in mixed2.instances]
    assert serialize_squad(mixed1) == serialize_squad(mixed2)
    # a different seed really permutes
    mixed3 = mix_unified(fifty_instance_ds, other, seed=14)
    assert [i.qid for i in mixed3.instances] != [i.qid for i in mixed1.instances]


def test_mix_unified_cardinality_small():
    schema = synth_schema()
    a, _ = reduce_dataset(synth_corpus(3, seed=1), schema, "question", source="a")
    b, _ = reduce_dataset(
        synth_corpus(2, seed=200, id_prefix="b"), schema, "question", source="b"
    )
    mixed = mix_unified(a, b, seed=13)
    assert len(mixed) == len(a) + len(b)


def test_mix_qid_collision(fifty_instance_ds):
    with pytest.raises(DatasetError, match="qid collision.*synth"):
        mix_unified(fifty_instance_ds, fifty_instance_ds, seed=13)
