"""Schema loading, template instantiation, and compatibility queries."""

from __future__ import annotations

import json
from importlib import resources

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spanrel.errors import SchemaError
from spanrel.reduction import RcInstance, TokenSpan
from spanrel.schema import (
    Template,
    compatible_relations,
    derive_compatibility,
    instantiate,
    load_schema,
    parse_schema_dict,
)

from conftest import question_schema


def shipped_tacred_doc() -> dict:
    return json.loads(
        resources.files("spanrel").joinpath("data/tacred.json").read_text("utf-8")
    )


def test_shipped_tacred_has_41_relations(tmp_path):
    path = tmp_path / "tacred.json"
    path.write_text(json.dumps(shipped_tacred_doc()), encoding="utf-8")
    schema = load_schema(path)
    assert len(schema.relations) == 41
    assert schema.null_label == "no_relation"
    assert not schema.forced_choice


def test_empty_relations_list_rejected():
    with pytest.raises(SchemaError, match="schema has no relations"):
        parse_schema_dict({"version": 1, "relations": []})


def test_duplicate_relation_name_rejected():
    doc = shipped_tacred_doc()
    doc["relations"].append(dict(doc["relations"][1]))  # per:title twice
    with pytest.raises(SchemaError, match="duplicate relation name"):
        parse_schema_dict(doc)


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n"relations": [,]\n}', encoding="utf-8")
    with pytest.raises(SchemaError, match="line 2"):
        load_schema(path)


def test_missing_question_variant_rejected():
    with pytest.raises(SchemaError, match="missing 'question'"):
        parse_schema_dict({"relations": [{"name": "r", "templates": {}}]})


def test_auto_generation_disabled_requires_all_variants():
    doc = {
        "relations": [
            {"name": "per:title", "templates": {"question": {"fwd": "q {e}?", "rev": "p {e}?"}}}
        ]
    }
    with pytest.raises(SchemaError, match="missing 'relation'"):
        parse_schema_dict(doc, auto_generate=False)
    assert parse_schema_dict(doc, auto_generate=True) is not None


def test_instantiate_question_variant():
    schema = parse_schema_dict(shipped_tacred_doc())
    assert instantiate(schema, "per:date_of_birth", "fwd", "question", "Sam") == "When was Sam born?"


def test_instantiate_relation_and_token_variants():
    # put per:title at schema index 2 so its reserved token is r2
    schema = question_schema(
        [
            ("per:age", ["PERSON"], ["NUMBER"], "What is {e}'s age?", "Whose age is {e}?"),
            ("per:spouse", ["PERSON"], ["PERSON"], "Who is the spouse of {e}?", "Who is the spouse of {e}?"),
            ("per:title", ["PERSON"], ["TITLE"], "What is {e}'s title?", "Who has the title {e}"),
        ]
    )
    assert instantiate(schema, "per:title", "fwd", "relation", "John") == "per:title t John"
    assert instantiate(schema, "per:title", "fwd", "token", "John") == "r2 t John"
    assert instantiate(schema, "per:title", "rev", "token", "CEO") == "r2 h CEO"


def test_instantiate_unknown_relation_and_empty_entity(birth_schema):
    with pytest.raises(SchemaError, match="unknown relation"):
        instantiate(birth_schema, "per:nope", "fwd", "question", "Sam")
    with pytest.raises(SchemaError, match="empty entity text"):
        instantiate(birth_schema, "per:date_of_birth", "fwd", "question", "")


def test_template_brace_escaping():
    t = Template(pattern="literal {{braces}} around {e}!", variant="question")
    assert t.render("Sam") == "literal {braces} around Sam!"
    with pytest.raises(SchemaError):
        Template(pattern="no slot", variant="question")
    with pytest.raises(SchemaError):
        Template(pattern="two {e} slots {e}", variant="question")
    with pytest.raises(SchemaError):
        Template(pattern="stray { here {e}", variant="question")


def test_compatible_relations_examples():
    schema = question_schema(
        [
            ("per:date_of_birth", ["PERSON"], ["DATE"], "When was {e} born?", "Who was born on {e}?"),
            ("per:date_of_death", ["PERSON"], ["DATE"], "When did {e} die?", "Who died on {e}?"),
            ("per:title", ["PERSON"], ["TITLE"], "What is {e}'s title?", "Who has the title {e}"),
        ]
    )
    assert compatible_relations(schema, "PERSON", "DATE") == [
        "per:date_of_birth",
        "per:date_of_death",
    ]
    assert compatible_relations(schema, "ORGANIZATION", "DATE") == []
    assert compatible_relations(schema, "PERSON", "TITLE") == ["per:title"]


def test_wildcard_type_matches_everything():
    schema = question_schema([("rel_any", ["*"], ["*"], "does {e} relate?", "relates to {e}?")])
    assert compatible_relations(schema, "FOO", "BAR") == ["rel_any"]


def _rc(rid, subj_type, obj_type, relation):
    return RcInstance(
        id=rid,
        tokens=("a", "b", "c"),
        subj=TokenSpan(0, 0),
        obj=TokenSpan(2, 2),
        subj_type=subj_type,
        obj_type=obj_type,
        relation=relation,
    )


def unsigned_schema(names):
    return parse_schema_dict(
        {
            "relations": [
                {"name": n, "templates": {"question": {"fwd": f"{n} of {{e}}?", "rev": f"{n} rev {{e}}?"}}}
                for n in names
            ]
        }
    )


def test_derive_from_observations():
    schema = unsigned_schema(["per:date_of_birth"])
    data = [_rc("a", "PERSON", "DATE", "per:date_of_birth"), _rc("b", "PERSON", "DATE", "no_relation")]
    derived = derive_compatibility(data, schema)
    rel = derived.get("per:date_of_birth")
    assert rel.subj_types == {"PERSON"} and rel.obj_types == {"DATE"}


def test_derive_unobserved_relation_is_an_error():
    schema = unsigned_schema(["per:foo"])
    with pytest.raises(SchemaError, match="relation per:foo has empty type signature"):
        derive_compatibility([_rc("a", "P", "D", "no_relation")], schema)


def test_derive_collects_all_observed_pairs():
    schema = unsigned_schema(["per:employee_of"])
    data = [
        _rc("a1", "PERSON", "ORGANIZATION", "per:employee_of"),
        _rc("a2", "PERSON", "ORGANIZATION", "per:employee_of"),
        _rc("a3", "PERSON", "COMPANY", "per:employee_of"),
        _rc("a4", "PERSON", "COMPANY", "no_relation"),
        _rc("a5", "PERSON", "ORGANIZATION", "no_relation"),
        _rc("a6", "PERSON", "ORGANIZATION", "per:employee_of"),
        _rc("a7", "PERSON", "COMPANY", "per:employee_of"),
        _rc("a8", "PERSON", "ORGANIZATION", "per:employee_of"),
        _rc("a9", "PERSON", "ORGANIZATION", "no_relation"),
        _rc("a10", "PERSON", "COMPANY", "per:employee_of"),
    ]
    derived = derive_compatibility(data, schema)
    rel = derived.get("per:employee_of")
    # two distinct observed obj types over the 10-instance fixture
    assert rel.obj_types == {"ORGANIZATION", "COMPANY"}
    assert rel.subj_types == {"PERSON"}


def test_derive_unknown_relation_in_data():
    schema = unsigned_schema(["per:known"])
    with pytest.raises(SchemaError, match="absent from schema"):
        derive_compatibility([_rc("a", "P", "D", "per:mystery")], schema)


def test_explicit_signatures_take_precedence():
    schema = question_schema(
        [("per:date_of_birth", ["PERSON"], ["DATE"], "When was {e} born?", "Who was born on {e}?")]
    )
    derived = derive_compatibility([_rc("a", "HUMAN", "TIME", "per:date_of_birth")], schema)
    rel = derived.get("per:date_of_birth")
    assert rel.subj_types == {"PERSON"} and rel.obj_types == {"DATE"}


@given(
    a=st.text(min_size=1, max_size=20).filter(lambda s: s.strip()),
    b=st.text(min_size=1, max_size=20).filter(lambda s: s.strip()),
)
def test_instantiate_injective_in_entity_text(a, b):
    t = Template(pattern="Who works for {e} now?", variant="question")
    if a != b:
        assert t.render(a) != t.render(b)
    else:
        assert t.render(a) == t.render(b)


def test_fwd_and_rev_render_distinct(birth_schema):
    q_fwd = instantiate(birth_schema, "per:date_of_birth", "fwd", "question", "John")
    q_rev = instantiate(birth_schema, "per:date_of_birth", "rev", "question", "1991")
    assert q_fwd != q_rev


def test_fwd_rev_distinct_for_every_shipped_relation():
    # holds even for symmetric relations (e.g. per:spouse) because the
    # instantiating entities differ
    schema = parse_schema_dict(shipped_tacred_doc())
    for rel in schema.relations:
        for variant in ("question", "relation", "token"):
            fwd = instantiate(schema, rel.name, "fwd", variant, "AAA")
            rev = instantiate(schema, rel.name, "rev", variant, "BBB")
            assert fwd != rev


def test_token_variant_patterns_distinct_across_relations():
    schema = unsigned_schema(["r_one", "r_two", "r_three"])
    patterns = {
        rel.templates["token"].fwd.pattern for rel in schema.relations
    } | {rel.templates["token"].rev.pattern for rel in schema.relations}
    assert len(patterns) == 6
