"""Shared fixtures: the Figure-2-style toy schema, a seeded synthetic corpus
generator, and the hand-built TACRED-format sample."""

from __future__ import annotations

import json
import random
from importlib import resources
from pathlib import Path

import pytest

from spanrel.reduction import RcInstance, TokenSpan, parse_rc_dataset
from spanrel.schema import RelationSchema, derive_compatibility, parse_schema_dict

DATA_DIR = Path(__file__).parent / "data"


def question_schema(entries, null_label="no_relation", forced_choice=False) -> RelationSchema:
    """Build a schema from (name, subj_types, obj_types, fwd, rev) tuples."""
    return parse_schema_dict(
        {
            "version": 1,
            "null_label": null_label,
            "forced_choice": forced_choice,
            "relations": [
                {
                    "name": name,
                    "subj_types": list(subj),
                    "obj_types": list(obj),
                    "templates": {"question": {"fwd": fwd, "rev": rev}},
                }
                for name, subj, obj, fwd, rev in entries
            ],
        }
    )


@pytest.fixture
def birth_schema() -> RelationSchema:
    """Two PERSON/DATE relations, mirroring the worked example of one gold
    and one distractor relation."""
    return question_schema(
        [
            ("per:date_of_birth", ["PERSON"], ["DATE"], "When was {e} born?", "Who was born on {e}?"),
            ("per:date_of_death", ["PERSON"], ["DATE"], "When did {e} die?", "Who died on {e}?"),
        ]
    )


@pytest.fixture
def birth_rc() -> RcInstance:
    return RcInstance(
        id="e1",
        tokens=("John", "was", "born", "on", "1991"),
        subj=TokenSpan(0, 0),
        obj=TokenSpan(4, 4),
        subj_type="PERSON",
        obj_type="DATE",
        relation="per:date_of_birth",
    )


SYNTH_RELATIONS = [
    ("works_for", ["PERSON"], ["ORG"], "Where does {e} work?", "Who works for {e}?"),
    ("born_on", ["PERSON"], ["DATE"], "When was {e} born?", "Who was born on {e}?"),
    ("died_on", ["PERSON"], ["DATE"], "When did {e} die?", "Who died on {e}?"),
    ("lives_in", ["PERSON"], ["LOC"], "Where does {e} live?", "Who lives in {e}?"),
    ("based_in", ["ORG"], ["LOC"], "Where is {e} based?", "Which organization is based in {e}?"),
    ("founded_on", ["ORG"], ["DATE"], "When was {e} founded?", "Which organization was founded on {e}?"),
]

_POOLS = {
    "PERSON": ["Alice", "Bob Marley", "Carol", "David Smith", "Eve", "Frank Miller", "Grace", "Henry Ford"],
    "ORG": ["Acme", "Globex Corp", "Initech", "Umbrella", "Stark Industries", "Wayne Enterprises"],
    "DATE": ["1984", "1991", "2003", "July 2010", "2020", "March 1999"],
    "LOC": ["Paris", "Berlin", "New York", "Tokyo", "Oslo"],
}

_FILLER = [
    "the", "report", "said", "that", "meanwhile", "yesterday", "morning",
    "local", "officials", "confirmed", "according", "to", "sources",
]


def synth_schema() -> RelationSchema:
    return question_schema(SYNTH_RELATIONS)


def synth_corpus(
    n: int, seed: int, null_rate: float = 0.25, id_prefix: str = "synth"
) -> list[RcInstance]:
    """Seeded random RC corpus. Gold relations always carry a matching type
    pair, so every gold is compatible after reduction; null instances mix
    compatible and incompatible type pairs."""
    rng = random.Random(seed)
    by_name = {name: (subj[0], obj[0]) for name, subj, obj, _, _ in SYNTH_RELATIONS}
    out: list[RcInstance] = []
    for i in range(n):
        if rng.random() < null_rate:
            relation = "no_relation"
            if rng.random() < 0.3:
                subj_type, obj_type = rng.choice([("PERSON", "PERSON"), ("LOC", "DATE")])
            else:
                subj_type, obj_type = by_name[rng.choice(list(by_name))]
        else:
            relation = rng.choice(list(by_name))
            subj_type, obj_type = by_name[relation]
        subj_text = rng.choice(_POOLS[subj_type])
        obj_text = rng.choice([t for t in _POOLS[obj_type] if t != subj_text])

        def filler(lo, hi):
            return [rng.choice(_FILLER) for _ in range(rng.randint(lo, hi))]

        first, second = (subj_text, obj_text) if rng.random() < 0.5 else (obj_text, subj_text)
        prefix, mid, suffix = filler(0, 3), filler(1, 3), filler(0, 2)
        tokens = prefix + first.split() + mid + second.split() + suffix + ["."]
        a_start = len(prefix)
        a_end = a_start + len(first.split()) - 1
        b_start = a_end + 1 + len(mid)
        b_end = b_start + len(second.split()) - 1
        if first == subj_text:
            subj_span, obj_span = TokenSpan(a_start, a_end), TokenSpan(b_start, b_end)
        else:
            subj_span, obj_span = TokenSpan(b_start, b_end), TokenSpan(a_start, a_end)
        out.append(
            RcInstance(
                id=f"{id_prefix}{i:04d}",
                tokens=tuple(tokens),
                subj=subj_span,
                obj=obj_span,
                subj_type=subj_type,
                obj_type=obj_type,
                relation=relation,
            )
        )
    return out


@pytest.fixture(scope="session")
def synthetic():
    schema = synth_schema()
    corpus = synth_corpus(500, seed=7)
    return schema, corpus


@pytest.fixture(scope="session")
def tacred_sample_path() -> Path:
    return DATA_DIR / "tacred_sample.json"


@pytest.fixture(scope="session")
def tacred_sample(tacred_sample_path):
    """The 20-instance TACRED-format fixture plus a schema restricted to the
    relations it uses, with appendix question templates and signatures
    derived from the fixture itself."""
    rcs = parse_rc_dataset(tacred_sample_path.read_bytes())
    shipped = json.loads(
        resources.files("spanrel").joinpath("data/tacred.json").read_text("utf-8")
    )
    used = {rc.relation for rc in rcs} - {"no_relation"}
    shipped["relations"] = [r for r in shipped["relations"] if r["name"] in used]
    schema = derive_compatibility(rcs, parse_schema_dict(shipped))
    return schema, rcs
