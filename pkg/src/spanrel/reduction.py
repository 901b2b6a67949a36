"""RC corpus parsing, context rendering, and reduction to span-prediction.

Every RC instance becomes two questions (forward and reverse) per relation
compatible with its entity-type pair; questions built from the gold
relation's templates are answerable, everything else gets the no-answer
marking. Output serializes to the SQuAD 2.0 interchange format plus a
provenance sidecar keyed by question id.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .errors import DatasetError
from .schema import QID_SEP, RelationSchema, compatible_relations, instantiate


@dataclass(frozen=True, order=True)
class CharSpan:
    """Half-open character interval [start, end) over a context string."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise DatasetError(f"invalid char span ({self.start}, {self.end})")

    def slice(self, text: str) -> str:
        return text[self.start : self.end]


@dataclass(frozen=True)
class TokenSpan:
    """Inclusive token index interval, TACRED convention."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise DatasetError(f"invalid token span ({self.start}, {self.end})")


@dataclass(frozen=True)
class RcInstance:
    """One labeled relation-classification example.

    gold is None for plain RC data; CRE records carry gold=True/False for
    the queried relation, and gold=False suppresses positive questions.
    """

    id: str
    tokens: tuple[str, ...]
    subj: TokenSpan
    obj: TokenSpan
    subj_type: str
    obj_type: str
    relation: str
    gold: bool | None = None

    def __post_init__(self):
        if not self.id:
            raise DatasetError("rc instance with empty id")
        if QID_SEP in self.id:
            raise DatasetError(f"rc id may not contain '{QID_SEP}': {self.id!r}")
        n = len(self.tokens)
        if n == 0:
            raise DatasetError(f"rc {self.id}: empty token sequence")
        for span, label in ((self.subj, "subj"), (self.obj, "obj")):
            if span.end >= n:
                raise DatasetError(
                    f"rc {self.id}: {label} span ({span.start}, {span.end}) out of bounds "
                    f"for {n} tokens"
                )

    @property
    def positive_relation(self) -> str | None:
        """The relation whose questions are answerable, if any."""
        return None if self.gold is False else self.relation


@dataclass(frozen=True)
class Provenance:
    rc_id: str
    relation: str
    direction: str
    variant: str
    expected_entity: CharSpan


@dataclass(frozen=True)
class SpInstance:
    """One generated span-prediction question."""

    qid: str
    context: str
    question: str
    answerable: bool
    answer_char_span: CharSpan | None = None
    answer_text: str | None = None
    provenance: Provenance | None = None

    def __post_init__(self):
        has_span = self.answer_char_span is not None
        has_text = self.answer_text is not None
        if self.answerable != has_span or self.answerable != has_text:
            raise DatasetError(
                f"{self.qid}: answerable flag inconsistent with answer fields"
            )
        if self.answerable:
            got = self.answer_char_span.slice(self.context)
            if got != self.answer_text:
                raise DatasetError(
                    f"{self.qid}: answer span mismatch: context slice {got!r} != "
                    f"answer text {self.answer_text!r}"
                )


@dataclass(frozen=True)
class SpDataset:
    instances: tuple[SpInstance, ...]
    variant: str
    source: str

    def __post_init__(self):
        seen: set[str] = set()
        for inst in self.instances:
            if inst.qid in seen:
                raise DatasetError(f"duplicate qid: {inst.qid}")
            seen.add(inst.qid)

    def __len__(self) -> int:
        return len(self.instances)

    def qids(self) -> set[str]:
        return {inst.qid for inst in self.instances}


@dataclass
class ReductionSummary:
    instances: int = 0
    positives: int = 0
    negatives: int = 0
    # RC instances whose gold relation produced no positives because its
    # type signature failed the compatibility check (kept as negatives).
    skipped: int = 0

    def as_dict(self) -> dict:
        return {
            "instances": self.instances,
            "positives": self.positives,
            "negatives": self.negatives,
            "skipped": self.skipped,
        }


_RC_REQUIRED = (
    "id",
    "token",
    "subj_start",
    "subj_end",
    "obj_start",
    "obj_end",
    "subj_type",
    "obj_type",
    "relation",
)


def parse_rc_dataset(data: bytes | str) -> list[RcInstance]:
    """Parse an RC corpus in the TACRED release convention (JSON array of
    records; token spans are 0-based inclusive). An optional boolean "gold"
    field marks CRE-style queried relations."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise DatasetError(f"rc input: parse error at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, list):
        raise DatasetError("rc input: top level must be an array of records")

    out: list[RcInstance] = []
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict):
            raise DatasetError(f"record {i}: not an object")
        missing = [k for k in _RC_REQUIRED if k not in rec]
        if missing:
            raise DatasetError(f"record {i}: missing field(s) {missing}")
        tokens = rec["token"]
        if (
            not isinstance(tokens, list)
            or not tokens
            or not all(isinstance(t, str) and t and "\n" not in t for t in tokens)
        ):
            raise DatasetError(
                f"record {i}: token must be a non-empty array of non-empty, "
                "newline-free strings"
            )
        for k in ("subj_start", "subj_end", "obj_start", "obj_end"):
            if not isinstance(rec[k], int):
                raise DatasetError(f"record {i}: {k} must be an integer")
        gold = rec.get("gold")
        if gold is not None and not isinstance(gold, bool):
            raise DatasetError(f"record {i}: gold must be a boolean when present")
        try:
            out.append(
                RcInstance(
                    id=str(rec["id"]),
                    tokens=tuple(tokens),
                    subj=TokenSpan(rec["subj_start"], rec["subj_end"]),
                    obj=TokenSpan(rec["obj_start"], rec["obj_end"]),
                    subj_type=str(rec["subj_type"]),
                    obj_type=str(rec["obj_type"]),
                    relation=str(rec["relation"]),
                    gold=gold,
                )
            )
        except DatasetError as e:
            raise DatasetError(f"record {i}: {e}") from None
    return out


def render_context(tokens: Sequence[str]) -> tuple[str, list[CharSpan]]:
    """Join tokens with single spaces; offsets[i] addresses exactly token i
    in the joined text. Reversible by construction."""
    if not tokens:
        raise DatasetError("empty token sequence")
    offsets: list[CharSpan] = []
    pos = 0
    for tok in tokens:
        if not tok or "\n" in tok:
            raise DatasetError(f"token must be non-empty and newline-free: {tok!r}")
        offsets.append(CharSpan(pos, pos + len(tok)))
        pos += len(tok) + 1
    return " ".join(tokens), offsets


def _token_span_chars(offsets: Sequence[CharSpan], span: TokenSpan) -> CharSpan:
    return CharSpan(offsets[span.start].start, offsets[span.end].end)


def make_qid(rc_id: str, relation: str, direction: str) -> str:
    return f"{rc_id}{QID_SEP}{relation}{QID_SEP}{direction}"


def split_qid(qid: str) -> tuple[str, str, str] | None:
    """Recover (rc_id, relation, direction) from a toolkit qid; None for
    foreign qids (e.g. native SQuAD ids)."""
    if qid.count(QID_SEP) < 2:
        return None
    rc_id, relation, direction = qid.rsplit(QID_SEP, 2)
    if direction not in ("fwd", "rev"):
        return None
    return rc_id, relation, direction


def reduce_instance(
    rc: RcInstance, schema: RelationSchema, variant: str
) -> list[SpInstance]:
    """Generate the bidirectional question set for one RC instance.

    For each relation compatible with (subj_type, obj_type): a forward
    question built from the subject text expecting the object span, and a
    reverse question built from the object text expecting the subject span.
    Only the gold relation's questions are answerable.
    """
    context, offsets = render_context(rc.tokens)
    subj_span = _token_span_chars(offsets, rc.subj)
    obj_span = _token_span_chars(offsets, rc.obj)
    subj_text = subj_span.slice(context)
    obj_text = obj_span.slice(context)
    positive = rc.positive_relation

    out: list[SpInstance] = []
    for name in compatible_relations(schema, rc.subj_type, rc.obj_type):
        answerable = name == positive
        for direction, arg_text, expected in (
            ("fwd", subj_text, obj_span),
            ("rev", obj_text, subj_span),
        ):
            answer_span = expected if answerable else None
            out.append(
                SpInstance(
                    qid=make_qid(rc.id, name, direction),
                    context=context,
                    question=instantiate(schema, name, direction, variant, arg_text),
                    answerable=answerable,
                    answer_char_span=answer_span,
                    answer_text=expected.slice(context) if answerable else None,
                    provenance=Provenance(
                        rc_id=rc.id,
                        relation=name,
                        direction=direction,
                        variant=variant,
                        expected_entity=expected,
                    ),
                )
            )
    return out


def reduce_dataset(
    dataset: Sequence[RcInstance],
    schema: RelationSchema,
    variant: str,
    source: str = "rc",
    workers: int = 1,
) -> tuple[SpDataset, ReductionSummary]:
    """Reduce a whole corpus; output is sorted by qid and independent of the
    worker count."""
    seen_ids: set[str] = set()
    for rc in dataset:
        if rc.id in seen_ids:
            raise DatasetError(f"duplicate rc id: {rc.id}")
        seen_ids.add(rc.id)
        if rc.relation != schema.null_label and rc.relation not in schema:
            raise DatasetError(
                f"rc {rc.id}: relation {rc.relation!r} not in schema and not the null label"
            )

    if workers > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_instance = list(
                pool.map(lambda rc: reduce_instance(rc, schema, variant), dataset)
            )
    else:
        per_instance = [reduce_instance(rc, schema, variant) for rc in dataset]

    summary = ReductionSummary()
    instances: list[SpInstance] = []
    for rc, generated in zip(dataset, per_instance):
        instances.extend(generated)
        positives = sum(1 for g in generated if g.answerable)
        summary.positives += positives
        summary.negatives += len(generated) - positives
        if rc.positive_relation is not None and rc.relation != schema.null_label and positives == 0:
            summary.skipped += 1
    summary.instances = len(instances)

    instances.sort(key=lambda inst: inst.qid)
    return SpDataset(instances=tuple(instances), variant=variant, source=source), summary


def _paragraph_key(qid: str) -> str:
    parsed = split_qid(qid)
    return parsed[0] if parsed else qid


def serialize_squad(ds: SpDataset) -> bytes:
    """SQuAD 2.0 bytes: one data entry titled with the dataset source; one
    paragraph per RC instance (consecutive qids sharing the rc id prefix)."""
    paragraphs: list[dict] = []
    current_key: str | None = None
    for inst in ds.instances:
        key = _paragraph_key(inst.qid)
        if current_key != key or paragraphs[-1]["context"] != inst.context:
            paragraphs.append({"context": inst.context, "qas": []})
            current_key = key
        answers = (
            [{"text": inst.answer_text, "answer_start": inst.answer_char_span.start}]
            if inst.answerable
            else []
        )
        paragraphs[-1]["qas"].append(
            {
                "id": inst.qid,
                "question": inst.question,
                "is_impossible": not inst.answerable,
                "answers": answers,
            }
        )
    doc = {"version": "v2.0", "data": [{"title": ds.source, "paragraphs": paragraphs}]}
    return json.dumps(doc, ensure_ascii=False).encode("utf-8")


def parse_squad(data: bytes | str) -> SpDataset:
    """Parse a SQuAD 2.0 document into an SpDataset without provenance.

    Document order is preserved. Answer offsets are validated against the
    context; is_impossible must agree with the answers list.
    """
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise DatasetError(f"squad input: parse error at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict) or not isinstance(doc.get("data"), list):
        raise DatasetError("squad input: malformed document (missing data array)")

    instances: list[SpInstance] = []
    titles: list[str] = []
    for entry in doc["data"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("paragraphs"), list):
            raise DatasetError("squad input: malformed data entry")
        titles.append(str(entry.get("title", "")))
        for para in entry["paragraphs"]:
            context = para.get("context")
            qas = para.get("qas")
            if not isinstance(context, str) or not isinstance(qas, list):
                raise DatasetError("squad input: malformed paragraph")
            for qa in qas:
                qid = qa.get("id")
                question = qa.get("question")
                answers = qa.get("answers")
                if not isinstance(qid, str) or not isinstance(question, str) or not isinstance(answers, list):
                    raise DatasetError("squad input: malformed qas entry")
                impossible = bool(qa.get("is_impossible", False))
                if impossible:
                    if answers:
                        raise DatasetError(
                            f"{qid}: is_impossible with non-empty answers list"
                        )
                    instances.append(
                        SpInstance(qid=qid, context=context, question=question, answerable=False)
                    )
                else:
                    if not answers:
                        raise DatasetError(f"{qid}: answerable question with no answers")
                    ans = answers[0]
                    text = ans.get("text")
                    start = ans.get("answer_start")
                    if not isinstance(text, str) or not isinstance(start, int):
                        raise DatasetError(f"{qid}: malformed answer record")
                    if context[start : start + len(text)] != text:
                        raise DatasetError(
                            f"{qid}: answer_start {start} inconsistent with context for {text!r}"
                        )
                    instances.append(
                        SpInstance(
                            qid=qid,
                            context=context,
                            question=question,
                            answerable=True,
                            answer_char_span=CharSpan(start, start + len(text)),
                            answer_text=text,
                        )
                    )
    return SpDataset(
        instances=tuple(instances),
        variant="unknown",
        source="+".join(titles) if titles else "",
    )


def provenance_records(ds: SpDataset) -> dict[str, dict]:
    """Sidecar payload: one record per qid."""
    records: dict[str, dict] = {}
    for inst in ds.instances:
        if inst.provenance is None:
            raise DatasetError(f"{inst.qid}: instance has no provenance")
        p = inst.provenance
        records[inst.qid] = {
            "rc_id": p.rc_id,
            "relation": p.relation,
            "direction": p.direction,
            "variant": p.variant,
            "expected_start": p.expected_entity.start,
            "expected_end": p.expected_entity.end,
            "answerable": inst.answerable,
        }
    return records


def parse_provenance(data: bytes | str) -> tuple[dict, dict[str, dict]]:
    """Load a provenance sidecar file; returns (meta, records by qid)."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise DatasetError(f"provenance sidecar: parse error at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict) or not isinstance(doc.get("records"), dict):
        raise DatasetError("provenance sidecar: malformed document (missing records)")
    required = {
        "rc_id",
        "relation",
        "direction",
        "variant",
        "expected_start",
        "expected_end",
        "answerable",
    }
    for qid, rec in doc["records"].items():
        if not isinstance(rec, dict) or not required <= set(rec):
            raise DatasetError(f"provenance sidecar: malformed record for {qid}")
    return doc.get("meta", {}), doc["records"]


def attach_provenance(ds: SpDataset, records: dict[str, dict]) -> SpDataset:
    """Re-unite a parsed SQuAD dataset with its provenance sidecar."""
    instances: list[SpInstance] = []
    for inst in ds.instances:
        rec = records.get(inst.qid)
        if rec is None:
            raise DatasetError(f"{inst.qid}: no provenance record in sidecar")
        if bool(rec["answerable"]) != inst.answerable:
            raise DatasetError(f"{inst.qid}: sidecar answerable flag disagrees with dataset")
        prov = Provenance(
            rc_id=str(rec["rc_id"]),
            relation=str(rec["relation"]),
            direction=str(rec["direction"]),
            variant=str(rec["variant"]),
            expected_entity=CharSpan(int(rec["expected_start"]), int(rec["expected_end"])),
        )
        instances.append(replace(inst, provenance=prov))
    variant = instances[0].provenance.variant if instances else ds.variant
    return SpDataset(instances=tuple(instances), variant=variant, source=ds.source)


def mix_unified(a: SpDataset, b: SpDataset, seed: int) -> SpDataset:
    """Seeded uniform shuffle of the union of two datasets."""
    collisions = a.qids() & b.qids()
    if collisions:
        raise DatasetError(f"qid collision between datasets: {sorted(collisions)[0]!r}")
    instances = list(a.instances) + list(b.instances)
    random.Random(seed).shuffle(instances)
    variant = a.variant if a.variant == b.variant else "mixed"
    return SpDataset(
        instances=tuple(instances), variant=variant, source=f"{a.source}+{b.source}"
    )


# serial mixing intentionally has no qid-disjointness requirement: training
# twice on overlapping (even identical) stage data is the caller's choice
