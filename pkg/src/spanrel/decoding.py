"""Turn per-question span predictions into relation decisions.

A question "hits" when its margin beats the template's threshold strictly
and the predicted span is compatible with the expected entity (one span
contains the other). Per-instance verdicts combine the two directions with
OR or AND; multiclass arbitration picks the best-margin present relation.
Thresholds are calibrated per (relation, direction) to maximize binary F1
on dev data.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import CalibrationError, DatasetError, DecodingError
from .predictors import PredictionSet, SpanPrediction
from .reduction import CharSpan, RcInstance, SpDataset, make_qid
from .schema import DIRECTIONS, RelationSchema, compatible_relations

GLOBAL_KEY = "::global"

MODES = ("OR", "AND")
DIRECTION_POLICIES = ("both", "fwd_only")


def spans_compatible(a: CharSpan, b: CharSpan) -> bool:
    """True iff one span contains the other (identity included)."""
    return (a.start <= b.start and b.end <= a.end) or (
        b.start <= a.start and a.end <= b.end
    )


def trimmed_span(pred: SpanPrediction) -> CharSpan | None:
    """Predicted span with the text's leading/trailing whitespace removed;
    None when there is no span or nothing is left after trimming."""
    if pred.char_span is None:
        return None
    lead = len(pred.text) - len(pred.text.lstrip())
    trail = len(pred.text) - len(pred.text.rstrip())
    start = pred.char_span.start + lead
    end = pred.char_span.end - trail
    if start >= end:
        return None
    return CharSpan(start, end)


def question_hit(pred: SpanPrediction, expected: CharSpan, tau: float) -> bool:
    """True iff the prediction offers a span, its margin exceeds tau
    strictly, and the (trimmed) span is compatible with the expected one."""
    if pred.margin <= tau:
        return False
    span = trimmed_span(pred)
    return span is not None and spans_compatible(span, expected)


@dataclass(frozen=True)
class ThresholdTable:
    """Margin threshold per (relation, direction) with a global fallback."""

    by_template: dict[tuple[str, str], float]
    global_fallback: float

    def __post_init__(self):
        if not math.isfinite(self.global_fallback):
            raise DecodingError("global fallback threshold must be finite")
        for key, tau in self.by_template.items():
            if not math.isfinite(tau):
                raise DecodingError(f"threshold for {key} must be finite")

    def resolve(self, relation: str, direction: str) -> float:
        return self.by_template.get((relation, direction), self.global_fallback)


def serialize_thresholds(table: ThresholdTable) -> bytes:
    doc = {f"{rel}::{direction}": tau for (rel, direction), tau in table.by_template.items()}
    doc[GLOBAL_KEY] = table.global_fallback
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=1).encode("utf-8")


def parse_thresholds(data: bytes | str) -> ThresholdTable:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise DatasetError(f"threshold file: parse error at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict) or GLOBAL_KEY not in doc:
        raise DatasetError(f"threshold file: must be a mapping containing {GLOBAL_KEY!r}")
    by_template: dict[tuple[str, str], float] = {}
    fallback = 0.0
    for key, tau in doc.items():
        if not isinstance(tau, (int, float)) or isinstance(tau, bool) or not math.isfinite(tau):
            raise DatasetError(f"threshold file: non-finite or non-numeric value for {key!r}")
        if key == GLOBAL_KEY:
            fallback = float(tau)
            continue
        relation, sep, direction = key.rpartition("::")
        if not sep or direction not in DIRECTIONS or not relation:
            raise DatasetError(f"threshold file: malformed key {key!r}")
        by_template[(relation, direction)] = float(tau)
    return ThresholdTable(by_template=by_template, global_fallback=fallback)


@dataclass(frozen=True)
class DecodingConfig:
    mode: str = "OR"
    directions: str = "both"
    forced_choice: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise DecodingError(f"unknown mode: {self.mode!r}")
        if self.directions not in DIRECTION_POLICIES:
            raise DecodingError(f"unknown directions policy: {self.directions!r}")
        if self.directions == "fwd_only" and self.mode != "OR":
            raise DecodingError("fwd_only is only meaningful with mode OR")


@dataclass(frozen=True)
class RelationVerdict:
    """Per-relation outcome for one RC instance.

    combined_margin is the max of (margin - tau) over hitting directions
    (min under AND), -inf when the relation is absent. score is the same
    combination without the hit gate and ranks candidates under forced
    choice when nothing hit.
    """

    relation: str
    present: bool
    hit_fwd: bool
    hit_rev: bool
    combined_margin: float
    score: float


class ProvenanceIndex:
    """Expected-entity lookup: (rc_id, relation, direction) -> CharSpan."""

    def __init__(self):
        self._spans: dict[tuple[str, str, str], CharSpan] = {}

    @classmethod
    def from_dataset(cls, ds: SpDataset) -> "ProvenanceIndex":
        index = cls()
        for inst in ds.instances:
            if inst.provenance is None:
                raise DecodingError(f"{inst.qid}: instance has no provenance")
            p = inst.provenance
            index._spans[(p.rc_id, p.relation, p.direction)] = p.expected_entity
        return index

    @classmethod
    def from_records(cls, records: Mapping[str, dict]) -> "ProvenanceIndex":
        index = cls()
        for rec in records.values():
            key = (str(rec["rc_id"]), str(rec["relation"]), str(rec["direction"]))
            index._spans[key] = CharSpan(int(rec["expected_start"]), int(rec["expected_end"]))
        return index

    def expected(self, rc_id: str, relation: str, direction: str) -> CharSpan:
        try:
            return self._spans[(rc_id, relation, direction)]
        except KeyError:
            raise DecodingError(
                f"no expected-entity span for ({rc_id}, {relation}, {direction}); "
                "sidecar and RC input out of sync"
            ) from None


def _direction_outcome(
    pred: SpanPrediction | None, expected: CharSpan, tau: float
) -> tuple[bool, float]:
    """(hit, margin - tau); a missing prediction never hits."""
    if pred is None:
        return False, -math.inf
    return question_hit(pred, expected, tau), pred.margin - tau


def decode_binary(
    rc_id: str,
    relation: str,
    index: ProvenanceIndex,
    preds: PredictionSet,
    thresholds: ThresholdTable,
    config: DecodingConfig,
    allow_missing: bool = False,
) -> RelationVerdict:
    """Decide whether one relation holds for one RC instance."""

    def lookup(direction: str) -> SpanPrediction | None:
        qid = make_qid(rc_id, relation, direction)
        pred = preds.get(qid)
        if pred is None and not allow_missing:
            raise DecodingError(f"missing prediction for required qid: {qid}")
        return pred

    hit_fwd, adj_fwd = _direction_outcome(
        lookup("fwd"), index.expected(rc_id, relation, "fwd"), thresholds.resolve(relation, "fwd")
    )
    if config.directions == "fwd_only":
        hit_rev, adj_rev = False, None
        present = hit_fwd
        hitting = [adj_fwd] if hit_fwd else []
        score = adj_fwd
    else:
        hit_rev, adj_rev = _direction_outcome(
            lookup("rev"),
            index.expected(rc_id, relation, "rev"),
            thresholds.resolve(relation, "rev"),
        )
        if config.mode == "OR":
            present = hit_fwd or hit_rev
            hitting = [adj for hit, adj in ((hit_fwd, adj_fwd), (hit_rev, adj_rev)) if hit]
            score = max(adj_fwd, adj_rev)
        else:
            present = hit_fwd and hit_rev
            hitting = [min(adj_fwd, adj_rev)] if present else []
            score = min(adj_fwd, adj_rev)

    combined = max(hitting) if hitting else -math.inf
    return RelationVerdict(
        relation=relation,
        present=present,
        hit_fwd=hit_fwd,
        hit_rev=hit_rev,
        combined_margin=combined,
        score=score,
    )


def _best_relation(verdicts: Sequence[RelationVerdict], key: str) -> str:
    # ties break to the lexicographically smallest name: sort by name first,
    # then rely on max() returning the first maximal element
    ordered = sorted(verdicts, key=lambda v: v.relation)
    return max(ordered, key=lambda v: getattr(v, key)).relation


def decode_multiclass(
    rc: RcInstance,
    schema: RelationSchema,
    index: ProvenanceIndex,
    preds: PredictionSet,
    thresholds: ThresholdTable,
    config: DecodingConfig,
    allow_missing: bool = False,
) -> tuple[str, list[RelationVerdict]]:
    """Arbitrate between all compatible relations for one RC instance.

    Returns the winning label (the schema's null label when nothing is
    present and forced choice is off) and the per-relation verdicts in
    schema order.
    """
    candidates = compatible_relations(schema, rc.subj_type, rc.obj_type)
    verdicts = [
        decode_binary(rc.id, name, index, preds, thresholds, config, allow_missing)
        for name in candidates
    ]
    present = [v for v in verdicts if v.present]
    if present:
        return _best_relation(present, "combined_margin"), verdicts
    if config.forced_choice and verdicts:
        return _best_relation(verdicts, "score"), verdicts
    return schema.null_label, verdicts


@dataclass
class DecodeResult:
    labels: dict[str, str]
    verdicts: dict[str, list[RelationVerdict]]
    multi_present: int = 0
    missing_predictions: int = 0

    @property
    def multi_present_rate(self) -> float:
        return self.multi_present / len(self.labels) if self.labels else 0.0


def decode_dataset(
    rc_instances: Sequence[RcInstance],
    schema: RelationSchema,
    index: ProvenanceIndex,
    preds: PredictionSet,
    thresholds: ThresholdTable,
    config: DecodingConfig,
    workers: int = 1,
    allow_missing: bool = False,
) -> DecodeResult:
    """Decode every RC instance; output is independent of worker count."""
    required: set[str] = set()
    for rc in rc_instances:
        for name in compatible_relations(schema, rc.subj_type, rc.obj_type):
            required.add(make_qid(rc.id, name, "fwd"))
            if config.directions == "both":
                required.add(make_qid(rc.id, name, "rev"))
    missing = required - preds.by_qid.keys()
    if missing and not allow_missing:
        shown = ", ".join(sorted(missing)[:5]) + (" ..." if len(missing) > 5 else "")
        raise DecodingError(f"missing prediction for required qid(s): {shown}")

    def one(rc: RcInstance) -> tuple[str, str, list[RelationVerdict]]:
        label, verdicts = decode_multiclass(
            rc, schema, index, preds, thresholds, config, allow_missing
        )
        return rc.id, label, verdicts

    if workers > 1 and len(rc_instances) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, rc_instances))
    else:
        rows = [one(rc) for rc in rc_instances]

    result = DecodeResult(labels={}, verdicts={}, missing_predictions=len(missing))
    for rc_id, label, verdicts in rows:
        if rc_id in result.labels:
            raise DecodingError(f"duplicate rc id: {rc_id}")
        result.labels[rc_id] = label
        result.verdicts[rc_id] = verdicts
        if sum(1 for v in verdicts if v.present) > 1:
            result.multi_present += 1
    return result


@dataclass(frozen=True)
class CalibrationObs:
    """One dev question as seen by the threshold sweep."""

    relation: str
    direction: str
    margin: float
    predicted_span: bool
    correct_if_answered: bool  # gold answerable and predicted span compatible
    gold_positive: bool


def _binary_f1(tp: int, pp: int, gp: int) -> float:
    precision = tp / pp if pp else 0.0
    recall = tp / gp if gp else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def sweep_candidates(margins: Iterable[float]) -> list[float]:
    """Candidate thresholds: midpoints between consecutive distinct observed
    margins plus a below-min and an above-max sentinel."""
    distinct = sorted(set(margins))
    if not distinct:
        return [0.0]
    out = [distinct[0] - 1.0]
    out.extend((a + b) / 2.0 for a, b in zip(distinct, distinct[1:]))
    out.append(distinct[-1] + 1.0)
    return out


def best_threshold(observations: Sequence[CalibrationObs]) -> tuple[float, float]:
    """(tau, f1) maximizing binary F1 over the candidate sweep; ties pick the
    largest tau. A question counts as answered at tau iff it offers a span
    and its margin exceeds tau strictly; an answer is correct only when the
    question is gold-answerable and the span is compatible."""
    if not observations:
        raise CalibrationError("cannot calibrate on an empty observation set")
    gp = sum(1 for o in observations if o.gold_positive)
    ordered = sorted(observations, key=lambda o: -o.margin)
    candidates = sweep_candidates(o.margin for o in observations)

    # walk thresholds from high to low, growing the answered prefix
    best_tau = candidates[-1]  # above-max sentinel: never answer
    best_f1 = _binary_f1(0, 0, gp)
    tp = pp = 0
    i = 0
    for tau in reversed(candidates[:-1]):
        while i < len(ordered) and ordered[i].margin > tau:
            if ordered[i].predicted_span:
                pp += 1
                if ordered[i].correct_if_answered:
                    tp += 1
            i += 1
        f1 = _binary_f1(tp, pp, gp)
        if f1 > best_f1:
            best_f1, best_tau = f1, tau
    return best_tau, best_f1


def observations_from_dataset(ds: SpDataset, preds: PredictionSet) -> list[CalibrationObs]:
    preds.validate_total(ds.qids())
    out: list[CalibrationObs] = []
    for inst in ds.instances:
        if inst.provenance is None:
            raise CalibrationError(f"{inst.qid}: instance has no provenance")
        pred = preds.by_qid[inst.qid]
        span = trimmed_span(pred)
        compatible = span is not None and spans_compatible(
            span, inst.provenance.expected_entity
        )
        out.append(
            CalibrationObs(
                relation=inst.provenance.relation,
                direction=inst.provenance.direction,
                margin=pred.margin,
                predicted_span=pred.char_span is not None,
                correct_if_answered=inst.answerable and compatible,
                gold_positive=inst.answerable,
            )
        )
    return out


def observations_from_records(
    records: Mapping[str, dict], preds: PredictionSet
) -> list[CalibrationObs]:
    preds.validate_total(set(records))
    out: list[CalibrationObs] = []
    for qid, rec in records.items():
        pred = preds.by_qid[qid]
        expected = CharSpan(int(rec["expected_start"]), int(rec["expected_end"]))
        span = trimmed_span(pred)
        compatible = span is not None and spans_compatible(span, expected)
        answerable = bool(rec["answerable"])
        out.append(
            CalibrationObs(
                relation=str(rec["relation"]),
                direction=str(rec["direction"]),
                margin=pred.margin,
                predicted_span=pred.char_span is not None,
                correct_if_answered=answerable and compatible,
                gold_positive=answerable,
            )
        )
    return out


def calibrate_observations(observations: Sequence[CalibrationObs]) -> ThresholdTable:
    if not observations:
        raise CalibrationError("empty dev set")
    groups: dict[tuple[str, str], list[CalibrationObs]] = defaultdict(list)
    for obs in observations:
        groups[(obs.relation, obs.direction)].append(obs)

    by_template: dict[tuple[str, str], float] = {}
    for key, group in sorted(groups.items()):
        # templates with no positive dev questions fall back to the global tau
        if not any(o.gold_positive for o in group):
            continue
        by_template[key], _ = best_threshold(group)
    fallback, _ = best_threshold(list(observations))
    return ThresholdTable(by_template=by_template, global_fallback=fallback)


def calibrate_thresholds(dev: SpDataset, preds: PredictionSet) -> ThresholdTable:
    """Calibrate one threshold per (relation, direction) template on dev
    data, maximizing binary F1 over the margin sweep; templates without any
    positive dev question use the global fallback calibrated on the pooled
    questions."""
    if not dev.instances:
        raise CalibrationError("empty dev set")
    return calibrate_observations(observations_from_dataset(dev, preds))
