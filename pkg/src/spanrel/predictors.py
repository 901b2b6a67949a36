"""Span prediction sources: prediction files, oracle, lexical baseline, and
a remote predictor speaking the wire protocol.

Scores are opaque reals; downstream decoding only interprets the margin
(span_score - null_score), the SQuAD 2.0 null-odds convention.
"""

from __future__ import annotations

import json
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

from .errors import PredictionError, ProtocolError
from .reduction import CharSpan, SpDataset

_WS_TOKEN = re.compile(r"\S+")
_EDGE_PUNCT = re.compile(r"^\W+|\W+$", re.UNICODE)

# Tokens of sentence context kept on each side of the expected entity when
# the lexical baseline scores question/context overlap.
LEXICAL_WINDOW = 5
LEXICAL_NULL_SCORE = 0.5


@dataclass(frozen=True)
class SpanPrediction:
    """Predictor output for one question. No span (empty text) means the
    predictor chose the no-answer option; scores must stay finite so the
    margin is always defined."""

    qid: str
    text: str
    char_span: CharSpan | None
    span_score: float
    null_score: float

    def __post_init__(self):
        if (self.char_span is None) != (self.text == ""):
            raise PredictionError(
                f"{self.qid}: char span must be present exactly when text is non-empty"
            )
        if not (math.isfinite(self.span_score) and math.isfinite(self.null_score)):
            raise PredictionError(f"{self.qid}: non-finite score")

    @property
    def margin(self) -> float:
        return self.span_score - self.null_score


@dataclass
class PredictionSet:
    by_qid: dict[str, SpanPrediction]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.by_qid)

    def get(self, qid: str) -> SpanPrediction | None:
        return self.by_qid.get(qid)

    def validate_total(self, qids: set[str]) -> None:
        """Every dataset qid must have a prediction (checked before decoding)."""
        missing = sorted(qids - self.by_qid.keys())
        if missing:
            shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
            raise PredictionError(
                f"predictions incomplete: {len(missing)} dataset qid(s) missing ({shown})"
            )


def _meta(source: str) -> dict:
    # timestamp stays in memory only; file outputs must be byte-deterministic
    return {"source": source, "timestamp": time.time()}


def _prediction_from_record(qid: str, rec: dict) -> SpanPrediction:
    if not isinstance(rec, dict):
        raise PredictionError(f"{qid}: prediction record must be an object")
    text = rec.get("text")
    if not isinstance(text, str):
        raise PredictionError(f"{qid}: missing or non-string text")
    for k in ("span_score", "null_score"):
        if not isinstance(rec.get(k), (int, float)) or isinstance(rec.get(k), bool):
            raise PredictionError(f"{qid}: missing or non-numeric {k}")
        if not math.isfinite(rec[k]):
            raise PredictionError(f"{qid}: non-finite score")
    span: CharSpan | None = None
    if text:
        start, end = rec.get("start_char"), rec.get("end_char")
        if not isinstance(start, int) or not isinstance(end, int) or start < 0 or end <= start:
            raise PredictionError(f"{qid}: invalid start_char/end_char for non-empty text")
        span = CharSpan(start, end)
    elif rec.get("start_char") is not None or rec.get("end_char") is not None:
        raise PredictionError(f"{qid}: offsets present with empty text")
    return SpanPrediction(
        qid=qid,
        text=text,
        char_span=span,
        span_score=float(rec["span_score"]),
        null_score=float(rec["null_score"]),
    )


def _reject_duplicate_keys(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise PredictionError(f"duplicate qid: {k}")
        out[k] = v
    return out


def parse_predictions(data: bytes | str) -> PredictionSet:
    """Parse a prediction file: a single JSON mapping qid -> record.

    Unanswerable predictions use text "" and omit offsets.
    """
    try:
        doc = json.loads(data, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as e:
        raise PredictionError(f"prediction file: parse error at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise PredictionError("prediction file: top level must be a qid mapping")
    by_qid = {qid: _prediction_from_record(qid, rec) for qid, rec in doc.items()}
    return PredictionSet(by_qid=by_qid, meta=_meta("file"))


def serialize_predictions(pset: PredictionSet) -> bytes:
    records: dict[str, dict] = {}
    for qid, p in pset.by_qid.items():
        rec: dict = {"text": p.text, "span_score": p.span_score, "null_score": p.null_score}
        if p.char_span is not None:
            rec["start_char"] = p.char_span.start
            rec["end_char"] = p.char_span.end
        records[qid] = rec
    return json.dumps(records, ensure_ascii=False, sort_keys=True, indent=1).encode("utf-8")


def _require_provenance(ds: SpDataset, who: str) -> None:
    for inst in ds.instances:
        if inst.provenance is None:
            raise PredictionError(f"{who}: instance {inst.qid} has no provenance")


def oracle_predict(ds: SpDataset) -> PredictionSet:
    """Perfect predictor for round-trip testing: gold span with margin +2 on
    answerable questions, no-answer with margin -2 otherwise."""
    _require_provenance(ds, "oracle predictor")
    by_qid: dict[str, SpanPrediction] = {}
    for inst in ds.instances:
        if inst.answerable:
            by_qid[inst.qid] = SpanPrediction(
                qid=inst.qid,
                text=inst.answer_text,
                char_span=inst.answer_char_span,
                span_score=1.0,
                null_score=-1.0,
            )
        else:
            by_qid[inst.qid] = SpanPrediction(
                qid=inst.qid, text="", char_span=None, span_score=-1.0, null_score=1.0
            )
    return PredictionSet(by_qid=by_qid, meta=_meta("oracle"))


def _content_tokens(text: str) -> set[str]:
    out = set()
    for raw in text.split():
        tok = _EDGE_PUNCT.sub("", raw).lower()
        if tok:
            out.add(tok)
    return out


def lexical_predict(ds: SpDataset) -> PredictionSet:
    """Deterministic baseline: answers every question with the expected
    entity span; span_score is the fraction of question content tokens found
    in the context window around that entity, null_score is fixed at 0.5."""
    _require_provenance(ds, "lexical predictor")
    by_qid: dict[str, SpanPrediction] = {}
    for inst in ds.instances:
        expected = inst.provenance.expected_entity
        token_spans = [m.span() for m in _WS_TOKEN.finditer(inst.context)]
        inside = [
            i
            for i, (s, e) in enumerate(token_spans)
            if s < expected.end and expected.start < e
        ]
        first, last = (inside[0], inside[-1]) if inside else (0, len(token_spans) - 1)
        lo = max(0, first - LEXICAL_WINDOW)
        hi = min(len(token_spans), last + 1 + LEXICAL_WINDOW)
        window_text = " ".join(inst.context[s:e] for s, e in token_spans[lo:hi])
        question_tokens = _content_tokens(inst.question)
        overlap = question_tokens & _content_tokens(window_text)
        ratio = len(overlap) / len(question_tokens) if question_tokens else 0.0
        by_qid[inst.qid] = SpanPrediction(
            qid=inst.qid,
            text=expected.slice(inst.context),
            char_span=expected,
            span_score=ratio,
            null_score=LEXICAL_NULL_SCORE,
        )
    return PredictionSet(by_qid=by_qid, meta=_meta("lexical"))


def _chunk(seq, size):
    for i in range(0, len(seq), size):
        yield seq[i : i + size]


def check_health(endpoint: str, timeout: float = 10.0, session=None) -> None:
    http = session or requests
    url = endpoint.rstrip("/") + "/v1/health"
    try:
        resp = http.get(url, timeout=timeout)
    except requests.RequestException as e:
        raise ProtocolError(f"health check failed for {url}: {e}") from e
    if resp.status_code != 200 or resp.json().get("status") != "ok":
        raise ProtocolError(f"health check failed for {url}: HTTP {resp.status_code}")


def remote_predict(
    endpoint: str,
    ds: SpDataset,
    batch_size: int = 32,
    max_in_flight: int = 4,
    max_retries: int = 2,
    timeout: float = 60.0,
) -> PredictionSet:
    """Fetch predictions over the wire protocol.

    Batches run with up to max_in_flight outstanding requests; results are
    keyed by qid, so output is independent of batch size, concurrency and
    arrival order. Failed batches are retried up to max_retries times.
    """
    if batch_size < 1 or max_in_flight < 1:
        raise ProtocolError("batch_size and max_in_flight must be >= 1")
    base = endpoint.rstrip("/")
    session = requests.Session()
    check_health(base, session=session)

    def fetch(batch) -> list[dict]:
        body = {
            "items": [
                {"id": inst.qid, "context": inst.context, "question": inst.question}
                for inst in batch
            ]
        }
        last_err: Exception | None = None
        for attempt in range(max_retries + 1):
            if attempt:
                time.sleep(min(0.25 * attempt, 2.0))
            try:
                resp = session.post(base + "/v1/predict", json=body, timeout=timeout)
                resp.raise_for_status()
                payload = resp.json()
                if not isinstance(payload, dict) or not isinstance(
                    payload.get("predictions"), list
                ):
                    raise ProtocolError("response missing predictions list")
                return payload["predictions"]
            except (requests.RequestException, ValueError, ProtocolError) as e:
                last_err = e
        raise ProtocolError(
            f"predict request failed after {max_retries + 1} attempt(s): {last_err}"
        )

    batches = list(_chunk(ds.instances, batch_size))
    by_qid: dict[str, SpanPrediction] = {}
    server_errors: dict[str, str] = {}
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        for batch, preds in zip(batches, pool.map(fetch, batches)):
            requested = {inst.qid for inst in batch}
            for rec in preds:
                if not isinstance(rec, dict) or "id" not in rec:
                    raise ProtocolError("prediction record without id")
                qid = rec["id"]
                if qid not in requested:
                    raise ProtocolError(f"server returned unknown qid: {qid!r}")
                if "error" in rec:
                    server_errors[qid] = str(rec["error"])
                    continue
                by_qid[qid] = _prediction_from_record(qid, rec)

    missing = sorted(ds.qids() - by_qid.keys())
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        detail = ""
        if server_errors:
            qid = next(iter(sorted(server_errors)))
            detail = f"; server reported errors (e.g. {qid}: {server_errors[qid]})"
        raise PredictionError(
            f"incomplete coverage: {len(missing)} qid(s) without prediction ({shown}){detail}"
        )
    return PredictionSet(by_qid=by_qid, meta=_meta(f"remote:{base}"))
