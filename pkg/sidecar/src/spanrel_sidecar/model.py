"""Extractive QA backends.

Two backends share one interface: predict_one(context, question) returns a
ModelAnswer whose offsets always index the exact request context. The
builtin "overlap" model is a deterministic lexical scorer used as the
default and for golden fixtures; the "hf" backend wraps any locally
available transformers question-answering checkpoint.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass


class ModelError(Exception):
    """Per-item prediction failure (reported with the item id, not fatal)."""


@dataclass(frozen=True)
class ModelAnswer:
    text: str
    start_char: int
    end_char: int
    span_score: float
    null_score: float


_TOKEN = re.compile(r"\S+")
_EDGE_PUNCT = re.compile(r"^\W+|\W+$", re.UNICODE)

# candidate answers are token n-grams up to this length
MAX_ANSWER_TOKENS = 5
# context tokens on each side of a candidate that count as its window
WINDOW_TOKENS = 4
NULL_SCORE = 0.35


def _norm(token: str) -> str:
    return _EDGE_PUNCT.sub("", token).lower()


def _norm_set(tokens) -> set[str]:
    return {n for n in (_norm(t) for t in tokens) if n}


class OverlapModel:
    """Deterministic lexical span scorer.

    A candidate span scores by how much its surrounding window shares
    vocabulary with the question, with a small bonus for name- or
    number-shaped spans, a penalty for long spans, and a penalty for spans
    that merely repeat question words. Pure float arithmetic; identical
    inputs give bit-identical scores.
    """

    name = "builtin:overlap"

    def predict_one(self, context: str, question: str) -> ModelAnswer:
        token_spans = [m.span() for m in _TOKEN.finditer(context)]
        if not token_spans:
            raise ModelError("empty context")
        tokens = [context[s:e] for s, e in token_spans]
        question_set = _norm_set(question.split())

        best: tuple[float, int, int] | None = None
        best_span = (0, 0)
        n = len(token_spans)
        for i in range(n):
            for j in range(i, min(i + MAX_ANSWER_TOKENS, n)):
                cand_set = _norm_set(tokens[i : j + 1])
                if not cand_set:
                    continue
                window = tokens[max(0, i - WINDOW_TOKENS) : i] + tokens[j + 1 : j + 1 + WINDOW_TOKENS]
                window_set = _norm_set(window)
                window_overlap = (
                    len(question_set & window_set) / len(question_set) if question_set else 0.0
                )
                echo = (
                    len(question_set & cand_set) / len(cand_set) if cand_set else 0.0
                )
                shaped = all(t[:1].isupper() or t[:1].isdigit() for t in tokens[i : j + 1])
                score = (
                    window_overlap
                    + (0.2 if shaped else 0.0)
                    - 0.3 * echo
                    - 0.05 * (j - i)
                )
                # prefer higher score, then earlier, then shorter
                key = (-score, token_spans[i][0], token_spans[j][1])
                if best is None or key < best:
                    best = key
                    best_span = (token_spans[i][0], token_spans[j][1])
        start, end = best_span
        return ModelAnswer(
            text=context[start:end],
            start_char=start,
            end_char=end,
            span_score=-best[0],
            null_score=NULL_SCORE,
        )


class TransformersModel:
    """Wraps a local transformers extractive QA checkpoint.

    Scoring follows the SQuAD 2.0 null-odds convention: span_score is the
    best non-null start+end logit sum, null_score is the CLS start+end
    logit sum. Inference is serialized behind a lock; no sampling anywhere,
    so outputs are deterministic for a fixed checkpoint.
    """

    MAX_ANSWER_TOKENS = 30

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModelForQuestionAnswering, AutoTokenizer
        except ImportError as e:  # pragma: no cover - optional dependency
            raise ModelError(
                f"transformers backend unavailable: {e}; install the 'hf' extra"
            ) from e
        self.name = model_id
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForQuestionAnswering.from_pretrained(model_id)
        self._model.to(device)
        self._model.eval()
        self._device = device
        self._lock = threading.Lock()

    def predict_one(self, context: str, question: str) -> ModelAnswer:
        if not context.strip():
            raise ModelError("empty context")
        torch = self._torch
        enc = self._tokenizer(
            question,
            context,
            return_offsets_mapping=True,
            return_tensors="pt",
            truncation="only_second",
            max_length=getattr(self._tokenizer, "model_max_length", 512),
        )
        offsets = enc.pop("offset_mapping")[0].tolist()
        sequence_ids = enc.sequence_ids(0)
        with self._lock, torch.no_grad():
            out = self._model(**{k: v.to(self._device) for k, v in enc.items()})
        start_logits = out.start_logits[0].tolist()
        end_logits = out.end_logits[0].tolist()

        null_score = start_logits[0] + end_logits[0]
        best = None
        context_positions = [
            k for k, sid in enumerate(sequence_ids) if sid == 1 and offsets[k][0] != offsets[k][1]
        ]
        for si in context_positions:
            for ei in context_positions:
                if ei < si or ei - si + 1 > self.MAX_ANSWER_TOKENS:
                    continue
                score = start_logits[si] + end_logits[ei]
                if best is None or score > best[0]:
                    best = (score, offsets[si][0], offsets[ei][1])
        if best is None:
            raise ModelError("context produced no scorable tokens")
        score, start, end = best
        return ModelAnswer(
            text=context[start:end],
            start_char=start,
            end_char=end,
            span_score=float(score),
            null_score=float(null_score),
        )


def load_model(identifier: str, device: str = "cpu"):
    """Resolve a model identifier: "builtin:overlap" or any local
    transformers checkpoint path / hub id."""
    if identifier == "builtin:overlap":
        return OverlapModel()
    return TransformersModel(identifier, device=device)


def predict_batch(model, items: list[dict]) -> list[dict]:
    """One result per item, in order; failures become error records with the
    item's id instead of aborting the batch."""
    results: list[dict] = []
    for item in items:
        try:
            answer = model.predict_one(item["context"], item["question"])
            results.append(
                {
                    "id": item["id"],
                    "text": answer.text,
                    "start_char": answer.start_char,
                    "end_char": answer.end_char,
                    "span_score": answer.span_score,
                    "null_score": answer.null_score,
                }
            )
        except ModelError as e:
            results.append({"id": item["id"], "error": str(e)})
    return results
