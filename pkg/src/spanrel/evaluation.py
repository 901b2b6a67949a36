"""Scoring: TACRED-style micro P/R/F1, CRE binary accuracies, and the
OR/AND/single-question ablation report."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .decoding import (
    DecodeResult,
    DecodingConfig,
    ProvenanceIndex,
    ThresholdTable,
    decode_dataset,
)
from .errors import DatasetError
from .predictors import PredictionSet
from .reduction import RcInstance
from .schema import RelationSchema


@dataclass(frozen=True)
class RcMetrics:
    precision: float
    recall: float
    f1: float
    gold_positive: int
    pred_positive: int
    correct: int

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": {
                "gold_positive": self.gold_positive,
                "pred_positive": self.pred_positive,
                "correct": self.correct,
            },
        }


@dataclass(frozen=True)
class CreMetrics:
    """Acc+ / Acc- / Acc; a class accuracy is None when the class is empty."""

    acc_pos: float | None
    acc_neg: float | None
    acc: float
    n_pos: int
    n_neg: int

    def as_dict(self) -> dict:
        return {
            "acc_pos": self.acc_pos,
            "acc_neg": self.acc_neg,
            "acc": self.acc,
            "counts": {"n_pos": self.n_pos, "n_neg": self.n_neg},
        }


def _check_ids(gold: Mapping, pred: Mapping) -> None:
    if gold.keys() != pred.keys():
        diff = sorted(gold.keys() ^ pred.keys())
        shown = ", ".join(str(d) for d in diff[:5]) + (" ..." if len(diff) > 5 else "")
        raise DatasetError(f"gold/pred id mismatch: {shown}")


def evaluate_rc(
    gold: Mapping[str, str], pred: Mapping[str, str], null_label: str = "no_relation"
) -> RcMetrics:
    """Micro-averaged precision/recall/F1 over the non-null labels, the
    standard TACRED scoring convention; 0/0 is defined as 0."""
    _check_ids(gold, pred)
    gold_positive = sum(1 for v in gold.values() if v != null_label)
    pred_positive = sum(1 for v in pred.values() if v != null_label)
    correct = sum(
        1 for k, v in gold.items() if v != null_label and pred[k] == v
    )
    precision = correct / pred_positive if pred_positive else 0.0
    recall = correct / gold_positive if gold_positive else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return RcMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        gold_positive=gold_positive,
        pred_positive=pred_positive,
        correct=correct,
    )


def evaluate_cre(gold: Mapping[str, bool], pred: Mapping[str, bool]) -> CreMetrics:
    """Binary found/not-found accuracies: per-class Acc+ and Acc-, plus the
    count-weighted overall Acc."""
    _check_ids(gold, pred)
    if not gold:
        raise DatasetError("cannot evaluate an empty id set")
    n_pos = sum(1 for v in gold.values() if v)
    n_neg = len(gold) - n_pos
    correct_pos = sum(1 for k, v in gold.items() if v and pred[k])
    correct_neg = sum(1 for k, v in gold.items() if not v and not pred[k])
    return CreMetrics(
        acc_pos=correct_pos / n_pos if n_pos else None,
        acc_neg=correct_neg / n_neg if n_neg else None,
        acc=(correct_pos + correct_neg) / (n_pos + n_neg),
        n_pos=n_pos,
        n_neg=n_neg,
    )


ABLATION_ROWS = (
    ("OR", DecodingConfig(mode="OR", directions="both")),
    ("AND", DecodingConfig(mode="AND", directions="both")),
    ("Single Question", DecodingConfig(mode="OR", directions="fwd_only")),
)


@dataclass
class AblationReport:
    rows: list[tuple[str, RcMetrics]]
    and_subset_of_or: bool
    fwd_only_subset_of_or: bool
    multi_present: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "rows": [
                {"label": label, **metrics.as_dict()} for label, metrics in self.rows
            ],
            "subset_laws": {
                "and_subset_of_or": self.and_subset_of_or,
                "fwd_only_subset_of_or": self.fwd_only_subset_of_or,
            },
            "multi_present": self.multi_present,
        }

    def render_text(self) -> str:
        width = max(len(label) for label, _ in self.rows)
        lines = [f"{'Model':<{width}}  {'P':>7} {'R':>7} {'F1':>7}"]
        for label, m in self.rows:
            lines.append(
                f"{label:<{width}}  {m.precision:>7.4f} {m.recall:>7.4f} {m.f1:>7.4f}"
            )
        lines.append("")
        lines.append(f"AND-present subset of OR-present: {self.and_subset_of_or}")
        lines.append(f"fwd_only-present subset of OR-present: {self.fwd_only_subset_of_or}")
        return "\n".join(lines)


def present_pairs(result: DecodeResult) -> set[tuple[str, str]]:
    return {
        (rc_id, v.relation)
        for rc_id, verdicts in result.verdicts.items()
        for v in verdicts
        if v.present
    }


def gold_labels(rc_instances: Sequence[RcInstance], null_label: str) -> dict[str, str]:
    """Effective gold label per rc id; CRE gold=False records count as null."""
    return {
        rc.id: rc.relation if rc.gold is not False else null_label for rc in rc_instances
    }


def ablation_report(
    rc_instances: Sequence[RcInstance],
    schema: RelationSchema,
    index: ProvenanceIndex,
    preds: PredictionSet,
    thresholds: ThresholdTable,
    forced_choice: bool = False,
    workers: int = 1,
) -> AblationReport:
    """One decode+evaluate pass per configuration (OR/both, AND/both,
    OR/fwd_only) plus the subset-law checks."""
    gold = gold_labels(rc_instances, schema.null_label)
    rows: list[tuple[str, RcMetrics]] = []
    presents: dict[str, set[tuple[str, str]]] = {}
    multi: dict[str, int] = {}
    for label, base in ABLATION_ROWS:
        config = DecodingConfig(
            mode=base.mode, directions=base.directions, forced_choice=forced_choice
        )
        result = decode_dataset(
            rc_instances, schema, index, preds, thresholds, config, workers=workers
        )
        rows.append((label, evaluate_rc(gold, result.labels, schema.null_label)))
        presents[label] = present_pairs(result)
        multi[label] = result.multi_present
    return AblationReport(
        rows=rows,
        and_subset_of_or=presents["AND"] <= presents["OR"],
        fwd_only_subset_of_or=presents["Single Question"] <= presents["OR"],
        multi_present=multi,
    )
