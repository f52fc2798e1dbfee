"""Scoring of extraction output against dual-coder annotations.

Two baselines are derived from the coders: the union and the intersection
of their label sets.  Predictions are scored against both with the exact
match ratio and the average Jaccard similarity; the (empty, empty) pair
counts as Jaccard 1 (perfect agreement on absence).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import AnnotationRecord


def exact_match_ratio(pred: Sequence[frozenset], gold: Sequence[frozenset]) -> float:
    """Fraction of pairs whose sets are identical."""
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gold)}")
    if not pred:
        raise ValueError("need at least one pair")
    return sum(1 for p, g in zip(pred, gold) if set(p) == set(g)) / len(pred)


def jaccard(a: frozenset, b: frozenset) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def average_jaccard(pred: Sequence[frozenset], gold: Sequence[frozenset]) -> float:
    """Mean intersection-over-union across pairs."""
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gold)}")
    if not pred:
        raise ValueError("need at least one pair")
    return sum(jaccard(p, g) for p, g in zip(pred, gold)) / len(pred)


@dataclass(frozen=True)
class Baselines:
    union: list  # per record, coder_a | coder_b
    intersection: list  # per record, coder_a & coder_b
    agreement: float  # exact-match rate between the two coders


def build_baselines(annotations: Sequence[AnnotationRecord]) -> Baselines:
    if not annotations:
        raise ValueError("no annotations")
    union = [frozenset(a.coder_a | a.coder_b) for a in annotations]
    inter = [frozenset(a.coder_a & a.coder_b) for a in annotations]
    agreement = exact_match_ratio([a.coder_a for a in annotations],
                                  [a.coder_b for a in annotations])
    return Baselines(union=union, intersection=inter, agreement=agreement)


@dataclass(frozen=True)
class EvalReport:
    n: int
    accuracy_union: float
    accuracy_intersection: float
    jaccard_union: float
    jaccard_intersection: float
    intercoder_agreement: float
    per_record: tuple

    def to_obj(self) -> dict:
        return {
            "n": self.n,
            "accuracy_union": self.accuracy_union,
            "accuracy_intersection": self.accuracy_intersection,
            "jaccard_union": self.jaccard_union,
            "jaccard_intersection": self.jaccard_intersection,
            "intercoder_agreement": self.intercoder_agreement,
            "per_record": [dict(r) for r in self.per_record],
        }


def evaluate(predictions: Mapping[str, frozenset],
             annotations: Sequence[AnnotationRecord]) -> EvalReport:
    """Score predicted mention sets against both coder baselines.

    Every annotated publication must have a prediction; a missing id means
    the inputs do not belong to the same corpus run.
    """
    missing = [a.publication_id for a in annotations if a.publication_id not in predictions]
    if missing:
        raise ValueError(f"no prediction for annotated records: {missing[:5]}")
    base = build_baselines(annotations)
    pred = [frozenset(predictions[a.publication_id]) for a in annotations]
    per_record = tuple(
        {
            "id": a.publication_id,
            "predicted": sorted(pred[i]),
            "gold_union": sorted(base.union[i]),
            "gold_intersection": sorted(base.intersection[i]),
            "jaccard": jaccard(pred[i], base.union[i]),
        }
        for i, a in enumerate(annotations)
    )
    return EvalReport(
        n=len(annotations),
        accuracy_union=exact_match_ratio(pred, base.union),
        accuracy_intersection=exact_match_ratio(pred, base.intersection),
        jaccard_union=average_jaccard(pred, base.union),
        jaccard_intersection=average_jaccard(pred, base.intersection),
        intercoder_agreement=base.agreement,
        per_record=per_record,
    )


def write_report(report: EvalReport, path, config_hash: str | None = None) -> None:
    obj = report.to_obj()
    if config_hash:
        obj["config_hash"] = config_hash
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")
