"""Span-level NER scores, relation scores and mention-type accuracy."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    n_pred: int
    n_gold: int
    n_correct: int

    @classmethod
    def from_counts(cls, n_pred: int, n_gold: int, n_correct: int) -> "Metrics":
        p = n_correct / n_pred if n_pred else 0.0
        r = n_correct / n_gold if n_gold else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f, n_pred, n_gold, n_correct)

    def to_dict(self) -> dict:
        return asdict(self)


def bio_spans(tags) -> set[tuple[int, int, int]]:
    """(start, end exclusive, type) spans from tag indices (0 = O, 1+2t = B-t, 2+2t = I-t).

    Lenient reading: an I-t that does not continue a t span opens a new one.
    """
    spans = set()
    start, typ = None, None
    for i, tag in enumerate(list(tags) + [0]):
        tag = int(tag)
        if tag == 0:
            kind, t = "O", None
        else:
            kind, t = ("B" if tag % 2 == 1 else "I"), (tag - 1) // 2
        continues = kind == "I" and typ == t
        if start is not None and not continues:
            spans.add((start, i, typ))
            start, typ = None, None
        if kind != "O" and not continues:
            start, typ = i, t
    return spans


def _check_aligned(pred, gold) -> None:
    if len(pred) != len(gold):
        raise InputError(f"{len(pred)} predicted sequences for {len(gold)} gold sequences")
    for k, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise InputError(f"sequence {k}: predicted length {len(p)} != gold length {len(g)}")


def eval_ner(pred, gold) -> Metrics:
    """Micro span P/R/F1; a span counts only with exact boundaries and type."""
    _check_aligned(pred, gold)
    n_pred = n_gold = n_ok = 0
    for p, g in zip(pred, gold):
        ps, gs = bio_spans(p), bio_spans(g)
        n_pred += len(ps)
        n_gold += len(gs)
        n_ok += len(ps & gs)
    return Metrics.from_counts(n_pred, n_gold, n_ok)


def eval_re(pred, gold, none_label: int = 0) -> Metrics:
    """Micro P/R/F1 over relations other than ``none_label``."""
    pred = np.asarray(pred, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if pred.shape != gold.shape:
        raise InputError(f"{pred.shape[0]} predictions for {gold.shape[0]} gold labels")
    n_pred = int(np.sum(pred != none_label))
    n_gold = int(np.sum(gold != none_label))
    n_ok = int(np.sum((pred == gold) & (gold != none_label)))
    return Metrics.from_counts(n_pred, n_gold, n_ok)


def mention_accuracy(pred, gold) -> float:
    """Share of gold mentions whose first token is predicted with the gold type.

    Boundaries are ignored, so this bounds the type decision alone; it is never
    lower than span recall.
    """
    _check_aligned(pred, gold)
    hit = total = 0
    for p, g in zip(pred, gold):
        for start, _, typ in bio_spans(g):
            total += 1
            tag = int(p[start])
            hit += tag > 0 and (tag - 1) // 2 == typ
    return hit / total if total else 0.0
