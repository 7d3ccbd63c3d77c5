"""Evaluation protocols: decode rule + strict/macro/micro scores for typing,
MAP over leaf types for entity-level ranking, and original vs normalized
linking accuracy.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, LengthMismatch


def figer_decode(probs):
    """Decode per-type probabilities into a type set.

    Always keeps the argmax type (ties go to the lowest id) and adds every
    type with probability above 0.5; the result is never empty.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size < 1:
        raise ValueError(f"expected a non-empty probability vector, got "
                         f"shape {probs.shape}")
    pred = {int(np.argmax(probs))}
    pred.update(int(j) for j in np.nonzero(probs > 0.5)[0])
    return pred


def _check_aligned(preds, golds):
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} golds")
    if not preds:
        raise LengthMismatch("empty evaluation set")


def strict_accuracy(preds, golds):
    """Fraction of mentions whose predicted set equals the gold set exactly."""
    _check_aligned(preds, golds)
    return sum(set(p) == set(g) for p, g in zip(preds, golds)) / len(preds)


def _prf(pred, gold):
    pred, gold = set(pred), set(gold)
    if not pred and not gold:
        return 1.0, 1.0
    tp = len(pred & gold)
    p = tp / len(pred) if pred else 0.0
    r = tp / len(gold) if gold else 0.0
    return p, r


def macro_f1(preds, golds):
    """Mean over mentions of the per-mention F1 (Ling & Weld convention)."""
    _check_aligned(preds, golds)
    total = 0.0
    for pred, gold in zip(preds, golds):
        p, r = _prf(pred, gold)
        total += 2 * p * r / (p + r) if p + r > 0 else 0.0
    return total / len(preds)


def micro_f1(preds, golds):
    """F1 over true/false positives pooled across all mentions."""
    _check_aligned(preds, golds)
    tp = fp = fn = 0
    for pred, gold in zip(preds, golds):
        pred, gold = set(pred), set(gold)
        tp += len(pred & gold)
        fp += len(pred - gold)
        fn += len(gold - pred)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def average_precision(scores, gold):
    """Interpolation-free AP of one ranking: sum of precision@hit / #positives.

    Ties rank by ascending item index, deterministically.
    """
    scores = np.asarray(scores, dtype=np.float64)
    gold = np.asarray(gold, dtype=bool)
    n_pos = int(gold.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.lexsort((np.arange(scores.size), -scores))
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if gold[idx]:
            hits += 1
            total += hits / rank
    return total / n_pos


def mean_average_precision(scores, golds, leaf_mask):
    """MAP over masked (leaf) types: rank entities per type, average the APs.

    scores and golds are (n_entities, n_types); types outside the mask or
    with zero gold positives are skipped.
    """
    scores = np.asarray(scores, dtype=np.float64)
    golds = np.asarray(golds, dtype=bool)
    leaf_mask = np.asarray(leaf_mask, dtype=bool)
    if scores.shape != golds.shape or scores.shape[1] != leaf_mask.size:
        raise LengthMismatch(f"scores {scores.shape}, golds {golds.shape}, "
                             f"mask {leaf_mask.shape}")
    if not leaf_mask.any():
        raise EmptyMask("leaf mask selects no types")
    per_type = {}
    for t in np.nonzero(leaf_mask)[0]:
        if golds[:, t].any():
            per_type[int(t)] = average_precision(scores[:, t], golds[:, t])
    if not per_type:
        raise EmptyMask("no masked type has a gold positive")
    return sum(per_type.values()) / len(per_type), per_type


def linking_accuracy(preds, golds, gold_in_set):
    """(original, normalized) linking accuracy.

    Original counts alias-table misses as wrong; normalized restricts to
    mentions whose candidate set contains the gold entity.
    """
    _check_aligned(preds, golds)
    if len(gold_in_set) != len(preds):
        raise LengthMismatch("gold_in_set length differs from predictions")
    correct = sum(p == g for p, g in zip(preds, golds))
    hits = sum(bool(h) for h in gold_in_set)
    original = correct / len(preds)
    normalized = correct / hits if hits else 0.0
    return original, normalized


@dataclass
class EvalReport:
    task: str
    scores: dict = field(default_factory=dict)
    per_type_ap: dict | None = None
    predictions: list = field(default_factory=list)

    def to_json(self, include_predictions=True):
        obj = {"task": self.task, "scores": self.scores}
        if self.per_type_ap is not None:
            obj["per_type_ap"] = self.per_type_ap
        if include_predictions:
            obj["predictions"] = self.predictions
        return json.dumps(obj, sort_keys=True)

    def dump_tsv(self, path):
        """Per-mention prediction dump for error analysis."""
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.predictions:
                fh.write("\t".join(str(v) for v in row) + "\n")
