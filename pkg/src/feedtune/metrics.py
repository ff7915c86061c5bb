"""Evaluation metrics: accuracy, top-K error, Pearson, demographic parity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

import numpy as np

KINDS = ("accuracy", "error", "top_k_accuracy", "top_k_error", "pearson", "demographic_parity")


@dataclass(frozen=True)
class MetricSpec:
    """One metric, or a tuple of metrics when ``components`` is given.

    ``kind`` names a single metric; ``k`` applies to the top-K kinds. A
    composite spec (``kind="tuple"``) evaluates every component in order.
    """

    kind: str = "accuracy"
    k: int = 1
    components: tuple["MetricSpec", ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind == "tuple":
            if not self.components:
                raise ValueError("tuple metric needs components")
        elif self.kind not in KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("top-K needs K >= 1")

    @classmethod
    def tuple_of(cls, *specs: "MetricSpec") -> "MetricSpec":
        return cls(kind="tuple", components=tuple(specs))

    @classmethod
    def parse(cls, text: str) -> "MetricSpec":
        """Parse ``"accuracy"``, ``"top_k_error:5"`` or ``"accuracy+demographic_parity"``."""
        parts = [p.strip() for p in text.split("+")]
        specs = []
        for part in parts:
            name, _, k = part.partition(":")
            specs.append(cls(kind=name, k=int(k) if k else 1))
        return specs[0] if len(specs) == 1 else cls.tuple_of(*specs)

    @property
    def leaves(self) -> tuple["MetricSpec", ...]:
        return self.components if self.kind == "tuple" else (self,)

    @property
    def higher_is_better(self) -> tuple[bool, ...]:
        return tuple(m.kind in ("accuracy", "top_k_accuracy", "pearson") for m in self.leaves)

    @property
    def needs_sensitive(self) -> bool:
        return any(m.kind == "demographic_parity" for m in self.leaves)

    def __str__(self) -> str:
        def one(m):
            return f"{m.kind}:{m.k}" if m.kind.startswith("top_k") else m.kind

        return "+".join(one(m) for m in self.leaves)


def hard_predictions(outputs: np.ndarray) -> np.ndarray:
    """Class ids from model outputs; a single column is a binary logit."""
    outputs = np.asarray(outputs)
    if outputs.ndim == 1 or outputs.shape[1] == 1:
        return (outputs.reshape(-1) > 0).astype(np.int64)
    return np.argmax(outputs, axis=1)


def accuracy(pred, labels) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    return float(np.mean(pred == labels))


def top_k_error(scores: np.ndarray, labels, k: int) -> float:
    """Fraction of rows whose label is not among the ``k`` highest scores.

    Ties at the boundary go to the lower class index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2:
        raise ValueError("top-K needs a class-score matrix")
    n_classes = scores.shape[1]
    if not 1 <= k <= n_classes:
        raise ValueError(f"K={k} outside 1..{n_classes}")
    true = scores[np.arange(len(labels)), labels]
    idx = np.arange(n_classes)
    # rank of the true class: strictly better scores, plus equal scores at lower index
    above = (scores > true[:, None]) | ((scores == true[:, None]) & (idx[None, :] < labels[:, None]))
    rank = above.sum(axis=1)
    return float(np.mean(rank >= k))


def pearson(pred, targets) -> float:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    pc = pred - pred.mean()
    tc = targets - targets.mean()
    denom = math.sqrt(float(pc @ pc) * float(tc @ tc))
    if denom == 0.0:
        raise ValueError("Pearson correlation undefined for zero-variance input")
    return float(np.clip(pc @ tc / denom, -1.0, 1.0))


def demographic_parity(pred, sensitive) -> float:
    """``|P(pred=1 | z=1) - P(pred=1 | z=0)|`` on hard predictions."""
    pred = np.asarray(pred).reshape(-1)
    z = np.asarray(sensitive).reshape(-1).astype(bool)
    if z.all() or not z.any():
        raise ValueError("demographic parity needs both sensitive groups non-empty")
    return float(abs(np.mean(pred[z] == 1) - np.mean(pred[~z] == 1)))


def score_outputs(outputs: np.ndarray, labels, metric: MetricSpec, sensitive=None) -> tuple[float, ...]:
    """Score raw model outputs against labels under ``metric``."""
    out = []
    for m in metric.leaves:
        if m.kind in ("accuracy", "error"):
            acc = accuracy(hard_predictions(outputs), labels)
            out.append(acc if m.kind == "accuracy" else 1.0 - acc)
        elif m.kind in ("top_k_accuracy", "top_k_error"):
            err = top_k_error(outputs, labels, m.k)
            out.append(err if m.kind == "top_k_error" else 1.0 - err)
        elif m.kind == "pearson":
            out.append(pearson(outputs, labels))
        elif m.kind == "demographic_parity":
            if sensitive is None:
                raise ValueError("demographic parity requested without a sensitive attribute")
            out.append(demographic_parity(hard_predictions(outputs), sensitive))
    return tuple(out)


def quantize_feedback(score: float, decimals="full") -> float:
    """Round half away from zero to ``decimals`` places; ``"full"`` keeps the value."""
    if decimals in ("full", None):
        return float(score)
    d = int(decimals)
    if d < 0:
        raise ValueError("decimals must be >= 0")
    q = Decimal(repr(float(score))).quantize(Decimal(1).scaleb(-d), rounding=ROUND_HALF_UP)
    return float(q)


def quantize_all(scores: Sequence[float], decimals="full") -> tuple[float, ...]:
    return tuple(quantize_feedback(s, decimals) for s in scores)
