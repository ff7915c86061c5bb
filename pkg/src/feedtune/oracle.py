"""The data holder: a budgeted evaluation oracle over support/holdout splits."""
from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass

import numpy as np

from .channel import BudgetExhausted, ProtocolError
from .metrics import MetricSpec, quantize_all, score_outputs
from .models import LabeledDataset, MlpModel, forward, forward_from, pack_parameters, resolve_selection, unpack_parameters
from .params import make_rng


@dataclass(frozen=True)
class FeedbackRecord:
    query_id: int
    digest: int  # 64-bit hash of the submitted parameter bytes
    scores: tuple
    timestamp: float


def parameter_digest(theta) -> int:
    raw = np.ascontiguousarray(theta, dtype=np.float64).tobytes()
    return int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(), "little")


def split_dataset(dataset: LabeledDataset, support_fraction: float, seed: int = 0):
    """Shuffle with ``seed`` then cut; the support split gets ``floor(n * fraction)`` rows."""
    if not 0.0 < support_fraction < 1.0:
        raise ValueError("support fraction must lie strictly between 0 and 1")
    n = len(dataset)
    n_sup = int(np.floor(n * support_fraction))
    if n_sup < 1 or n_sup >= n:
        raise ValueError(f"split of {n} rows at {support_fraction} leaves an empty side")
    perm = make_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_sup])), dataset.subset(np.sort(perm[n_sup:]))


class FeedbackOracle:
    """Evaluates submitted tunable parameters on the support split.

    Scores are quantised before they leave the holder. The holdout split is
    reachable only through :meth:`final_report`, once, after the run.
    """

    def __init__(self, template: MlpModel, selection, support: LabeledDataset, holdout: LabeledDataset,
                 metric: MetricSpec | str = "accuracy", budget: int = 0, decimals="full"):
        self.template = template.copy()
        self.selection = selection
        self.metric = MetricSpec.parse(metric) if isinstance(metric, str) else metric
        self.support = support
        self.holdout = holdout
        self.budget = int(budget)
        self.remaining = int(budget)
        self.decimals = decimals
        self.log: list[FeedbackRecord] = []
        self.dim = pack_parameters(template, selection)[0].size
        self._finished = False
        self._reported = False
        self._lock = threading.Lock()
        if self.metric.needs_sensitive and (support.sensitive is None or holdout.sensitive is None):
            raise ValueError("fairness metric needs a sensitive attribute on both splits")
        # layers below the first tunable one are frozen, so their activations are cached
        self._start = min(int(n.split(".")[0]) for n in resolve_selection(template, selection))
        self._cache = {id(d): self._frozen_activations(d) for d in (support, holdout)}

    def _frozen_activations(self, data: LabeledDataset) -> np.ndarray:
        head = MlpModel(self.template.layers[: self._start]) if self._start else None
        return forward(head, data.features) if head else data.features

    def initial_parameters(self) -> np.ndarray:
        return pack_parameters(self.template, self.selection)[0]

    def _score(self, theta, data: LabeledDataset) -> tuple:
        model = unpack_parameters(self.template, theta, self.selection)
        outputs = forward_from(model, self._cache[id(data)], self._start)
        return score_outputs(outputs, data.labels, self.metric, data.sensitive)

    def submit(self, theta) -> tuple:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.dim:
            raise ProtocolError("dim_mismatch", f"expected {self.dim} parameters, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise ProtocolError("non_finite", "candidate contains NaN or Inf")
        with self._lock:
            if self._finished or self.remaining < 1:
                raise BudgetExhausted("budget_exhausted")
            scores = quantize_all(self._score(theta, self.support), self.decimals)
            self.remaining -= 1
            self.log.append(FeedbackRecord(len(self.log) + 1, parameter_digest(theta), scores, time.time()))
        return scores

    def finish(self) -> None:
        """Mark the run as over; no further queries are accepted."""
        self._finished = True

    @property
    def spent(self) -> int:
        return self.budget - self.remaining

    def final_report(self, theta) -> tuple[tuple, tuple]:
        """Un-quantised ``(support_scores, holdout_scores)``; callable once, after the run."""
        if not (self._finished or self.remaining == 0):
            raise RuntimeError("final report requested before the run finished")
        if self._reported:
            raise RuntimeError("final report already issued")
        self._reported = True
        self._finished = True
        return self._score(theta, self.support), self._score(theta, self.holdout)
