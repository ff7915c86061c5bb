"""Layerwise coordinate parameter search.

Each iteration has two stages. Stage 1 gives every layer one antithetic unit
update of ``u`` queries and charges one more query to evaluate the committed
model; the clipped average improvement of each layer feeds its importance
``alpha``. Stage 2 spends the rest of the batch on unit updates of layers
drawn from ``softmax(alpha)``. The scheduler is an Exp3-style bandit, and
:class:`RegretLedger` keeps the bookkeeping needed to check its regret bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .channel import BudgetExhausted, FeedbackChannel
from .nes import SearchDistribution, draw_batch, estimate_gradient, normalize_feedbacks
from .params import LayerPartition, as_parameters, split_rng
from .pps import IterationRecord, PpsConfig, _Meter, _finish


@dataclass(frozen=True)
class ImportanceState:
    alpha: np.ndarray
    gamma: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.array(self.alpha, dtype=np.float64))
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @classmethod
    def uniform(cls, n_layers: int, gamma: float = 0.0, beta: float = 1.0) -> "ImportanceState":
        return cls(np.zeros(n_layers), gamma, beta)

    @property
    def probs(self) -> np.ndarray:
        return layer_probabilities(self)


def layer_probabilities(state: ImportanceState) -> np.ndarray:
    """``(1 - gamma) * softmax(alpha) + gamma / H``."""
    alpha = state.alpha
    n = alpha.size
    if n < 1:
        raise ValueError("need at least one layer")
    w = np.exp(alpha - alpha.max())
    p = (1.0 - state.gamma) * w / w.sum() + state.gamma / n
    return p / p.sum()


def average_improvement(batch_scores, e_hat_prev: float) -> float:
    """``max(0, mean(batch_scores) - e_hat_prev)``."""
    return max(0.0, float(np.mean(batch_scores)) - float(e_hat_prev))


def committed_improvement(batch_scores, e_hat_new: float) -> float:
    """``max(0, e_hat_new - mean(batch_scores))``: committed score over the batch it came from."""
    return max(0.0, float(e_hat_new) - float(np.mean(batch_scores)))


def update_importance(state: ImportanceState, h: int, improvement: float, beta: Optional[float] = None) -> ImportanceState:
    """Raise ``alpha_h`` (1-based ``h``) by ``beta * improvement``."""
    if improvement < 0:
        raise ValueError("improvement must be non-negative")
    if not 1 <= h <= state.alpha.size:
        raise IndexError(f"layer {h} out of range")
    beta = state.beta if beta is None else beta
    alpha = state.alpha.copy()
    alpha[h - 1] += beta * improvement
    return replace(state, alpha=alpha)


def optimal_beta(n_layers: int, max_gain: float) -> float:
    """Step size minimising the regret bound: ``sqrt(ln H / ((e - 2) G))``."""
    if n_layers < 2:
        raise ValueError("optimal beta needs at least two layers (ln 1 = 0)")
    if not max_gain > 0:
        raise ValueError("predicted gain must be positive")
    return math.sqrt(math.log(n_layers) / ((math.e - 2.0) * max_gain))


@dataclass
class RegretLedger:
    """Per-iteration improvements, stage-2 probabilities and picks.

    ``stage2_units`` is the realised number of stage-2 unit updates per
    iteration; ``c = (b - H u) / u`` is the constant used by the bound.
    """

    n_layers: int
    stage2_units: int
    c: float
    improvements: list[np.ndarray] = field(default_factory=list)
    probs: list[np.ndarray] = field(default_factory=list)
    picks: list[list[int]] = field(default_factory=list)

    def record(self, improvements, probs, picks) -> None:
        imp = np.asarray(improvements, dtype=np.float64)
        if np.any(imp < 0) or np.any(imp > 1):
            raise ValueError("improvements must be normalised to [0, 1]")
        self.improvements.append(imp.copy())
        self.probs.append(np.asarray(probs, dtype=np.float64).copy())
        self.picks.append([int(h) for h in picks])

    @property
    def horizon(self) -> int:
        return len(self.improvements)

    @property
    def g_lcps(self) -> float:
        """Realised gain: every layer once, plus each stage-2 pick (1-based layers)."""
        total = 0.0
        for imp, picks in zip(self.improvements, self.picks):
            total += imp.sum() + sum(imp[h - 1] for h in picks)
        return float(total)

    @property
    def g_lcps_expected(self) -> float:
        return float(sum(imp.sum() + self.stage2_units * (p @ imp) for imp, p in zip(self.improvements, self.probs)))

    @property
    def g_max(self) -> float:
        """Hindsight gain of always spending stage 2 on the best layer of each iteration."""
        return float(sum(imp.sum() + self.stage2_units * imp.max() for imp in self.improvements))

    @property
    def regret(self) -> float:
        return self.g_max - self.g_lcps


def regret_bound(ledger: RegretLedger, beta: float, c: Optional[float] = None, n_layers: Optional[int] = None) -> float:
    """``(beta c (e - 2) + 1) G_max + (c / beta) ln H``."""
    c = ledger.c if c is None else c
    n_layers = ledger.n_layers if n_layers is None else n_layers
    if not c > 0:
        raise ValueError("c = (b - H u) / u must be positive; stage 2 is empty")
    if not beta > 0:
        raise ValueError("beta must be positive")
    return (beta * c * (math.e - 2.0) + 1.0) * ledger.g_max + (c / beta) * math.log(n_layers)


def run_bandit(reward_fn: Callable[[int, np.ndarray], np.ndarray], n_layers: int, horizon: int, beta: float,
               stage2_units: int, c: Optional[float] = None, seed: int = 0) -> RegretLedger:
    """Run the layer scheduler alone against ``reward_fn(t, probs) -> improvements``.

    ``reward_fn`` sees the sampling distribution before the update, so it may
    play adversarially. Rewards are clipped to ``[0, 1]``.
    """
    rng = split_rng(seed, 2)[1]
    state = ImportanceState.uniform(n_layers, 0.0, beta)
    ledger = RegretLedger(n_layers, stage2_units, float(stage2_units if c is None else c))
    for t in range(horizon):
        imp = np.clip(np.asarray(reward_fn(t, state.probs), dtype=np.float64), 0.0, 1.0)
        for h in range(1, n_layers + 1):
            state = update_importance(state, h, imp[h - 1])
        p = state.probs
        picks = (rng.choice(n_layers, size=stage2_units, p=p) + 1).tolist() if stage2_units else []
        ledger.record(imp, p, picks)
    return ledger


@dataclass
class LcpsConfig(PpsConfig):
    unit_size: int = 4
    beta: float = 1.0
    gamma: float = 0.0
    score_range: float = 1.0  # known span of the metric, used to map improvements into [0, 1]
    unit_sizes: Optional[dict] = None  # per-layer override keyed by layer name
    # "committed": I_h = max(0, E_hat_h - mean(unit batch)), credit for the step just taken.
    # "literal": I_h = max(0, mean(unit batch) - E_hat_{h-1}), stale for h=1 after stage 2.
    improvement: str = "committed"

    def units(self, partition: LayerPartition) -> list[int]:
        over = self.unit_sizes or {}
        return [int(over.get(name, self.unit_size)) for name in partition.names]

    def stage2_units(self, partition: LayerPartition) -> int:
        return max(0, (self.batch_size - sum(self.units(partition))) // self.unit_size)

    def c(self, partition: LayerPartition) -> float:
        return (self.batch_size - sum(self.units(partition))) / self.unit_size

    def validate_layers(self, partition: LayerPartition) -> None:
        if self.batch_size is None:
            raise ValueError("LCPS needs an explicit batch size")
        us = self.units(partition)
        if any(u < 2 or u % 2 for u in us) or self.unit_size < 2 or self.unit_size % 2:
            raise ValueError("unit sizes must be even and >= 2")
        need = sum(u + 1 for u in us)
        if self.batch_size < need:
            raise ValueError(f"batch size {self.batch_size} < H(u+1) = {need}")
        if not self.learning_rate > 0 or not self.sigma > 0 or not self.beta > 0:
            raise ValueError("learning rate, sigma and beta must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.improvement not in ("committed", "literal"):
            raise ValueError(f"unknown improvement rule {self.improvement!r}")
        if not self.score_range > 0:
            raise ValueError("score_range must be positive")

    def queries_per_iteration(self, partition: LayerPartition) -> int:
        return sum(u + 1 for u in self.units(partition)) + self.stage2_units(partition) * self.unit_size


def lcps_run(theta0, partition: LayerPartition, channel: FeedbackChannel, cfg: LcpsConfig):
    """Run LCPS; returns ``(best_theta, trace, ledger)``.

    ``trace.layer_queries`` maps layer names to total unit-update queries and
    ``trace.stage2_picks`` to stage-2 selections.
    """
    theta = as_parameters(theta0)
    if theta.size != partition.dim:
        raise ValueError("parameter vector does not match the partition")
    cfg.validate_layers(partition)
    H = len(partition)
    units = cfg.units(partition)
    n2 = cfg.stage2_units(partition)
    noise_rng, pick_rng = split_rng(cfg.seed, 2)
    meter = _Meter(channel, cfg.query_budget)
    ledger = RegretLedger(H, n2, cfg.c(partition))
    layer_queries = {name: 0 for name in partition.names}
    stage2_picks = {name: 0 for name in partition.names}
    meter.trace.layer_queries = layer_queries
    meter.trace.stage2_picks = stage2_picks
    meter.trace.unit_iterates = []
    if meter.budget < 1:
        return theta.copy(), meter.trace, ledger

    def unit_update(h: int) -> np.ndarray:
        nonlocal theta
        seg = partition.segment(h)
        u = units[h - 1]
        if meter.remaining < u:
            raise BudgetExhausted("not enough budget for a unit update")
        batch = draw_batch(SearchDistribution(theta[seg.slice], cfg.sigma), u, noise_rng)
        cands = np.repeat(theta[None, :], u, axis=0)
        cands[:, seg.slice] = batch.candidates
        raw = np.array([s[0] for s in meter.submit_batch(cands)])
        step = estimate_gradient(batch, normalize_feedbacks(raw), cfg.sigma)
        theta = theta.copy()
        theta[seg.slice] = theta[seg.slice] + cfg.learning_rate * step
        layer_queries[seg.name] += u
        meter.trace.unit_iterates.append(theta.copy())
        return raw

    e_hat = meter.submit(theta)[0]
    meter.trace.initial_score = e_hat
    state = ImportanceState.uniform(H, cfg.gamma, cfg.beta)
    try:
        for t in range(cfg.query_budget // cfg.batch_size + 1):
            imp = np.zeros(H)
            for h in range(1, H + 1):
                raw = unit_update(h)
                e_new = meter.submit(theta)[0]
                if cfg.improvement == "literal":
                    gain = average_improvement(raw, e_hat)
                else:
                    gain = committed_improvement(raw, e_new)
                imp[h - 1] = min(1.0, gain / cfg.score_range)
                e_hat = e_new
                state = update_importance(state, h, imp[h - 1])
            p = layer_probabilities(replace(state, gamma=0.0))
            picks = []
            try:
                for _ in range(n2):
                    h = int(pick_rng.choice(H, p=p)) + 1
                    unit_update(h)
                    picks.append(h)
                    stage2_picks[partition.segment(h).name] += 1
            finally:
                ledger.record(imp, p, picks)
            meter.trace.records.append(
                IterationRecord(t, meter.spent, meter.trace.best_score, float(e_hat), theta.copy())
            )
    except BudgetExhausted:
        pass
    meter.trace.importance = state
    return (*_finish(meter, as_parameters(theta0), theta), ledger)
