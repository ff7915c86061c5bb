"""Performance-guided parameter search, its fairness variant, and random search.

All three drive a feedback channel (anything with ``submit(theta)`` returning
a score tuple) and charge one query for evaluating the starting point, so the
gain over the provided model is always measured.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import BudgetExhausted, FeedbackChannel
from .nes import SearchDistribution, draw_batch, estimate_gradient, normalize_feedbacks
from .params import as_parameters, axpy, split_rng


def default_batch_size(dim: int) -> int:
    """``4 + floor(3 ln dim)``, rounded up to the next even number."""
    b = 4 + int(math.floor(3.0 * math.log(max(dim, 1))))
    return b + (b % 2)


@dataclass
class PpsConfig:
    query_budget: int
    learning_rate: float = 0.1
    batch_size: Optional[int] = None  # None -> default_batch_size(dim)
    sigma: float = 0.1
    decimals: object = "full"
    seed: int = 0

    def resolved_batch(self, dim: int) -> int:
        return self.batch_size if self.batch_size is not None else default_batch_size(dim)

    def validate(self, dim: int) -> None:
        b = self.resolved_batch(dim)
        if self.query_budget < 0:
            raise ValueError("query budget must be >= 0")
        if b < 2 or b % 2:
            raise ValueError(f"batch size must be even and >= 2, got {b}")
        if self.query_budget and b > self.query_budget:
            raise ValueError(f"batch size {b} exceeds query budget {self.query_budget}")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass
class FairnessConfig(PpsConfig):
    rho: float = 0.4

    def validate(self, dim: int) -> None:
        super().validate(dim)
        if not self.rho >= 0:
            raise ValueError("rho must be >= 0")


@dataclass
class IterationRecord:
    iteration: int
    queries_spent: int
    best_support: float
    current_support: float  # mean raw score of the batch around the iterate
    iterate: np.ndarray


@dataclass
class RunTrace:
    """History of one optimizer run.

    ``best_curve[q - 1]`` is the best raw support score after ``q`` queries.
    """

    records: list[IterationRecord] = field(default_factory=list)
    best_curve: list[float] = field(default_factory=list)
    initial_score: Optional[float] = None
    best_score: Optional[float] = None
    best_query: Optional[int] = None
    best_scores: tuple = ()
    final_iterate: Optional[np.ndarray] = None
    layer_queries: Optional[dict] = None
    stage2_picks: Optional[dict] = None
    unit_iterates: Optional[list] = None
    importance: object = None

    @property
    def queries_spent(self) -> int:
        return len(self.best_curve)

    def queries_to_reach(self, threshold: float) -> Optional[int]:
        """First query count whose best-so-far reaches ``threshold``."""
        for q, v in enumerate(self.best_curve, start=1):
            if v >= threshold:
                return q
        return None


class _Meter:
    """Counts queries, enforces the run budget and tracks the best candidate."""

    def __init__(self, channel: FeedbackChannel, budget: int, objective=None):
        self.channel = channel
        self.budget = int(budget)
        if hasattr(channel, "remaining"):
            self.budget = min(self.budget, int(channel.remaining))
        self.spent = 0
        self.objective = objective or (lambda s: s[0])
        self.trace = RunTrace()
        self.best_theta: Optional[np.ndarray] = None

    @property
    def remaining(self) -> int:
        return self.budget - self.spent

    def submit(self, theta: np.ndarray) -> tuple[float, ...]:
        if self.remaining < 1:
            raise BudgetExhausted("run budget exhausted")
        scores = tuple(self.channel.submit(theta))
        self.spent += 1
        value = float(self.objective(scores))
        tr = self.trace
        if tr.best_score is None or value > tr.best_score:
            tr.best_score, tr.best_query, tr.best_scores = value, self.spent, scores
            self.best_theta = np.array(theta, dtype=np.float64)
        tr.best_curve.append(tr.best_score)
        return scores

    def submit_batch(self, candidates: np.ndarray) -> list[tuple[float, ...]]:
        if self.remaining < len(candidates):
            raise BudgetExhausted("not enough budget for a full batch")
        return [self.submit(c) for c in candidates]


def _finish(meter: _Meter, theta0: np.ndarray, theta: np.ndarray):
    meter.trace.final_iterate = theta
    best = meter.best_theta if meter.best_theta is not None else theta0
    return best, meter.trace


def pps_run(theta0, channel: FeedbackChannel, cfg: PpsConfig):
    """Antithetic NES ascent on the first score component.

    Returns ``(best_theta, trace)``: the best evaluated candidate (earliest on
    ties) and the run history; the last iterate is ``trace.final_iterate``.
    """
    theta = as_parameters(theta0)
    cfg.validate(theta.size)
    b = cfg.resolved_batch(theta.size)
    noise_rng = split_rng(cfg.seed, 2)[0]
    meter = _Meter(channel, cfg.query_budget)
    if meter.budget < 1:
        return theta.copy(), meter.trace
    meter.trace.initial_score = meter.submit(theta)[0]
    for t in range(cfg.query_budget // b + 1):
        if meter.remaining < b:
            break
        batch = draw_batch(SearchDistribution(theta, cfg.sigma), b, noise_rng)
        try:
            raw = np.array([s[0] for s in meter.submit_batch(batch.candidates)])
        except BudgetExhausted:
            break
        step = estimate_gradient(batch, normalize_feedbacks(raw), cfg.sigma)
        theta = axpy(theta, cfg.learning_rate, step)
        meter.trace.records.append(
            IterationRecord(t, meter.spent, meter.trace.best_score, float(raw.mean()), theta.copy())
        )
    return _finish(meter, as_parameters(theta0), theta)


def fairness_pps_run(theta0, channel: FeedbackChannel, cfg: FairnessConfig):
    """Ascent on ``rho * E - Gamma`` from a channel returning ``(E, Gamma)``.

    Both feedback streams are z-scored per batch before they are combined.
    The best candidate is ranked by the raw ``rho * E - Gamma``.
    """
    theta = as_parameters(theta0)
    cfg.validate(theta.size)
    b = cfg.resolved_batch(theta.size)
    rho = cfg.rho
    noise_rng = split_rng(cfg.seed, 2)[0]

    def combined(s):
        if len(s) < 2:
            raise ValueError("fairness tuning needs (accuracy, disparity) score tuples")
        return rho * s[0] - s[1]

    meter = _Meter(channel, cfg.query_budget, objective=combined)
    if meter.budget < 1:
        return theta.copy(), meter.trace
    meter.trace.initial_score = combined(meter.submit(theta))
    for t in range(cfg.query_budget // b + 1):
        if meter.remaining < b:
            break
        batch = draw_batch(SearchDistribution(theta, cfg.sigma), b, noise_rng)
        try:
            raw = np.array(meter.submit_batch(batch.candidates))
        except BudgetExhausted:
            break
        z = rho * normalize_feedbacks(raw[:, 0]) - normalize_feedbacks(raw[:, 1])
        theta = axpy(theta, cfg.learning_rate, estimate_gradient(batch, z, cfg.sigma))
        meter.trace.records.append(
            IterationRecord(t, meter.spent, meter.trace.best_score, float(np.mean(rho * raw[:, 0] - raw[:, 1])), theta.copy())
        )
    return _finish(meter, as_parameters(theta0), theta)


def random_search(theta0, channel: FeedbackChannel, query_budget: int, sigma: float, seed: int = 0):
    """Best of ``theta0`` and ``Q - 1`` independent perturbations ``sigma * eps`` of it."""
    theta0 = as_parameters(theta0)
    rng = split_rng(seed, 2)[0]
    meter = _Meter(channel, query_budget)
    if meter.budget < 1:
        return theta0.copy(), meter.trace
    meter.trace.initial_score = meter.submit(theta0)[0]
    while meter.remaining > 0:
        candidate = theta0 + sigma * rng.standard_normal(theta0.size)
        try:
            meter.submit(candidate)
        except BudgetExhausted:
            break
    meter.trace.records.append(IterationRecord(0, meter.spent, meter.trace.best_score, meter.trace.best_score, theta0.copy()))
    return _finish(meter, theta0, theta0)
