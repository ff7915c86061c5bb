"""Antithetic Gaussian search around an iterate and the NES gradient estimate.

The search distribution is an isotropic Gaussian ``N(theta, sigma^2 I)`` with
a fixed ``sigma``; only the mean moves. Feedbacks are z-scored before they
weight the noise directions, so the step is invariant to affine rescaling of
the evaluation metric.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .params import as_parameters, check_finite, gaussian_batch, make_rng


@dataclass(frozen=True)
class SearchDistribution:
    mean: np.ndarray
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        object.__setattr__(self, "mean", as_parameters(self.mean))


@dataclass(frozen=True)
class SampleBatch:
    noises: np.ndarray  # (b, dim)
    candidates: np.ndarray  # (b, dim), mean + sigma * noises
    antithetic: bool = True

    @property
    def size(self) -> int:
        return self.noises.shape[0]

    @property
    def half(self) -> np.ndarray:
        """The independently drawn half of an antithetic batch."""
        return self.noises[: self.size // 2]


@dataclass(frozen=True)
class GradientDiagnostics:
    projection_matrix_norm_ratio: float
    cosine_to_true: float
    xi: float

    @property
    def within_tolerance(self) -> bool:
        return abs(self.projection_matrix_norm_ratio - 1.0) < self.xi


def antithetic_noise(rng: np.random.Generator, dim: int, b: int) -> np.ndarray:
    """``b`` noise rows where row ``b-1-j`` is the exact negation of row ``j``."""
    if b < 2 or b % 2:
        raise ValueError(f"batch size must be even and >= 2, got {b}")
    half = gaussian_batch(rng, dim, b // 2)
    return np.concatenate([half, -half[::-1]], axis=0)


def draw_batch(dist: SearchDistribution, b: int, rng) -> SampleBatch:
    noises = antithetic_noise(make_rng(rng), dist.mean.size, b)
    candidates = dist.mean[None, :] + dist.sigma * noises
    return SampleBatch(noises=noises, candidates=candidates, antithetic=True)


def normalize_feedbacks(scores) -> np.ndarray:
    """Z-score with the population standard deviation.

    A constant batch carries no directional information and maps to zeros.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < 2:
        raise ValueError("need a 1-d batch of at least two scores")
    check_finite(s, "scores")
    centered = s - s.mean()
    std = np.sqrt(np.mean(centered**2))
    if std == 0.0 or np.all(s == s[0]):
        return np.zeros_like(s)
    return centered / std


def estimate_gradient(batch: SampleBatch, normalized_scores, sigma: float) -> np.ndarray:
    """``(1 / (sigma * b)) * sum_i score_i * noise_i``."""
    scores = np.asarray(normalized_scores, dtype=np.float64)
    if scores.shape != (batch.size,):
        raise ValueError(f"expected {batch.size} scores, got {scores.size}")
    check_finite(scores, "scores")
    return (batch.noises.T @ scores) / (sigma * batch.size)


def antithetic_difference_gradient(fn: Callable[[np.ndarray], float], theta, batch: SampleBatch, sigma: float) -> np.ndarray:
    """Raw central-difference estimator, one term per antithetic pair.

    Averages ``(f(theta + s*e) - f(theta - s*e)) / (2s) * e`` over the
    independent half of the batch. Exact for linear ``f``.
    """
    theta = as_parameters(theta)
    half = batch.half
    out = np.zeros_like(theta)
    for eps in half:
        diff = (fn(theta + sigma * eps) - fn(theta - sigma * eps)) / (2.0 * sigma)
        out += diff * eps
    return out / half.shape[0]


def projected_gradient(true_grad, batch: SampleBatch) -> np.ndarray:
    """``(1/(b/2)) * sum_i <g, e_i> e_i``: the small-sigma limit of the estimate."""
    half = batch.half
    g = np.asarray(true_grad, dtype=np.float64)
    return half.T @ (half @ g) / half.shape[0]


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def projection_matrix(batch: SampleBatch) -> np.ndarray:
    """Matrix with columns ``||e_i|| e_i`` over the independent half."""
    half = batch.half
    return (half * np.linalg.norm(half, axis=1, keepdims=True)).T


def projection_diagnostic(true_grad, batch: SampleBatch, xi: float) -> GradientDiagnostics:
    """Length preservation of ``true_grad`` under the random projection.

    The raw ratio ``||M^T g||^2 / ||g||^2`` has expectation ``(b/2)(d+2)``
    for Gaussian columns, so it is divided by that to centre it on 1.
    """
    g = np.asarray(true_grad, dtype=np.float64)
    gnorm2 = float(g @ g)
    if gnorm2 == 0.0:
        raise ValueError("true gradient must be nonzero")
    if not 0.0 < xi < 1.0:
        raise ValueError("xi must lie in (0, 1)")
    m = projection_matrix(batch)
    k, d = m.shape[1], m.shape[0]
    proj = m.T @ g
    ratio = float(proj @ proj) / (gnorm2 * k * (d + 2))
    return GradientDiagnostics(ratio, cosine(projected_gradient(g, batch), g), xi)


def concentration_fraction(dim: int, b: int, xi: float, trials: int, rng) -> float:
    """Fraction of fresh batches whose normalized projection ratio is in ``(1-xi, 1+xi)``."""
    rng = make_rng(rng)
    g = rng.standard_normal(dim)
    hits = 0
    for _ in range(trials):
        noises = antithetic_noise(rng, dim, b)
        batch = SampleBatch(noises, noises, True)
        hits += projection_diagnostic(g, batch, xi).within_tolerance
    return hits / trials


def fit_concentration_constant(fractions: Mapping[int, float], xi: float) -> float:
    """Largest ``C`` with ``fraction(b) >= 1 - 2 exp(-C xi^2 b)`` for every ``b``.

    Returns 0.0 when some fraction is too small for any positive ``C``.
    """
    best = np.inf
    for b, frac in fractions.items():
        fail = 1.0 - frac
        if fail <= 0.0:
            continue
        c = -np.log(fail / 2.0) / (xi**2 * b)
        best = min(best, c)
    if not np.isfinite(best):
        return float("inf")
    return max(float(best), 0.0)
