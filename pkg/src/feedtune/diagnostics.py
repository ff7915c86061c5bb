"""Estimator and scheduler diagnostics.

These are self-contained numerical checks of the search machinery: how well
antithetic estimates line up with a known gradient, how the projection ratio
concentrates as the batch grows, and how the layer scheduler's measured
regret compares with its bound on an adversarial bandit.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .lcps import optimal_beta, regret_bound, run_bandit
from .nes import (
    SearchDistribution,
    antithetic_difference_gradient,
    concentration_fraction,
    cosine,
    draw_batch,
    estimate_gradient,
    fit_concentration_constant,
    normalize_feedbacks,
)
from .params import make_rng, split_rng


def quadratic(theta_star):
    """``E(theta) = -|theta - theta_star|^2`` and its gradient."""
    theta_star = np.asarray(theta_star, dtype=np.float64)

    def fn(theta):
        d = np.asarray(theta) - theta_star
        return -float(d @ d)

    def grad(theta):
        return -2.0 * (np.asarray(theta) - theta_star)

    return fn, grad


def estimator_cosine(dim: int = 200, b: int = 64, sigma: float = 1e-3, batches: int = 100, seed: int = 0) -> dict:
    """Cosine between the true gradient and the normalized estimate.

    ``mean_estimate`` is the cosine of the estimate averaged over all batches;
    ``per_batch`` is the mean of the single-batch cosines, which is limited
    to about ``sqrt(k / (k + d - 1))`` with ``k = b/2`` directions.
    """
    setup, draws = split_rng(seed, 2)
    theta_star = setup.standard_normal(dim)
    theta = setup.standard_normal(dim)
    fn, grad = quadratic(theta_star)
    g = grad(theta)
    total = np.zeros(dim)
    per = []
    for _ in range(batches):
        batch = draw_batch(SearchDistribution(theta, sigma), b, draws)
        est = estimate_gradient(batch, normalize_feedbacks([fn(c) for c in batch.candidates]), sigma)
        per.append(cosine(est, g))
        total += est
    k = b // 2
    return {
        "mean_estimate": cosine(total, g),
        "per_batch": float(np.mean(per)),
        "per_batch_theory": math.sqrt(k / (k + dim - 1)),
    }


def linear_exactness(dim: int = 50, b: int = 16, sigma: float = 0.1, seed: int = 0) -> float:
    """Worst relative error of antithetic differences on a linear function.

    Every antithetic pair recovers ``<w, e>`` exactly, so the estimate equals
    the projection of ``w`` onto the sampled directions.
    """
    rng = make_rng(seed)
    w = rng.standard_normal(dim)
    c0 = float(rng.standard_normal())
    theta = rng.standard_normal(dim)
    batch = draw_batch(SearchDistribution(theta, sigma), b, rng)
    est = antithetic_difference_gradient(lambda x: float(w @ x) + c0, theta, batch, sigma)
    half = batch.half
    expected = half.T @ (half @ w) / half.shape[0]
    return float(np.max(np.abs(est - expected)) / np.max(np.abs(expected)))


def concentration_curve(dim: int = 200, batch_sizes: Sequence[int] = (8, 16, 32, 64), xi: float = 0.5,
                        trials: int = 1000, seed: int = 0) -> dict:
    """Fraction of batches whose normalized projection ratio lies within ``1 +- xi``."""
    rngs = split_rng(seed, len(batch_sizes))
    fractions = {int(b): concentration_fraction(dim, int(b), xi, trials, r) for b, r in zip(batch_sizes, rngs)}
    return {"fractions": fractions, "fitted_c": fit_concentration_constant(fractions, xi)}


def adversarial_rewards(n_arms: int, horizon: int, seed: int):
    """Reward schedule that punishes whatever the scheduler currently favours.

    Each round the best arm pays 1 and the others pay small random amounts;
    the best arm rotates every ``horizon // 5`` rounds, and every third round
    the arm with the largest probability pays nothing.
    """
    rng = make_rng(seed)
    period = max(1, horizon // 5)
    order = rng.permutation(n_arms)

    def reward(t, probs):
        r = 0.2 * rng.random(n_arms)
        r[order[(t // period) % n_arms]] = 1.0
        if t % 3 == 2:
            r[int(np.argmax(probs))] = 0.0
        return r

    return reward


def regret_check(n_arms: int = 4, horizon: int = 50, seeds: int = 100, stage2_units: int = 4) -> dict:
    """Measured regret against the bound with the gain-optimal step size.

    ``G`` for the step size is the largest possible per-iteration gain, one
    improvement of at most 1 per stage-2 unit over the horizon. ``tight`` also
    checks the bound with the leading ``G_max`` term removed.
    """
    beta = optimal_beta(n_arms, float(horizon * stage2_units))
    held = tight = 0
    worst = -np.inf
    for seed in range(seeds):
        ledger = run_bandit(adversarial_rewards(n_arms, horizon, seed), n_arms, horizon, beta, stage2_units, seed=seed)
        bound = regret_bound(ledger, beta)
        held += ledger.regret <= bound
        tight += ledger.regret <= bound - ledger.g_max
        worst = max(worst, ledger.regret / bound)
    return {"beta": beta, "held": held, "tight_held": tight, "seeds": seeds, "worst_ratio": float(worst),
            "optimal_beta_2_1": optimal_beta(2, 1.0)}


def run_all(seed: int = 0, quick: bool = False) -> dict:
    trials = 200 if quick else 1000
    return {
        "estimator_cosine": estimator_cosine(seed=seed),
        "linear_exactness": linear_exactness(seed=seed),
        "concentration": concentration_curve(trials=trials, seed=seed),
        "regret": regret_check(seeds=20 if quick else 100),
    }
