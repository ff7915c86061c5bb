"""Named desk-scale tuning scenarios.

A scenario fixes how source and target data are generated, the network that
is pre-trained on the source, which tensors the provider may tune, and the
feedback metric. :func:`prepare` turns one scenario and a seed into the
pre-trained model plus the support/holdout split of the target data.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .datasets import (
    SOURCE_VARIANCE,
    TARGET_VARIANCE,
    BiasedBinarySpec,
    GaussianClassesSpec,
    TwoGaussiansSpec,
    gen_biased_binary,
    gen_gaussian_classes,
    gen_two_gaussians,
    pretrain,
    supervised_finetune,
)
from .metrics import MetricSpec
from .models import LabeledDataset, MlpModel
from .oracle import split_dataset
from .params import LayerPartition, make_rng

TARGET_SEED_OFFSET = 1000


@dataclass(frozen=True)
class Scenario:
    name: str
    source: Callable[[int], LabeledDataset]
    target: Callable[[int], LabeledDataset]
    sizes: tuple
    selection: object = "last"
    metric: str = "accuracy"
    pretrain_epochs: int = 300
    pretrain_lr: float = 0.1
    opt_epochs: int = 2000
    opt_lr: float = 0.5
    support_fraction: float = 0.5
    defaults: dict = field(default_factory=dict)  # suggested optimizer settings


@dataclass
class Prepared:
    model: MlpModel
    support: LabeledDataset
    holdout: LabeledDataset
    source: LabeledDataset


def _toy(n_per_class: int):
    def source(seed):
        return gen_two_gaussians(TwoGaussiansSpec(variances=SOURCE_VARIANCE, n_per_class=n_per_class, seed=seed))

    def target(seed):
        return gen_two_gaussians(TwoGaussiansSpec(variances=TARGET_VARIANCE, n_per_class=n_per_class,
                                                  seed=TARGET_SEED_OFFSET + seed))

    return source, target


def _fairness():
    def source(seed):
        return gen_biased_binary(BiasedBinarySpec(n_features=4, correlation=0.8, seed=seed))

    def target(seed):
        return gen_biased_binary(BiasedBinarySpec(n_features=4, correlation=0.0, seed=TARGET_SEED_OFFSET + seed))

    return source, target


TOPK_SCALES = (0.3, 2.5, 1.0, 1.0)


def _topk():
    def source(seed):
        return gen_gaussian_classes(GaussianClassesSpec(noise=1.5, seed=seed))

    def target(seed):
        return gen_gaussian_classes(GaussianClassesSpec(noise=1.5, scales=TOPK_SCALES, seed=TARGET_SEED_OFFSET + seed))

    return source, target


SCENARIOS = {
    "toy": Scenario(
        "toy", *_toy(200), sizes=(2, 80, 80, 1),
        defaults=dict(query_budget=80, learning_rate=0.5, sigma=0.4, batch_size=8),
    ),
    "toy_large": Scenario(
        "toy_large", *_toy(1000), sizes=(2, 80, 80, 1),
        defaults=dict(query_budget=1000, learning_rate=0.1, sigma=0.1, batch_size=8),
    ),
    "fairness": Scenario(
        "fairness", *_fairness(), sizes=(5, 80, 80, 1), metric="accuracy+demographic_parity",
        defaults=dict(query_budget=400, learning_rate=0.03, sigma=0.1, batch_size=8, rho=0.4),
    ),
    "topk": Scenario(
        "topk", *_topk(), sizes=(4, 32, 32, 10), metric="top_k_accuracy:5",
        defaults=dict(query_budget=1000, learning_rate=0.1, sigma=0.1),
    ),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


def prepare(scenario: Scenario | str, seed: int, support_fraction: Optional[float] = None) -> Prepared:
    """Pre-train on the source draw for ``seed`` and split the target draw."""
    sc = get_scenario(scenario) if isinstance(scenario, str) else scenario
    src = sc.source(seed)
    model = pretrain(list(sc.sizes), src, epochs=sc.pretrain_epochs, lr=sc.pretrain_lr, seed=seed)
    frac = sc.support_fraction if support_fraction is None else support_fraction
    support, holdout = split_dataset(sc.target(seed), frac, seed)
    return Prepared(model, support, holdout, src)


def opt_reference(sc: Scenario, prepared: Prepared, selection=None) -> MlpModel:
    """Supervised tuning of the same tensors on the support split (OPT)."""
    sel = sc.selection if selection is None else selection
    return supervised_finetune(prepared.model, prepared.support, sel, epochs=sc.opt_epochs, lr=sc.opt_lr)


def with_defaults(sc: Scenario, **overrides) -> Scenario:
    return replace(sc, defaults={**sc.defaults, **overrides})


# ---------------------------------------------------------------------------
# Synthetic layered objective


def layered_quadratic(layer_dim: int = 10, n_layers: int = 4, signal_layer: int = 2, seed: int = 0):
    """Objective where only one layer's parameters matter.

    Returns ``(fn, partition, target)`` with
    ``fn(theta) = 1 - |l_s - target|^2 / |target|^2``, so ``fn(0) = 0`` and the
    optimum is 1. Every other layer is multiplied by zero.
    """
    if not 1 <= signal_layer <= n_layers:
        raise ValueError("signal layer out of range")
    partition = LayerPartition.from_sizes([layer_dim] * n_layers)
    target = make_rng(seed).standard_normal(layer_dim)
    sl = partition.segment(signal_layer).slice
    scale = float(target @ target)

    def fn(theta):
        diff = np.asarray(theta)[sl] - target
        return 1.0 - float(diff @ diff) / scale

    return fn, partition, target
