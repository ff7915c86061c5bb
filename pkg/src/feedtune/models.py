"""A small feed-forward network and flat packing of its tunable tensors."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .params import LayerPartition, as_parameters

ACTIVATIONS = ("relu", "identity")


@dataclass
class Dense:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(f"inconsistent layer shapes {self.weight.shape} / {self.bias.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class MlpModel:
    """Dense layers applied in order; the last layer's outputs are the scores.

    A single output column is read as a binary logit; more columns are class
    scores. ``regression=True`` marks a real-valued head.
    """

    def __init__(self, layers: Sequence[Dense], regression: bool = False):
        if not layers:
            raise ValueError("model needs at least one layer")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError("consecutive layer shapes do not compose")
        self.layers = list(layers)
        self.regression = regression

    @classmethod
    def init(cls, sizes: Sequence[int], rng, activation="relu", regression=False) -> "MlpModel":
        """He-initialised network with ``sizes = [in, hidden..., out]``; identity output."""
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            act = "identity" if i == len(sizes) - 2 else activation
            layers.append(Dense(w, np.zeros(fan_out), act))
        return cls(layers, regression=regression)

    @property
    def n_inputs(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].weight.shape[1]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{i}.weight"] = layer.weight
            out[f"{i}.bias"] = layer.bias
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, MlpModel) or len(self.layers) != len(other.layers):
            return False
        return all(
            a.activation == b.activation and np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )

    def __call__(self, x):
        return forward(self, x)


def forward(model: MlpModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} features, got {x.shape[1]}")
    for layer in model.layers:
        x = x @ layer.weight + layer.bias
        if layer.activation == "relu":
            x = np.maximum(x, 0.0)
    return x


def forward_from(model: MlpModel, hidden: np.ndarray, start: int) -> np.ndarray:
    """Run layers ``start..`` on activations already computed for layers before it."""
    x = hidden
    for layer in model.layers[start:]:
        x = x @ layer.weight + layer.bias
        if layer.activation == "relu":
            x = np.maximum(x, 0.0)
    return x


def forward_cached(model: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer, input first; used for backprop."""
    acts = [np.asarray(x, dtype=np.float64)]
    for layer in model.layers:
        z = acts[-1] @ layer.weight + layer.bias
        acts.append(np.maximum(z, 0.0) if layer.activation == "relu" else z)
    return acts


def resolve_selection(model: MlpModel, selection) -> list[str]:
    """Tensor names for a selection.

    Accepts ``"all"``, ``"last"`` (last weight), ``"last_layer"`` (last weight
    and bias), ``"weights"`` (every weight) or an explicit list of names such
    as ``["2.weight", "2.bias"]``.
    """
    names = list(model.tensors())
    last = len(model.layers) - 1
    if isinstance(selection, str):
        presets = {
            "all": names,
            "last": [f"{last}.weight"],
            "last_layer": [f"{last}.weight", f"{last}.bias"],
            "weights": [n for n in names if n.endswith(".weight")],
        }
        if selection not in presets:
            raise ValueError(f"unknown selection {selection!r}")
        chosen = presets[selection]
    else:
        chosen = list(selection)
    if not chosen:
        raise ValueError("selection must name at least one tensor")
    unknown = [n for n in chosen if n not in names]
    if unknown:
        raise ValueError(f"unknown tensors {unknown}")
    return [n for n in names if n in chosen]


def pack_parameters(model: MlpModel, selection="all", by_layer: bool = False):
    """Flatten the selected tensors into ``(theta, partition)``.

    Segments are one per tensor, or one per model layer when ``by_layer``.
    """
    names = resolve_selection(model, selection)
    tensors = model.tensors()
    pieces = [tensors[n].reshape(-1) for n in names]
    if by_layer:
        groups: dict[str, int] = {}
        for n, p in zip(names, pieces):
            key = "layer" + n.split(".")[0]
            groups[key] = groups.get(key, 0) + p.size
        partition = LayerPartition.from_sizes(list(groups.values()), list(groups))
    else:
        partition = LayerPartition.from_sizes([p.size for p in pieces], names)
    return as_parameters(np.concatenate(pieces)), partition


def unpack_parameters(model: MlpModel, theta, selection="all") -> MlpModel:
    """Copy of ``model`` with the selected tensors overwritten from ``theta``."""
    names = resolve_selection(model, selection)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    out = model.copy()
    tensors = out.tensors()
    total = sum(tensors[n].size for n in names)
    if theta.size != total:
        raise ValueError(f"expected {total} parameters, got {theta.size}")
    offset = 0
    for n in names:
        t = tensors[n]
        t[...] = theta[offset : offset + t.size].reshape(t.shape)
        offset += t.size
    return out


@dataclass
class LabeledDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) class ids or regression targets
    sensitive: np.ndarray | None = None  # (n,) binary group attribute

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        self.labels = np.asarray(self.labels)
        n = self.features.shape[0]
        if n < 1:
            raise ValueError("dataset must not be empty")
        if self.labels.shape != (n,):
            raise ValueError("labels must have one entry per row")
        if self.sensitive is not None:
            self.sensitive = np.asarray(self.sensitive).astype(np.int64).reshape(-1)
            if self.sensitive.shape != (n,):
                raise ValueError("sensitive must have one entry per row")

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(
            self.features[idx], self.labels[idx], None if self.sensitive is None else self.sensitive[idx]
        )


def evaluate(model: MlpModel, dataset: LabeledDataset, metric) -> tuple[float, ...]:
    """Score tuple of ``model`` on ``dataset`` under ``metric``."""
    from .metrics import MetricSpec, score_outputs

    if isinstance(metric, str):
        metric = MetricSpec.parse(metric)
    if metric.needs_sensitive and dataset.sensitive is None:
        raise ValueError("metric needs a sensitive attribute the dataset does not have")
    return score_outputs(forward(model, dataset.features), dataset.labels, metric, dataset.sensitive)
