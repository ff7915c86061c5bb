"""Synthetic scenarios, CSV ingestion, and supervised (pre-)training.

The generators give desk-scale stand-ins for the tuning scenarios: a two
Gaussians shift task, a biased binary task with a sensitive attribute, and
a multi-class task for top-K metrics.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .models import LabeledDataset, MlpModel, forward_cached, resolve_selection
from .params import make_rng

# Reproducibility anchors for the toy task, not values taken from elsewhere.
TOY_MEANS = ((-0.5, -1.0), (0.5, 1.0))
SOURCE_VARIANCE = (0.7, 0.7)
TARGET_VARIANCE = (0.1, 1.5)


@dataclass(frozen=True)
class TwoGaussiansSpec:
    means: tuple = TOY_MEANS
    variances: tuple = SOURCE_VARIANCE
    n_per_class: int = 200
    seed: int = 0

    def __post_init__(self):
        if any(v <= 0 for v in self.variances):
            raise ValueError("variances must be positive")
        if self.n_per_class < 1:
            raise ValueError("need at least one sample per class")


def gen_two_gaussians(spec: TwoGaussiansSpec) -> LabeledDataset:
    """Balanced two-class 2-d data; class ``k`` is drawn around ``spec.means[k]``."""
    rng = make_rng(spec.seed)
    std = np.sqrt(np.asarray(spec.variances, dtype=np.float64))
    xs, ys = [], []
    for label, mean in enumerate(spec.means):
        xs.append(np.asarray(mean, dtype=np.float64) + std * rng.standard_normal((spec.n_per_class, 2)))
        ys.append(np.full(spec.n_per_class, label))
    return LabeledDataset(np.concatenate(xs), np.concatenate(ys))


@dataclass(frozen=True)
class BiasedBinarySpec:
    """Binary task whose sensitive attribute ``z`` is also a model input.

    ``correlation`` is ``P(z=1 | y=1) - P(z=1 | y=0)``; the informative
    features are Gaussians shifted by ``+-separation / 2`` on every axis.
    """

    n: int = 1000
    n_features: int = 4
    separation: float = 1.0
    noise: float = 1.0
    correlation: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.correlation <= 1.0:
            raise ValueError("correlation must lie in [0, 1]")
        if self.n < 4:
            raise ValueError("need at least four rows")


def gen_biased_binary(spec: BiasedBinarySpec) -> LabeledDataset:
    rng = make_rng(spec.seed)
    y = rng.integers(0, 2, spec.n)
    p_z = 0.5 + (y - 0.5) * spec.correlation
    z = (rng.random(spec.n) < p_z).astype(np.int64)
    shift = (y[:, None] - 0.5) * spec.separation
    x = shift + spec.noise * rng.standard_normal((spec.n, spec.n_features))
    feats = np.concatenate([x, z[:, None].astype(np.float64)], axis=1)
    return LabeledDataset(feats, y, z)


@dataclass(frozen=True)
class GaussianClassesSpec:
    """``n_classes`` Gaussian blobs; ``scales`` stretches the axes (the shift knob)."""

    n_classes: int = 10
    dim: int = 4
    n_per_class: int = 100
    radius: float = 2.0
    scales: Optional[tuple] = None
    noise: float = 1.0
    means_seed: int = 0
    seed: int = 0


def gen_gaussian_classes(spec: GaussianClassesSpec) -> LabeledDataset:
    means = make_rng(spec.means_seed).standard_normal((spec.n_classes, spec.dim))
    means *= spec.radius / np.linalg.norm(means, axis=1, keepdims=True)
    scales = np.ones(spec.dim) if spec.scales is None else np.asarray(spec.scales, dtype=np.float64)
    rng = make_rng(spec.seed)
    xs, ys = [], []
    for label in range(spec.n_classes):
        xs.append(means[label] + spec.noise * scales * rng.standard_normal((spec.n_per_class, spec.dim)))
        ys.append(np.full(spec.n_per_class, label))
    return LabeledDataset(np.concatenate(xs), np.concatenate(ys))


# ---------------------------------------------------------------------------
# CSV ingestion

ROLES = ("numeric", "categorical", "label", "sensitive", "ignore")


@dataclass
class CsvEncoding:
    """Stored vocabularies and standardisation statistics for a CSV schema."""

    schema: dict
    vocab: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    label_vocab: Optional[list] = None
    sensitive_vocab: Optional[list] = None


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _index_vocab(values: Sequence[str]) -> list:
    vals = sorted(set(values))
    if all(_is_number(v) for v in vals):
        vals = sorted(vals, key=float)
    return vals


def load_csv(path, schema: dict, encoding: Optional[CsvEncoding] = None):
    """Read a header-row CSV into ``(LabeledDataset, CsvEncoding)``.

    ``schema`` maps column names to a role in :data:`ROLES`. Passing a stored
    ``encoding`` reproduces its one-hot layout and scaling; categories it has
    not seen encode as all zeros.
    """
    for col, role in schema.items():
        if role not in ROLES:
            raise ValueError(f"column {col!r}: unknown role {role!r}")
    labels = [c for c, r in schema.items() if r == "label"]
    if len(labels) != 1:
        raise ValueError("schema must name exactly one label column")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = [{k: (v or "").strip() for k, v in row.items()} for row in reader]
    for col in schema:
        if col not in header:
            raise ValueError(f"column {col!r} missing from {path}")
    if not rows:
        raise ValueError(f"{path} has no data rows")
    fit = encoding is None
    enc = encoding or CsvEncoding(schema=dict(schema))

    blocks = []
    for col, role in schema.items():
        values = [r[col] for r in rows]
        if role == "numeric":
            arr = np.array([float(v) for v in values])
            if fit:
                sd = float(arr.std())
                enc.stats[col] = (float(arr.mean()), sd if sd > 0 else 1.0)
            mean, sd = enc.stats[col]
            blocks.append(((arr - mean) / sd)[:, None])
        elif role == "categorical":
            if fit:
                enc.vocab[col] = _index_vocab(values)
            vocab = {v: i for i, v in enumerate(enc.vocab[col])}
            onehot = np.zeros((len(values), len(vocab)))
            for i, v in enumerate(values):
                if v in vocab:
                    onehot[i, vocab[v]] = 1.0
            blocks.append(onehot)

    label_col = labels[0]
    raw_labels = [r[label_col] for r in rows]
    if fit:
        enc.label_vocab = _index_vocab(raw_labels)
    lv = {v: i for i, v in enumerate(enc.label_vocab)}
    unknown = sorted({v for v in raw_labels if v not in lv})
    if unknown:
        raise ValueError(f"unseen label values {unknown}")
    y = np.array([lv[v] for v in raw_labels], dtype=np.int64)

    z = None
    sens = [c for c, r in schema.items() if r == "sensitive"]
    if sens:
        raw_z = [r[sens[0]] for r in rows]
        if fit:
            enc.sensitive_vocab = _index_vocab(raw_z)
            if len(enc.sensitive_vocab) > 2:
                raise ValueError(f"sensitive column {sens[0]!r} is not binary")
        zv = {v: i for i, v in enumerate(enc.sensitive_vocab)}
        z = np.array([zv.get(v, 0) for v in raw_z], dtype=np.int64)

    x = np.concatenate(blocks, axis=1) if blocks else np.zeros((len(rows), 0))
    return LabeledDataset(x, y, z), enc


def write_csv(path, dataset: LabeledDataset, feature_names=None, label_name="label", sensitive_name="sensitive") -> None:
    names = list(feature_names or [f"x{i}" for i in range(dataset.features.shape[1])])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = names + [label_name] + ([sensitive_name] if dataset.sensitive is not None else [])
        w.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]] + [str(dataset.labels[i])]
            if dataset.sensitive is not None:
                row.append(str(dataset.sensitive[i]))
            w.writerow(row)


# ---------------------------------------------------------------------------
# supervised training

def loss_and_output_grad(outputs: np.ndarray, labels: np.ndarray, regression: bool):
    n = outputs.shape[0]
    if regression:
        diff = outputs.reshape(n, -1) - labels.reshape(n, -1)
        return 0.5 * float(np.mean(np.sum(diff**2, axis=1))), diff / n
    if outputs.shape[1] == 1:
        logit = outputs[:, 0]
        y = labels.astype(np.float64)
        loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
        prob = 0.5 * (1.0 + np.tanh(0.5 * logit))
        return loss, ((prob - y) / n)[:, None]
    shifted = outputs - outputs.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    idx = labels.astype(np.int64)
    loss = -float(np.mean(logp[np.arange(n), idx]))
    grad = np.exp(logp)
    grad[np.arange(n), idx] -= 1.0
    return loss, grad / n


def gradients(model: MlpModel, dataset: LabeledDataset):
    """Loss and gradient for every tensor, keyed like :meth:`MlpModel.tensors`."""
    acts = forward_cached(model, dataset.features)
    loss, delta = loss_and_output_grad(acts[-1], dataset.labels, model.regression)
    grads = {}
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.activation == "relu":
            delta = delta * (acts[i + 1] > 0)
        grads[f"{i}.weight"] = acts[i].T @ delta
        grads[f"{i}.bias"] = delta.sum(axis=0)
        delta = delta @ layer.weight.T
    return loss, grads


def _descend(model: MlpModel, dataset: LabeledDataset, epochs: int, lr: float, names: list[str]) -> MlpModel:
    out = model.copy()
    # layers below the first trained tensor never change: train the suffix on their cached output
    start = min(int(n.split(".")[0]) for n in names)
    feats = forward_cached(MlpModel(out.layers[:start], out.regression), dataset.features)[-1] if start else dataset.features
    suffix = MlpModel(out.layers[start:], out.regression)
    data = LabeledDataset(feats, dataset.labels)
    tensors = suffix.tensors()
    local = [f"{int(i) - start}.{kind}" for i, kind in (n.split(".") for n in names)]
    # overflow is caught as a non-finite loss below
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(int(epochs)):
            loss, grads = gradients(suffix, data)
            if not np.isfinite(loss):
                raise FloatingPointError("training diverged (non-finite loss); try a smaller learning rate")
            for n in local:
                tensors[n] -= lr * grads[n]
        loss, _ = gradients(suffix, data)
    if not np.isfinite(loss):
        raise FloatingPointError("training diverged (non-finite loss); try a smaller learning rate")
    return out


def pretrain(template, dataset: LabeledDataset, epochs: int = 500, lr: float = 0.1, seed: int = 0,
             regression: bool = False) -> MlpModel:
    """Full-batch gradient descent on every tensor.

    ``template`` is a model (used as the initial point) or a list of layer
    sizes, initialised from ``seed``.
    """
    if not isinstance(template, MlpModel):
        template = MlpModel.init(list(template), make_rng(seed), regression=regression)
    if dataset.features.shape[1] != template.n_inputs:
        raise ValueError("dataset features do not match the model input size")
    return _descend(template, dataset, epochs, lr, list(template.tensors()))


def supervised_finetune(model: MlpModel, dataset: LabeledDataset, selection="last", epochs: int = 500,
                        lr: float = 0.1) -> MlpModel:
    """The supervised reference: gradient descent on the tunable tensors only."""
    return _descend(model, dataset, epochs, lr, resolve_selection(model, selection))
