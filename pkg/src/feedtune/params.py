"""Flat parameter vectors, layer partitions and seeded randomness.

Parameter vectors are plain 1-d ``float64`` numpy arrays. A
:class:`LayerPartition` is metadata laid over such a vector so that
whole-vector optimizers and layerwise optimizers share the same state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

RNG_ALGORITHM = "PCG64"


def as_parameters(values) -> np.ndarray:
    """Return a finite 1-d float64 copy of ``values``."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    check_finite(arr)
    return arr


def check_finite(arr: np.ndarray, what: str = "parameter vector") -> None:
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise ValueError(f"non-finite entry in {what} at index {int(bad[0])}")


def axpy(dst, scale: float, src) -> np.ndarray:
    """Return ``dst + scale * src`` as a new vector; inputs are left untouched."""
    dst = np.asarray(dst, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    if dst.shape != src.shape:
        raise ValueError(f"dimension mismatch: {dst.shape} vs {src.shape}")
    if not np.isfinite(scale):
        raise ValueError("scale must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        out = dst + scale * src
    check_finite(out, "axpy result")
    return out


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    length: int

    @property
    def stop(self) -> int:
        return self.offset + self.length

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.stop)


class LayerPartition:
    """Contiguous, non-overlapping named segments covering ``[0, dim)``."""

    def __init__(self, layers: Sequence[tuple[str, int, int]]):
        if len(layers) == 0:
            raise ValueError("a partition needs at least one layer")
        segs = []
        expected = 0
        for name, offset, length in layers:
            if length < 1:
                raise ValueError(f"layer {name!r} has non-positive length {length}")
            if offset != expected:
                raise ValueError(f"layer {name!r} starts at {offset}, expected {expected}")
            segs.append(Segment(str(name), int(offset), int(length)))
            expected += length
        self.segments: tuple[Segment, ...] = tuple(segs)
        self.dim = expected

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], names: Sequence[str] | None = None) -> "LayerPartition":
        names = list(names) if names is not None else [f"layer{i + 1}" for i in range(len(sizes))]
        if len(names) != len(sizes):
            raise ValueError("names and sizes differ in length")
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
        return cls(list(zip(names, offsets.tolist(), list(sizes))))

    @classmethod
    def single(cls, dim: int, name: str = "all") -> "LayerPartition":
        return cls([(name, 0, dim)])

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.segments]

    def segment(self, h: int) -> Segment:
        """Segment ``h`` (1-based, as layers are numbered 1..H)."""
        if not 1 <= h <= len(self.segments):
            raise IndexError(f"layer index {h} out of range 1..{len(self.segments)}")
        return self.segments[h - 1]

    def __eq__(self, other) -> bool:
        return isinstance(other, LayerPartition) and self.segments == other.segments

    def __repr__(self) -> str:
        body = ", ".join(f"{s.name}:[{s.offset},{s.stop})" for s in self.segments)
        return f"LayerPartition({body})"


def layer_view(theta, partition: LayerPartition, h: int) -> np.ndarray:
    """Copy of layer ``h`` (1-based) of ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (partition.dim,):
        raise ValueError(f"vector of size {theta.size} does not match partition of size {partition.dim}")
    return theta[partition.segment(h).slice].copy()


def with_layer(theta, partition: LayerPartition, h: int, values) -> np.ndarray:
    """Return a copy of ``theta`` with layer ``h`` replaced by ``values``."""
    seg = partition.segment(h)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (seg.length,):
        raise ValueError(f"layer {h} expects {seg.length} values, got {values.size}")
    out = np.array(theta, dtype=np.float64)
    out[seg.slice] = values
    return out


def make_rng(seed) -> np.random.Generator:
    """Deterministic generator (PCG64) for an integer seed or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(ss))


def split_rng(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent child generators derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return [make_rng(child) for child in ss.spawn(n)]


def gaussian_batch(rng: np.random.Generator, dim: int, half_batch: int) -> np.ndarray:
    """``half_batch`` standard-normal vectors of length ``dim``, one per row."""
    if dim < 1 or half_batch < 1:
        raise ValueError("dim and half_batch must be >= 1")
    return rng.standard_normal((half_batch, dim))
