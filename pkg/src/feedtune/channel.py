"""The provider's view of the data holder: submit parameters, get scores back."""
from __future__ import annotations

from typing import Callable, Protocol, Sequence

import numpy as np

from .metrics import quantize_feedback


class BudgetExhausted(RuntimeError):
    """Raised by a channel once its query budget is spent."""


class ProtocolError(RuntimeError):
    """Malformed or invalid request on a feedback channel."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


class FeedbackChannel(Protocol):
    remaining: int

    def submit(self, theta: np.ndarray) -> tuple[float, ...]: ...


def as_scores(value) -> tuple[float, ...]:
    if np.ndim(value) == 0:
        return (float(value),)
    return tuple(float(v) for v in np.asarray(value, dtype=np.float64).reshape(-1))


class FunctionChannel:
    """Budgeted channel around a plain objective ``fn(theta) -> score(s)``.

    Handy for synthetic objectives; the dataset-backed holder lives in
    :mod:`feedtune.oracle`.
    """

    def __init__(self, fn: Callable[[np.ndarray], float | Sequence[float]], budget: int, decimals="full"):
        self.fn = fn
        self.budget = int(budget)
        self.remaining = int(budget)
        self.decimals = decimals
        self.calls = 0

    def submit(self, theta) -> tuple[float, ...]:
        if self.remaining < 1:
            raise BudgetExhausted("query budget exhausted")
        scores = as_scores(self.fn(np.asarray(theta, dtype=np.float64)))
        self.remaining -= 1
        self.calls += 1
        return tuple(quantize_feedback(s, self.decimals) for s in scores)
