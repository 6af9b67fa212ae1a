"""Next-token predictor interface shared by all backends."""

from __future__ import annotations

import abc
from dataclasses import dataclass


@dataclass(frozen=True)
class Prediction:
    """A backend's greedy next token and its probability for one prefix."""

    token: int
    probability: float


@dataclass(frozen=True)
class Distribution:
    """Next-token probabilities, sorted by descending probability.

    Ties are broken by ascending token id. ``truncated`` marks a declared
    top-k cut; untruncated distributions cover the full vocabulary and sum
    to 1 within 1e-6.
    """

    entries: tuple[tuple[int, float], ...]
    truncated: bool = False

    def top(self) -> Prediction:
        token, probability = self.entries[0]
        return Prediction(token, probability)

    def probability_of(self, token: int) -> float:
        for tok, prob in self.entries:
            if tok == token:
                return prob
        return 0.0


def sort_entries(pairs) -> tuple[tuple[int, float], ...]:
    """Order (token, probability) pairs per the Distribution contract."""
    return tuple(sorted(pairs, key=lambda item: (-item[1], item[0])))


def check_top_k(top_k: int | None) -> int | None:
    if top_k is not None and top_k < 1:
        raise ValueError(f"top_k must be >= 1 or None, got {top_k}")
    return top_k


class Backend(abc.ABC):
    """Deterministic greedy next-token predictor.

    Both query methods are pure functions of the prefix and the backend's
    configuration, so concurrent read-only use is safe.
    """

    @abc.abstractmethod
    def predict_distribution(self, prefix, top_k: int | None = None) -> Distribution:
        """Next-token distribution after ``prefix``, optionally truncated."""

    def predict_next(self, prefix) -> Prediction:
        """Greedy next token; always the head of the full distribution."""
        return self.predict_distribution(prefix).top()
