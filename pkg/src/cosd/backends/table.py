"""Deterministic scripted backend for tests and fixtures."""

from __future__ import annotations

import json
from pathlib import Path

from ..exceptions import BackendUnavailableError, MalformedFileError
from ..validation import check_positive_int, check_probability, check_token_ids
from .base import Backend, Distribution, check_top_k, sort_entries


def uniform(vocab_size: int) -> dict[int, float]:
    """Uniform next-token distribution over the whole vocabulary."""
    return {tok: 1.0 / vocab_size for tok in range(vocab_size)}


def peaked(vocab_size: int, token: int, probability: float) -> dict[int, float]:
    """Distribution with ``probability`` on ``token``, remainder spread evenly.

    The peak must stay the argmax, so ``probability`` has to exceed the share
    each other token receives.
    """
    if vocab_size < 2:
        raise ValueError("peaked distributions need a vocabulary of at least 2")
    rest = (1.0 - probability) / (vocab_size - 1)
    if probability <= rest:
        raise ValueError(f"probability {probability} is not the argmax for vocab {vocab_size}")
    dist = {tok: rest for tok in range(vocab_size)}
    dist[token] = probability
    return dist


class TableBackend(Backend):
    """Maps exact prefixes to scripted next-token distributions.

    Unlisted prefixes fall back to ``default`` when given; otherwise the
    query fails, which keeps mis-scripted fixtures loud.
    """

    def __init__(self, vocab_size: int, table=None, default=None):
        self.vocab_size = check_positive_int(vocab_size, "vocab_size")
        self._table = {}
        for prefix, dist in (table or {}).items():
            key = tuple(check_token_ids(prefix, vocab_size, "table prefix"))
            self._table[key] = self._check_dist(dist)
        self._default = self._check_dist(default) if default is not None else None

    def _check_dist(self, dist) -> dict[int, float]:
        out = {}
        for tok, prob in dict(dist).items():
            check_token_ids([tok], self.vocab_size, "table token")
            out[tok] = check_probability(prob, "table probability")
        total = sum(out.values())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"scripted distribution sums to {total}, expected 1")
        return out

    def predict_distribution(self, prefix, top_k: int | None = None) -> Distribution:
        check_top_k(top_k)
        key = tuple(check_token_ids(prefix, self.vocab_size, "prefix"))
        row = self._table.get(key, self._default)
        if row is None:
            raise BackendUnavailableError(f"no scripted entry for prefix {key}")
        entries = sort_entries((tok, row.get(tok, 0.0)) for tok in range(self.vocab_size))
        if top_k is not None and top_k < len(entries):
            return Distribution(entries[:top_k], truncated=True)
        return Distribution(entries, truncated=False)


def save_table(backend: TableBackend, path) -> None:
    payload = {
        "vocab_size": backend.vocab_size,
        "entries": {
            ",".join(map(str, prefix)): {str(t): p for t, p in row.items()}
            for prefix, row in backend._table.items()
        },
    }
    if backend._default is not None:
        payload["default"] = {str(t): p for t, p in backend._default.items()}
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_table(path) -> TableBackend:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        vocab_size = data["vocab_size"]
        table = {
            tuple(int(t) for t in key.split(",") if t != ""): {int(t): p for t, p in row.items()}
            for key, row in data.get("entries", {}).items()
        }
        default = data.get("default")
        if default is not None:
            default = {int(t): p for t, p in default.items()}
        return TableBackend(vocab_size, table, default)
    except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError, AttributeError) as exc:
        raise MalformedFileError(f"cannot read table backend file {path}: {exc}") from exc
