"""Corpus-trained n-gram backend with additive smoothing.

Desk-scale stand-in for a real language model: deterministic, cheap, and
trainable on a handful of token sequences.
"""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..exceptions import MalformedFileError
from ..validation import check_non_negative, check_positive_int, check_sequences, check_token_ids
from .base import Backend, Distribution, check_top_k, sort_entries


class NgramModel(BaseEstimator, Backend):
    """Additively smoothed n-gram next-token model.

    Contexts of every length up to ``order - 1`` are counted so prediction
    can back off: the longest suffix of the query prefix that was observed
    during fitting supplies the conditional distribution, falling back to
    the unigram table for unseen contexts and at sequence starts. With the
    smoothing constant ``s`` the conditional probability of token ``t``
    after context ``c`` is ``(count(c, t) + s) / (total(c) + s * V)``.

    Parameters
    ----------
    order : int
        Window size; contexts hold up to ``order - 1`` tokens.
    smoothing : float
        Additive (Laplace) constant, >= 0. Zero gives the pure MLE.
    vocab_size : int or None
        Vocabulary size. Inferred from the corpus when None.
    """

    def __init__(self, order: int = 3, smoothing: float = 1.0, vocab_size: int | None = None):
        self.order = order
        self.smoothing = smoothing
        self.vocab_size = vocab_size

    def fit(self, corpus, y=None) -> "NgramModel":
        """Count every (context, token) occurrence in the corpus."""
        check_positive_int(self.order, "order")
        check_non_negative(self.smoothing, "smoothing")
        sequences = check_sequences(corpus)
        if self.vocab_size is not None:
            check_positive_int(self.vocab_size, "vocab_size")
            self.vocab_size_ = self.vocab_size
            for seq in sequences:
                check_token_ids(seq, self.vocab_size_, "corpus sequence")
        else:
            self.vocab_size_ = max((tok for seq in sequences for tok in seq), default=-1) + 1
            if self.vocab_size_ == 0:
                raise ValueError("corpus contains no tokens; give vocab_size explicitly")

        tables: list[dict[tuple[int, ...], Counter]] = [{} for _ in range(self.order)]
        for seq in sequences:
            for length in range(self.order):
                table = tables[length]
                for i in range(length, len(seq)):
                    context = tuple(seq[i - length:i])
                    table.setdefault(context, Counter())[seq[i]] += 1
        self.tables_ = tables
        self.counts_ = tables[self.order - 1]
        return self

    # ------------------------------------------------------------------ #
    # prediction
    # ------------------------------------------------------------------ #

    def _context_counts(self, prefix: list[int]) -> Counter:
        for length in range(min(self.order - 1, len(prefix)), -1, -1):
            context = tuple(prefix[len(prefix) - length:])
            counts = self.tables_[length].get(context)
            if counts:
                return counts
        # corpus is non-empty, so the unigram table always resolves
        return self.tables_[0][()]

    def predict_distribution(self, prefix, top_k: int | None = None) -> Distribution:
        if not hasattr(self, "tables_"):
            raise NotFittedError("NgramModel must be fitted before prediction")
        check_top_k(top_k)
        prefix = check_token_ids(prefix, self.vocab_size_, "prefix")
        counts = self._context_counts(prefix)
        total = sum(counts.values())
        s = float(self.smoothing)
        denom = total + s * self.vocab_size_
        entries = sort_entries(
            (tok, (counts.get(tok, 0) + s) / denom) for tok in range(self.vocab_size_)
        )
        if top_k is not None and top_k < len(entries):
            return Distribution(entries[:top_k], truncated=True)
        return Distribution(entries, truncated=False)


def train_ngram(corpus, order: int, smoothing: float, vocab_size: int | None = None) -> NgramModel:
    """Fit an :class:`NgramModel`; convenience wrapper used by the CLI."""
    return NgramModel(order=order, smoothing=smoothing, vocab_size=vocab_size).fit(corpus)


# ---------------------------------------------------------------------- #
# file format: one JSON object, context keys are comma-joined token ids
# ---------------------------------------------------------------------- #

def save_ngram(model: NgramModel, path) -> None:
    if not hasattr(model, "tables_"):
        raise NotFittedError("cannot save an unfitted NgramModel")
    tables = [
        {
            ",".join(map(str, ctx)): {str(t): n for t, n in sorted(counts.items())}
            for ctx, counts in sorted(table.items())
        }
        for table in model.tables_
    ]
    payload = {
        "order": model.order,
        "smoothing": model.smoothing,
        "vocab_size": model.vocab_size_,
        "tables": tables,
    }
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_ngram(path) -> NgramModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        model = NgramModel(
            order=int(data["order"]),
            smoothing=float(data["smoothing"]),
            vocab_size=int(data["vocab_size"]),
        )
        raw_tables = data["tables"]
        if len(raw_tables) != model.order:
            raise ValueError(f"expected {model.order} context tables, found {len(raw_tables)}")
        tables: list[dict[tuple[int, ...], Counter]] = []
        for raw in raw_tables:
            table: dict[tuple[int, ...], Counter] = {}
            for key, counts in raw.items():
                context = tuple(int(t) for t in key.split(",") if t != "")
                table[context] = Counter({int(t): int(n) for t, n in counts.items()})
            tables.append(table)
        model.vocab_size_ = model.vocab_size
        model.tables_ = tables
        model.counts_ = tables[model.order - 1]
        if not tables[0].get(()):
            raise ValueError("missing unigram table")
        return model
    except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise MalformedFileError(f"cannot read n-gram model file {path}: {exc}") from exc
