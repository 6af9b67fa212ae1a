"""Small input-validation helpers used across modules."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

from .exceptions import InvalidTokenError


def check_probability(value: float, name: str = "probability") -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_non_negative(value: float, name: str) -> float:
    value = float(value)
    if value < 0.0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def check_positive_int(value: int, name: str, minimum: int = 1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def check_token_ids(tokens: Iterable[int], vocab_size: int | None = None,
                    name: str = "tokens") -> list[int]:
    """Return ``tokens`` as a list of valid non-negative ids.

    When ``vocab_size`` is given, ids must fall in ``[0, vocab_size)``.
    """
    out: list[int] = []
    for tok in tokens:
        if not isinstance(tok, int) or isinstance(tok, bool) or tok < 0:
            raise InvalidTokenError(f"{name} contains a non token id: {tok!r}")
        if vocab_size is not None and tok >= vocab_size:
            raise InvalidTokenError(
                f"{name} contains id {tok} outside vocabulary of size {vocab_size}"
            )
        out.append(tok)
    return out


def check_label(value: int, name: str = "label") -> int:
    if value not in (0, 1):
        raise ValueError(f"{name} must be 0 or 1, got {value!r}")
    return int(value)


def normalized_text(text: str) -> str:
    """Whitespace-normalized form used for exact-match scoring."""
    return " ".join(text.split())


def check_sequences(corpus: Sequence[Sequence[int]], name: str = "corpus") -> list[list[int]]:
    if not corpus:
        raise ValueError(f"{name} must be non-empty")
    return [check_token_ids(seq, name=f"{name} sequence") for seq in corpus]
