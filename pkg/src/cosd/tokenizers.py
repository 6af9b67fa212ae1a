"""Text/token codecs and the cross-vocabulary bridge.

Three tokenizer kinds are supported: whitespace-word, character, and byte.
They are deliberately simple; the bridge between two tokenizers only needs
``decode`` and ``encode``, not any particular segmentation scheme.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .exceptions import InvalidTokenError, MalformedFileError, UnknownSymbolError

KIND_WORD = "whitespace-word"
KIND_CHAR = "character"
KIND_BYTE = "byte"
KINDS = (KIND_WORD, KIND_CHAR, KIND_BYTE)


@dataclass(frozen=True)
class Tokenizer:
    """Immutable vocabulary plus codec rules for one tokenizer kind.

    Token ids are dense: ``0 .. vocab_size - 1``. Token texts are unique and
    non-empty; word-kind texts contain no whitespace (they must survive a
    split/join round trip).
    """

    kind: str
    texts: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown tokenizer kind {self.kind!r}")
        seen: set[str] = set()
        for text in self.texts:
            if not text:
                raise ValueError("token texts must be non-empty")
            if text in seen:
                raise ValueError(f"duplicate token text {text!r}")
            seen.add(text)
            if self.kind == KIND_WORD and any(ch.isspace() for ch in text):
                raise ValueError(f"word token {text!r} contains whitespace")
            if self.kind == KIND_CHAR and len(text) != 1:
                raise ValueError(f"character token {text!r} is not a single symbol")
        if not self.texts:
            raise ValueError("vocabulary must be non-empty")

    # ------------------------------------------------------------------ #
    # construction helpers
    # ------------------------------------------------------------------ #

    @classmethod
    def from_words(cls, words) -> "Tokenizer":
        return cls(KIND_WORD, tuple(words))

    @classmethod
    def from_characters(cls, alphabet) -> "Tokenizer":
        return cls(KIND_CHAR, tuple(alphabet))

    @classmethod
    def from_bytes(cls) -> "Tokenizer":
        return cls(KIND_BYTE, tuple(chr(i) for i in range(256)))

    # ------------------------------------------------------------------ #
    # codec
    # ------------------------------------------------------------------ #

    @property
    def vocab_size(self) -> int:
        return len(self.texts)

    @property
    def joiner(self) -> str:
        return " " if self.kind == KIND_WORD else ""

    @cached_property
    def _ids(self) -> dict[str, int]:
        return {text: i for i, text in enumerate(self.texts)}

    def id_of(self, text: str) -> int:
        try:
            return self._ids[text]
        except KeyError:
            raise UnknownSymbolError(f"symbol {text!r} is not in the vocabulary") from None

    def token_text(self, token: int) -> str:
        if not 0 <= token < self.vocab_size:
            raise InvalidTokenError(f"token id {token} outside vocabulary of size {self.vocab_size}")
        return self.texts[token]

    def encode(self, text: str) -> list[int]:
        """Map text to token ids; inverse of :meth:`decode` on its image."""
        if self.kind == KIND_BYTE:
            return list(text.encode("utf-8"))
        if self.kind == KIND_WORD:
            pieces = text.split()
        else:
            pieces = list(text)
        return [self.id_of(piece) for piece in pieces]

    def decode(self, tokens) -> str:
        """Map token ids back to text."""
        tokens = list(tokens)
        if self.kind == KIND_BYTE:
            for tok in tokens:
                self.token_text(tok)
            return bytes(tokens).decode("utf-8")
        return self.joiner.join(self.token_text(tok) for tok in tokens)


def bridge(prefix, from_tok: Tokenizer, to_tok: Tokenizer) -> list[int]:
    """Re-express a token prefix of one tokenizer in another's vocabulary.

    Decodes under ``from_tok`` and re-encodes under ``to_tok``; the identity
    when both tokenizers are equal.
    """
    if from_tok == to_tok:
        return list(prefix)
    return to_tok.encode(from_tok.decode(prefix))


# ---------------------------------------------------------------------- #
# file format: {"kind": str, "vocab": {token_text: id}}
# ---------------------------------------------------------------------- #

def save_tokenizer(tok: Tokenizer, path) -> None:
    vocab = {} if tok.kind == KIND_BYTE else {text: i for i, text in enumerate(tok.texts)}
    Path(path).write_text(
        json.dumps({"kind": tok.kind, "vocab": vocab}, ensure_ascii=False, indent=2),
        encoding="utf-8",
    )


def load_tokenizer(path) -> Tokenizer:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFileError(f"cannot read tokenizer file {path}: {exc}") from exc
    if not isinstance(data, dict) or "kind" not in data:
        raise MalformedFileError(f"tokenizer file {path} must be an object with a 'kind' field")
    kind = data["kind"]
    if kind == KIND_BYTE:
        return Tokenizer.from_bytes()
    vocab = data.get("vocab")
    if not isinstance(vocab, dict) or not vocab:
        raise MalformedFileError(f"tokenizer file {path} needs a non-empty 'vocab' object")
    by_id: dict[int, str] = {}
    for text, tid in vocab.items():
        if not isinstance(tid, int) or tid in by_id:
            raise MalformedFileError(f"tokenizer file {path} has invalid or duplicate id for {text!r}")
        by_id[tid] = text
    if sorted(by_id) != list(range(len(by_id))):
        raise MalformedFileError(f"tokenizer file {path} ids must be dense 0..{len(by_id) - 1}")
    try:
        return Tokenizer(kind, tuple(by_id[i] for i in range(len(by_id))))
    except ValueError as exc:
        raise MalformedFileError(f"tokenizer file {path}: {exc}") from exc
