"""Client backend for logprob-serving completion endpoints."""

from __future__ import annotations

import math

import requests

from ..exceptions import BackendUnavailableError, UnknownSymbolError, UnsupportedOperationError
from ..tokenizers import Tokenizer
from .base import Backend, Distribution, Prediction, check_top_k, sort_entries

DEFAULT_TIMEOUT = 30.0


def parse_completion(payload) -> tuple[str, dict[str, float]]:
    """Extract the generated token text and its top-k log-probabilities.

    Accepts completions-style responses: ``choices[0].text`` plus
    ``choices[0].logprobs.top_logprobs[0]`` given either as a mapping from
    token text to log-probability or as a list of ``{"token", "logprob"}``
    objects. Unknown fields are ignored; missing required fields raise
    :class:`BackendUnavailableError`, never a silent default.
    """
    if not isinstance(payload, dict):
        raise BackendUnavailableError("completion response is not a JSON object")
    choices = payload.get("choices")
    if not isinstance(choices, list) or not choices or not isinstance(choices[0], dict):
        raise BackendUnavailableError("completion response has no choices")
    choice = choices[0]
    text = choice.get("text")
    if not isinstance(text, str):
        raise BackendUnavailableError("completion response is missing the generated text")
    logprobs = choice.get("logprobs")
    if not isinstance(logprobs, dict):
        raise BackendUnavailableError("completion response is missing the logprobs block")
    top = logprobs.get("top_logprobs")
    if not isinstance(top, list) or not top:
        raise BackendUnavailableError("completion response is missing top_logprobs")
    head = top[0]
    table: dict[str, float] = {}
    if isinstance(head, dict) and all(isinstance(v, (int, float)) for v in head.values()):
        items = head.items()
    elif isinstance(head, list):
        try:
            items = [(entry["token"], entry["logprob"]) for entry in head]
        except (TypeError, KeyError) as exc:
            raise BackendUnavailableError("top_logprobs entries lack token/logprob fields") from exc
    else:
        raise BackendUnavailableError("top_logprobs has an unrecognized shape")
    for tok_text, logprob in items:
        if not isinstance(tok_text, str) or not isinstance(logprob, (int, float)):
            raise BackendUnavailableError("top_logprobs pairs token texts with log-probabilities")
        table[tok_text] = float(logprob)
    if not table:
        raise BackendUnavailableError("top_logprobs is empty")
    return text, table


def _to_probability(logprob: float) -> float:
    # exponentiation can drift a hair above 1; clamp to absorb float error
    return min(1.0, max(0.0, math.exp(logprob)))


class HttpBackend(Backend):
    """Greedy predictions from a completions API that reports logprobs.

    Each query POSTs ``{"prompt", "max_tokens": 1, "logprobs": k,
    "temperature": 0}`` and maps the returned token texts back into the
    local vocabulary. Only top-k distributions are available; asking for an
    untruncated distribution raises :class:`UnsupportedOperationError`.
    """

    def __init__(self, url: str, tokenizer: Tokenizer, *, top_k: int = 20,
                 auth_header: str = "Authorization", auth_token: str | None = None,
                 timeout: float = DEFAULT_TIMEOUT, session=None):
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        self.url = url
        self.tokenizer = tokenizer
        self.top_k = top_k
        self.auth_header = auth_header
        self.auth_token = auth_token
        self.timeout = timeout
        self._session = session or requests.Session()

    def _complete(self, prefix, k: int) -> tuple[str, dict[str, float]]:
        body = {
            "prompt": self.tokenizer.decode(prefix),
            "max_tokens": 1,
            "logprobs": k,
            "temperature": 0,
        }
        headers = {}
        if self.auth_token:
            headers[self.auth_header] = f"Bearer {self.auth_token}"
        try:
            response = self._session.post(self.url, json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"completion request failed: {exc}") from exc
        if response.status_code != 200:
            raise BackendUnavailableError(f"completion endpoint returned HTTP {response.status_code}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise BackendUnavailableError("completion response is not valid JSON") from exc
        return parse_completion(payload)

    def _token_id(self, text: str) -> int:
        try:
            return self.tokenizer.id_of(text)
        except UnknownSymbolError as exc:
            raise BackendUnavailableError(f"endpoint returned out-of-vocabulary token {text!r}") from exc

    def predict_next(self, prefix) -> Prediction:
        text, table = self._complete(prefix, k=1)
        if text not in table:
            raise BackendUnavailableError(f"no log-probability reported for generated token {text!r}")
        return Prediction(self._token_id(text), _to_probability(table[text]))

    def predict_distribution(self, prefix, top_k: int | None = None) -> Distribution:
        check_top_k(top_k)
        if top_k is None:
            raise UnsupportedOperationError(
                "HTTP backends only provide top-k distributions; pass top_k"
            )
        _, table = self._complete(prefix, k=top_k)
        entries = sort_entries(
            (self._token_id(text), _to_probability(lp)) for text, lp in table.items()
        )
        return Distribution(entries[:top_k], truncated=True)
