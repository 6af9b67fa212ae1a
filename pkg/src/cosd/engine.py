"""Draft-verify-replace generation loop, traces, and metrics.

Each round drafts up to ``draft_window`` tokens autoregressively, has the
assistant predict at every drafted position (the queries are mutually
independent), then scans the positions in order. The first replacement
commits the assistant's token, discards the rest of the draft, and starts a
new round; a round with no replacement commits the whole draft window.
Generation stops at the token budget or when an end-of-sequence token is
committed.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

from .backends.base import Backend, Prediction
from .exceptions import (
    BackendUnavailableError,
    GenerationAborted,
    InvalidTokenError,
    UnknownSymbolError,
    UnsupportedOperationError,
    VocabularyMismatchError,
)
from .tokenizers import Tokenizer, bridge
from .validation import check_positive_int
from .verification import (
    AveragePolicy,
    Decision,
    DecisionReason,
    SpeculativePolicy,
    VerifierPolicy,
    decide,
    verify_average,
)

_BACKEND_FAILURES = (
    BackendUnavailableError,
    UnsupportedOperationError,
    UnknownSymbolError,
    InvalidTokenError,
    VocabularyMismatchError,
    UnicodeDecodeError,  # byte-level prefix that cannot bridge into text
)


@dataclass(frozen=True)
class EngineConfig:
    """Run parameters: per-round draft window, output budget, stop token."""

    policy: VerifierPolicy
    draft_window: int = 16
    max_new_tokens: int = 64
    eos_token: int | None = None

    def __post_init__(self):
        check_positive_int(self.draft_window, "draft_window")
        check_positive_int(self.max_new_tokens, "max_new_tokens")


@dataclass(frozen=True)
class StepRecord:
    """One verified position: both predictions, the decision, the commit.

    ``committed_tokens`` holds the draft token on a keep; on a replacement
    it holds the assistant token's text re-encoded in the draft vocabulary,
    which may span several tokens when the tokenizers differ.
    ``committed_text`` is the exact text increment those tokens contribute.
    """

    round: int
    position: int
    draft: Prediction
    assistant: Prediction
    decision: Decision
    committed_tokens: tuple[int, ...]
    committed_text: str


@dataclass
class FusionTrace:
    """Everything one run did: prompt, per-position records, final output."""

    prompt: tuple[int, ...]
    records: list[StepRecord] = field(default_factory=list)
    output: tuple[int, ...] = ()
    rounds: int = 0


@dataclass(frozen=True)
class RunMetrics:
    """Acceptance rate over compared draft tokens, round count, timing.

    ``acceptance_rate`` is the fraction of compared draft tokens that were
    not replaced; ``token_latency`` is wall-clock seconds per output token.
    ``acceptance_applicable`` is False for average decoding, which never
    compares tokens and reports 1.0 by convention.
    """

    acceptance_rate: float
    rounds: int
    output_length: int
    token_latency: float
    acceptance_applicable: bool = True


def greedy_decode(backend: Backend, prompt, max_new_tokens: int,
                  eos_token: int | None = None) -> list[int]:
    """Plain single-model greedy generation; the no-fusion reference path."""
    context = list(prompt)
    output: list[int] = []
    for _ in range(max_new_tokens):
        token = backend.predict_next(context).token
        output.append(token)
        context.append(token)
        if eos_token is not None and token == eos_token:
            break
    return output


def _tokens_equal(draft_token: int, assistant_token: int, draft_tok: Tokenizer,
                  assistant_tok: Tokenizer, same: bool) -> bool:
    # across vocabularies the only shared space is text
    if same:
        return draft_token == assistant_token
    return draft_tok.token_text(draft_token) == assistant_tok.token_text(assistant_token)


def _increment_text(tok: Tokenizer, prefix: list[int], new_tokens: list[int]) -> str:
    # byte tokenizers can land mid multi-byte character; fall back to the
    # per-token texts so traces stay writable for arbitrary byte streams
    try:
        before = tok.decode(prefix)
        after = tok.decode(prefix + new_tokens)
    except UnicodeDecodeError:
        return "".join(tok.token_text(token) for token in new_tokens)
    return after[len(before):]


def _replacement_tokens(assistant_prefix: list[int], assistant_token: int,
                        draft_tok: Tokenizer, assistant_tok: Tokenizer,
                        same: bool) -> list[int]:
    """Draft-side tokens that commit an accepted assistant token.

    The assistant token's textual increment in context (including any word
    joiner) is re-encoded under the draft tokenizer; with differing
    tokenizers this may produce several draft tokens.
    """
    if same:
        return [assistant_token]
    increment = _increment_text(assistant_tok, assistant_prefix, [assistant_token])
    return draft_tok.encode(increment)


def _finish_metrics(records: list[StepRecord], rounds: int, output_length: int,
                    elapsed: float, applicable: bool = True) -> RunMetrics:
    compared = len(records)
    replaced = sum(1 for r in records if r.decision.replace)
    if not applicable or compared == 0:
        acceptance = 1.0
    else:
        acceptance = (compared - replaced) / compared
    latency = elapsed / output_length if output_length else 0.0
    return RunMetrics(
        acceptance_rate=acceptance,
        rounds=rounds,
        output_length=output_length,
        token_latency=latency,
        acceptance_applicable=applicable,
    )


def generate(draft: Backend, assistant: Backend, draft_tok: Tokenizer,
             assistant_tok: Tokenizer, prompt, config: EngineConfig,
             ) -> tuple[FusionTrace, RunMetrics]:
    """Run the full collaborative loop for one prompt.

    Deterministic for rule and tree policies; the speculative policy draws
    from a generator seeded per run. Backend and bridge failures raise
    :class:`GenerationAborted` with the partial trace attached.
    """
    if isinstance(config.policy, AveragePolicy):
        raise ValueError("the average policy decodes through generate_average")
    prompt = list(prompt)
    if not prompt:
        raise ValueError("prompt must be non-empty")
    rng = random.Random(config.policy.seed) if isinstance(config.policy, SpeculativePolicy) else None
    same = draft_tok == assistant_tok

    committed: list[int] = []
    records: list[StepRecord] = []
    rounds = 0
    started = time.perf_counter()
    try:
        finished = False
        while not finished and len(committed) < config.max_new_tokens:
            rounds += 1
            base = prompt + committed
            window = min(config.draft_window, config.max_new_tokens - len(committed))

            # draft phase: autoregressive from the committed prefix
            drafted: list[Prediction] = []
            context = list(base)
            for _ in range(window):
                pred = draft.predict_next(context)
                drafted.append(pred)
                context.append(pred.token)
                if config.eos_token is not None and pred.token == config.eos_token:
                    break

            # verification phase: independent assistant queries per position
            draft_prefixes = [base + [p.token for p in drafted[:i]] for i in range(len(drafted))]
            assistant_prefixes = [
                list(prefix) if same else bridge(prefix, draft_tok, assistant_tok)
                for prefix in draft_prefixes
            ]
            verdicts = [assistant.predict_next(prefix) for prefix in assistant_prefixes]

            # in-order scan; the first replacement ends the round
            for i, (draft_pred, assist_pred) in enumerate(zip(drafted, verdicts)):
                equal = _tokens_equal(draft_pred.token, assist_pred.token,
                                      draft_tok, assistant_tok, same)
                decision = decide(config.policy, draft_pred, assist_pred, equal, rng)
                position = len(committed)
                if decision.replace:
                    tokens = _replacement_tokens(assistant_prefixes[i], assist_pred.token,
                                                 draft_tok, assistant_tok, same)
                    if not tokens:
                        raise GenerationAborted(
                            "replacement re-encoded to zero draft tokens",
                            trace=FusionTrace(tuple(prompt), records, tuple(committed), rounds),
                        )
                    tokens = tokens[: config.max_new_tokens - len(committed)]
                    if config.eos_token is not None and config.eos_token in tokens:
                        tokens = tokens[: tokens.index(config.eos_token) + 1]
                        finished = True
                    text = _increment_text(draft_tok, draft_prefixes[i], tokens)
                    records.append(StepRecord(rounds, position, draft_pred, assist_pred,
                                              decision, tuple(tokens), text))
                    committed.extend(tokens)
                    break
                text = _increment_text(draft_tok, draft_prefixes[i], [draft_pred.token])
                records.append(StepRecord(rounds, position, draft_pred, assist_pred,
                                          decision, (draft_pred.token,), text))
                committed.append(draft_pred.token)
                if config.eos_token is not None and draft_pred.token == config.eos_token:
                    finished = True
                    break
    except _BACKEND_FAILURES as exc:
        raise GenerationAborted(
            str(exc), trace=FusionTrace(tuple(prompt), records, tuple(committed), rounds)
        ) from exc
    elapsed = time.perf_counter() - started
    trace = FusionTrace(tuple(prompt), records, tuple(committed), rounds)
    return trace, _finish_metrics(records, rounds, len(committed), elapsed)


def generate_average(draft: Backend, assistant: Backend, tokenizer: Tokenizer,
                     prompt, config: EngineConfig) -> tuple[FusionTrace, RunMetrics]:
    """Average-decoding baseline: fully autoregressive, no draft window.

    At each position the two untruncated distributions are averaged and the
    argmax committed. Requires a shared tokenizer. The acceptance rate is
    reported as 1.0 and flagged not applicable.
    """
    prompt = list(prompt)
    if not prompt:
        raise ValueError("prompt must be non-empty")
    committed: list[int] = []
    records: list[StepRecord] = []
    started = time.perf_counter()
    try:
        while len(committed) < config.max_new_tokens:
            prefix = prompt + committed
            draft_dist = draft.predict_distribution(prefix)
            assist_dist = assistant.predict_distribution(prefix)
            token = verify_average(draft_dist, assist_dist)
            draft_pred = draft_dist.top()
            assist_pred = assist_dist.top()
            decision = Decision(token != draft_pred.token, DecisionReason.AVERAGED)
            text = _increment_text(tokenizer, prefix, [token])
            records.append(StepRecord(len(records) + 1, len(committed), draft_pred,
                                      assist_pred, decision, (token,), text))
            committed.append(token)
            if config.eos_token is not None and token == config.eos_token:
                break
    except _BACKEND_FAILURES as exc:
        raise GenerationAborted(
            str(exc), trace=FusionTrace(tuple(prompt), records, tuple(committed), len(records))
        ) from exc
    elapsed = time.perf_counter() - started
    trace = FusionTrace(tuple(prompt), records, tuple(committed), len(records))
    return trace, _finish_metrics(records, len(records), len(committed), elapsed,
                                  applicable=False)


# ---------------------------------------------------------------------- #
# trace rendering and JSONL persistence
# ---------------------------------------------------------------------- #

def _render_parts(draft_text: str, committed_text: str, replaced: bool) -> str:
    if not replaced:
        return committed_text
    lead = ""
    body = committed_text
    if body.startswith(" "):
        lead, body = " ", body.lstrip(" ")
    return f"{lead}[-{draft_text}-]{{+{body}+}}"


def render_trace(trace: FusionTrace, draft_tok: Tokenizer, assistant_tok: Tokenizer) -> str:
    """Human-readable rendering: kept tokens plain, replacements marked as
    ``[-draft-]{+assistant+}`` spans."""
    del assistant_tok  # replacement text is already recorded draft-side
    parts = [
        _render_parts(draft_tok.token_text(r.draft.token), r.committed_text, r.decision.replace)
        for r in trace.records
    ]
    return "".join(parts).strip()


def render_records(records) -> str:
    """Render trace-file record dicts the same way as :func:`render_trace`."""
    parts = [
        _render_parts(r["draft_text"], r["committed_text"], r["replaced"])
        for r in records
    ]
    return "".join(parts).strip()


def trace_lines(trace: FusionTrace, metrics: RunMetrics, draft_tok: Tokenizer,
                assistant_tok: Tokenizer):
    """JSONL lines: one object per record plus a closing summary line.

    The summary intentionally omits wall-clock latency so identical runs
    produce byte-identical files.
    """
    for r in trace.records:
        yield json.dumps({
            "round": r.round,
            "position": r.position,
            "draft_token": r.draft.token,
            "draft_text": draft_tok.token_text(r.draft.token),
            "draft_prob": r.draft.probability,
            "assistant_token": r.assistant.token,
            "assistant_text": assistant_tok.token_text(r.assistant.token),
            "assistant_prob": r.assistant.probability,
            "replaced": r.decision.replace,
            "reason": r.decision.reason.value,
            "committed_text": r.committed_text,
        }, ensure_ascii=False)
    yield json.dumps({
        "summary": True,
        "acceptance_rate": metrics.acceptance_rate,
        "acceptance_applicable": metrics.acceptance_applicable,
        "rounds": metrics.rounds,
        "output_length": metrics.output_length,
    }, ensure_ascii=False)


def write_trace(path, trace: FusionTrace, metrics: RunMetrics, draft_tok: Tokenizer,
                assistant_tok: Tokenizer) -> None:
    lines = trace_lines(trace, metrics, draft_tok, assistant_tok)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path) -> tuple[list[dict], dict]:
    """Load a trace file back into (records, summary) dictionaries."""
    records: list[dict] = []
    summary: dict = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("summary"):
                summary = obj
            else:
                records.append(obj)
    return records, summary
