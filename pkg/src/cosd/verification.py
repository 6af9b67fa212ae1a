"""Per-token keep-or-replace decisions.

Four policies: the rule check over the two probabilities, the trained
decision tree, the classic speculative ratio test, and probability
averaging. All of them answer the same question for one position: keep the
draft token or substitute the assistant's.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from .backends.base import Distribution, Prediction
from .exceptions import VocabularyMismatchError
from .tree import DecisionTreeVerifier
from .validation import check_non_negative, check_probability


class DecisionReason(str, Enum):
    TOKENS_EQUAL = "tokens-equal"
    RULE_FIRED = "rule-fired"
    RULE_NOT_FIRED = "rule-not-fired"
    TREE_VOTE = "tree-vote"
    RATIO_TEST = "ratio-test"
    AVERAGED = "averaged"


@dataclass(frozen=True)
class Decision:
    """Outcome of one verification: whether to replace, and why.

    ``replace`` is always False when the draft and assistant tokens are
    equal, for every policy.
    """

    replace: bool
    reason: DecisionReason


KEEP_EQUAL = Decision(False, DecisionReason.TOKENS_EQUAL)


@dataclass(frozen=True)
class RuleParams:
    """Thresholds for rule-based verification: alpha in [0,1], beta >= 0."""

    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        check_probability(self.alpha, "alpha")
        check_non_negative(self.beta, "beta")


def verify_rule(params: RuleParams, draft: Prediction, assistant: Prediction,
                tokens_equal: bool) -> Decision:
    """Replace iff the tokens differ, the draft's probability falls below
    ``alpha``, and the assistant's probability exceeds ``beta`` times the
    draft's. All three conditions must hold; the inequalities are strict,
    so boundary cases keep the draft token.
    """
    if tokens_equal:
        return KEEP_EQUAL
    fired = draft.probability < params.alpha and assistant.probability > params.beta * draft.probability
    return Decision(fired, DecisionReason.RULE_FIRED if fired else DecisionReason.RULE_NOT_FIRED)


def verify_tree(tree: DecisionTreeVerifier, draft: Prediction, assistant: Prediction,
                tokens_equal: bool) -> Decision:
    """Replace iff the tokens differ and the tree classifies the probability
    pair as 1."""
    if tokens_equal:
        return KEEP_EQUAL
    vote = tree.classify(draft.probability, assistant.probability)
    return Decision(vote == 1, DecisionReason.TREE_VOTE)


def verify_speculative(rng: random.Random, draft: Prediction, assistant: Prediction) -> Decision:
    """Speculative-decoding baseline: replace iff the probability ratio
    falls below a fresh uniform draw.

    Advances the generator exactly once per call so replayed runs stay
    aligned. A zero assistant probability keeps the draft token (the ratio
    is treated as infinite).
    """
    u = rng.random()
    if assistant.probability <= 0.0:
        return Decision(False, DecisionReason.RATIO_TEST)
    return Decision(draft.probability / assistant.probability < u, DecisionReason.RATIO_TEST)


def verify_average(draft_dist: Distribution, assistant_dist: Distribution) -> int:
    """Token with the highest mean probability across the two untruncated
    distributions; ties break toward the lower token id."""
    if draft_dist.truncated or assistant_dist.truncated:
        raise VocabularyMismatchError("average decoding needs untruncated distributions")
    if len(draft_dist.entries) != len(assistant_dist.entries):
        raise VocabularyMismatchError(
            f"distributions cover different vocabularies "
            f"({len(draft_dist.entries)} vs {len(assistant_dist.entries)} tokens)"
        )
    size = len(draft_dist.entries)
    mean = [0.0] * size
    for dist in (draft_dist, assistant_dist):
        for token, prob in dist.entries:
            mean[token] += prob / 2.0
    best = 0
    for token in range(1, size):
        if mean[token] > mean[best]:
            best = token
    return best


# ---------------------------------------------------------------------- #
# policy variants
# ---------------------------------------------------------------------- #

@dataclass(frozen=True)
class RulePolicy:
    params: RuleParams = field(default_factory=RuleParams)


@dataclass(frozen=True)
class TreePolicy:
    tree: DecisionTreeVerifier


@dataclass(frozen=True)
class SpeculativePolicy:
    seed: int = 0


@dataclass(frozen=True)
class AveragePolicy:
    pass


VerifierPolicy = RulePolicy | TreePolicy | SpeculativePolicy | AveragePolicy


def decide(policy: VerifierPolicy, draft: Prediction, assistant: Prediction,
           tokens_equal: bool, rng: random.Random | None = None) -> Decision:
    """Apply one policy at one position.

    The speculative baseline consumes its uniform draw even at equal-token
    positions (keeping trace replay aligned), but equal tokens are never
    reported as replacements.
    """
    if isinstance(policy, RulePolicy):
        return verify_rule(policy.params, draft, assistant, tokens_equal)
    if isinstance(policy, TreePolicy):
        return verify_tree(policy.tree, draft, assistant, tokens_equal)
    if isinstance(policy, SpeculativePolicy):
        if rng is None:
            raise ValueError("speculative verification needs the run's generator")
        decision = verify_speculative(rng, draft, assistant)
        if tokens_equal:
            return KEEP_EQUAL
        return decision
    raise ValueError(f"policy {policy!r} has no per-token decision")
