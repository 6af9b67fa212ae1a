"""Decision-tree verifier: dataset construction, training, serialization.

The classifier works on exactly two features, the draft and assistant
probabilities of their greedy tokens, and predicts 0 (keep the draft token)
or 1 (take the assistant token). Training data comes from teacher-forced
runs over (input, target) pairs with three labeling rules: the draft
matching the target labels 0, the draft missing while the assistant matches
labels 1, and positions where neither matches are dropped.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .exceptions import MalformedFileError
from .tokenizers import Tokenizer, bridge
from .validation import check_label, check_positive_int, check_probability

FEATURE_NAMES = ("draft_prob", "assistant_prob")


@dataclass(frozen=True)
class LabeledSample:
    """One training point: the two probabilities, the label, and provenance.

    ``pair_index`` and ``position`` (1-based target position) record where
    the sample came from so labels can be re-derived and audited.
    """

    draft_prob: float
    assistant_prob: float
    label: int
    pair_index: int = -1
    position: int = -1

    def __post_init__(self):
        check_probability(self.draft_prob, "draft_prob")
        check_probability(self.assistant_prob, "assistant_prob")
        check_label(self.label)

    @property
    def features(self) -> tuple[float, float]:
        return (self.draft_prob, self.assistant_prob)


def _entropy(n0: int, n1: int) -> float:
    total = n0 + n1
    if total == 0:
        return 0.0
    h = 0.0
    for n in (n0, n1):
        if n:
            p = n / total
            h -= p * math.log(p)
    return h


class DecisionTreeVerifier(ClassifierMixin, BaseEstimator):
    """Axis-aligned binary tree over the (draft, assistant) probability plane.

    Induction is greedy and top-down: every candidate split is a midpoint
    between consecutive distinct sorted feature values, the chosen split
    maximizes information gain (equivalently, it minimizes the summed
    cross-entropy of the leaf label distributions), and ties prefer the
    lower feature index, then the lower threshold. Leaves predict the
    majority label, 0 on an exact tie. Growth stops at purity, ``max_depth``,
    or when no split leaves ``min_leaf`` samples on each side. The result is
    fully deterministic: identical samples and hyperparameters give
    byte-identical serializations.
    """

    def __init__(self, max_depth: int = 3, min_leaf: int = 2):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    # ------------------------------------------------------------------ #
    # training
    # ------------------------------------------------------------------ #

    def fit(self, X, y) -> "DecisionTreeVerifier":
        check_positive_int(self.max_depth, "max_depth")
        check_positive_int(self.min_leaf, "min_leaf")
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError(f"X must have shape (n, 2), got {X.shape}")
        if X.shape[0] == 0:
            raise ValueError("training set is empty")
        if y.shape != (X.shape[0],):
            raise ValueError("y must be one label per row of X")
        if np.any((X < 0.0) | (X > 1.0)):
            raise ValueError("features must lie in [0, 1]")
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be 0 or 1")

        self.classes_ = np.array([0, 1])
        self.nodes_: list[dict] = []
        self._grow(X, y, depth=0)
        return self

    def _grow(self, X: np.ndarray, y: np.ndarray, depth: int) -> int:
        index = len(self.nodes_)
        self.nodes_.append({})
        n1 = int(y.sum())
        n0 = int(len(y) - n1)

        split = None
        if 0 < n1 < len(y) and depth < self.max_depth:
            split = self._best_split(X, y)
        if split is None:
            label = 1 if n1 > n0 else 0
            self.nodes_[index] = {"leaf": label, "counts": [n0, n1]}
            return index

        feature, threshold = split
        mask = X[:, feature] <= threshold
        left = self._grow(X[mask], y[mask], depth + 1)
        right = self._grow(X[~mask], y[~mask], depth + 1)
        self.nodes_[index] = {
            "feature": feature,
            "threshold": threshold,
            "left": left,
            "right": right,
        }
        return index

    def _best_split(self, X: np.ndarray, y: np.ndarray):
        n = len(y)
        parent = _entropy(int((y == 0).sum()), int(y.sum()))
        best_gain = 1e-12
        best = None
        for feature in (0, 1):
            values = np.sort(np.unique(X[:, feature]))
            for lo, hi in zip(values[:-1], values[1:]):
                threshold = (lo + hi) / 2.0
                mask = X[:, feature] <= threshold
                nl = int(mask.sum())
                nr = n - nl
                if nl < self.min_leaf or nr < self.min_leaf:
                    continue
                yl = y[mask]
                yr = y[~mask]
                child = (nl / n) * _entropy(nl - int(yl.sum()), int(yl.sum()))
                child += (nr / n) * _entropy(nr - int(yr.sum()), int(yr.sum()))
                gain = parent - child
                if gain > best_gain:  # strict: earlier (feature, threshold) wins ties
                    best_gain = gain
                    best = (feature, threshold)
        return best

    # ------------------------------------------------------------------ #
    # classification
    # ------------------------------------------------------------------ #

    def classify(self, draft_prob: float, assistant_prob: float) -> int:
        """Leaf label for one probability pair; ``feature <= threshold`` goes left."""
        if not hasattr(self, "nodes_"):
            raise NotFittedError("DecisionTreeVerifier must be fitted before classification")
        features = (float(draft_prob), float(assistant_prob))
        node = self.nodes_[0]
        while "leaf" not in node:
            if features[node["feature"]] <= node["threshold"]:
                node = self.nodes_[node["left"]]
            else:
                node = self.nodes_[node["right"]]
        return node["leaf"]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError(f"X must have shape (n, 2), got {X.shape}")
        return np.array([self.classify(p, q) for p, q in X], dtype=int)

    @property
    def depth_(self) -> int:
        if not hasattr(self, "nodes_"):
            raise NotFittedError("DecisionTreeVerifier must be fitted first")

        def walk(index: int) -> int:
            node = self.nodes_[index]
            if "leaf" in node:
                return 0
            return 1 + max(walk(node["left"]), walk(node["right"]))

        return walk(0)


def train_tree(samples, max_depth: int = 3, min_leaf: int = 2) -> DecisionTreeVerifier:
    """Fit a :class:`DecisionTreeVerifier` on labeled samples."""
    samples = list(samples)
    if not samples:
        raise ValueError("samples must be non-empty")
    X = [s.features for s in samples]
    y = [s.label for s in samples]
    return DecisionTreeVerifier(max_depth=max_depth, min_leaf=min_leaf).fit(X, y)


# ---------------------------------------------------------------------- #
# dataset construction
# ---------------------------------------------------------------------- #

def build_dataset(draft, assistant, pairs, draft_tokenizer: Tokenizer,
                  assistant_tokenizer: Tokenizer) -> list[LabeledSample]:
    """Teacher-forced labeling over (input tokens, target tokens) pairs.

    For target position ``i`` both models predict the next token after the
    input plus the first ``i - 1`` ground-truth tokens (bridged into the
    assistant's vocabulary when the tokenizers differ); the three labeling
    rules then decide label 0, label 1, or drop. Positions depend only on
    the ground-truth prefix, never on model output, so samples arrive in
    (pair index, position) order regardless of query scheduling. The drop
    count is recoverable as total target positions minus emitted samples.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("pairs must be non-empty")
    same = draft_tokenizer == assistant_tokenizer
    samples: list[LabeledSample] = []
    for pair_index, (input_tokens, target_tokens) in enumerate(pairs):
        input_tokens = list(input_tokens)
        target_tokens = list(target_tokens)
        if not target_tokens:
            raise ValueError(f"pair {pair_index} has an empty target")
        for position in range(1, len(target_tokens) + 1):
            prefix = input_tokens + target_tokens[:position - 1]
            target = target_tokens[position - 1]
            draft_pred = draft.predict_next(prefix)
            assist_prefix = prefix if same else bridge(prefix, draft_tokenizer, assistant_tokenizer)
            assist_pred = assistant.predict_next(assist_prefix)
            if draft_pred.token == target:
                label = 0
            else:
                if same:
                    assistant_matches = assist_pred.token == target
                else:
                    assistant_matches = (
                        assistant_tokenizer.token_text(assist_pred.token)
                        == draft_tokenizer.token_text(target)
                    )
                if not assistant_matches:
                    continue  # neither model matches the target: drop
                label = 1
            samples.append(LabeledSample(
                draft_prob=draft_pred.probability,
                assistant_prob=assist_pred.probability,
                label=label,
                pair_index=pair_index,
                position=position,
            ))
    if not samples:
        warnings.warn("every position was dropped; the training corpus is degenerate",
                      stacklevel=2)
    return samples


# ---------------------------------------------------------------------- #
# serialization: {"max_depth": n, "nodes": [...]}, node 0 is the root
# ---------------------------------------------------------------------- #

def save_tree(tree: DecisionTreeVerifier) -> bytes:
    if not hasattr(tree, "nodes_"):
        raise NotFittedError("cannot serialize an unfitted tree")
    payload = {"max_depth": tree.max_depth, "nodes": tree.nodes_}
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def load_tree(data: bytes) -> DecisionTreeVerifier:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFileError(f"cannot parse tree data: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedFileError("tree data must be a JSON object")
    nodes = payload.get("nodes")
    max_depth = payload.get("max_depth")
    if not isinstance(nodes, list) or not nodes or not isinstance(max_depth, int):
        raise MalformedFileError("tree data needs 'max_depth' and a non-empty 'nodes' list")
    for index, node in enumerate(nodes):
        if not isinstance(node, dict):
            raise MalformedFileError(f"node {index} is not an object")
        if "leaf" in node:
            counts = node.get("counts")
            if node["leaf"] not in (0, 1) or not isinstance(counts, list) or len(counts) != 2:
                raise MalformedFileError(f"leaf node {index} is malformed")
        else:
            if node.get("feature") not in (0, 1) or not isinstance(node.get("threshold"), (int, float)):
                raise MalformedFileError(f"internal node {index} is malformed")
            for side in ("left", "right"):
                child = node.get(side)
                # children come after their parent, so descent always terminates
                if not isinstance(child, int) or not index < child < len(nodes):
                    raise MalformedFileError(f"internal node {index} has a bad {side} child")
    tree = DecisionTreeVerifier(max_depth=max_depth)
    tree.classes_ = np.array([0, 1])
    tree.nodes_ = nodes
    return tree


def write_tree(tree: DecisionTreeVerifier, path) -> None:
    from pathlib import Path

    Path(path).write_bytes(save_tree(tree))


def read_tree(path) -> DecisionTreeVerifier:
    from pathlib import Path

    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise MalformedFileError(f"cannot read tree file {path}: {exc}") from exc
    return load_tree(data)
