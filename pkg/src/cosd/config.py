"""Run configuration: one JSON file with models, tokenizers, engine, policy.

Validation is strict (unknown keys are errors) and happens before any
backend is constructed. ``${VAR}`` references in string values are replaced
from the environment; relative paths resolve against the config file's
directory.
"""

from __future__ import annotations

import copy
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path

from .backends import Backend, HttpBackend, load_ngram, load_table
from .engine import EngineConfig
from .exceptions import ConfigError, MalformedFileError, UnknownSymbolError
from .tokenizers import Tokenizer, load_tokenizer
from .tree import read_tree
from .verification import (
    AveragePolicy,
    RuleParams,
    RulePolicy,
    SpeculativePolicy,
    TreePolicy,
    VerifierPolicy,
)

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

ENGINE_DEFAULTS = {"draft_window": 16, "max_new_tokens": 64, "eos_token": None}
HTTP_DEFAULTS = {"auth_header": "Authorization", "auth_token": None, "timeout": 30.0, "top_k": 20}
RULE_DEFAULTS = {"alpha": 0.5, "beta": 0.5}

_MODEL_KEYS = {
    "ngram": {"type", "path"},
    "table": {"type", "path"},
    "http": {"type", "url", "auth_header", "auth_token", "timeout", "top_k"},
}
_POLICY_KEYS = {
    "rule": {"policy", "alpha", "beta"},
    "tree": {"policy", "tree_path"},
    "speculative": {"policy", "seed"},
    "average": {"policy"},
}


def _interpolate(value, where: str):
    if isinstance(value, str):
        def sub(match):
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"{where}: environment variable {name} is not set")
            return os.environ[name]

        return _ENV_PATTERN.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v, f"{where}.{k}") for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v, where) for v in value]
    return value


def _require_keys(section: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _check_model(section, where: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    kind = section.get("type")
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"{where}.type must be one of {sorted(_MODEL_KEYS)}, got {kind!r}")
    if kind == "http":
        _require_keys(section, _MODEL_KEYS[kind], {"type", "url"}, where)
        out = {**{"type": kind}, **HTTP_DEFAULTS, **section}
        if not isinstance(out["url"], str) or not out["url"]:
            raise ConfigError(f"{where}.url must be a non-empty string")
        return out
    _require_keys(section, _MODEL_KEYS[kind], {"type", "path"}, where)
    if not isinstance(section["path"], str) or not section["path"]:
        raise ConfigError(f"{where}.path must be a non-empty string")
    return dict(section)


def _check_policy(section) -> dict:
    if not isinstance(section, dict):
        raise ConfigError("policy must be an object")
    name = section.get("policy")
    if name not in _POLICY_KEYS:
        raise ConfigError(f"policy.policy must be one of {sorted(_POLICY_KEYS)}, got {name!r}")
    _require_keys(section, _POLICY_KEYS[name], {"policy"}, "policy")
    out = dict(section)
    if name == "rule":
        out = {**{"policy": name}, **RULE_DEFAULTS, **out}
        for key in ("alpha", "beta"):
            if not isinstance(out[key], (int, float)):
                raise ConfigError(f"policy.{key} must be a number")
    elif name == "tree":
        if not isinstance(out.get("tree_path"), str) or not out["tree_path"]:
            raise ConfigError("policy.tree_path is required for the tree policy")
    elif name == "speculative":
        out.setdefault("seed", 0)
        if not isinstance(out["seed"], int):
            raise ConfigError("policy.seed must be an integer")
    return out


def _check_engine(section) -> dict:
    if section is None:
        section = {}
    if not isinstance(section, dict):
        raise ConfigError("engine must be an object")
    allowed = {"draft_window", "max_new_tokens", "eos_token", "eos_text"}
    _require_keys(section, allowed, set(), "engine")
    if "eos_token" in section and "eos_text" in section:
        raise ConfigError("engine: give either eos_token or eos_text, not both")
    defaults = dict(ENGINE_DEFAULTS)
    if "eos_text" in section:
        del defaults["eos_token"]
    out = {**defaults, **section}
    for key in ("draft_window", "max_new_tokens"):
        if not isinstance(out[key], int) or out[key] < 1:
            raise ConfigError(f"engine.{key} must be an integer >= 1")
    return out


def validate_config(raw: dict) -> dict:
    """Validate a parsed config and return it with defaults filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _require_keys(raw, {"models", "tokenizers", "engine", "policy"},
                  {"models", "tokenizers", "policy"}, "config")
    models = raw["models"]
    if not isinstance(models, dict):
        raise ConfigError("models must be an object")
    _require_keys(models, {"draft", "assistant"}, {"draft", "assistant"}, "models")
    tokenizers = raw["tokenizers"]
    if not isinstance(tokenizers, dict):
        raise ConfigError("tokenizers must be an object")
    _require_keys(tokenizers, {"draft", "assistant"}, {"draft", "assistant"}, "tokenizers")
    for side in ("draft", "assistant"):
        if not isinstance(tokenizers[side], str) or not tokenizers[side]:
            raise ConfigError(f"tokenizers.{side} must be a file path")
    return {
        "models": {
            "draft": _check_model(models["draft"], "models.draft"),
            "assistant": _check_model(models["assistant"], "models.assistant"),
        },
        "tokenizers": dict(tokenizers),
        "engine": _check_engine(raw.get("engine")),
        "policy": _check_policy(raw["policy"]),
    }


def load_config(path) -> dict:
    """Read, interpolate, and validate a config file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(_interpolate(raw, "config"))


def effective_config(cfg: dict) -> dict:
    """The fully defaulted form of a validated config; safe to re-run from."""
    return copy.deepcopy(cfg)


@dataclass
class Runtime:
    """Constructed backends, tokenizers, and engine settings for one config."""

    draft: Backend
    assistant: Backend
    draft_tok: Tokenizer
    assistant_tok: Tokenizer
    engine_config: EngineConfig

    @property
    def policy(self) -> VerifierPolicy:
        return self.engine_config.policy


def _build_backend(model_cfg: dict, tokenizer: Tokenizer, base_dir: Path) -> Backend:
    kind = model_cfg["type"]
    if kind == "ngram":
        return load_ngram(base_dir / model_cfg["path"])
    if kind == "table":
        return load_table(base_dir / model_cfg["path"])
    auth_token = model_cfg["auth_token"] or os.environ.get("COSD_HTTP_TOKEN")
    return HttpBackend(
        model_cfg["url"], tokenizer,
        top_k=model_cfg["top_k"], auth_header=model_cfg["auth_header"],
        auth_token=auth_token, timeout=model_cfg["timeout"],
    )


def build_policy(policy_cfg: dict, base_dir: Path) -> VerifierPolicy:
    name = policy_cfg["policy"]
    if name == "rule":
        return RulePolicy(RuleParams(alpha=policy_cfg["alpha"], beta=policy_cfg["beta"]))
    if name == "tree":
        tree_path = base_dir / policy_cfg["tree_path"]
        try:
            return TreePolicy(read_tree(tree_path))
        except MalformedFileError as exc:
            raise ConfigError(str(exc)) from exc
    if name == "speculative":
        return SpeculativePolicy(seed=policy_cfg["seed"])
    return AveragePolicy()


def build_runtime(cfg: dict, base_dir) -> Runtime:
    """Instantiate everything a validated config describes."""
    base_dir = Path(base_dir)
    try:
        draft_tok = load_tokenizer(base_dir / cfg["tokenizers"]["draft"])
        assistant_tok = load_tokenizer(base_dir / cfg["tokenizers"]["assistant"])
    except MalformedFileError as exc:
        raise ConfigError(str(exc)) from exc
    engine_cfg = cfg["engine"]
    eos = engine_cfg.get("eos_token")
    if engine_cfg.get("eos_text") is not None:
        try:
            eos = draft_tok.id_of(engine_cfg["eos_text"])
        except UnknownSymbolError as exc:
            raise ConfigError(f"engine.eos_text: {exc}") from exc
    try:
        draft = _build_backend(cfg["models"]["draft"], draft_tok, base_dir)
        assistant = _build_backend(cfg["models"]["assistant"], assistant_tok, base_dir)
    except MalformedFileError as exc:
        raise ConfigError(str(exc)) from exc
    policy = build_policy(cfg["policy"], base_dir)
    return Runtime(
        draft=draft,
        assistant=assistant,
        draft_tok=draft_tok,
        assistant_tok=assistant_tok,
        engine_config=EngineConfig(
            policy=policy,
            draft_window=engine_cfg["draft_window"],
            max_new_tokens=engine_cfg["max_new_tokens"],
            eos_token=eos,
        ),
    )
