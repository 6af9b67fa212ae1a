import json
from pathlib import Path

import pytest

from cosd import save_ngram, save_tokenizer

from world import build_cross_world, build_word_world


@pytest.fixture(scope="session")
def word_world():
    return build_word_world()


@pytest.fixture(scope="session")
def cross_world():
    return build_cross_world()


@pytest.fixture(scope="session")
def word_world_dir(word_world, tmp_path_factory) -> Path:
    """The word world materialized as files the CLI can consume."""
    root = tmp_path_factory.mktemp("word_world")
    save_tokenizer(word_world.tok, root / "tok.json")
    save_ngram(word_world.draft, root / "draft.json")
    save_ngram(word_world.assistant, root / "assistant.json")
    with (root / "suite.jsonl").open("w", encoding="utf-8") as handle:
        for row in word_world.suite:
            handle.write(json.dumps(row) + "\n")
    (root / "prompts.txt").write_text(
        "\n".join(f.prompt for f in word_world.facts[:3]) + "\n", encoding="utf-8")
    return root


@pytest.fixture(scope="session")
def cross_world_dir(cross_world, tmp_path_factory) -> Path:
    """The mixed-tokenizer world materialized as files for the CLI."""
    root = tmp_path_factory.mktemp("cross_world")
    save_tokenizer(cross_world.char_tok, root / "chars.json")
    save_tokenizer(cross_world.word_tok, root / "words.json")
    save_ngram(cross_world.draft, root / "draft.json")
    save_ngram(cross_world.assistant, root / "assistant.json")
    with (root / "suite.jsonl").open("w", encoding="utf-8") as handle:
        for row in cross_world.suite:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
    (root / "prompts.txt").write_text(
        "\n".join(f.prompt for f in cross_world.facts[:4]) + "\n", encoding="utf-8")
    return root


def write_config(path: Path, **overrides) -> Path:
    """Write a config pointing at the word-world files, with overrides merged in."""
    config = {
        "models": {
            "draft": {"type": "ngram", "path": "draft.json"},
            "assistant": {"type": "ngram", "path": "assistant.json"},
        },
        "tokenizers": {"draft": "tok.json", "assistant": "tok.json"},
        "engine": {"draft_window": 8, "max_new_tokens": 8, "eos_text": "."},
        "policy": {"policy": "rule", "alpha": 0.5, "beta": 0.5},
    }
    for key, value in overrides.items():
        config[key] = value
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path
