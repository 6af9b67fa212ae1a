"""Command-line surface: run, train-ngram, train-tree, benchmark, render.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from itertools import product
from pathlib import Path

from .backends import train_ngram, save_ngram
from .config import build_runtime, effective_config, load_config, Runtime
from .engine import (
    EngineConfig,
    generate,
    generate_average,
    greedy_decode,
    read_trace,
    render_records,
    write_trace,
)
from .exceptions import ConfigError, CosdError, MalformedFileError
from .tokenizers import load_tokenizer
from .tree import build_dataset, train_tree, save_tree
from .validation import normalized_text
from .verification import AveragePolicy, RuleParams, RulePolicy, SpeculativePolicy


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_prompts(path: Path) -> list[str]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read prompts file {path}: {exc}") from exc
    prompts = [line.strip() for line in lines if line.strip()]
    if not prompts:
        raise ConfigError(f"prompts file {path} is empty")
    return prompts


def _read_jsonl(path: Path, required: tuple[str, ...], what: str) -> list[dict]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} file {path}: {exc}") from exc
    rows = []
    for number, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{what} file {path} line {number}: {exc}") from exc
        if not isinstance(obj, dict) or any(key not in obj for key in required):
            raise ConfigError(f"{what} file {path} line {number}: needs fields {required}")
        rows.append(obj)
    if not rows:
        raise ConfigError(f"{what} file {path} is empty")
    return rows


def _per_prompt_config(config: EngineConfig, index: int) -> EngineConfig:
    # each prompt gets its own generator stream so --jobs stays reproducible
    if isinstance(config.policy, SpeculativePolicy):
        return replace(config, policy=SpeculativePolicy(seed=config.policy.seed + index))
    return config


def _run_one(runtime: Runtime, prompt_text: str, config: EngineConfig):
    prompt = runtime.draft_tok.encode(prompt_text)
    if isinstance(config.policy, AveragePolicy):
        return generate_average(runtime.draft, runtime.assistant, runtime.draft_tok,
                                prompt, config)
    return generate(runtime.draft, runtime.assistant, runtime.draft_tok,
                    runtime.assistant_tok, prompt, config)


def _apply_seed_override(runtime: Runtime, seed: int | None) -> None:
    if seed is not None and isinstance(runtime.engine_config.policy, SpeculativePolicy):
        runtime.engine_config = replace(
            runtime.engine_config, policy=SpeculativePolicy(seed=seed))


# ---------------------------------------------------------------------- #
# run
# ---------------------------------------------------------------------- #

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    base_dir = Path(args.config).parent
    runtime = build_runtime(cfg, base_dir)
    _apply_seed_override(runtime, args.seed)
    if isinstance(runtime.policy, AveragePolicy) and runtime.draft_tok != runtime.assistant_tok:
        raise ConfigError("average decoding needs identical draft and assistant tokenizers")
    prompts = _read_prompts(Path(args.prompts))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(index: int):
        config = _per_prompt_config(runtime.engine_config, index)
        trace, metrics = _run_one(runtime, prompts[index], config)
        trace_path = out_dir / f"trace_{index:03d}.jsonl"
        write_trace(trace_path, trace, metrics, runtime.draft_tok, runtime.assistant_tok)
        return trace_path, trace, metrics

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_one, range(len(prompts))))
    else:
        results = [run_one(i) for i in range(len(prompts))]

    per_prompt = []
    for index, (trace_path, trace, metrics) in enumerate(results):
        per_prompt.append({
            "prompt": prompts[index],
            "trace_file": trace_path.name,
            "output_text": runtime.draft_tok.decode(trace.output),
            "acceptance_rate": metrics.acceptance_rate,
            "rounds": metrics.rounds,
            "output_length": metrics.output_length,
            "token_latency": metrics.token_latency,
        })
    count = len(results)
    summary = {
        "prompts": count,
        "mean_acceptance_rate": sum(m.acceptance_rate for _, _, m in results) / count,
        "mean_rounds": sum(m.rounds for _, _, m in results) / count,
        "mean_output_length": sum(m.output_length for _, _, m in results) / count,
        "mean_token_latency": sum(m.token_latency for _, _, m in results) / count,
        "per_prompt": per_prompt,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    (out_dir / "effective_config.json").write_text(
        json.dumps(effective_config(cfg), indent=2), encoding="utf-8")
    print(f"wrote {count} traces to {out_dir} "
          f"(mean acceptance {summary['mean_acceptance_rate']:.3f})")
    return 0


# ---------------------------------------------------------------------- #
# train-ngram
# ---------------------------------------------------------------------- #

def cmd_train_ngram(args) -> int:
    try:
        tokenizer = load_tokenizer(args.tokenizer)
    except MalformedFileError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        lines = Path(args.corpus).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read corpus file {args.corpus}: {exc}") from exc
    sequences = [tokenizer.encode(line) for line in lines if line.strip()]
    sequences = [seq for seq in sequences if seq]
    if not sequences:
        raise ConfigError(f"corpus file {args.corpus} holds no usable lines")
    vocab_size = args.vocab_size or tokenizer.vocab_size
    model = train_ngram(sequences, order=args.order, smoothing=args.smoothing,
                        vocab_size=vocab_size)
    save_ngram(model, args.out)
    contexts = sum(len(table) for table in model.tables_)
    print(f"trained order-{args.order} model on {len(sequences)} sequences "
          f"({contexts} contexts) -> {args.out}")
    return 0


# ---------------------------------------------------------------------- #
# train-tree
# ---------------------------------------------------------------------- #

def cmd_train_tree(args) -> int:
    cfg = load_config(args.config)
    runtime = build_runtime(cfg, Path(args.config).parent)
    rows = _read_jsonl(Path(args.pairs), ("input", "target"), "pairs")
    pairs = []
    for row in rows:
        pairs.append((runtime.draft_tok.encode(row["input"]),
                      runtime.draft_tok.encode(row["target"])))
    total = sum(len(target) for _, target in pairs)
    samples = build_dataset(runtime.draft, runtime.assistant, pairs,
                            runtime.draft_tok, runtime.assistant_tok)
    dropped = total - len(samples)
    if not samples:
        print("error: every training position was dropped (neither model "
              "matched any target token)", file=sys.stderr)
        return 2
    tree = train_tree(samples, max_depth=args.max_depth, min_leaf=args.min_leaf)
    accuracy = tree.score([s.features for s in samples], [s.label for s in samples])
    Path(args.out).write_bytes(save_tree(tree))
    labels = [s.label for s in samples]
    print(f"kept {len(samples)} samples ({labels.count(0)} keep / {labels.count(1)} replace), "
          f"dropped {dropped}")
    print(f"training accuracy {accuracy:.4f} -> {args.out}")
    return 0


# ---------------------------------------------------------------------- #
# benchmark
# ---------------------------------------------------------------------- #

def _parse_grid(grid: str) -> list[tuple[float, float]]:
    try:
        alpha_part, beta_part = grid.split("/")
        alphas = [float(v) for v in alpha_part.split(",") if v != ""]
        betas = [float(v) for v in beta_part.split(",") if v != ""]
    except ValueError as exc:
        raise ConfigError(f"--grid must look like 'a1,a2/b1,b2', got {grid!r}") from exc
    if not alphas or not betas:
        raise ConfigError("--grid needs at least one alpha and one beta")
    return list(product(alphas, betas))


def _score_suite(runtime: Runtime, suite: list[dict], config: EngineConfig,
                 jobs: int) -> dict:
    def run_one(index: int):
        row = suite[index]
        trace, metrics = _run_one(runtime, row["prompt"],
                                  _per_prompt_config(config, index))
        text = runtime.draft_tok.decode(trace.output)
        hit = normalized_text(text) == normalized_text(row["expected"])
        return hit, metrics

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, range(len(suite))))
    else:
        results = [run_one(i) for i in range(len(suite))]
    count = len(results)
    return {
        "score": sum(1.0 for hit, _ in results if hit) / count,
        "acceptance_rate": sum(m.acceptance_rate for _, m in results) / count,
        "mean_rounds": sum(m.rounds for _, m in results) / count,
        "mean_token_latency": sum(m.token_latency for _, m in results) / count,
    }


def _score_single_model(runtime: Runtime, suite: list[dict], which: str) -> dict:
    backend = runtime.draft if which == "draft" else runtime.assistant
    tokenizer = runtime.draft_tok if which == "draft" else runtime.assistant_tok
    eos = runtime.engine_config.eos_token
    if which == "assistant" and eos is not None:
        try:
            eos = tokenizer.id_of(runtime.draft_tok.token_text(eos))
        except CosdError:
            eos = None
    hits = 0
    for row in suite:
        output = greedy_decode(backend, tokenizer.encode(row["prompt"]),
                               runtime.engine_config.max_new_tokens, eos)
        if normalized_text(tokenizer.decode(output)) == normalized_text(row["expected"]):
            hits += 1
    return {"score": hits / len(suite), "acceptance_rate": "",
            "mean_rounds": "", "mean_token_latency": ""}


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    runtime = build_runtime(cfg, Path(args.config).parent)
    _apply_seed_override(runtime, args.seed)
    suite = _read_jsonl(Path(args.suite), ("prompt", "expected"), "suite")
    base = runtime.engine_config

    rows: list[dict] = []
    if args.grid:
        # the grid sweeps the rule policy's thresholds only
        for alpha, beta in _parse_grid(args.grid):
            config = replace(base, policy=RulePolicy(RuleParams(alpha=alpha, beta=beta)))
            stats = _score_suite(runtime, suite, config, args.jobs)
            rows.append({"policy": "rule", "alpha": alpha, "beta": beta, **stats})
    else:
        wanted = [name.strip() for name in args.policies.split(",") if name.strip()]
        for name in wanted:
            if name in ("draft", "assistant"):
                stats = _score_single_model(runtime, suite, name)
                rows.append({"policy": name, "alpha": "", "beta": "", **stats})
                continue
            if name == "config":
                config, label = base, cfg["policy"]["policy"]
            elif name == "rule":
                config = replace(base, policy=RulePolicy(RuleParams()))
                label = "rule"
            elif name == "speculative":
                seed = args.seed if args.seed is not None else 0
                config = replace(base, policy=SpeculativePolicy(seed=seed))
                label = "speculative"
            else:
                raise ConfigError(
                    f"unknown policy {name!r}; choose from draft, assistant, rule, "
                    f"speculative, config")
            alpha = config.policy.params.alpha if isinstance(config.policy, RulePolicy) else ""
            beta = config.policy.params.beta if isinstance(config.policy, RulePolicy) else ""
            stats = _score_suite(runtime, suite, config, args.jobs)
            rows.append({"policy": label, "alpha": alpha, "beta": beta, **stats})

    fieldnames = ["policy", "alpha", "beta", "score", "acceptance_rate",
                  "mean_rounds", "mean_token_latency"]
    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print(f"{row['policy']:<12} alpha={row['alpha']!s:<5} beta={row['beta']!s:<5} "
              f"score={row['score']:.3f}")
    return 0


# ---------------------------------------------------------------------- #
# render
# ---------------------------------------------------------------------- #

def cmd_render(args) -> int:
    try:
        records, summary = read_trace(args.trace)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read trace {args.trace}: {exc}") from exc
    print(render_records(records))
    if summary:
        print(f"\n[{summary.get('rounds')} rounds, "
              f"acceptance {summary.get('acceptance_rate'):.3f}, "
              f"{summary.get('output_length')} tokens]")
    return 0


# ---------------------------------------------------------------------- #
# parser
# ---------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cosd", description="Collaborative speculative decoding")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="fuse two models over a prompts file")
    run.add_argument("--config", required=True)
    run.add_argument("--prompts", required=True)
    run.add_argument("--out", required=True, help="directory for traces and summary")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--seed", type=int, default=None,
                     help="override the speculative policy seed")
    run.set_defaults(func=cmd_run)

    tng = sub.add_parser("train-ngram", help="fit an n-gram backend on a text corpus")
    tng.add_argument("--tokenizer", required=True)
    tng.add_argument("--corpus", required=True, help="text file, one sequence per line")
    tng.add_argument("--out", required=True)
    tng.add_argument("--order", type=int, default=3)
    tng.add_argument("--smoothing", type=float, default=1.0)
    tng.add_argument("--vocab-size", type=int, default=None)
    tng.set_defaults(func=cmd_train_ngram)

    ttr = sub.add_parser("train-tree", help="build a labeled dataset and fit the tree")
    ttr.add_argument("--config", required=True)
    ttr.add_argument("--pairs", required=True, help='JSONL of {"input", "target"}')
    ttr.add_argument("--out", required=True)
    ttr.add_argument("--max-depth", type=int, default=3)
    ttr.add_argument("--min-leaf", type=int, default=2)
    ttr.set_defaults(func=cmd_train_tree)

    bench = sub.add_parser("benchmark", help="score policies on a suite with expected outputs")
    bench.add_argument("--config", required=True)
    bench.add_argument("--suite", required=True, help='JSONL of {"prompt", "expected"}')
    bench.add_argument("--out", required=True, help="CSV output path")
    bench.add_argument("--grid", default=None, help='rule threshold grid "a1,a2/b1,b2"')
    bench.add_argument("--policies", default="draft,assistant,config",
                       help="comma list: draft, assistant, rule, speculative, config")
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--seed", type=int, default=None)
    bench.set_defaults(func=cmd_benchmark)

    render = sub.add_parser("render", help="pretty-print a trace file")
    render.add_argument("--trace", required=True)
    render.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CosdError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
