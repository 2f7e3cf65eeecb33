"""Command-line entry point.

stdout carries only the requested artifact; diagnostics and errors go to
stderr, errors as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import metadata
from pathlib import Path
from typing import Sequence

from . import ach, benchmark, rewards, social_choice
from .config import ConfigError, RunConfig, load_config
from .datasets import McqaItem, load_dataset, stratified_subset
from .orchestrator import ACH_DECISION, INFORMED_DICTATORIAL, run_items

logger = logging.getLogger("collabdecide")


class CliError(RuntimeError):
    pass


class ConfirmationRequired(CliError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "UsageError", "message": f"{self.prog}: {message}"}), file=sys.stderr)
        sys.exit(2)


def engine_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# Run plumbing ---------------------------------------------------------------


def _items(config: RunConfig) -> list[McqaItem]:
    items = load_dataset(config.dataset_path)
    if config.subset:
        items = stratified_subset(items, *config.subset)
    return items


def _workers(requested: int | None, config: RunConfig) -> int:
    workers = requested or os.cpu_count() or 1
    for agent in config.live_agents:
        workers = min(workers, agent.backend.max_concurrency)
    return max(1, workers)


def projected_requests(config: RunConfig, n_items: int, executor_counts: Sequence[int] | None = None) -> int:
    """Upper bound on live backend requests a run will make (one per agent call)."""
    live = {a.id for a in config.live_agents}
    strategies = config.all_strategies
    phases = len({s.uses_ballots for s in strategies})  # plain and ballot prompts are separate calls
    if executor_counts is None:
        k = config.pool_k or len(config.executors)
        live_exec = min(k, sum(1 for e in config.executors if e in live))
        per_item = phases * live_exec
        per_item += sum(1 for s in strategies if s.kind in (INFORMED_DICTATORIAL, ACH_DECISION) and s.agent in live)
        return per_item * n_items
    live_exec_total = sum(1 for e in config.executors if e in live)
    return sum(min(c, live_exec_total) for c in executor_counts) * n_items


def _guard_live(config: RunConfig, requests: int, confirmed: bool) -> None:
    if not config.live_agents:
        return
    for agent in config.live_agents:
        env = agent.backend.auth_env
        if env and not os.environ.get(env):
            raise ConfigError(f"agents.{agent.id}.auth_env", f"environment variable {env} is not set")
    print(f"projected live requests: {requests}", file=sys.stderr)
    if not confirmed:
        raise ConfirmationRequired(f"this run makes up to {requests} live API requests; pass --yes to proceed")


def _manifest(command: str, config: RunConfig, n_items: int, workers: int, **extra) -> dict:
    return {
        "command": command,
        "engine_version": engine_version(),
        "config_path": str(config.source) if config.source else None,
        "config_hash": config.config_hash,
        "seeds": {"pool": config.seeds.pool, "variant": config.seeds.variant},
        "dataset": str(config.dataset_path),
        "n_items": n_items,
        "workers": workers,
        "strategies": [s.name for s in config.all_strategies],
        **extra,
    }


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# Commands -------------------------------------------------------------------


def cmd_eval(args) -> int:
    config = load_config(args.config)
    items = _items(config)
    _guard_live(config, projected_requests(config, len(items)), args.yes)
    workers = _workers(args.workers, config)
    records = run_items(items, config, config.all_strategies, workers)

    baseline = [r for r in records if r.strategy == config.baseline] if config.baseline else None
    name = args.name or config.dataset_path.stem
    manifest = _manifest("eval", config, len(items), workers)
    report = benchmark.evaluate_run(records, baseline, name, {"seeds": manifest["seeds"], "executors": config.executors})
    table = benchmark.format_table(report)

    out = Path(args.out) if args.out else config.output_dir
    _write(out / "records.jsonl", "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in records))
    _write(out / "report.json", json.dumps(report.to_json(), indent=2) + "\n")
    _write(out / "table.txt", table)
    _write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    logger.info("wrote %d records to %s", len(records), out)
    _emit(table)
    return 0


def cmd_scale(args) -> int:
    config = load_config(args.config)
    items = _items(config)
    if any(c < 1 for c in args.counts):
        raise CliError("executor counts must be >= 1")
    _guard_live(config, projected_requests(config, len(items), args.counts), args.yes)
    workers = _workers(args.workers, config)
    rows = benchmark.scaling_table(items, args.counts, config, workers=workers)
    csv_text = benchmark.scaling_csv(rows)
    out = Path(args.out) if args.out else config.output_dir
    _write(out / "scaling.csv", csv_text)
    _write(out / "manifest.json",
           json.dumps(_manifest("scale", config, len(items), workers, counts=args.counts), indent=2) + "\n")
    _emit(csv_text)
    return 0


def cmd_vote(args) -> int:
    try:
        data = json.loads(Path(args.profile).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read {args.profile}: {exc.strerror or exc}") from None
    profile = social_choice.Profile.from_json(data)
    result = social_choice.apply_rule(args.rule, profile)
    _emit(json.dumps(result.to_json(), indent=2) if args.json else result.winner)
    return 0


def cmd_ach_parse(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8")
    if "<think>" in text:
        text, _ = ach.parse_decision_output(text)
    report = ach.parse_ach_report(text)
    variant = ach.PromptVariant.parse(args.variant)
    payload = {"report": report.to_json(), "violations": ach.validate_report(report, variant)}
    _emit(json.dumps(payload, indent=2, ensure_ascii=False))
    return 0


def cmd_score(args) -> int:
    embedder = rewards.make_embedder(args.embedder) if args.stage == 2 else None
    options = rewards.ScoringOptions(args.stage, binary_ach=args.binary_ach, embedder=embedder)
    rows = []
    with open(args.transcript, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise CliError(f"{args.transcript} line {lineno}: {exc}") from None
    rewards.dump_jsonl(rewards.score_transcript(rows, options), sys.stdout)
    return 0


def cmd_anneal(args) -> int:
    steps = args.steps if args.steps is not None else list(range(args.total + 1))
    lines = ["step,p_full,p_simple"]
    for step in steps:
        state = rewards.anneal_probability(step, args.total)
        lines.append(f"{step},{state.p_full!r},{state.p_simple!r}")
    _emit("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="collabdecide", description="Multi-agent decision pipelines for MCQA.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out", help="output directory (default: the config's output_dir)")
        p.add_argument("--workers", type=int, help="parallel episodes (default: CPU count)")
        p.add_argument("--yes", action="store_true", help="confirm runs that call live APIs")

    p = sub.add_parser("eval", help="run every configured strategy and report accuracy")
    run_flags(p)
    p.add_argument("--name", help="dataset name for the report header")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("scale", help="accuracy as the number of executors grows")
    run_flags(p)
    p.add_argument("--counts", type=_int_list, default=[1, 3, 5])
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("vote", help="apply a voting rule to a profile file")
    p.add_argument("--rule", required=True, choices=sorted(social_choice.RULES))
    p.add_argument("--profile", required=True)
    p.add_argument("--json", action="store_true", help="print the full result instead of the winner")
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser("ach-parse", help="parse an ACH think block into a report")
    p.add_argument("file")
    p.add_argument("--variant", default="FullACH")
    p.set_defaults(func=cmd_ach_parse)

    p = sub.add_parser("score", help="score a rollout transcript (JSONL)")
    p.add_argument("--transcript", required=True)
    p.add_argument("--stage", type=int, choices=(1, 2), default=1)
    p.add_argument("--binary-ach", action="store_true")
    p.add_argument("--embedder", default="hash64", choices=("hash64",))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("anneal", help="print the prompt-variant schedule")
    p.add_argument("--total", type=int, required=True)
    p.add_argument("--steps", type=_int_list)
    p.set_defaults(func=cmd_anneal)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001  every failure becomes a JSON error
        payload = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            payload["field"] = exc.field
            payload["reason"] = exc.reason
        if args.verbose:
            logger.exception("command failed")
        print(json.dumps(payload), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, ConfirmationRequired)) else 1


if __name__ == "__main__":
    sys.exit(main())
