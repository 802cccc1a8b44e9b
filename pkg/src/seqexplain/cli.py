"""Command-line front door: ingestion, backgrounds, explanations, scans, reports.

Exit codes: 0 success, 1 usage error, 2 model or transport failure, 3 data
error. Every output file gets a sibling ``<out>.manifest.json`` echoing the
configuration, per-sequence evaluation counts, and wall time, which is enough
to reproduce the run exactly.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .errors import DataError, DimensionError, SolverError, TransportError
from .kernel import SamplerConfig
from .model import CONCURRENCY_CONCURRENT, load_scorer
from .orchestrator import (
    MODE_EVENT,
    MODE_FEATURE,
    MODES,
    CellConfig,
    SequenceExplanation,
    explain_events,
    explain_features,
    explain_sequence,
    explanation_to_dict,
    global_aggregate,
    rsd,
)
from .pruning import PruneConfig, prune_index, prune_scan
from .seqdata import BackgroundMatrix, EventSchema, SequenceMatrix, build_background, load_dataset

DEFAULT_N_SAMPLES = 32000
DEFAULT_ETA = 0.025
DEFAULT_THETA = 0.1
DEFAULT_SEED = 0


class _CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _CliUsageError(message)


def _require(args: argparse.Namespace, *flags: str) -> None:
    for flag in flags:
        if getattr(args, flag.replace("-", "_")) is None:
            raise DataError(f"missing required flag --{flag}")


def _write_json(path: str | Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_manifest(
    out_path: str | Path,
    command: str,
    config: dict,
    sequences: list[dict],
    wall_time: float,
) -> None:
    manifest = {
        "tool": "seqexplain",
        "version": __version__,
        "command": command,
        "config": config,
        "sequences": sequences,
        "wall_time_s": wall_time,
    }
    _write_json(f"{out_path}.manifest.json", manifest)


def _load_inputs(
    args: argparse.Namespace,
) -> tuple[EventSchema, list[SequenceMatrix], BackgroundMatrix]:
    schema = EventSchema.from_json(args.schema)
    sequences = load_dataset(args.input, schema)
    if not sequences:
        raise DataError(f"input {args.input} contains no sequences")
    background = BackgroundMatrix.load(args.background)
    if tuple(background.feature_names) != schema.feature_names:
        raise DataError(
            "background features do not match the schema: "
            f"{background.feature_names} vs {schema.feature_names}"
        )
    return schema, sequences, background


def _map_sequences(
    fn: Callable[[SequenceMatrix], SequenceExplanation],
    sequences: Sequence[SequenceMatrix],
    jobs: int,
    scorer,
):
    """Run per-sequence work, in parallel only when the scorer allows it."""
    if jobs > 1 and scorer.declared_concurrency == CONCURRENCY_CONCURRENT:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, sequences))
    return [fn(seq) for seq in sequences]


def _close_scorer(scorer) -> None:
    close = getattr(scorer, "close", None)
    if close is not None:
        close()


def _cmd_background_build(args: argparse.Namespace) -> None:
    _require(args, "data", "schema", "out")
    start = time.monotonic()
    schema = EventSchema.from_json(args.schema)
    sequences = load_dataset(args.data, schema)
    background = build_background(sequences, schema)
    background.save(args.out)
    _write_manifest(
        args.out,
        "background build",
        {"data": args.data, "schema": args.schema},
        [{"entity": seq.entity_id, "events": seq.l} for seq in sequences],
        time.monotonic() - start,
    )


def _explain_config(args: argparse.Namespace) -> dict:
    return {
        "mode": args.mode,
        "seed": args.seed,
        "n_samples": args.nsamples,
        "eta": args.eta,
        "theta": args.theta,
        "model": args.model,
        "input": args.input,
        "schema": args.schema,
        "background": args.background,
        "jobs": args.jobs,
    }


def _cmd_explain(args: argparse.Namespace) -> None:
    _require(args, "input", "schema", "background", "model", "out")
    start = time.monotonic()
    _, sequences, background = _load_inputs(args)
    sampler = SamplerConfig(n_samples=args.nsamples, seed=args.seed)
    prune_config = PruneConfig(eta=args.eta)
    cell_config = CellConfig(theta=args.theta)
    scorer = load_scorer(args.model)
    try:
        explained = _map_sequences(
            lambda X: explain_sequence(
                scorer, X, background, args.mode, sampler, prune_config, cell_config
            ),
            sequences,
            args.jobs,
            scorer,
        )
    finally:
        _close_scorer(scorer)
    _write_json(args.out, [explanation_to_dict(e, args.mode) for e in explained])
    _write_manifest(
        args.out,
        "explain",
        _explain_config(args),
        [{"entity": e.entity_id, "evaluations": e.n_evaluations()} for e in explained],
        time.monotonic() - start,
    )


def _cmd_prune_scan(args: argparse.Namespace) -> None:
    _require(args, "input", "schema", "background", "model", "out")
    start = time.monotonic()
    _, sequences, background = _load_inputs(args)
    scorer = load_scorer(args.model)
    docs = []
    counts = []
    try:
        for X in sequences:
            series = prune_scan(scorer, X, background)
            docs.append(
                {
                    "entity": X.entity_id,
                    "rows": [{"i": s.i, "w1": s.w1, "w2": s.w2} for s in series],
                }
            )
            counts.append({"entity": X.entity_id, "evaluations": 2 * (X.l - 1) + 2})
    finally:
        _close_scorer(scorer)
    _write_json(args.out, docs)
    _write_manifest(
        args.out,
        "prune scan",
        {
            "model": args.model,
            "input": args.input,
            "schema": args.schema,
            "background": args.background,
        },
        counts,
        time.monotonic() - start,
    )


def _cmd_report_global(args: argparse.Namespace) -> None:
    _require(args, "explanations", "out")
    start = time.monotonic()
    directory = Path(args.explanations)
    if not directory.is_dir():
        raise DataError(f"--explanations must name a directory, got {directory}")
    docs = []
    files = sorted(
        p for p in directory.glob("*.json") if not p.name.endswith(".manifest.json")
    )
    if not files:
        raise DataError(f"no explanation files under {directory}")
    for path in files:
        with open(path, encoding="utf-8") as fh:
            loaded = json.load(fh)
        docs.extend(loaded if isinstance(loaded, list) else [loaded])
    report = global_aggregate(docs, args.nsamples)
    _write_json(args.out, report.to_dict())
    _write_manifest(
        args.out,
        "report global",
        {"explanations": args.explanations, "n_samples": args.nsamples},
        [{"files": len(files), "sequences": report.n_sequences}],
        time.monotonic() - start,
    )


def _cmd_report_rsd(args: argparse.Namespace) -> None:
    _require(args, "input", "schema", "background", "model", "out")
    if args.repeats < 2:
        raise DataError(f"--repeats must be at least 2, got {args.repeats}")
    start = time.monotonic()
    _, sequences, background = _load_inputs(args)
    prune_config = PruneConfig(eta=args.eta)
    scorer = load_scorer(args.model)
    entries = []
    try:
        for X in sequences:
            prune = (
                prune_index(scorer, X, background, prune_config)
                if args.mode == MODE_EVENT
                else None
            )
            runs = []
            labels: tuple[str, ...] = ()
            for r in range(args.repeats):
                sampler = SamplerConfig(n_samples=args.nsamples, seed=args.seed + r)
                if args.mode == MODE_EVENT:
                    assert prune is not None
                    result = explain_events(scorer, X, background, prune, sampler)
                else:
                    result = explain_features(scorer, X, background, sampler)
                runs.append(result.attributions)
                labels = result.player_labels
            entries.append(
                {"entity": X.entity_id, "rsd": rsd(runs), "players": list(labels)}
            )
    finally:
        _close_scorer(scorer)
    payload = {
        "mode": args.mode,
        "repeats": args.repeats,
        "base_seed": args.seed,
        "n_samples": args.nsamples,
        "eta": args.eta,
        "sequences": entries,
    }
    _write_json(args.out, payload)
    _write_manifest(
        args.out,
        "report rsd",
        {
            "mode": args.mode,
            "repeats": args.repeats,
            "seed": args.seed,
            "n_samples": args.nsamples,
            "eta": args.eta,
            "model": args.model,
            "input": args.input,
            "schema": args.schema,
            "background": args.background,
        },
        [{"entity": e["entity"]} for e in entries],
        time.monotonic() - start,
    )


def _add_model_io_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="event table (CSV or JSON)")
    parser.add_argument("--schema", help="schema JSON file")
    parser.add_argument("--background", help="background JSON file")
    parser.add_argument(
        "--model", help="model descriptor: gru:<weights.json>, proc:<cmd>, or tcp:<host:port>"
    )
    parser.add_argument("--out", help="output JSON path")


def _build_parser() -> _Parser:
    parser = _Parser(prog="seqexplain", description=__doc__)
    parser.add_argument("--version", action="version", version=f"seqexplain {__version__}")
    sub = parser.add_subparsers(dest="command")

    background = sub.add_parser("background", help="background construction")
    background_sub = background.add_subparsers(dest="subcommand")
    build = background_sub.add_parser("build", help="aggregate a dataset into a background")
    build.add_argument("--data", help="event table (CSV or JSON)")
    build.add_argument("--schema", help="schema JSON file")
    build.add_argument("--out", help="output background JSON path")
    build.set_defaults(handler=_cmd_background_build)

    explain = sub.add_parser("explain", help="explain each sequence in the input")
    explain.add_argument("--mode", choices=MODES, default="all")
    _add_model_io_flags(explain)
    explain.add_argument("--nsamples", type=int, default=DEFAULT_N_SAMPLES)
    explain.add_argument("--eta", type=float, default=DEFAULT_ETA)
    explain.add_argument("--theta", type=float, default=DEFAULT_THETA)
    explain.add_argument("--seed", type=int, default=DEFAULT_SEED)
    explain.add_argument("--jobs", type=int, default=1)
    explain.set_defaults(handler=_cmd_explain)

    prune = sub.add_parser("prune", help="pruning diagnostics")
    prune_sub = prune.add_subparsers(dest="subcommand")
    scan = prune_sub.add_parser("scan", help="prefix/suffix importance at every split")
    _add_model_io_flags(scan)
    scan.set_defaults(handler=_cmd_prune_scan)

    report = sub.add_parser("report", help="aggregate reports")
    report_sub = report.add_subparsers(dest="subcommand")
    report_global = report_sub.add_parser("global", help="corpus pruning statistics")
    report_global.add_argument("--explanations", help="directory of explanation JSON files")
    report_global.add_argument("--nsamples", type=int, default=DEFAULT_N_SAMPLES)
    report_global.add_argument("--out", help="output JSON path")
    report_global.set_defaults(handler=_cmd_report_global)
    report_rsd = report_sub.add_parser("rsd", help="attribution stability over repeated runs")
    report_rsd.add_argument("--repeats", type=int, default=10)
    report_rsd.add_argument("--mode", choices=(MODE_EVENT, MODE_FEATURE), default=MODE_EVENT)
    _add_model_io_flags(report_rsd)
    report_rsd.add_argument("--nsamples", type=int, default=DEFAULT_N_SAMPLES)
    report_rsd.add_argument("--eta", type=float, default=DEFAULT_ETA)
    report_rsd.add_argument("--seed", type=int, default=DEFAULT_SEED)
    report_rsd.set_defaults(handler=_cmd_report_rsd)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = getattr(args, "handler", None)
        if handler is None:
            raise _CliUsageError("a subcommand is required (see --help)")
        handler(args)
        return 0
    except _CliUsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (TransportError, SolverError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 2
    except (DataError, DimensionError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
