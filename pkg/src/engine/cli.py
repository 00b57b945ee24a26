"""
Structural Complexity Toolkit - Command Line Interface

Entry point: python -m src.engine.cli <command> [options]

Commands: analyze, score, select, subsample, correlate, replay. Data artifacts
go to --output (or stdout); diagnostics go to stderr. Every artifact carries
the resolved run configuration, which `replay` re-executes.
"""

import argparse
import io
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from src import __version__
from src.data.cache import SCORES_MAGIC
from src.data.interactions import InteractionFormat, write_interactions
from src.data.matrix import DedupPolicy, SparseMatrix, holdout_last_interaction
from src.data.subsample import SubsampleParams, subsample_replicas
from src.engine.analyzer import ComplexityAnalyzer
from src.selection.strategy import SelectionSpec
from src.selection.subset import correlate_columns, select_subset
from src.spectral.perturbation import PerturbationParams, select_perturbation_sets
from src.spectral.scorer import ScoreTable
from src.spectral.svd import SvdQuality
from src.utils import logging as log
from src.utils import serialization
from src.utils.config import get_settings, thread_limits
from src.utils.errors import InvalidArgumentError, RatioUndefinedError, SCError

# Options that never change an artifact and are left out of the echo
_VOLATILE_OPTIONS = {"log_level"}


class RunConfig(BaseModel):
    """
    Resolved invocation: command name plus every option after defaulting
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: str
    options: Dict[str, Any]
    version: str = __version__

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        options = {
            key: (str(value) if isinstance(value, Path) else value)
            for key, value in sorted(vars(args).items())
            if key not in ("command", "handler") and key not in _VOLATILE_OPTIONS
        }
        return cls(command=args.command, options=options)


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in str(text).split(",") if part.strip()]
    except ValueError as e:
        raise InvalidArgumentError(f"expected a comma-separated list of numbers, got {text!r}") from e


def _interaction_format(args: argparse.Namespace) -> InteractionFormat:
    if args.columns:
        return InteractionFormat.from_spec(args.columns, delimiter=args.delimiter, header=args.header)
    return InteractionFormat(delimiter=args.delimiter, header=args.header)


def _analyzer(args: argparse.Namespace) -> ComplexityAnalyzer:
    quality = SvdQuality(
        oversampling=args.oversampling,
        power_iterations=args.power_iterations,
        seed=args.seed,
    )
    return ComplexityAnalyzer(k=args.k, quality=quality, cache_dir=args.cache_dir, threads=args.threads)


def _load_matrix(analyzer: ComplexityAnalyzer, args: argparse.Namespace) -> SparseMatrix:
    return analyzer.load(Path(args.input), _interaction_format(args), DedupPolicy(args.dedup))


def _emit_bytes(data: bytes, output: Optional[str]):
    if output:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _sidecar(path: Path, config: RunConfig, extra: Optional[Dict[str, Any]] = None):
    payload = {"config": config}
    payload.update(extra or {})
    serialization.write_json(path.with_name(path.name + ".run.json"), payload)


def _emit_csv(write: Callable[[Any], None], output: Optional[str], config: RunConfig,
              extra: Optional[Dict[str, Any]] = None):
    buffer = io.StringIO()
    write(buffer)
    if output:
        _emit_bytes(buffer.getvalue().encode("utf-8"), output)
        _sidecar(Path(output), config, extra)
    else:
        log.info_event("run_config", {"config": config.model_dump()})
        _emit_bytes(buffer.getvalue().encode("utf-8"), None)


# Commands

def cmd_analyze(args: argparse.Namespace, config: RunConfig) -> int:
    ps, alphas = _float_list(args.p), _float_list(args.alpha)
    if not ps or not alphas:
        raise InvalidArgumentError("--p and --alpha need at least one value")
    base = PerturbationParams(
        p=ps[0], alpha=alphas[0], time_weighted=args.time_weighted, epsilon=args.epsilon, seed=args.seed
    )
    analyzer = _analyzer(args)
    matrix = _load_matrix(analyzer, args)

    if len(ps) == 1 and len(alphas) == 1:
        plan = select_perturbation_sets(matrix, base)
        if args.save_plan:
            _emit_bytes(plan.to_json(), args.save_plan)
        report = analyzer.analyze(matrix, base, plan=plan, timing=args.timing)
        payload = report.to_dict()
    else:
        if args.save_plan:
            raise InvalidArgumentError("--save-plan needs a single (p, alpha) setting")
        reports = analyzer.sweep(matrix, ps, alphas, base, timing=args.timing)
        payload = {
            "schema": "sc.sweep/1",
            "version": __version__,
            "reports": [report.to_dict() for report in reports],
        }
    payload["config"] = config
    _emit_bytes(serialization.dumps(payload), args.output)
    return 0


def cmd_score(args: argparse.Namespace, config: RunConfig) -> int:
    params = PerturbationParams(
        p=_float_list(args.p)[0], alpha=_float_list(args.alpha)[0],
        time_weighted=args.time_weighted, epsilon=args.epsilon, seed=args.seed,
    )
    analyzer = _analyzer(args)
    matrix = _load_matrix(analyzer, args)
    table = analyzer.score(matrix, params, n_folds=args.folds)

    if args.cache_output:
        table.save(args.cache_output)
    _emit_csv(table.to_csv, args.output, config, table.metadata())
    return 0


def _load_scores(path: Path) -> ScoreTable:
    with path.open("rb") as handle:
        magic = handle.read(len(SCORES_MAGIC))
    if magic == SCORES_MAGIC:
        return ScoreTable.load(path)
    sidecar = path.with_name(path.name + ".run.json")
    metadata = None
    if sidecar.exists():
        payload = serialization.read_json(sidecar)
        metadata = {key: payload.get(key) for key in ("params", "n_folds", "k", "quality", "folds")}
    return ScoreTable.from_csv(path, metadata)


def _subset_writer(matrix: SparseMatrix, subset, delimiter: str) -> Callable[[Any], None]:
    found, index = matrix.locate(subset.rows, subset.cols)
    mask = np.zeros(matrix.nnz, dtype=bool)
    mask[index[found]] = True
    return lambda sink: write_interactions(matrix.to_interactions(mask), sink, delimiter)


def cmd_select(args: argparse.Namespace, config: RunConfig) -> int:
    table = _load_scores(Path(args.scores))
    matrix = table.matrix

    if args.holdout_test:
        split = holdout_last_interaction(matrix)
        matrix = split.train
        test_path = Path(args.holdout_test)
        test_path.parent.mkdir(parents=True, exist_ok=True)
        write_interactions(split.test_interactions(), test_path, args.delimiter)

    rates = _float_list(args.rates) if args.rates else [args.rate]
    if len(rates) > 1 and not args.output:
        raise InvalidArgumentError("--rates with several values needs --output")

    for rate in rates:
        spec = SelectionSpec(strategy=args.strategy, rate=rate, seed=args.seed, stratified=not args.no_stratify)
        subset = select_subset(matrix, table, spec)
        output = args.output
        if len(rates) > 1:
            base = Path(args.output)
            output = str(base.with_name(f"{base.stem}_{spec.strategy.value}_{round(rate * 100):d}{base.suffix}"))
        _emit_csv(_subset_writer(matrix, subset, args.delimiter), output, config,
                  {"strategy": spec.strategy.value, "rate": rate, "size": len(subset)})
    return 0


def cmd_subsample(args: argparse.Namespace, config: RunConfig) -> int:
    params = SubsampleParams(
        n_target=args.n_target,
        min_user_interactions=args.min_user,
        min_item_interactions=args.min_item,
        seed=args.seed,
        n_samples=args.samples,
        user_headroom=args.user_headroom,
    )
    analyzer = ComplexityAnalyzer(cache_dir=args.cache_dir, threads=args.threads)
    matrix = _load_matrix(analyzer, args)
    with thread_limits(args.threads) as threads:
        results = subsample_replicas(matrix, params, threads=threads)

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, result in enumerate(results):
        write_interactions(result.matrix.to_interactions(), out_dir / f"sample_{i}.csv", args.delimiter)
        serialization.write_json(
            out_dir / f"sample_{i}.provenance.json",
            {"config": config, "provenance": result.provenance},
        )
    return 0


def cmd_correlate(args: argparse.Namespace, config: RunConfig) -> int:
    frame = pd.read_csv(args.input, sep=args.delimiter)
    numeric = list(frame.select_dtypes("number").columns)
    if len(numeric) < 2:
        raise InvalidArgumentError("correlation input needs at least two numeric columns")
    x = args.x or numeric[0]
    ys = [y.strip() for y in args.y.split(",")] if args.y else None
    results = correlate_columns(frame, x, ys)

    payload = {
        "schema": "sc.correlation/1",
        "version": __version__,
        "x": x,
        "results": {y: result.to_dict() for y, result in results.items()},
        "config": config,
    }
    _emit_bytes(serialization.dumps(payload), args.output)
    return 0


def cmd_replay(args: argparse.Namespace, config: RunConfig) -> int:
    payload = serialization.read_json(args.run)
    saved = RunConfig(**payload.get("config", payload))
    if saved.command == "replay":
        raise InvalidArgumentError("a replay config cannot be replayed")

    options = dict(saved.options)
    if args.output:
        options["output"] = args.output
    replayed = argparse.Namespace(command=saved.command, log_level=args.log_level, **options)
    replayed.handler = COMMANDS[saved.command]
    log.info_event("replay", {"command": saved.command, "source": str(args.run)})
    # The echo stays that of the original run
    return replayed.handler(replayed, saved)


COMMANDS = {
    "analyze": cmd_analyze,
    "score": cmd_score,
    "select": cmd_select,
    "subsample": cmd_subsample,
    "correlate": cmd_correlate,
    "replay": cmd_replay,
}


# Argument parsing

def _add_common(parser: argparse.ArgumentParser, with_format: bool = True):
    parser.add_argument("--seed", type=int, default=0, help="Random seed")
    parser.add_argument("--threads", type=int, default=None, help="Thread count (default: SC_THREADS)")
    parser.add_argument("--output", default=None, help="Output file (default: stdout)")
    parser.add_argument("--cache-dir", default=None, help="Directory for binary caches (default: SC_CACHE_DIR)")
    parser.add_argument("--log-level", default=None, help="Log level (default: SC_LOG_LEVEL)")
    parser.add_argument("--delimiter", default=",", help="Field delimiter")
    if with_format:
        parser.add_argument("--header", action="store_true", help="Input has a header row")
        parser.add_argument("--columns", default=None, help="Column mapping user,item,rating[,timestamp]")
        parser.add_argument("--dedup", default=DedupPolicy.KEEP_LAST_BY_TIMESTAMP.value,
                            choices=[policy.value for policy in DedupPolicy], help="Duplicate (user, item) policy")


def _add_perturbation(parser: argparse.ArgumentParser):
    parser.add_argument("--p", default="0.1", help="Perturbation fraction (comma list for a sweep)")
    parser.add_argument("--alpha", default="0.7", help="Value-shuffle share (comma list for a sweep)")
    parser.add_argument("--k", type=int, default=50, help="Number of singular values kept")
    parser.add_argument("--oversampling", type=int, default=10, help="Randomized SVD oversampling")
    parser.add_argument("--power-iterations", type=int, default=4, help="Minimum subspace iterations")
    parser.add_argument("--time-weighted", action="store_true", help="Favour recent entries when perturbing")
    parser.add_argument("--epsilon", type=float, default=1e-9, help="Time-weight denominator guard")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sc", description="Structural Complexity Toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="Complexity report for an interaction log")
    analyze.add_argument("--input", required=True, help="Interaction log")
    _add_common(analyze)
    _add_perturbation(analyze)
    analyze.add_argument("--timing", action="store_true", help="Include elapsed time in reports")
    analyze.add_argument("--save-plan", default=None, help="Write the perturbation plan as JSON")

    score = sub.add_parser("score", help="Per-rating perturbation scores")
    score.add_argument("--input", required=True, help="Interaction log")
    _add_common(score)
    _add_perturbation(score)
    score.add_argument("--folds", type=int, default=10, help="Number of folds")
    score.add_argument("--cache-output", default=None, help="Also write the table as SCS1")

    select = sub.add_parser("select", help="Training subset from a score table")
    select.add_argument("--scores", required=True, help="Score CSV or SCS1 file")
    _add_common(select, with_format=False)
    select.add_argument("--strategy", required=True, help="sc_low, sc_high, random or temporal")
    select.add_argument("--rate", type=float, default=1.0, help="Sampling rate in (0, 1]")
    select.add_argument("--rates", default=None, help="Comma list of rates, one output file each")
    select.add_argument("--no-stratify", action="store_true", help="Select globally instead of per user")
    select.add_argument("--holdout-test", default=None, help="Hold out each user's last entry and write it here")

    subsample = sub.add_parser("subsample", help="Fixed-budget dataset samples")
    subsample.add_argument("--input", required=True, help="Interaction log")
    _add_common(subsample)
    subsample.add_argument("--n-target", type=int, default=100_000, help="Interaction budget")
    subsample.add_argument("--min-user", type=int, default=5, help="Minimum interactions per user")
    subsample.add_argument("--min-item", type=int, default=2, help="Minimum interactions per item")
    subsample.add_argument("--samples", type=int, default=3, help="Number of samples")
    subsample.add_argument("--user-headroom", type=float, default=1.05, help="User sample headroom factor")
    subsample.add_argument("--output-dir", required=True, help="Directory for sample files")

    corr = sub.add_parser("correlate", help="Pearson correlation of table columns")
    corr.add_argument("--input", required=True, help="CSV with a header row")
    _add_common(corr, with_format=False)
    corr.add_argument("--x", default=None, help="Complexity column (default: first numeric column)")
    corr.add_argument("--y", default=None, help="Comma list of performance columns (default: the other numeric columns)")

    replay = sub.add_parser("replay", help="Re-run a saved configuration")
    replay.add_argument("run", help="JSON artifact or .run.json sidecar")
    replay.add_argument("--output", default=None, help="Override the output path")
    replay.add_argument("--log-level", default=None, help="Log level (default: SC_LOG_LEVEL)")

    for name, subparser in sub.choices.items():
        subparser.set_defaults(handler=COMMANDS[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point for the sc command"""
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = get_settings()
    log.setup_logging(
        log_file=settings.log_file,
        log_level=args.log_level or settings.log_level,
        structured_enabled=settings.structured_logs,
    )

    try:
        config = RunConfig.from_args(args)
        return args.handler(args, config)
    except RatioUndefinedError as e:
        log.error_event("command_failed", {**e.to_event(), "rmse": e.report.rmse if e.report else None})
        if e.report is not None:
            # partial report: raw RMSE and spectra are valid, rmse_sc is null
            partial = e.report.to_dict()
            partial["rmse_sc"] = None
            partial["config"] = config
            _emit_bytes(serialization.dumps(partial), getattr(args, "output", None))
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except SCError as e:
        log.error_event("command_failed", e.to_event())
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        log.error_event("command_failed", {"error": "ValidationError", "message": str(e)})
        print(f"error: {e}", file=sys.stderr)
        return InvalidArgumentError.exit_code
    except ValueError as e:
        # Unknown enum tokens and similar argument-shaped failures
        log.error_event("command_failed", {"error": type(e).__name__, "message": str(e)})
        print(f"error: {e}", file=sys.stderr)
        return InvalidArgumentError.exit_code
    except OSError as e:
        log.error_event("command_failed", {"error": type(e).__name__, "message": str(e)})
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
