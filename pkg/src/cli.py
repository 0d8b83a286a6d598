#!/usr/bin/env python3
# Copyright 2026 The minsel Authors.
# See LICENSE file for licensing details.

"""Command-line surface: minimize frame directories, select settings, write reports.

Exit status is 0 on success, 1 on a runtime or data error and 2 on a usage error.
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

from frames import FramesError, load_frames, load_masks, save_frames
from minimize import (
    ClipSegmentation,
    MinimizationError,
    PipelineSpec,
    apply_pipeline,
    load_pipeline_spec,
    load_segmentation,
    segment_clips,
    settings_grid,
)
from report import ReportError, write_all, write_dominance_matrix, write_selection_report
from selection import (
    REFERENCE_TABLE,
    STRATEGIES,
    NormalizationScope,
    PrivacyThresholds,
    SelectionError,
    SelectionReport,
    SelectionWeights,
    build_report,
    load_metric_table,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

THREADS_ENV = "MINSEL_THREADS"
PROVENANCE_FILE = "provenance.json"
DEFAULT_CLIP_LENGTH = 10
PROVENANCE_VERSION = 1

Command = Literal["minimize", "select", "report", "pipeline", "grid"]


class UsageError(Exception):
    """Raised if the command-line arguments cannot form a valid run."""


class RunConfig(BaseModel):
    """Resolved arguments of one invocation."""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    command: Command
    output: Path
    input: Optional[Path] = None
    masks: Optional[Path] = None
    pipeline: Optional[Path] = None
    metrics: Path = REFERENCE_TABLE
    utility_column: str = "auc"
    weights: SelectionWeights = SelectionWeights()
    thresholds: PrivacyThresholds = PrivacyThresholds()
    scope: NormalizationScope = NormalizationScope.all
    clip_length: int = Field(DEFAULT_CLIP_LENGTH, ge=1)
    stride: Optional[int] = Field(None, ge=1)
    start: int = Field(0, ge=0)
    workers: Optional[int] = Field(None, ge=1)
    verbosity: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _paths_for_command(self):
        if self.command == "minimize":
            missing = [name for name in ("input", "pipeline") if getattr(self, name) is None]
            if missing:
                raise ValueError(f"minimize needs {', '.join('--' + m for m in missing)}")
        return self


def _threads_from_env() -> Optional[int]:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        threads = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 0:
        raise UsageError(f"{THREADS_ENV} must be >= 0, got {threads}")
    return threads or None


def _threshold(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise argparse.ArgumentTypeError("threshold cannot be NaN")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", required=True, type=Path, help="output directory")
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="INFO logging; repeat for DEBUG"
    )

    selecting = argparse.ArgumentParser(add_help=False)
    selecting.add_argument(
        "--metrics",
        type=Path,
        default=REFERENCE_TABLE,
        help="metric table CSV (setting,auc,cmap,f1); defaults to the bundled reference table",
    )
    selecting.add_argument(
        "--utility-column", default="auc", help="CSV column used as the AUC (default: auc)"
    )
    selecting.add_argument(
        "--weights", default=None, metavar="A,F,C", help="aggregation weights summing to 1"
    )
    selecting.add_argument("--tau-f", type=_threshold, default=math.inf, help="max F1")
    selecting.add_argument("--tau-c", type=_threshold, default=math.inf, help="max cMAP (%%)")
    selecting.add_argument(
        "--scope",
        choices=[s.value for s in NormalizationScope],
        default=NormalizationScope.all.value,
        help="settings that provide the normalization range",
    )

    parser = argparse.ArgumentParser(
        prog="minsel",
        description="Video data minimization and Pareto selection of minimization settings.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    minimize = commands.add_parser(
        "minimize", parents=[common], help="apply a minimization pipeline to a frame directory"
    )
    minimize.add_argument("--input", required=True, type=Path, help="frame directory")
    minimize.add_argument("--masks", type=Path, help="region mask directory")
    minimize.add_argument(
        "--pipeline", required=True, type=Path, help="pipeline (or provenance) document"
    )
    minimize.add_argument(
        "--clip-length",
        type=int,
        default=None,
        help="frames per clip when --stride segments the input (default: 10)",
    )
    minimize.add_argument(
        "--stride", type=int, default=None, help="clip-creation stride; enables segmentation"
    )
    minimize.add_argument("--start", type=int, default=None, help="first sampled frame")

    commands.add_parser(
        "select", parents=[common, selecting], help="select Pareto-optimal settings"
    )
    commands.add_parser(
        "report", parents=[common, selecting], help="write selection CSVs and projection SVGs"
    )
    commands.add_parser(
        "pipeline", parents=[common, selecting], help="select and report in one run"
    )
    grid = commands.add_parser(
        "grid", parents=[common], help="write one pipeline document per candidate setting"
    )
    grid.add_argument("--stride", type=int, default=5, help="temporal sampling stride")
    grid.add_argument("--factor", type=int, choices=(2, 4), default=2, help="downsample factor")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Validate parsed arguments into a `RunConfig`."""
    values: Dict[str, object] = {
        "command": args.command,
        "output": args.output,
        "verbosity": args.verbose,
        "workers": _threads_from_env(),
    }
    if args.command == "minimize":
        names = ("input", "masks", "pipeline", "clip_length", "stride", "start")
    else:
        names = ("metrics", "utility_column")
    for name in names:
        if getattr(args, name, None) is not None:
            values[name] = getattr(args, name)
    if getattr(args, "scope", None):
        values["scope"] = NormalizationScope(args.scope)
    try:
        if getattr(args, "tau_f", None) is not None:
            values["thresholds"] = PrivacyThresholds(tau_f=args.tau_f, tau_c=args.tau_c)
        if getattr(args, "weights", None):
            values["weights"] = SelectionWeights.parse(args.weights)
        return RunConfig(**values)
    except (pydantic.ValidationError, SelectionError) as e:
        raise UsageError(str(e)) from e


SEGMENTATION_FLAGS = ("clip_length", "stride", "start")


def resolve_segmentation(config: RunConfig) -> Optional[ClipSegmentation]:
    """Clip cutting for a minimize run.

    A provenance document passed as ``--pipeline`` replays the segmentation it records;
    segmentation flags given alongside it must agree with the recorded values.
    """
    recorded = load_segmentation(config.pipeline)
    if recorded is None:
        if not config.stride:
            return None
        return ClipSegmentation(
            clip_length=config.clip_length, stride=config.stride, start=config.start
        )

    conflicts = [
        f"--{name.replace('_', '-')} {getattr(config, name)} (recorded {getattr(recorded, name)})"
        for name in SEGMENTATION_FLAGS
        if name in config.model_fields_set and getattr(config, name) != getattr(recorded, name)
    ]
    if conflicts:
        raise UsageError(
            f"{config.pipeline} records a different segmentation: {', '.join(conflicts)}"
        )
    logger.info("replaying segmentation from %s: %s", config.pipeline, recorded)
    return recorded


def _provenance(
    config: RunConfig,
    spec: PipelineSpec,
    segmentation: Optional[ClipSegmentation],
    clips: Optional[int],
    written: int,
):
    return {
        "version": PROVENANCE_VERSION,
        "input": str(config.input),
        "masks": str(config.masks) if config.masks else None,
        "pipeline": spec.to_document(),
        "segmentation": segmentation.model_dump() if segmentation else None,
        "clips": clips,
        "frames_written": written,
    }


def cmd_minimize(config: RunConfig) -> int:
    """Load frames (and masks), optionally cut clips, apply the pipeline, write frames."""
    workers = config.workers
    spec = load_pipeline_spec(config.pipeline)
    segmentation = resolve_segmentation(config)
    sequence = load_frames(config.input, workers=workers)
    masks = load_masks(config.masks, sequence, workers=workers) if config.masks else None

    output = config.output
    output.mkdir(parents=True, exist_ok=True)
    if segmentation:
        clips = segment_clips(
            sequence, masks, segmentation.clip_length, segmentation.stride, segmentation.start
        )
        written = 0
        for number, (clip, clip_masks) in enumerate(clips):
            minimized = apply_pipeline(clip, clip_masks, spec, workers=workers)
            clip_dir = output / f"clip_{number:04d}"
            written += save_frames(minimized.sequence, clip_dir, workers=workers)
        n_clips: Optional[int] = len(clips)
    else:
        minimized = apply_pipeline(sequence, masks, spec, workers=workers)
        written = save_frames(minimized.sequence, output, workers=workers)
        n_clips = None

    provenance = _provenance(config, spec, segmentation, n_clips, written)
    (output / PROVENANCE_FILE).write_text(
        json.dumps(provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("wrote %d frames to %s", written, output)
    return EXIT_OK


def _selection(config: RunConfig):
    table = load_metric_table(config.metrics, config.utility_column)
    report = build_report(table, config.weights, config.thresholds, config.scope)
    return table, report


def _print_choices(report: SelectionReport):
    for strategy in STRATEGIES:
        print(f"{strategy}={report.chosen[strategy] or 'NONE'}")


def cmd_select(config: RunConfig) -> int:
    """Run the selection, write the report and dominance matrix, print the chosen settings."""
    table, report = _selection(config)
    config.output.mkdir(parents=True, exist_ok=True)
    write_selection_report(report, config.output / "selection_report.csv")
    write_dominance_matrix(table, config.output / "dominance_matrix.csv")
    _print_choices(report)
    return EXIT_OK


def cmd_report(config: RunConfig) -> int:
    """Write both projection SVGs and both CSVs."""
    table, report = _selection(config)
    for path in write_all(table, report, config.output):
        logger.info("wrote %s", path)
    return EXIT_OK


def cmd_pipeline(config: RunConfig) -> int:
    """Selection and every report artifact in one run."""
    table, report = _selection(config)
    write_all(table, report, config.output)
    _print_choices(report)
    return EXIT_OK


def cmd_grid(config: RunConfig, stride: int = 5, factor: int = 2) -> int:
    """Write a pipeline document for each single and pairwise candidate setting."""
    config.output.mkdir(parents=True, exist_ok=True)
    for name, spec in settings_grid(stride, factor).items():
        path = config.output / f"{name.lower().replace('->', '-')}.json"
        path.write_text(json.dumps(spec.to_document(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "minimize": cmd_minimize,
    "select": cmd_select,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def _configure_logging(verbosity: int):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)

    try:
        config = config_from_args(args)
        if config.command == "grid":
            return cmd_grid(config, args.stride, args.factor)
        return COMMANDS[config.command](config)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FramesError, MinimizationError, SelectionError, ReportError, OSError) as e:
        logger.error("%s failed: %s", config.command, e)
        logger.debug(e, exc_info=True)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
