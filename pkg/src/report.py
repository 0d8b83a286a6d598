#!/usr/bin/env python3
# Copyright 2026 The minsel Authors.
# See LICENSE file for licensing details.

"""Selection artifacts: the report CSV, the dominance matrix and Pareto projection plots."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import pandas as pd
import svgwrite

from selection import (
    MetricTable,
    Plane,
    SelectionReport,
    dominance_matrix,
    pareto_set,
    pareto_set_2d,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

REPORT_COLUMNS = (
    "setting",
    "a_norm",
    "f_norm",
    "c_norm",
    "pareto",
    "distance",
    "weighted_score",
    "rank_d",
    "rank_w",
    "rank_combined",
)
FLOAT_FORMAT = "%.6f"

SELECTION_REPORT = "selection_report.csv"
DOMINANCE_MATRIX = "dominance_matrix.csv"
PROJECTION_FILES = {Plane.auc_cmap: "pareto_auc_cmap.svg", Plane.auc_f1: "pareto_auc_f1.svg"}

CANVAS = (800, 600)
MARGIN = 0.10
RANGE_PADDING = 0.05
TICKS = 5
MARKER_SIZE = 7
PARETO_FILL = "#d62728"
DOMINATED_FILL = "#7f7f7f"
FRONTIER_STROKE = "#1f77b4"
HIGHLIGHT_STROKE = "#2ca02c"

AXIS_LABELS = {"auc": "AUC (%)", "cmap": "cMAP (%)", "f1": "F1"}


class ReportError(Exception):
    """Raised if a report artifact cannot be produced."""


def _sorted_rows(report: SelectionReport):
    return sorted(report.scores, key=lambda s: (s.rank_combined, s.setting_id))


def report_frame(report: SelectionReport) -> pd.DataFrame:
    """The selection report as a DataFrame, best combined rank first."""
    rows = [
        {
            "setting": s.setting_id,
            "a_norm": s.a_norm,
            "f_norm": s.f_norm,
            "c_norm": s.c_norm,
            "pareto": int(s.pareto),
            "distance": s.distance,
            "weighted_score": s.weighted_score,
            "rank_d": s.rank_d,
            "rank_w": s.rank_w,
            "rank_combined": s.rank_combined,
        }
        for s in _sorted_rows(report)
    ]
    return pd.DataFrame(rows, columns=list(REPORT_COLUMNS))


def write_selection_report(report: SelectionReport, path: PathLike) -> Path:
    """Write the per-setting scores and ranks as CSV with six-decimal reals."""
    path = Path(path)
    report_frame(report).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug("wrote selection report for %d settings to %s", len(report.scores), path)
    return path


def read_selection_report(path: PathLike) -> pd.DataFrame:
    """Parse a report written by `write_selection_report`."""
    frame = pd.read_csv(path, dtype={"setting": str})
    if tuple(frame.columns) != REPORT_COLUMNS:
        raise ReportError(f"{path} is not a selection report: columns {list(frame.columns)}")
    return frame


def write_dominance_matrix(table: MetricTable, path: PathLike) -> Path:
    """Write the 0/1 matrix whose cell (i, j) is 1 iff setting i dominates setting j."""
    path = Path(path)
    matrix = pd.DataFrame(
        dominance_matrix(table).astype(int), index=table.ids, columns=table.ids
    )
    matrix.to_csv(path, index_label="setting", lineterminator="\n")
    return path


@dataclass(frozen=True)
class ProjectionPoint:
    setting_id: str
    x: float
    y: float
    pareto_3d: bool
    pareto_2d: bool


@dataclass(frozen=True)
class ProjectionPlot:
    """Settings projected onto AUC and one privacy metric."""

    plane: Plane
    points: Tuple[ProjectionPoint, ...]
    size: Tuple[int, int] = CANVAS
    highlight: Optional[str] = None

    @property
    def frontier(self) -> List[ProjectionPoint]:
        """The plane's non-dominated points, in ascending AUC."""
        return sorted(
            (p for p in self.points if p.pareto_2d), key=lambda p: (p.x, -p.y, p.setting_id)
        )


def projection(
    table: MetricTable, plane: Plane, highlight: Optional[str] = None
) -> ProjectionPlot:
    """Project ``table`` onto ``plane``, flagging 3D and in-plane Pareto membership."""
    plane = Plane(plane)
    members_3d = pareto_set(table)
    members_2d = pareto_set_2d(table, plane)
    points = tuple(
        ProjectionPoint(
            setting_id=record.setting_id,
            x=record.auc,
            y=getattr(record, plane.privacy_metric),
            pareto_3d=record.setting_id in members_3d,
            pareto_2d=record.setting_id in members_2d,
        )
        for record in table.records
    )
    return ProjectionPlot(plane=plane, points=points, highlight=highlight)


def _padded_range(values: List[float]) -> Tuple[float, float]:
    low, high = min(values), max(values)
    span = high - low
    if span == 0:
        span = abs(high) or 1.0
    return low - RANGE_PADDING * span, high + RANGE_PADDING * span


class _Axes:
    """Linear data-to-pixel mapping; the privacy axis is inverted so lower values sit higher."""

    def __init__(self, plot: ProjectionPlot):
        width, height = plot.size
        self.left, self.right = MARGIN * width, (1 - MARGIN) * width
        self.top, self.bottom = MARGIN * height, (1 - MARGIN) * height
        self.x_range = _padded_range([p.x for p in plot.points])
        self.y_range = _padded_range([p.y for p in plot.points])

    def x(self, value: float) -> float:
        low, high = self.x_range
        return round(self.left + (value - low) / (high - low) * (self.right - self.left), 2)

    def y(self, value: float) -> float:
        low, high = self.y_range
        return round(self.top + (value - low) / (high - low) * (self.bottom - self.top), 2)


def _ticks(low: float, high: float) -> List[float]:
    step = (high - low) / (TICKS - 1)
    return [low + i * step for i in range(TICKS)]


def _triangle(cx: float, cy: float, size: float = MARKER_SIZE):
    return [
        (round(cx, 2), round(cy - size, 2)),
        (round(cx - size, 2), round(cy + size * 0.8, 2)),
        (round(cx + size, 2), round(cy + size * 0.8, 2)),
    ]


def _draw_axes(dwg: svgwrite.Drawing, axes: _Axes, plane: Plane):
    axis_style = {"stroke": "black", "stroke_width": 1}
    dwg.add(dwg.line((axes.left, axes.bottom), (axes.right, axes.bottom), **axis_style))
    dwg.add(dwg.line((axes.left, axes.top), (axes.left, axes.bottom), **axis_style))

    for value in _ticks(*axes.x_range):
        x = axes.x(value)
        dwg.add(dwg.line((x, axes.bottom), (x, axes.bottom + 5), **axis_style))
        dwg.add(
            dwg.text(
                f"{value:.2f}", insert=(x, axes.bottom + 18), text_anchor="middle", font_size=11
            )
        )
    for value in _ticks(*axes.y_range):
        y = axes.y(value)
        label = f"{value:.3f}" if plane is Plane.auc_f1 else f"{value:.2f}"
        dwg.add(dwg.line((axes.left - 5, y), (axes.left, y), **axis_style))
        dwg.add(dwg.text(label, insert=(axes.left - 8, y + 4), text_anchor="end", font_size=11))

    height = CANVAS[1]
    dwg.add(
        dwg.text(
            AXIS_LABELS["auc"] + " (higher is better, right)",
            insert=((axes.left + axes.right) / 2, height - 12),
            text_anchor="middle",
            font_size=13,
        )
    )
    privacy_label = AXIS_LABELS[plane.privacy_metric] + " (lower is better, up)"
    dwg.add(
        dwg.text(
            privacy_label,
            insert=(16, (axes.top + axes.bottom) / 2),
            text_anchor="middle",
            font_size=13,
            transform=f"rotate(-90 16 {(axes.top + axes.bottom) / 2})",
        )
    )


def _draw_legend(dwg: svgwrite.Drawing, axes: _Axes):
    legend = dwg.g(id="legend", font_size=11)
    x, y = axes.left + 10, 44
    legend.add(dwg.polygon(_triangle(x, y), fill=PARETO_FILL, stroke="black"))
    legend.add(dwg.text("Pareto-optimal (all three objectives)", insert=(x + 12, y + 4)))
    legend.add(dwg.circle(center=(x + 260, y), r=5, fill=DOMINATED_FILL, stroke="black"))
    legend.add(dwg.text("dominated", insert=(x + 272, y + 4)))
    legend.add(
        dwg.line((x + 350, y), (x + 380, y), stroke=FRONTIER_STROKE, stroke_dasharray="6,3")
    )
    legend.add(dwg.text("frontier in this plane", insert=(x + 388, y + 4)))
    dwg.add(legend)


def render_svg(plot: ProjectionPlot) -> svgwrite.Drawing:
    """Build the SVG drawing of ``plot``."""
    width, height = plot.size
    dwg = svgwrite.Drawing(size=(width, height), profile="full")
    dwg.add(dwg.rect(insert=(0, 0), size=(width, height), fill="white"))
    axes = _Axes(plot)

    title = "AUC vs cMAP" if plot.plane is Plane.auc_cmap else "AUC vs F1"
    dwg.add(
        dwg.text(
            f"Pareto projection: {title}",
            insert=(width / 2, 22),
            text_anchor="middle",
            font_size=16,
        )
    )
    _draw_axes(dwg, axes, plot.plane)

    frontier = plot.frontier
    if len(frontier) > 1:
        dwg.add(
            dwg.polyline(
                [(axes.x(p.x), axes.y(p.y)) for p in frontier],
                id="frontier",
                fill="none",
                stroke=FRONTIER_STROKE,
                stroke_width=1.5,
                stroke_dasharray="6,3",
            )
        )

    points = dwg.g(id="points", font_size=10)
    for point in plot.points:
        cx, cy = axes.x(point.x), axes.y(point.y)
        if point.pareto_3d:
            marker = dwg.polygon(
                _triangle(cx, cy), class_="pareto", fill=PARETO_FILL, stroke="black"
            )
        else:
            marker = dwg.circle(
                center=(cx, cy), r=5, class_="dominated", fill=DOMINATED_FILL, stroke="black"
            )
        points.add(marker)
        if point.setting_id == plot.highlight:
            points.add(
                dwg.circle(
                    center=(cx, cy),
                    r=13,
                    class_="sweet-spot",
                    fill="none",
                    stroke=HIGHLIGHT_STROKE,
                    stroke_width=2,
                )
            )
        points.add(dwg.text(point.setting_id, insert=(round(cx + 9, 2), round(cy - 8, 2))))
    dwg.add(points)

    _draw_legend(dwg, axes)
    return dwg


def render_pareto_projection(
    table: MetricTable, plane: Plane, path: PathLike, highlight: Optional[str] = None
) -> ProjectionPlot:
    """Write the projection of ``table`` onto ``plane`` as a self-contained SVG file.

    3D Pareto settings are triangles, the others circles; ``highlight`` (usually the
    selected sweet spot) gets a ring.
    """
    plot = projection(table, plane, highlight)
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        render_svg(plot).write(f)
    logger.debug("wrote %s projection to %s", plot.plane.value, path)
    return plot


def write_all(table: MetricTable, report: SelectionReport, directory: PathLike) -> List[Path]:
    """Write the report CSV, the dominance matrix and both projections into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    highlight = report.chosen.get("distance")
    written = [
        write_selection_report(report, directory / SELECTION_REPORT),
        write_dominance_matrix(table, directory / DOMINANCE_MATRIX),
    ]
    for plane, name in PROJECTION_FILES.items():
        render_pareto_projection(table, plane, directory / name, highlight)
        written.append(directory / name)
    return written
