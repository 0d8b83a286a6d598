#!/usr/bin/env python3
# Copyright 2026 The minsel Authors.
# See LICENSE file for licensing details.

"""Pareto-based selection of minimization settings from utility/privacy metrics.

Every setting is measured by a triplet: AUC (anomaly-detection utility, percent, higher
is better), F1 and cMAP (privacy leakage of an attribute classifier, lower is better).
This module filters the non-dominated settings, min-max normalizes the triplets so that
1 is always best, and picks an operating point by distance to the ideal point (1, 1, 1),
by weighted aggregation, or by privacy constraints. A combined rank averages the
distance rank and the weighted-score rank.
"""

import enum
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

REFERENCE_TABLE = Path(__file__).parent / "reference" / "table1.csv"
METRIC_COLUMNS = ("setting", "auc", "cmap", "f1")
WEIGHT_TOLERANCE = 1e-9
# distances and scores are compared at this many decimals so float noise cannot split ties
TIE_DECIMALS = 12

IDEAL_POINT = (1.0, 1.0, 1.0)


class SelectionError(Exception):
    """Base class for errors raised by the selection procedure."""


class InvalidWeightsError(SelectionError, ValueError):
    """Raised if aggregation weights are negative or do not sum to one."""


class InvalidMetricTableError(SelectionError):
    """Raised if a metric table is empty, malformed, or has duplicate settings."""


class NormalizationScope(str, enum.Enum):
    """Which settings provide the min/max used for normalization."""

    all = "all"
    pareto = "pareto"


class Plane(str, enum.Enum):
    """Two-objective projections of the (AUC, F1, cMAP) space."""

    auc_cmap = "auc-cmap"
    auc_f1 = "auc-f1"

    @property
    def privacy_metric(self) -> str:
        return "cmap" if self is Plane.auc_cmap else "f1"


class MetricRecord(BaseModel):
    """Measurements of one minimization setting."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    setting_id: str = Field(..., min_length=1)
    auc: float = Field(..., ge=0, le=100, description="Anomaly detection AUC, percent.")
    f1: float = Field(..., ge=0, le=1, description="Privacy attribute F1, fraction.")
    cmap: float = Field(..., ge=0, le=100, description="Privacy attribute cMAP, percent.")

    @property
    def triplet(self) -> Tuple[float, float, float]:
        return self.auc, self.f1, self.cmap


class MetricTable(BaseModel):
    """The measured settings, in input order."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    records: Tuple[MetricRecord, ...] = Field(..., min_length=1)

    @field_validator("records")
    @classmethod
    def _unique_ids(cls, records):
        ids = [record.setting_id for record in records]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ValueError(f"duplicate setting ids: {duplicates}")
        return records

    @classmethod
    def of(cls, records) -> "MetricTable":
        """Build a table, raising `InvalidMetricTableError` on invalid content."""
        try:
            return cls(records=tuple(records))
        except pydantic.ValidationError as e:
            msg = f"invalid metric table: {e}"
            logger.debug(msg, exc_info=True)
            raise InvalidMetricTableError(msg) from e

    @property
    def ids(self) -> List[str]:
        return [record.setting_id for record in self.records]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(record, name) for record in self.records], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.records)


class NormalizedRecord(BaseModel):
    """A setting's triplet rescaled to [0, 1], 1 being best in every coordinate."""

    model_config = ConfigDict(frozen=True)

    setting_id: str
    a_norm: float = Field(..., ge=0, le=1)
    f_norm: float = Field(..., ge=0, le=1)
    c_norm: float = Field(..., ge=0, le=1)


class SelectionWeights(BaseModel):
    """Convex weights of the weighted aggregation."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    w_a: float = Field(1 / 3, ge=0)
    w_f: float = Field(1 / 3, ge=0)
    w_c: float = Field(1 / 3, ge=0)

    @model_validator(mode="after")
    def _sum_to_one(self):
        total = self.w_a + self.w_f + self.w_c
        if abs(total - 1) > WEIGHT_TOLERANCE:
            raise ValueError(f"weights must sum to 1, got {total}")
        return self

    @classmethod
    def of(cls, w_a: float, w_f: float, w_c: float) -> "SelectionWeights":
        try:
            return cls(w_a=w_a, w_f=w_f, w_c=w_c)
        except pydantic.ValidationError as e:
            raise InvalidWeightsError(f"invalid weights ({w_a}, {w_f}, {w_c}): {e}") from e

    @classmethod
    def parse(cls, text: str) -> "SelectionWeights":
        """Parse ``"A,F,C"``."""
        try:
            values = [float(part) for part in text.split(",")]
        except ValueError as e:
            raise InvalidWeightsError(f"weights must be three numbers A,F,C: {text!r}") from e
        if len(values) != 3:
            raise InvalidWeightsError(f"weights must be three numbers A,F,C: {text!r}")
        return cls.of(*values)


class PrivacyThresholds(BaseModel):
    """Largest acceptable F1 and cMAP; infinity leaves a metric unconstrained."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    tau_f: float = Field(math.inf, ge=0)
    tau_c: float = Field(math.inf, ge=0)


DEFAULT_WEIGHTS = SelectionWeights()
UNCONSTRAINED = PrivacyThresholds()


def load_metric_table(path: Union[str, Path], utility_column: str = "auc") -> MetricTable:
    """Read a ``setting,auc,cmap,f1`` CSV (extra columns allowed).

    ``utility_column`` names the column used as AUC, so a wide table can carry one
    utility column per anomaly benchmark.
    """
    try:
        frame = pd.read_csv(path, dtype={"setting": str}, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InvalidMetricTableError(f"malformed metric table {path}: {e}") from e

    required = {"setting", utility_column, "cmap", "f1"}
    missing = sorted(required - set(frame.columns))
    if missing:
        raise InvalidMetricTableError(f"metric table {path} lacks columns {missing}")
    if frame[[utility_column, "cmap", "f1"]].isna().any().any():
        raise InvalidMetricTableError(f"metric table {path} has empty metric cells")
    settings = frame["setting"].fillna("").str.strip()
    if (settings == "").any():
        raise InvalidMetricTableError(f"metric table {path} has empty setting ids")

    try:
        records = [
            MetricRecord(
                setting_id=setting,
                auc=row[utility_column],
                f1=row["f1"],
                cmap=row["cmap"],
            )
            for setting, row in zip(settings, frame.to_dict("records"))
        ]
    except pydantic.ValidationError as e:
        raise InvalidMetricTableError(f"invalid record in {path}: {e}") from e
    return MetricTable.of(records)


def reference_table(utility_column: str = "auc") -> MetricTable:
    """The bundled 14-setting reference table (Avenue AUC by default)."""
    return load_metric_table(REFERENCE_TABLE, utility_column)


def dominates(a: MetricRecord, b: MetricRecord) -> bool:
    """Whether ``a`` is at least as good as ``b`` everywhere and strictly better once."""
    no_worse = a.auc >= b.auc and a.f1 <= b.f1 and a.cmap <= b.cmap
    better = a.auc > b.auc or a.f1 < b.f1 or a.cmap < b.cmap
    return no_worse and better


def dominance_matrix(table: MetricTable) -> np.ndarray:
    """Boolean N x N matrix whose cell (i, j) says whether setting i dominates setting j."""
    auc, f1, cmap = table.column("auc"), table.column("f1"), table.column("cmap")
    no_worse = (
        (auc[:, None] >= auc[None, :])
        & (f1[:, None] <= f1[None, :])
        & (cmap[:, None] <= cmap[None, :])
    )
    better = (
        (auc[:, None] > auc[None, :])
        | (f1[:, None] < f1[None, :])
        | (cmap[:, None] < cmap[None, :])
    )
    return no_worse & better


def pareto_mask(table: MetricTable) -> np.ndarray:
    """True for every setting no other setting dominates."""
    return ~dominance_matrix(table).any(axis=0)


def pareto_set(table: MetricTable) -> FrozenSet[str]:
    """Ids of the non-dominated settings; never empty."""
    return frozenset(i for i, keep in zip(table.ids, pareto_mask(table)) if keep)


def pareto_set_2d(table: MetricTable, plane: Plane) -> FrozenSet[str]:
    """Ids non-dominated when only AUC and the plane's privacy metric count."""
    plane = Plane(plane)
    auc, privacy = table.column("auc"), table.column(plane.privacy_metric)
    no_worse = (auc[:, None] >= auc[None, :]) & (privacy[:, None] <= privacy[None, :])
    better = (auc[:, None] > auc[None, :]) | (privacy[:, None] < privacy[None, :])
    dominated = (no_worse & better).any(axis=0)
    return frozenset(i for i, hit in zip(table.ids, dominated) if not hit)


def _rescale(values: np.ndarray, scope: np.ndarray, higher_is_better: bool) -> np.ndarray:
    low, high = values[scope].min(), values[scope].max()
    if high == low:
        return np.ones_like(values)
    scaled = (values - low) / (high - low) if higher_is_better else (high - values) / (high - low)
    return np.clip(scaled, 0.0, 1.0)


def normalize(
    table: MetricTable, scope: NormalizationScope = NormalizationScope.all
) -> List[NormalizedRecord]:
    """Min-max normalize every setting, reversing F1 and cMAP so that 1 is best.

    The min/max come from the whole table or, for ``pareto`` scope, from the Pareto
    set only; settings outside that range are clipped to [0, 1]. A coordinate whose
    range is empty normalizes to 1 everywhere.
    """
    scope = NormalizationScope(scope)
    if scope is NormalizationScope.pareto:
        in_scope = pareto_mask(table)
    else:
        in_scope = np.ones(len(table), dtype=bool)
    a_norm = _rescale(table.column("auc"), in_scope, higher_is_better=True)
    f_norm = _rescale(table.column("f1"), in_scope, higher_is_better=False)
    c_norm = _rescale(table.column("cmap"), in_scope, higher_is_better=False)
    return [
        NormalizedRecord(setting_id=i, a_norm=a, f_norm=f, c_norm=c)
        for i, a, f, c in zip(table.ids, a_norm, f_norm, c_norm)
    ]


def distance_to_ideal(norm: NormalizedRecord) -> float:
    """Euclidean distance from the normalized triplet to (1, 1, 1)."""
    return math.sqrt((1 - norm.a_norm) ** 2 + (1 - norm.f_norm) ** 2 + (1 - norm.c_norm) ** 2)


def weighted_score(norm: NormalizedRecord, weights: SelectionWeights = DEFAULT_WEIGHTS) -> float:
    """Convex combination of the normalized triplet."""
    total = weights.w_a + weights.w_f + weights.w_c
    if min(weights.w_a, weights.w_f, weights.w_c) < 0 or abs(total - 1) > WEIGHT_TOLERANCE:
        raise InvalidWeightsError(f"weights must be non-negative and sum to 1: {weights}")
    return weights.w_a * norm.a_norm + weights.w_f * norm.f_norm + weights.w_c * norm.c_norm


def _key(value: float) -> float:
    return round(value, TIE_DECIMALS)


def select_by_distance(
    table: MetricTable, scope: NormalizationScope = NormalizationScope.all
) -> str:
    """The Pareto setting closest to the ideal point; ties go to the smallest id."""
    members = pareto_set(table)
    candidates = [norm for norm in normalize(table, scope) if norm.setting_id in members]
    best = min(candidates, key=lambda n: (_key(distance_to_ideal(n)), n.setting_id))
    return best.setting_id


def select_by_weight(
    table: MetricTable,
    weights: SelectionWeights = DEFAULT_WEIGHTS,
    scope: NormalizationScope = NormalizationScope.all,
) -> str:
    """The Pareto setting with the highest weighted score; ties go to the smallest id."""
    members = pareto_set(table)
    candidates = [norm for norm in normalize(table, scope) if norm.setting_id in members]
    best = min(candidates, key=lambda n: (-_key(weighted_score(n, weights)), n.setting_id))
    return best.setting_id


def select_by_constraint(
    table: MetricTable, thresholds: PrivacyThresholds = UNCONSTRAINED
) -> Optional[str]:
    """Highest-AUC setting of the whole table meeting both privacy thresholds.

    Returns None when no setting is feasible.
    """
    feasible = [
        record
        for record in table.records
        if record.f1 <= thresholds.tau_f and record.cmap <= thresholds.tau_c
    ]
    if not feasible:
        logger.info(
            "no setting satisfies F1 <= %s and cMAP <= %s", thresholds.tau_f, thresholds.tau_c
        )
        return None
    return min(feasible, key=lambda r: (-r.auc, r.setting_id)).setting_id


def _ranks(values: List[float], ascending: bool) -> List[float]:
    series = pd.Series([_key(v) for v in values], dtype=np.float64)
    return series.rank(method="average", ascending=ascending).tolist()


def combined_rank(
    table: MetricTable,
    weights: SelectionWeights = DEFAULT_WEIGHTS,
    scope: NormalizationScope = NormalizationScope.all,
) -> Dict[str, float]:
    """Mean of the distance rank and the weighted-score rank over all settings.

    Ranks start at 1 for the best setting and average over ties; lower is better.
    """
    norms = normalize(table, scope)
    rank_d = _ranks([distance_to_ideal(n) for n in norms], ascending=True)
    rank_w = _ranks([weighted_score(n, weights) for n in norms], ascending=False)
    return {n.setting_id: (d + w) / 2 for n, d, w in zip(norms, rank_d, rank_w)}


@dataclass(frozen=True)
class SettingScore:
    """One row of a selection report."""

    setting_id: str
    a_norm: float
    f_norm: float
    c_norm: float
    pareto: bool
    distance: float
    weighted_score: float
    rank_d: float
    rank_w: float
    rank_combined: float


@dataclass(frozen=True)
class SelectionReport:
    """Everything the selection procedure computed for one table, in table order."""

    scores: Tuple[SettingScore, ...]
    chosen: Dict[str, Optional[str]]
    weights: SelectionWeights
    thresholds: PrivacyThresholds
    scope: NormalizationScope
    ideal_point: Tuple[float, float, float] = IDEAL_POINT

    def score(self, setting_id: str) -> SettingScore:
        for score in self.scores:
            if score.setting_id == setting_id:
                return score
        raise KeyError(setting_id)


STRATEGIES = ("distance", "weighted", "constrained", "combined")


def build_report(
    table: MetricTable,
    weights: SelectionWeights = DEFAULT_WEIGHTS,
    thresholds: PrivacyThresholds = UNCONSTRAINED,
    scope: NormalizationScope = NormalizationScope.all,
) -> SelectionReport:
    """Run the whole selection: Pareto filter, normalization, the three strategies, ranks."""
    scope = NormalizationScope(scope)
    members = pareto_set(table)
    norms = normalize(table, scope)
    distances = [distance_to_ideal(n) for n in norms]
    scores = [weighted_score(n, weights) for n in norms]
    rank_d = _ranks(distances, ascending=True)
    rank_w = _ranks(scores, ascending=False)

    rows = tuple(
        SettingScore(
            setting_id=n.setting_id,
            a_norm=n.a_norm,
            f_norm=n.f_norm,
            c_norm=n.c_norm,
            pareto=n.setting_id in members,
            distance=d,
            weighted_score=s,
            rank_d=rd,
            rank_w=rw,
            rank_combined=(rd + rw) / 2,
        )
        for n, d, s, rd, rw in zip(norms, distances, scores, rank_d, rank_w)
    )
    chosen = {
        "distance": select_by_distance(table, scope),
        "weighted": select_by_weight(table, weights, scope),
        "constrained": select_by_constraint(table, thresholds),
        "combined": min(rows, key=lambda r: (r.rank_combined, r.setting_id)).setting_id,
    }
    logger.info("selected %s", ", ".join(f"{k}={v}" for k, v in chosen.items()))
    return SelectionReport(
        scores=rows, chosen=chosen, weights=weights, thresholds=thresholds, scope=scope
    )
