#!/usr/bin/env python3
# Copyright 2026 The minsel Authors.
# See LICENSE file for licensing details.

"""Breadth- and depth-based data minimization transforms and their composition.

A `PipelineSpec` is an ordered list of transform steps; `apply_pipeline` runs them in
list order over a `FrameSequence` (and its masks) and returns the minimized
representation together with the pipeline that produced it.

Pipeline documents look like::

    {"steps": [{"op": "temporal_sample", "stride": 5, "start": 0},
               {"op": "blur_regions", "sigma": 10, "radius": 10}]}
"""

import json
import logging
from dataclasses import dataclass
from itertools import permutations
from pathlib import Path
from typing import Annotated, ClassVar, Dict, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
import pydantic
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from frames import (
    FrameSequence,
    MaskSequence,
    MinimizedRepresentation,
    PathLike,
    pool_map,
)

logger = logging.getLogger(__name__)

DEFAULT_BLUR_SIGMA = 10.0
DEFAULT_BLUR_RADIUS = 10
DEFAULT_MASK_FILL = 0
DEFAULT_BACKGROUND_THRESHOLD = 25
DEFAULT_BACKGROUND_FILL = 0
DOWNSAMPLE_FACTORS = (2, 4)

# blur weights are applied as integers scaled by 2**FIXED_POINT_BITS per pass
FIXED_POINT_BITS = 16


class MinimizationError(Exception):
    """Base class for errors raised by the minimization transforms."""


class InvalidPipelineError(MinimizationError):
    """Raised if a pipeline document or step parameter is invalid."""


class InvalidSamplingError(MinimizationError, ValueError):
    """Raised if temporal sampling parameters are out of range."""


class MissingMasksError(MinimizationError):
    """Raised if a region step runs without a mask sequence."""


class FrameTooSmallError(MinimizationError):
    """Raised if a frame is smaller than the downsampling block."""


class SequenceTooShortError(MinimizationError):
    """Raised if a sequence has too few frames for the requested operation."""


MaskedSequence = Tuple[FrameSequence, Optional[MaskSequence]]


@dataclass(frozen=True)
class SampleIndexSet:
    """Frame positions ``start + n * stride`` that fall inside the sequence."""

    indices: Tuple[int, ...]
    stride: int
    start: int

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)


def temporal_sample_indices(t_count: int, stride: int, start: int = 0) -> SampleIndexSet:
    """Select positions ``start, start + stride, ...`` up to ``t_count - 1`` (0-based)."""
    if t_count < 1:
        raise InvalidSamplingError(f"cannot sample an empty sequence (t_count={t_count})")
    if stride < 1:
        raise InvalidSamplingError(f"stride must be >= 1, got {stride}")
    if not 0 <= start < t_count:
        raise InvalidSamplingError(f"start {start} out of range [0, {t_count - 1}]")
    return SampleIndexSet(tuple(range(start, t_count, stride)), stride, start)


def temporal_sample(
    sequence: FrameSequence,
    masks: Optional[MaskSequence] = None,
    stride: int = 1,
    start: int = 0,
) -> MaskedSequence:
    """Keep every ``stride``-th frame from ``start``; masks follow the same positions."""
    positions = list(temporal_sample_indices(sequence.t_count, stride, start))
    sampled_masks = masks.take(positions) if masks is not None else None
    return sequence.take(positions), sampled_masks


def _blocks(array: np.ndarray, k: int) -> np.ndarray:
    """Sum non-overlapping k x k blocks over axes 1 and 2, dropping partial blocks."""
    t_count, height, width = array.shape[:3]
    rows, cols = height // k, width // k
    cropped = array[:, : rows * k, : cols * k].astype(np.int64)
    shaped = cropped.reshape((t_count, rows, k, cols, k) + array.shape[3:])
    return shaped.sum(axis=(2, 4))


def _check_factor(k: int, height: int, width: int):
    if k not in DOWNSAMPLE_FACTORS:
        raise InvalidPipelineError(f"downsample factor must be one of {DOWNSAMPLE_FACTORS}")
    if height < k or width < k:
        raise FrameTooSmallError(f"frame {width}x{height} is smaller than the {k}x{k} block")


def downsample(sequence: FrameSequence, k: int) -> FrameSequence:
    """Area-average k x k blocks, rounding half up; partial trailing blocks are dropped."""
    _check_factor(k, sequence.height, sequence.width)
    if sequence.height % k or sequence.width % k:
        logger.warning(
            "downsample x%d: frame %dx%d not divisible; truncating %d rows and %d columns",
            k,
            sequence.width,
            sequence.height,
            sequence.height % k,
            sequence.width % k,
        )
    area = k * k
    sums = _blocks(sequence.frames, k)
    means = (2 * sums + area) // (2 * area)
    return sequence.with_frames(means.astype(np.uint8))


def downsample_masks(masks: MaskSequence, k: int) -> MaskSequence:
    """Majority vote per k x k block; ties count as region (1)."""
    _check_factor(k, masks.height, masks.width)
    votes = _blocks(masks.masks, k)
    return masks.with_masks((2 * votes >= k * k).astype(np.uint8))


def mask_regions(
    sequence: FrameSequence, masks: MaskSequence, fill: int = DEFAULT_MASK_FILL
) -> FrameSequence:
    """Set every channel of every mask=1 pixel to ``fill``."""
    masks.check_matches(sequence)
    frames = np.array(sequence.frames)
    frames[masks.masks.astype(bool)] = fill
    return sequence.with_frames(frames)


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Normalized 1D Gaussian of ``2 * radius + 1`` taps."""
    if sigma <= 0:
        raise InvalidPipelineError(f"blur sigma must be positive, got {sigma}")
    if radius < 1:
        raise InvalidPipelineError(f"blur radius must be >= 1, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return weights / weights.sum()


def _fixed_point_kernel(kernel: np.ndarray) -> np.ndarray:
    """Integer taps summing exactly to 2**FIXED_POINT_BITS; the residual goes to the center."""
    scale = 1 << FIXED_POINT_BITS
    taps = np.rint(kernel * scale).astype(np.int64)
    taps[len(taps) // 2] += scale - taps.sum()
    return taps


def _convolve_axis(array: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Correlate ``array`` with ``taps`` along ``axis`` using edge-inclusive reflection."""
    radius = len(taps) // 2
    size = array.shape[axis]
    pad = [(0, 0)] * array.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(array, pad, mode="symmetric")
    out = np.zeros(array.shape, dtype=np.int64)
    for offset, tap in enumerate(taps):
        out += int(tap) * np.take(padded, np.arange(offset, offset + size), axis=axis)
    return out


def _blur_frame(frame: np.ndarray, taps: np.ndarray) -> np.ndarray:
    acc = _convolve_axis(frame.astype(np.int64), taps, axis=1)
    acc = _convolve_axis(acc, taps, axis=0)
    shift = 2 * FIXED_POINT_BITS
    return np.clip((acc + (1 << (shift - 1))) >> shift, 0, 255).astype(np.uint8)


def blur_regions(
    sequence: FrameSequence,
    masks: MaskSequence,
    sigma: float = DEFAULT_BLUR_SIGMA,
    radius: int = DEFAULT_BLUR_RADIUS,
    workers: Optional[int] = None,
) -> FrameSequence:
    """Gaussian-blur the whole frame, then keep blurred pixels only where mask=1."""
    masks.check_matches(sequence)
    taps = _fixed_point_kernel(gaussian_kernel(sigma, radius))
    blurred = np.stack(
        pool_map(lambda frame: _blur_frame(frame, taps), list(sequence.frames), workers)
    )
    inside = masks.masks.astype(bool)[..., np.newaxis]
    return sequence.with_frames(np.where(inside, blurred, sequence.frames))


def background_removal(
    sequence: FrameSequence,
    threshold: int = DEFAULT_BACKGROUND_THRESHOLD,
    fill: int = DEFAULT_BACKGROUND_FILL,
) -> FrameSequence:
    """Keep moving foreground only, against a per-pixel temporal median background.

    A pixel is foreground when any channel deviates from the background by more than
    ``threshold``; everything else is set to ``fill``. Even-length sequences use the
    lower median.
    """
    if sequence.t_count < 2:
        raise SequenceTooShortError(
            f"background removal needs at least 2 frames, got {sequence.t_count}"
        )
    if not 1 <= threshold <= 255:
        raise InvalidPipelineError(f"background threshold must be in [1, 255], got {threshold}")

    frames = sequence.frames
    background = np.sort(frames, axis=0)[(sequence.t_count - 1) // 2]
    deviation = np.abs(frames.astype(np.int16) - background.astype(np.int16)).max(axis=-1)
    foreground = (deviation > threshold)[..., np.newaxis]
    return sequence.with_frames(np.where(foreground, frames, np.uint8(fill)))


class _Step(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    requires_masks: ClassVar[bool] = False

    def apply(
        self,
        sequence: FrameSequence,
        masks: Optional[MaskSequence],
        workers: Optional[int] = None,
    ) -> MaskedSequence:
        raise NotImplementedError


class TemporalSample(_Step):
    """Breadth-based minimization: keep every ``stride``-th frame from ``start``."""

    op: Literal["temporal_sample"] = "temporal_sample"
    stride: int = Field(..., ge=1)
    start: int = Field(0, ge=0)

    def apply(self, sequence, masks, workers=None):
        return temporal_sample(sequence, masks, self.stride, self.start)


class Downsample(_Step):
    op: Literal["downsample"] = "downsample"
    factor: Literal[2, 4]

    def apply(self, sequence, masks, workers=None):
        # masks follow by majority vote so later region steps stay aligned
        masks = downsample_masks(masks, self.factor) if masks is not None else None
        return downsample(sequence, self.factor), masks


class MaskRegions(_Step):
    op: Literal["mask_regions"] = "mask_regions"
    fill: int = Field(DEFAULT_MASK_FILL, ge=0, le=255)

    requires_masks: ClassVar[bool] = True

    def apply(self, sequence, masks, workers=None):
        return mask_regions(sequence, masks, self.fill), masks


class BlurRegions(_Step):
    op: Literal["blur_regions"] = "blur_regions"
    sigma: float = Field(DEFAULT_BLUR_SIGMA, gt=0)
    radius: int = Field(DEFAULT_BLUR_RADIUS, ge=1)

    requires_masks: ClassVar[bool] = True

    def apply(self, sequence, masks, workers=None):
        return blur_regions(sequence, masks, self.sigma, self.radius, workers), masks


class BackgroundRemoval(_Step):
    op: Literal["background_removal"] = "background_removal"
    threshold: int = Field(DEFAULT_BACKGROUND_THRESHOLD, ge=1, le=255)
    fill: int = Field(DEFAULT_BACKGROUND_FILL, ge=0, le=255)

    def apply(self, sequence, masks, workers=None):
        return background_removal(sequence, self.threshold, self.fill), masks


TransformStep = Annotated[
    Union[TemporalSample, Downsample, MaskRegions, BlurRegions, BackgroundRemoval],
    Field(discriminator="op"),
]


class PipelineSpec(BaseModel):
    """Ordered transform steps; the configuration of one minimization setting."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    steps: Tuple[TransformStep, ...] = ()

    @field_validator("steps")
    @classmethod
    def _single_temporal_sample(cls, steps):
        if sum(isinstance(step, TemporalSample) for step in steps) > 1:
            raise ValueError(
                "at most one temporal_sample step; combine strides into their product"
            )
        return steps

    @classmethod
    def load(cls, document: dict) -> "PipelineSpec":
        """Validate a pipeline document (or a provenance document that embeds one)."""
        if isinstance(document, dict) and "pipeline" in document and "steps" not in document:
            document = document["pipeline"]
        try:
            return cls.model_validate(document)
        except pydantic.ValidationError as e:
            msg = f"invalid pipeline: {e}"
            logger.debug(msg, exc_info=True)
            raise InvalidPipelineError(msg) from e

    def to_document(self) -> dict:
        """The pipeline as a JSON-ready document with every default filled in."""
        return self.model_dump(mode="json")

    @property
    def requires_masks(self) -> bool:
        return any(step.requires_masks for step in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


def read_pipeline_document(path: PathLike):
    """Parse a pipeline or provenance document: JSON, or YAML for ``.yaml``/``.yml`` files."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise InvalidPipelineError(f"pipeline document {path} is not UTF-8 text: {e}") from e
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            return yaml.safe_load(text)
        return json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise InvalidPipelineError(f"cannot parse pipeline document {path}: {e}") from e


def load_pipeline_spec(path: PathLike) -> PipelineSpec:
    """Read a pipeline document from a JSON file, or YAML for ``.yaml``/``.yml`` files."""
    return PipelineSpec.load(read_pipeline_document(path))


class ClipSegmentation(BaseModel):
    """Clip cutting recorded by a segmented run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    clip_length: int = Field(ge=1)
    stride: int = Field(ge=1)
    start: int = Field(0, ge=0)


def load_segmentation(path: PathLike) -> Optional[ClipSegmentation]:
    """The segmentation a provenance document records, or None for a plain pipeline."""
    document = read_pipeline_document(path)
    if not isinstance(document, dict) or document.get("segmentation") is None:
        return None
    try:
        return ClipSegmentation.model_validate(document["segmentation"])
    except pydantic.ValidationError as e:
        msg = f"invalid segmentation in {path}: {e}"
        logger.debug(msg, exc_info=True)
        raise InvalidPipelineError(msg) from e


def apply_pipeline(
    sequence: FrameSequence,
    masks: Optional[MaskSequence],
    spec: PipelineSpec,
    workers: Optional[int] = None,
) -> MinimizedRepresentation:
    """Run the steps of ``spec`` over ``sequence`` strictly in list order."""
    if masks is not None:
        masks.check_matches(sequence)
    for position, step in enumerate(spec.steps):
        if step.requires_masks and masks is None:
            raise MissingMasksError(f"step {position} ({step.op}) requires masks; none given")

    for position, step in enumerate(spec.steps):
        logger.debug("step %d: %s", position, step)
        sequence, masks = step.apply(sequence, masks, workers)

    return MinimizedRepresentation(sequence=sequence, provenance=spec, masks=masks)


def segment_clips(
    sequence: FrameSequence,
    masks: Optional[MaskSequence],
    clip_length: int,
    stride: int = 1,
    start: int = 0,
) -> List[MaskedSequence]:
    """Cut the ``stride``-sampled frames into consecutive clips of ``clip_length`` frames.

    A trailing clip shorter than ``clip_length`` is dropped.
    """
    if clip_length < 1:
        raise InvalidSamplingError(f"clip length must be >= 1, got {clip_length}")
    if masks is not None:
        masks.check_matches(sequence)

    positions = list(temporal_sample_indices(sequence.t_count, stride, start))
    n_clips, leftover = divmod(len(positions), clip_length)
    if n_clips == 0:
        raise SequenceTooShortError(
            f"{len(positions)} sampled frames cannot fill one clip of {clip_length}"
        )
    if leftover:
        logger.warning(
            "dropping %d trailing sampled frames that do not fill a clip of %d",
            leftover,
            clip_length,
        )

    clips = []
    for clip in range(n_clips):
        chunk = positions[clip * clip_length : (clip + 1) * clip_length]
        clips.append((sequence.take(chunk), masks.take(chunk) if masks is not None else None))
    return clips


def settings_grid(stride: int = 5, factor: int = 2) -> Dict[str, PipelineSpec]:
    """Candidate settings: each single transform, then every ordered pair of distinct ones.

    Pairs are named ``"TS->BL"``, the left transform running first.
    """
    steps = {
        "TS": TemporalSample(stride=stride),
        "DS": Downsample(factor=factor),
        "MK": MaskRegions(),
        "BL": BlurRegions(),
        "BR": BackgroundRemoval(),
    }
    grid = {name: PipelineSpec(steps=(step,)) for name, step in steps.items()}
    for first, second in permutations(steps, 2):
        grid[f"{first}->{second}"] = PipelineSpec(steps=(steps[first], steps[second]))
    return grid

