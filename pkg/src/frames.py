#!/usr/bin/env python3
# Copyright 2026 The minsel Authors.
# See LICENSE file for licensing details.

"""Frame and mask sequences, and their lossless file representation.

A `FrameSequence` is a clip of T frames of identical H x W x C 8-bit pixels, stored as a
read-only ``(T, H, W, C)`` numpy array. A `MaskSequence` carries one binary bitmap per
frame marking the regions of interest (detected persons). Both are loaded from and
written to directories of zero-padded, numerically named images.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import (
    TYPE_CHECKING,
    Callable,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
    TypeVar,
    Union,
)

import numpy as np
from PIL import Image, UnidentifiedImageError

if TYPE_CHECKING:
    from minimize import PipelineSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
T = TypeVar("T")
R = TypeVar("R")

DEFAULT_PATTERN = r"(\d+)\.(?:png|pgm)"
"""Full-match regex for frame files; group 1 is the frame number."""
DEFAULT_INDEX_WIDTH = 6
MASK_THRESHOLD = 127

# Pillow reports PGM/PPM files as "PPM"
LOSSLESS_FORMATS = frozenset({"PNG", "PPM"})
LOSSY_SUFFIXES = frozenset({".jpg", ".jpeg", ".jfif", ".webp"})


class FramesError(Exception):
    """Base class for errors raised while handling frame and mask sequences."""


class FramesNotFoundError(FramesError):
    """Raised if a directory is missing or holds no image matching the pattern."""


class InconsistentDimensionsError(FramesError):
    """Raised if the images of one sequence do not share the same dimensions."""


class UnreadableImageError(FramesError):
    """Raised if an image is corrupt, lossy, or has an unsupported pixel layout."""


class DimensionMismatchError(FramesError):
    """Raised if masks do not match the dimensions of the frames they annotate."""


def pool_map(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """Map ``fn`` over ``items`` on a thread pool, returning results in input order.

    ``workers`` of None or 0 lets the executor pick; 1 runs inline.
    """
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers or None) as executor:
        return list(executor.map(fn, items))


def binarize(array: np.ndarray, threshold: int = MASK_THRESHOLD) -> np.ndarray:
    """Map an 8-bit mask to {0, 1}; arrays that are already 0/1 pass through unchanged."""
    array = np.asarray(array)
    if array.size and array.max() <= 1:
        return (array > 0).astype(np.uint8)
    return (array > threshold).astype(np.uint8)


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """An ordered clip of frames sharing height, width and channel count.

    ``indices`` holds the source frame number of every frame; it starts as the file
    numbers (or 0..T-1) and follows the frames through temporal sampling.
    """

    frames: np.ndarray
    indices: Tuple[int, ...]

    def __post_init__(self):
        frames = self.frames
        if frames.dtype != np.uint8:
            raise FramesError(f"frames must be 8-bit, got dtype {frames.dtype}")
        if frames.ndim != 4:
            raise FramesError(f"frames must have shape (T, H, W, C), got {frames.shape}")
        t_count, height, width, channels = frames.shape
        if t_count < 1 or height < 1 or width < 1:
            raise FramesError(f"empty frame sequence {frames.shape}")
        if channels not in (1, 3):
            raise FramesError(f"frames must have 1 or 3 channels, got {channels}")
        if len(self.indices) != t_count:
            raise FramesError(f"{len(self.indices)} indices for {t_count} frames")

    @classmethod
    def from_array(
        cls, array: np.ndarray, indices: Optional[Iterable[int]] = None
    ) -> "FrameSequence":
        """Build a sequence from a ``(T, H, W, C)`` or ``(T, H, W)`` uint8 array."""
        array = np.asarray(array)
        if array.ndim == 3:
            array = array[..., np.newaxis]
        if indices is None:
            indices = range(array.shape[0])
        return cls(_readonly(array), tuple(int(i) for i in indices))

    @property
    def t_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def channels(self) -> int:
        return self.frames.shape[3]

    @property
    def shape(self) -> Tuple[int, int, int]:
        """(T, H, W) of the sequence, the part masks must agree with."""
        return self.t_count, self.height, self.width

    def __len__(self) -> int:
        return self.t_count

    def take(self, positions: Sequence[int]) -> "FrameSequence":
        """Return the frames at ``positions`` (0-based, in the given order)."""
        positions = list(positions)
        return FrameSequence(
            _readonly(self.frames[positions]), tuple(self.indices[p] for p in positions)
        )

    def with_frames(self, frames: np.ndarray) -> "FrameSequence":
        """Return a sequence with new pixel data and the same source indices."""
        return FrameSequence(_readonly(frames), self.indices)


@dataclass(frozen=True, eq=False)
class MaskSequence:
    """Per-frame binary region masks, 1 marking a region of interest."""

    masks: np.ndarray
    warnings: Tuple[str, ...] = ()

    def __post_init__(self):
        masks = self.masks
        if masks.ndim != 3:
            raise FramesError(f"masks must have shape (T, H, W), got {masks.shape}")
        if masks.size and masks.max() > 1:
            raise FramesError("masks must be binary (0 or 1)")

    @classmethod
    def from_array(
        cls, array: np.ndarray, threshold: int = MASK_THRESHOLD, warnings: Sequence[str] = ()
    ) -> "MaskSequence":
        """Binarize ``array`` and wrap it as a mask sequence."""
        array = np.asarray(array)
        if array.ndim == 4 and array.shape[-1] == 1:
            array = array[..., 0]
        return cls(_readonly(binarize(array, threshold)), tuple(warnings))

    @classmethod
    def empty_like(cls, sequence: FrameSequence) -> "MaskSequence":
        """All-zero masks for every frame of ``sequence``."""
        return cls(_readonly(np.zeros(sequence.shape, dtype=np.uint8)))

    @property
    def t_count(self) -> int:
        return self.masks.shape[0]

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    @property
    def width(self) -> int:
        return self.masks.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.t_count, self.height, self.width

    def take(self, positions: Sequence[int]) -> "MaskSequence":
        return replace(self, masks=_readonly(self.masks[list(positions)]))

    def with_masks(self, masks: np.ndarray) -> "MaskSequence":
        return replace(self, masks=_readonly(masks))

    def check_matches(self, sequence: FrameSequence):
        """Raise `DimensionMismatchError` unless these masks annotate ``sequence``."""
        if self.shape != sequence.shape:
            raise DimensionMismatchError(
                f"dimension mismatch: masks {self.shape} vs frames {sequence.shape} (T, H, W)"
            )


@dataclass(frozen=True, eq=False)
class MinimizedRepresentation:
    """A pipeline's output frames together with the pipeline that produced them."""

    sequence: FrameSequence
    provenance: "PipelineSpec"
    masks: Optional[MaskSequence] = None


def _scan(directory: PathLike, pattern: str) -> Dict[int, Path]:
    """Map frame numbers to the files in ``directory`` whose names fully match ``pattern``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FramesNotFoundError(f"missing directory: {directory}")

    regex = re.compile(pattern)
    found: Dict[int, Path] = {}
    for path in sorted(directory.iterdir()):
        match = regex.fullmatch(path.name)
        if not match or not path.is_file():
            continue
        index = int(match.group(1))
        if index in found:
            raise FramesError(f"duplicate frame number {index}: {found[index].name}, {path.name}")
        found[index] = path
    return dict(sorted(found.items()))


def _read_image(path: Path, single_channel: bool = False) -> np.ndarray:
    """Read one lossless 8-bit image as an ``(H, W, C)`` array."""
    if path.suffix.lower() in LOSSY_SUFFIXES:
        raise UnreadableImageError(f"lossy image formats are not supported: {path}")
    try:
        with Image.open(path) as image:
            if image.format not in LOSSLESS_FORMATS:
                raise UnreadableImageError(
                    f"unsupported image format {image.format} (PNG or PGM expected): {path}"
                )
            if image.mode == "1":
                image = image.convert("L")
            if image.mode not in ("L", "RGB") or (single_channel and image.mode != "L"):
                raise UnreadableImageError(f"unsupported image mode {image.mode}: {path}")
            array = np.asarray(image, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise UnreadableImageError(f"unreadable image {path}: {e}") from e

    if array.ndim == 2:
        array = array[..., np.newaxis]
    return array


def load_frames(
    directory: PathLike, pattern: str = DEFAULT_PATTERN, workers: Optional[int] = None
) -> FrameSequence:
    """Load a numerically named image directory as a `FrameSequence`.

    Frames are ordered by ascending frame number; the numbers become the sequence's
    source indices.
    """
    files = _scan(directory, pattern)
    if not files:
        raise FramesNotFoundError(f"zero matches for {pattern!r} in {directory}")

    arrays = pool_map(_read_image, list(files.values()), workers)

    shapes = {array.shape for array in arrays}
    if len(shapes) > 1:
        raise InconsistentDimensionsError(
            f"inconsistent dimensions in {directory}: {sorted(shapes)}"
        )

    sequence = FrameSequence.from_array(np.stack(arrays), indices=files.keys())
    logger.debug(
        "loaded %d frames of %dx%dx%d from %s",
        sequence.t_count,
        sequence.height,
        sequence.width,
        sequence.channels,
        directory,
    )
    return sequence


def load_masks(
    directory: PathLike,
    expected: FrameSequence,
    pattern: str = DEFAULT_PATTERN,
    workers: Optional[int] = None,
) -> MaskSequence:
    """Load the masks annotating ``expected``, matched by frame number.

    A frame without a mask file gets an all-zero mask and a recorded warning, since
    detectors emit nothing for person-free frames.
    """
    files = _scan(directory, pattern)
    present = [index for index in expected.indices if index in files]

    arrays = pool_map(
        lambda index: _read_image(files[index], single_channel=True)[..., 0], present, workers
    )
    by_index = dict(zip(present, arrays))

    masks = np.zeros(expected.shape, dtype=np.uint8)
    warnings: List[str] = []
    for position, index in enumerate(expected.indices):
        if index not in by_index:
            message = f"no mask file for frame {index}; using an empty mask"
            logger.warning(message)
            warnings.append(message)
            continue
        mask = by_index[index]
        if mask.shape != (expected.height, expected.width):
            raise DimensionMismatchError(
                f"dimension mismatch: mask {files[index].name} is "
                f"{mask.shape[1]}x{mask.shape[0]}, "
                f"frames are {expected.width}x{expected.height}"
            )
        masks[position] = binarize(mask)

    unused = sorted(set(files) - set(expected.indices))
    if unused:
        logger.debug("ignoring %d mask files with no matching frame: %s", len(unused), unused)
    return MaskSequence.from_array(masks, warnings=warnings)


def frame_filename(position: int, width: int = DEFAULT_INDEX_WIDTH, suffix: str = ".png") -> str:
    """Zero-padded file name of the frame at ``position``."""
    return f"{position:0{width}d}{suffix}"


def save_frames(
    sequence: FrameSequence,
    directory: PathLike,
    width: int = DEFAULT_INDEX_WIDTH,
    workers: Optional[int] = None,
) -> int:
    """Write every frame as a PNG named by its position; return the number of files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def _write(position: int):
        frame = sequence.frames[position]
        if sequence.channels == 1:
            frame = frame[..., 0]
        Image.fromarray(np.ascontiguousarray(frame)).save(
            directory / frame_filename(position, width), format="PNG"
        )

    pool_map(_write, range(sequence.t_count), workers)
    logger.debug("wrote %d frames to %s", sequence.t_count, directory)
    return sequence.t_count
