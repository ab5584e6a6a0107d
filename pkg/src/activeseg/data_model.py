"""Core value types: image slices, masks, region grids, and dataset splits.

Everything here is an immutable value. Arrays are locked read-only after
construction so instances can be shared freely across threads; operations that
"modify" a mask return a new one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

UNLABELED_VALUE = -1  # sentinel in PartialLabelMask: contributes no loss signal


class RegionState(Enum):
    UNLABELED = "unlabeled"
    POINT_LABELED = "point_labeled"
    BACKGROUND_TAGGED = "background_tagged"
    PIXEL_LABELED = "pixel_labeled"

    @property
    def is_labeled(self) -> bool:
        return self is not RegionState.UNLABELED


class SplitMode(Enum):
    MIXED = "mixed"
    SEPARATE = "separate"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ImageSlice:
    """A preprocessed 2-D slice with normalized float intensities."""

    id: str
    scan_id: str
    slice_index: int
    pixels: np.ndarray  # (H, W) float

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"pixels must be a non-empty 2-D array, got shape {px.shape}")
        if self.slice_index < 0:
            raise ValueError(f"slice_index must be >= 0, got {self.slice_index}")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixels contain non-finite values")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class GroundTruthMask:
    """Full per-pixel class mask, values in {0 background, 1 infected}."""

    image_id: str
    classes: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        m = np.asarray(self.classes)
        if m.ndim != 2:
            raise ValueError(f"classes must be 2-D, got shape {m.shape}")
        vals = np.unique(m)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError(f"classes must be binary, found values {vals}")
        object.__setattr__(self, "classes", _freeze(m.astype(np.uint8)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape


@dataclass(frozen=True)
class PartialLabelMask:
    """Tri-state supervision raster: -1 unlabeled, 0 background, 1 infected point."""

    image_id: str
    labels: np.ndarray  # (H, W) int8

    def __post_init__(self):
        m = np.asarray(self.labels)
        if m.ndim != 2:
            raise ValueError(f"labels must be 2-D, got shape {m.shape}")
        vals = np.unique(m)
        if not np.all(np.isin(vals, (-1, 0, 1))):
            raise ValueError(f"labels must lie in {{-1, 0, 1}}, found values {vals}")
        object.__setattr__(self, "labels", _freeze(m.astype(np.int8)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def n_labeled(self) -> int:
        return int(np.count_nonzero(self.labels != UNLABELED_VALUE))

    @classmethod
    def empty(cls, image_id: str, shape: tuple[int, int]) -> "PartialLabelMask":
        return cls(image_id, np.full(shape, UNLABELED_VALUE, dtype=np.int8))

    def with_values(self, rows: np.ndarray, cols: np.ndarray, values) -> "PartialLabelMask":
        """Return a copy with labels[rows, cols] = values."""
        out = np.array(self.labels, dtype=np.int8)
        out[rows, cols] = values
        return PartialLabelMask(self.image_id, out)


@dataclass(frozen=True)
class RegionGrid:
    """A rows x cols rectangular partition of an image.

    When rows does not divide the height (or cols the width), the last
    row/column of regions absorbs the remainder, keeping the partition exact.
    """

    rows: int
    cols: int
    image_height: int
    image_width: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and one column")
        if self.rows > self.image_height or self.cols > self.image_width:
            raise ValueError(
                f"{self.rows}x{self.cols} grid does not fit a "
                f"{self.image_height}x{self.image_width} image"
            )

    @property
    def k(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class RegionRef:
    """An addressable region of one image plus its label state."""

    image_id: str
    region_index: int
    state: RegionState = RegionState.UNLABELED

    def with_state(self, state: RegionState) -> "RegionRef":
        if self.state.is_labeled and state is RegionState.UNLABELED:
            raise ValueError("labeled regions never revert to unlabeled")
        return RegionRef(self.image_id, self.region_index, state)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/val/test image-id lists."""

    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    mode: SplitMode = SplitMode.MIXED

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "val", tuple(self.val))
        object.__setattr__(self, "test", tuple(self.test))
        sets = [set(self.train), set(self.val), set(self.test)]
        if (sets[0] & sets[1]) or (sets[0] & sets[2]) or (sets[1] & sets[2]):
            raise ValueError("split lists must be pairwise disjoint")


def build_grid(height: int, width: int, k: int | tuple[int, int]) -> RegionGrid:
    """Build a K-way region grid over a height x width image.

    ``k`` is either a perfect-square region count or an explicit
    ``(rows, cols)`` pair. Region indices are row-major.
    """
    if isinstance(k, tuple):
        rows, cols = k
        if rows < 1 or cols < 1:
            raise ValueError(f"invalid grid shape {k}")
    else:
        k = int(k)
        if k < 1:
            raise ValueError(f"region count must be >= 1, got {k}")
        root = math.isqrt(k)
        if root * root != k:
            raise ValueError(
                f"region count {k} is not a perfect square; pass an explicit (rows, cols)"
            )
        rows = cols = root
    if height < 1 or width < 1:
        raise ValueError(f"image must be non-empty, got {height}x{width}")
    if rows * cols > height * width:
        raise ValueError(f"{rows * cols} regions exceed the {height * width} pixel count")
    return RegionGrid(rows=rows, cols=cols, image_height=height, image_width=width)


def region_bounds(grid: RegionGrid, index: int) -> tuple[int, int, int, int]:
    """Return the (row0, col0, height, width) rectangle of region ``index``.

    Rectangles over all indices tile the image exactly; the last row/column
    absorbs any division remainder.
    """
    if not 0 <= index < grid.k:
        raise ValueError(f"region index {index} out of range [0, {grid.k})")
    r, c = divmod(index, grid.cols)
    base_h = grid.image_height // grid.rows
    base_w = grid.image_width // grid.cols
    row0 = r * base_h
    col0 = c * base_w
    h = grid.image_height - row0 if r == grid.rows - 1 else base_h
    w = grid.image_width - col0 if c == grid.cols - 1 else base_w
    return row0, col0, h, w


def region_slices(grid: RegionGrid, index: int) -> tuple[slice, slice]:
    """Numpy slices for region ``index``, convenient for mask indexing."""
    row0, col0, h, w = region_bounds(grid, index)
    return slice(row0, row0 + h), slice(col0, col0 + w)


def make_split(
    scans: list[tuple[str, list[str]]],
    mode: SplitMode,
    fractions: tuple[float, float, float] | None = None,
    counts: tuple[int, int, int] | None = None,
) -> DatasetSplit:
    """Split a list of (scan_id, ordered slice ids) into train/val/test.

    Mixed mode takes a per-scan prefix split at the ``fractions`` boundaries
    (default (0.45, 0.05, 0.50)); Separate mode assigns whole scans, in the
    given order, to train then val then test according to ``counts``.
    """
    if not scans:
        raise ValueError("no scans to split")
    if mode is SplitMode.MIXED:
        if fractions is None:
            fractions = (0.45, 0.05, 0.50)
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {fractions}")
        train, val, test = [], [], []
        for _, slice_ids in scans:
            n = len(slice_ids)
            a = math.floor(fractions[0] * n)
            b = math.floor((fractions[0] + fractions[1]) * n)
            train.extend(slice_ids[:a])
            val.extend(slice_ids[a:b])
            test.extend(slice_ids[b:])
    else:
        if counts is None:
            raise ValueError("Separate mode requires per-split scan counts")
        if len(scans) < 3:
            raise ValueError(f"Separate mode needs at least 3 scans, got {len(scans)}")
        if sum(counts) != len(scans):
            raise ValueError(f"scan counts {counts} do not sum to {len(scans)} scans")
        if any(c < 1 for c in counts):
            raise ValueError(f"every split needs at least one scan, got {counts}")
        train, val, test = [], [], []
        for i, (_, slice_ids) in enumerate(scans):
            if i < counts[0]:
                train.extend(slice_ids)
            elif i < counts[0] + counts[1]:
                val.extend(slice_ids)
            else:
                test.extend(slice_ids)
    if not (train and val and test):
        raise ValueError(
            "too few scans/slices to populate every split "
            f"(train={len(train)}, val={len(val)}, test={len(test)})"
        )
    return DatasetSplit(train=tuple(train), val=tuple(val), test=tuple(test), mode=mode)
