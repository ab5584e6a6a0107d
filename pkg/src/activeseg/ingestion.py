"""Dataset loading, preprocessing, and deterministic synthetic generation.

On-disk layout: a dataset directory holds ``manifest.json``, ``images/*.png``
(8-bit grayscale) and ``masks/*.png`` (8-bit paletted, values 0/1). The
manifest records the preprocessing parameters so re-running ingestion is
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .data_model import GroundTruthMask, ImageSlice

DEFAULT_HU_WINDOW = (-1000.0, 400.0)  # standard lung window; recorded in the manifest
DEFAULT_TARGET_SIZE = (352, 352)
DEFAULT_NORMALIZATION = (0.485, 0.229)  # single-channel stand-in constants

MANIFEST_NAME = "manifest.json"

_MASK_PALETTE = [0, 0, 0, 255, 64, 64] + [0] * (254 * 3)  # index 1 rendered red-ish


class DatasetLoadError(Exception):
    """A manifest entry failed to load; the message names the entry."""


@dataclass(frozen=True)
class PreprocessingSpec:
    hu_window: tuple[float, float] = DEFAULT_HU_WINDOW
    target_size: tuple[int, int] = DEFAULT_TARGET_SIZE
    normalization: tuple[float, float] = DEFAULT_NORMALIZATION

    def __post_init__(self):
        low, high = self.hu_window
        if low >= high:
            raise ValueError(f"HU window low must be < high, got {self.hu_window}")


@dataclass(frozen=True)
class SliceEntry:
    image: str  # path relative to the manifest
    mask: str | None
    scan_id: str
    slice_index: int


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    preprocessing: PreprocessingSpec
    slices: tuple[SliceEntry, ...]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "preprocessing": {
                "hu_window": list(self.preprocessing.hu_window),
                "target_size": list(self.preprocessing.target_size),
                "normalization": list(self.preprocessing.normalization),
            },
            "slices": [
                {
                    "image": e.image,
                    "mask": e.mask,
                    "scan_id": e.scan_id,
                    "slice_index": e.slice_index,
                }
                for e in self.slices
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetManifest":
        pp = doc["preprocessing"]
        return cls(
            name=doc["name"],
            preprocessing=PreprocessingSpec(
                hu_window=tuple(pp["hu_window"]),
                target_size=tuple(pp["target_size"]),
                normalization=tuple(pp["normalization"]),
            ),
            slices=tuple(
                SliceEntry(
                    image=e["image"],
                    mask=e.get("mask"),
                    scan_id=e["scan_id"],
                    slice_index=int(e["slice_index"]),
                )
                for e in doc["slices"]
            ),
        )


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic ellipse dataset generator."""

    n_images: int = 200
    size: tuple[int, int] = (64, 64)
    infection_density: float = 1.5  # expected ellipses per infected image
    background_fraction: float = 0.3  # fraction of images with all-zero masks
    radius_range: tuple[float, float] = (4.0, 9.0)
    contrast: float = 0.4  # mean intensity lift of infected pixels, in [0, 1] units
    contrast_jitter: float = 0.5  # per-ellipse lift drawn from contrast*(1 +- jitter)
    noise: float = 0.1  # gaussian noise std, in [0, 1] units
    texture: float = 0.0  # amplitude of smooth low-frequency background variation
    seed: int = 0
    slices_per_scan: int = 10

    def __post_init__(self):
        if self.n_images < 1 or self.size[0] < 1 or self.size[1] < 1:
            raise ValueError("synthetic dataset must have at least one non-empty image")
        if not 0.0 <= self.background_fraction <= 1.0:
            raise ValueError(f"background_fraction must be in [0,1], got {self.background_fraction}")
        if not 0.0 <= self.contrast_jitter <= 1.0:
            raise ValueError(f"contrast_jitter must be in [0,1], got {self.contrast_jitter}")
        if self.radius_range[0] <= 0 or self.radius_range[0] > self.radius_range[1]:
            raise ValueError(f"degenerate radius range {self.radius_range}")
        if self.infection_density < 0:
            raise ValueError("infection density must be >= 0")


def normalize_uint8(u8: np.ndarray, normalization=DEFAULT_NORMALIZATION) -> np.ndarray:
    """Map uint8 (or uint8-valued float) intensities to (x/255 - mean)/std."""
    mean, std = normalization
    return (np.asarray(u8, dtype=np.float64) / 255.0 - mean) / std


def hu_to_uint8(raw_hu: np.ndarray, hu_window=DEFAULT_HU_WINDOW) -> np.ndarray:
    """Clip Hounsfield values to the window and map linearly onto [0, 255].

    Rounding is to nearest integer (ties to even, numpy convention).
    """
    raw = np.asarray(raw_hu, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("empty HU input")
    low, high = hu_window
    if low >= high:
        raise ValueError(f"HU window low must be < high, got {hu_window}")
    clipped = np.clip(raw, low, high)
    return np.rint((clipped - low) * (255.0 / (high - low)))


def bilinear_resize(img: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resampling with pixel-center alignment: src = (dst+0.5)*scale - 0.5."""
    img = np.asarray(img, dtype=np.float64)
    h0, w0 = img.shape
    h, w = target
    if (h0, w0) == (h, w):
        return img.copy()
    ry = (np.arange(h) + 0.5) * (h0 / h) - 0.5
    rx = (np.arange(w) + 0.5) * (w0 / w) - 0.5
    ry = np.clip(ry, 0, h0 - 1)
    rx = np.clip(rx, 0, w0 - 1)
    y0 = np.floor(ry).astype(int)
    x0 = np.floor(rx).astype(int)
    y1 = np.minimum(y0 + 1, h0 - 1)
    x1 = np.minimum(x0 + 1, w0 - 1)
    wy = (ry - y0)[:, None]
    wx = (rx - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bot = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def nearest_resize(img: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resampling with pixel-center alignment."""
    img = np.asarray(img)
    h0, w0 = img.shape
    h, w = target
    ys = np.minimum(((np.arange(h) + 0.5) * (h0 / h)).astype(int), h0 - 1)
    xs = np.minimum(((np.arange(w) + 0.5) * (w0 / w)).astype(int), w0 - 1)
    return img[np.ix_(ys, xs)]


def preprocess_slice(raw_hu: np.ndarray, spec: PreprocessingSpec = PreprocessingSpec()) -> np.ndarray:
    """HU window -> uint8 -> bilinear resize -> normalize; returns float64 pixels."""
    u8 = hu_to_uint8(raw_hu, spec.hu_window)
    resized = bilinear_resize(u8, spec.target_size)
    return normalize_uint8(resized, spec.normalization)


def resize_mask(mask: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor mask resampling; binary in, binary out."""
    mask = np.asarray(mask)
    vals = np.unique(mask)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError(f"mask must be binary, found values {vals}")
    return nearest_resize(mask.astype(np.uint8), target)


def _sample_ellipse_mask(rng: np.random.Generator, shape, radius_range) -> np.ndarray:
    h, w = shape
    r_min, r_max = radius_range
    ra = rng.uniform(r_min, r_max)
    rb = rng.uniform(r_min, r_max)
    cy = rng.uniform(r_min, h - r_min)
    cx = rng.uniform(r_min, w - r_min)
    theta = rng.uniform(0, np.pi)
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    return (u / ra) ** 2 + (v / rb) ** 2 <= 1.0


def generate_synthetic(config: SyntheticConfig) -> list[tuple[ImageSlice, GroundTruthMask]]:
    """Deterministic synthetic dataset: bright ellipses over a noisy background.

    Non-background images carry >= 1 ellipse; ground truth marks exactly the
    ellipse pixels. Pixel intensities go through the same uint8 path as real
    data, so writing to disk and reloading reproduces them exactly.
    """
    h, w = config.size
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5D]))
    n_bg = int(round(config.background_fraction * config.n_images))
    flags = np.zeros(config.n_images, dtype=bool)
    flags[rng.permutation(config.n_images)[:n_bg]] = True  # background-only images

    pairs = []
    for i in range(config.n_images):
        base = 0.35 + 0.05 * rng.standard_normal()
        img = base + config.noise * rng.standard_normal((h, w))
        if config.texture > 0:
            coarse = rng.standard_normal((h // 8 + 2, w // 8 + 2))
            img = img + config.texture * bilinear_resize(coarse, (h, w))
        mask = np.zeros((h, w), dtype=np.uint8)
        if not flags[i]:
            if config.infection_density > 0:
                n_ell = 0
                while n_ell < 1:  # conditioned Poisson: infected images have >= 1 ellipse
                    n_ell = rng.poisson(config.infection_density)
            else:
                n_ell = 1
            for _ in range(n_ell):
                ell = _sample_ellipse_mask(rng, (h, w), config.radius_range)
                mask[ell] = 1
                j = config.contrast_jitter
                lift = config.contrast * rng.uniform(1.0 - j, 1.0 + j)
                img = img + lift * ell
        u8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
        scan = i // config.slices_per_scan
        image_id = f"synth-{i:04d}"
        pairs.append(
            (
                ImageSlice(
                    id=image_id,
                    scan_id=f"scan-{scan:03d}",
                    slice_index=i % config.slices_per_scan,
                    pixels=normalize_uint8(u8),
                ),
                GroundTruthMask(image_id=image_id, classes=mask),
            )
        )
    return pairs


def scans_of(pairs) -> list[tuple[str, list[str]]]:
    """Group image ids by scan_id, preserving slice order, for make_split."""
    by_scan: dict[str, list[str]] = {}
    for img, _ in pairs:
        by_scan.setdefault(img.scan_id, []).append(img.id)
    return sorted(by_scan.items())


def save_dataset(
    pairs: list[tuple[ImageSlice, GroundTruthMask | None]],
    root: str | Path,
    name: str = "dataset",
    preprocessing: PreprocessingSpec = PreprocessingSpec(),
) -> Path:
    """Write images/masks as PNG plus a manifest; returns the manifest path."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    mean, std = preprocessing.normalization
    entries = []
    for img, gt in pairs:
        u8 = np.clip(np.rint((img.pixels * std + mean) * 255.0), 0, 255).astype(np.uint8)
        img_rel = f"images/{img.id}.png"
        Image.fromarray(u8, mode="L").save(root / img_rel)
        mask_rel = None
        if gt is not None:
            mask_rel = f"masks/{img.id}.png"
            pal = Image.fromarray(gt.classes, mode="P")
            pal.putpalette(_MASK_PALETTE)
            pal.save(root / mask_rel)
        entries.append(SliceEntry(image=img_rel, mask=mask_rel, scan_id=img.scan_id, slice_index=img.slice_index))
    manifest = DatasetManifest(name=name, preprocessing=preprocessing, slices=tuple(entries))
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_json(), indent=2), encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> tuple[DatasetManifest, list[tuple[ImageSlice, GroundTruthMask | None]]]:
    """Load a dataset directory: parse the manifest and materialize every slice.

    Raises DatasetLoadError naming the offending entry on a missing file,
    undecodable image, or image/mask shape mismatch.
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DatasetLoadError(f"manifest not found: {path}")
    manifest = DatasetManifest.from_json(json.loads(path.read_text(encoding="utf-8")))
    root = path.parent
    spec = manifest.preprocessing
    pairs = []
    for entry in manifest.slices:
        img_path = root / entry.image
        if not img_path.exists():
            raise DatasetLoadError(f"entry '{entry.image}': image file missing")
        try:
            u8 = np.asarray(Image.open(img_path).convert("L"))
        except Exception as exc:
            raise DatasetLoadError(f"entry '{entry.image}': cannot decode image ({exc})") from exc
        raw_shape = u8.shape
        values = u8 if raw_shape == tuple(spec.target_size) else bilinear_resize(u8, spec.target_size)
        pixels = normalize_uint8(values, spec.normalization)
        image_id = Path(entry.image).stem
        img = ImageSlice(id=image_id, scan_id=entry.scan_id, slice_index=entry.slice_index, pixels=pixels)
        gt = None
        if entry.mask is not None:
            mask_path = root / entry.mask
            if not mask_path.exists():
                raise DatasetLoadError(f"entry '{entry.image}': mask file missing ({entry.mask})")
            try:
                m = np.asarray(Image.open(mask_path))
            except Exception as exc:
                raise DatasetLoadError(f"entry '{entry.mask}': cannot decode mask ({exc})") from exc
            if m.ndim != 2:
                raise DatasetLoadError(f"entry '{entry.mask}': mask must be single-channel")
            if m.shape != raw_shape:
                raise DatasetLoadError(
                    f"entry '{entry.image}': mask shape {m.shape} != image shape {raw_shape}"
                )
            m = (m > 0).astype(np.uint8)
            if m.shape != tuple(spec.target_size):
                m = resize_mask(m, spec.target_size)
            gt = GroundTruthMask(image_id=image_id, classes=m)
        pairs.append((img, gt))
    return manifest, pairs
