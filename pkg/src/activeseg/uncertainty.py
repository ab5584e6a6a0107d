"""MC-dropout posterior sampling, the mean estimator, and entropy maps."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .data_model import ImageSlice
from .predictor import PredictorParams, forward_mc

DEFAULT_MC_SAMPLES = 8


@dataclass(frozen=True)
class EntropyMap:
    """Per-pixel Shannon entropy (nats) of a probability map."""

    image_id: str
    values: np.ndarray  # (H, W) float64

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def mc_samples(
    params: PredictorParams,
    image: ImageSlice | np.ndarray,
    n_samples: int = DEFAULT_MC_SAMPLES,
    dropout_p: float = 0.5,
    seed: int = 0,
) -> np.ndarray:
    """Stochastic forward passes treated as posterior draws, shape (n, H, W, C).

    Each draw uses its own dropout masks derived from (seed, sample index);
    the full set is deterministic under a fixed seed.
    """
    return forward_mc(params, image, n_samples, dropout_p, seed)


def mean_estimator(samples: np.ndarray) -> np.ndarray:
    """Pixelwise arithmetic mean over posterior draws; stays a probability map."""
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim == 3:
        s = s[None]
    if s.ndim != 4 or s.shape[0] < 1:
        raise ValueError(f"expected (n, H, W, C) samples, got shape {np.asarray(samples).shape}")
    return s.mean(axis=0)


def entropy_values(probs: np.ndarray) -> np.ndarray:
    """H(p) = -sum_c p_c ln p_c per pixel, with the 0*ln(0) = 0 convention."""
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0.0, -p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def entropy_map(mean_probs: np.ndarray, image_id: str = "") -> EntropyMap:
    """Entropy of the (mean) probability map; the acquisition signal."""
    return EntropyMap(image_id=image_id, values=entropy_values(mean_probs))


def entropy_png_bytes(em: EntropyMap, n_classes: int = 2) -> bytes:
    """8-bit grayscale PNG of the map, linearly scaled so ln(C) maps to 255."""
    scale = 255.0 / np.log(n_classes)
    u8 = np.clip(np.rint(em.values * scale), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="L").save(buf, format="PNG")
    return buf.getvalue()
