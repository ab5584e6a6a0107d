"""Walk through the data layer: synthetic CT-like slices, preprocessing,
region grids, and train/val/test splits.

Run from the repo root:  python demos/01_dataset_and_regions.py
Writes a preview image to demos/output/.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from activeseg import (
    SplitMode,
    SyntheticConfig,
    build_grid,
    generate_synthetic,
    make_split,
    preprocess_slice,
    region_bounds,
)
from activeseg.ingestion import scans_of

out = pathlib.Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# --- 1. Hounsfield preprocessing on a fake raw slice ------------------------
raw_hu = np.random.default_rng(0).integers(-1024, 2000, size=(96, 96))
pixels = preprocess_slice(raw_hu)
print(f"preprocessed HU slice -> shape {pixels.shape}, range [{pixels.min():.2f}, {pixels.max():.2f}]")

# --- 2. A deterministic synthetic dataset -----------------------------------
cfg = SyntheticConfig(n_images=12, size=(64, 64), background_fraction=0.25, texture=0.1, seed=7)
pairs = generate_synthetic(cfg)
n_infected = sum(1 for _, gt in pairs if gt.classes.any())
print(f"generated {len(pairs)} slices, {n_infected} with infections")

# --- 3. The region grid the annotator works with ----------------------------
img, gt = pairs[0]
grid = build_grid(img.height, img.width, 16)
print(f"grid: {grid.rows}x{grid.cols} regions over {img.height}x{img.width}")
print(f"region 0 rectangle: {region_bounds(grid, 0)}")
print(f"region {grid.k - 1} rectangle: {region_bounds(grid, grid.k - 1)}")

# --- 4. Splits: within-scan (mixed) vs whole-scan (separate) ----------------
mixed = make_split(scans_of(pairs), SplitMode.MIXED)
print(f"mixed split sizes: train {len(mixed.train)}, val {len(mixed.val)}, test {len(mixed.test)}")

# --- 5. Preview figure -------------------------------------------------------
fig, axes = plt.subplots(1, 3, figsize=(10, 3.4))
axes[0].imshow(img.pixels, cmap="gray")
axes[0].set_title("slice")
axes[1].imshow(gt.classes, cmap="hot")
axes[1].set_title("ground truth")
axes[2].imshow(img.pixels, cmap="gray")
for index in range(grid.k):
    r0, c0, h, w = region_bounds(grid, index)
    axes[2].add_patch(plt.Rectangle((c0 - 0.5, r0 - 0.5), w, h, fill=False, color="tab:red", lw=0.8))
axes[2].set_title(f"{grid.k} regions")
for ax in axes:
    ax.axis("off")
fig.tight_layout()
fig.savefig(out / "01_dataset.png", dpi=120)
print(f"wrote {out / '01_dataset.png'}")
