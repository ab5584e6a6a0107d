"""MC-dropout uncertainty: posterior samples, the mean estimator, and the
per-pixel entropy map that drives acquisition.

Run:  python demos/03_mc_dropout_entropy.py
Writes demos/output/03_entropy.png
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from activeseg import (
    GroundTruthMask,
    PartialLabelMask,
    SyntheticConfig,
    TrainConfig,
    entropy_map,
    generate_synthetic,
    init_params,
    mc_samples,
    mean_estimator,
    train_cycle,
)
from activeseg.oracle_cost import annotate_point
from activeseg.data_model import RegionRef, build_grid

out = pathlib.Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# quickly fit a small net on a few point-labeled slices so uncertainty is
# concentrated where it should be: around infections the model half-knows
pairs = generate_synthetic(SyntheticConfig(n_images=10, size=(64, 64), texture=0.1, seed=3))
grid = build_grid(64, 64, 16)
labeled = []
for img, gt in pairs[:6]:
    mask = PartialLabelMask.empty(img.id, img.shape)
    for index in range(grid.k):
        mask, _, _ = annotate_point(mask, RegionRef(img.id, index), grid, gt, seed=index)
    labeled.append((img, mask))
params, _ = train_cycle(
    init_params(0, channels=(8, 16, 16)),
    labeled,
    [],
    TrainConfig(learning_rate=1e-3, max_epochs=15, dropout=0.5, seed=0),
)

img, gt = pairs[7]  # a slice the model never saw
samples = mc_samples(params, img, n_samples=8, dropout_p=0.5, seed=42)
print(f"drew {samples.shape[0]} posterior samples of shape {samples.shape[1:]}")
mean = mean_estimator(samples)
em = entropy_map(mean, img.id)
print(f"entropy range: [{em.values.min():.4f}, {em.values.max():.4f}] nats (max possible ln2={np.log(2):.4f})")

disagreement = samples[:, :, :, 1].std(axis=0)
print(f"pixelwise sample std (class 1): max {disagreement.max():.3f}")

fig, axes = plt.subplots(1, 4, figsize=(13, 3.4))
axes[0].imshow(img.pixels, cmap="gray"); axes[0].set_title("unseen slice")
axes[1].imshow(gt.classes, cmap="hot"); axes[1].set_title("hidden truth")
axes[2].imshow(mean[:, :, 1], cmap="viridis", vmin=0, vmax=1); axes[2].set_title("mean p(infected)")
axes[3].imshow(em.values, cmap="inferno", vmin=0, vmax=np.log(2)); axes[3].set_title("entropy (acquisition signal)")
for ax in axes:
    ax.axis("off")
fig.tight_layout()
fig.savefig(out / "03_entropy.png", dpi=120)
print(f"wrote {out / '03_entropy.png'}")
