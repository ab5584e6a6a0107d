"""The classifier and its two losses: point-level cross-entropy on sparse
clicks, weighted CE + IoU on full masks, plus a finite-difference gradient
spot check and an overfit-one-image sanity run.

Run:  python demos/02_losses_and_training.py
"""

import numpy as np

from activeseg import (
    GroundTruthMask,
    ImageSlice,
    PartialLabelMask,
    TrainConfig,
    forward,
    full_sup_loss,
    init_params,
    point_loss,
    train_cycle,
)
from activeseg.predictor import full_sup_loss_grad, loss_and_param_grads

rng = np.random.default_rng(0)

# --- 1. Point loss on a handful of labeled pixels ----------------------------
params = init_params(0, channels=(4, 8, 8))
img = ImageSlice("demo", "scan", 0, rng.random((32, 32)))
labels = np.full((32, 32), -1, dtype=np.int8)
labels[8, 8] = 1
labels[20, 20] = 0
labels[12, 25] = 0
mask = PartialLabelMask("demo", labels)

probs = forward(params, img)
print(f"untrained point loss over 3 labeled pixels: {point_loss(probs, mask):.4f}")
print(f"(a perfect prediction would give 0; random ~{3 * np.log(2):.4f})")

# --- 2. Full-supervision loss -------------------------------------------------
gt = np.zeros((32, 32), dtype=np.uint8)
gt[10:18, 10:18] = 1
full = GroundTruthMask("demo", gt)
print(f"untrained weighted-CE + IoU loss: {full_sup_loss(probs, full):.4f}")

# --- 3. Gradient spot check vs central finite differences --------------------
loss0, grads = loss_and_param_grads(params, img, full)
name = "b4"
h = 1e-6
fd = np.zeros_like(params.b4)
for i in range(fd.size):
    trial = params.copy()
    trial.b4[i] += h
    hi = full_sup_loss(forward(trial, img), full)
    trial.b4[i] -= 2 * h
    lo = full_sup_loss(forward(trial, img), full)
    fd[i] = (hi - lo) / (2 * h)
err = np.linalg.norm(grads[name] - fd) / max(np.linalg.norm(fd), 1e-12)
print(f"analytic vs finite-difference gradient on {name}: relative error {err:.2e}")

# --- 4. Overfit one image from 4 points (the classic sanity oracle) ----------
cfg = TrainConfig(learning_rate=5e-2, max_epochs=200, dropout=0.0, seed=0)
labels4 = np.full((32, 32), -1, dtype=np.int8)
labels4[[8, 9, 24, 25], [8, 9, 24, 25]] = [1, 1, 0, 0]
mask4 = PartialLabelMask("demo", labels4)
trained, _ = train_cycle(init_params(0, channels=(4, 8, 8)), [(img, mask4)], [], cfg)
final = point_loss(forward(trained, img), mask4)
print(f"point loss after 200 steps on one image: {final:.5f} (target < 0.05)")
