"""The trainable per-pixel classifier and its training machinery.

A four-layer fully-convolutional net (3x3 convs of widths c1/c2/c3, then a
1x1 projection to the class logits) with ReLU activations and inverted
dropout after the second and third ReLU. All gradients are derived by hand
and checked against central finite differences in the test suite; Adam and
checkpointing are implemented here so runs are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _convops as ops
from .data_model import GroundTruthMask, ImageSlice, PartialLabelMask

PROB_CLAMP = 1e-12  # floor applied to probabilities before any log

DEFAULT_CHANNELS = (16, 32, 32)

_PARAM_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")


class NumericError(RuntimeError):
    """Raised when training or inference encounters non-finite values."""


@dataclass
class PredictorParams:
    """Weights of the reference net. Mutated in place by the optimizer."""

    w1: np.ndarray  # (c1, 1, 3, 3)
    b1: np.ndarray
    w2: np.ndarray  # (c2, c1, 3, 3)
    b2: np.ndarray
    w3: np.ndarray  # (c3, c2, 3, 3)
    b3: np.ndarray
    w4: np.ndarray  # (n_classes, c3), a 1x1 conv
    b4: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.w4.shape[0]

    @property
    def channels(self) -> tuple[int, int, int]:
        return (self.w1.shape[0], self.w2.shape[0], self.w3.shape[0])

    @property
    def dtype(self) -> np.dtype:
        return self.w1.dtype

    def items(self):
        for name in _PARAM_FIELDS:
            yield name, getattr(self, name)

    def copy(self) -> "PredictorParams":
        return PredictorParams(**{k: v.copy() for k, v in self.items()})

    def assert_finite(self, context: str = "") -> None:
        for name, arr in self.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite values in parameter {name} {context}".strip())


def init_params(
    seed: int,
    channels: tuple[int, int, int] = DEFAULT_CHANNELS,
    n_classes: int = 2,
    dtype=np.float64,
) -> PredictorParams:
    """He-normal conv kernels, zero biases, fixed seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x11]))
    c1, c2, c3 = channels

    def he(shape, fan_in):
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)

    return PredictorParams(
        w1=he((c1, 1, 3, 3), 9),
        b1=np.zeros(c1, dtype=dtype),
        w2=he((c2, c1, 3, 3), 9 * c1),
        b2=np.zeros(c2, dtype=dtype),
        w3=he((c3, c2, 3, 3), 9 * c2),
        b3=np.zeros(c3, dtype=dtype),
        w4=he((n_classes, c3), c3),
        b4=np.zeros(n_classes, dtype=dtype),
    )


@dataclass(frozen=True)
class TrainConfig:
    """Per-cycle training settings (Adam, batch size 1)."""

    learning_rate: float = 1e-4
    max_epochs: int = 40
    dropout: float = 0.5
    seed: int = 0
    patience: int | None = None  # stop after this many epochs without val improvement
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


def _as_input(params: PredictorParams, pixels) -> np.ndarray:
    if isinstance(pixels, ImageSlice):
        pixels = pixels.pixels
    x = np.asarray(pixels, dtype=params.dtype)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"image must be a non-empty 2-D array, got shape {x.shape}")
    return x[:, :, None]


def _dropout_rngs(seed: int, n: int = 2):
    ss = np.random.SeedSequence([seed, 0x22])
    return [np.random.default_rng(child) for child in ss.spawn(n)]


def _forward_full(params, x, dropout_p, seed, want_cache):
    """Run the net; returns (probs, cache or None)."""
    dtype = params.dtype
    cols: list = []
    z1 = ops.conv3x3(x, params.w1, params.b1, cols if want_cache else None)
    a1 = ops.relu(z1)
    z2 = ops.conv3x3(a1, params.w2, params.b2, cols if want_cache else None)
    a2 = ops.relu(z2)
    if dropout_p > 0.0:
        if seed is None:
            raise ValueError("stochastic forward requires a seed")
        rng2, rng3 = _dropout_rngs(seed)
        m2 = ops.dropout_mask(rng2, a2.shape, dropout_p, dtype)
    else:
        m2 = None
    d2 = a2 if m2 is None else a2 * m2
    z3 = ops.conv3x3(d2, params.w3, params.b3, cols if want_cache else None)
    a3 = ops.relu(z3)
    if dropout_p > 0.0:
        m3 = ops.dropout_mask(rng3, a3.shape, dropout_p, dtype)
    else:
        m3 = None
    d3 = a3 if m3 is None else a3 * m3
    z4 = ops.conv1x1(d3, params.w4, params.b4)
    probs = ops.softmax(z4)
    if not want_cache:
        return probs, None
    cache = {
        "cols": cols,
        "r1": z1 > 0,
        "r2": z2 > 0,
        "r3": z3 > 0,
        "m2": m2,
        "m3": m3,
        "d3": d3,
        "probs": probs,
    }
    return probs, cache


def forward(params: PredictorParams, pixels, dropout_p: float = 0.0, seed: int | None = None) -> np.ndarray:
    """Per-pixel class probabilities, shape (H, W, C).

    ``dropout_p == 0`` is the deterministic mode; a positive rate runs one
    stochastic pass whose dropout masks are derived from ``seed``, so equal
    seeds give identical outputs. Inverted scaling keeps the stochastic
    pre-activations unbiased relative to the deterministic mode.
    """
    params.assert_finite("before forward")
    x = _as_input(params, pixels)
    probs, _ = _forward_full(params, x, dropout_p, seed, want_cache=False)
    return probs


def forward_mc(
    params: PredictorParams, pixels, n_samples: int, dropout_p: float, seed: int
) -> np.ndarray:
    """``n_samples`` stochastic passes, shape (n, H, W, C).

    Dropout only acts after the second and third ReLU, so the first two
    convolutions are computed once and shared across samples. Sample i uses
    masks derived from (seed, i), independent of the other samples.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    params.assert_finite("before mc sampling")
    x = _as_input(params, pixels)
    if dropout_p == 0.0:
        probs, _ = _forward_full(params, x, 0.0, None, want_cache=False)
        return np.repeat(probs[None], n_samples, axis=0)
    dtype = params.dtype
    a2 = ops.relu(ops.conv3x3(ops.relu(ops.conv3x3(x, params.w1, params.b1)), params.w2, params.b2))
    out = np.empty((n_samples,) + x.shape[:2] + (params.n_classes,), dtype=dtype)
    for i in range(n_samples):
        sample_seed = int(np.random.SeedSequence([seed, 0x55, i]).generate_state(1)[0])
        rng2, rng3 = _dropout_rngs(sample_seed)
        d2 = a2 * ops.dropout_mask(rng2, a2.shape, dropout_p, dtype)
        a3 = ops.relu(ops.conv3x3(d2, params.w3, params.b3))
        d3 = a3 * ops.dropout_mask(rng3, a3.shape, dropout_p, dtype)
        out[i] = ops.softmax(ops.conv1x1(d3, params.w4, params.b4))
    return out


def _backward(params, x, cache, dprobs):
    dz4 = ops.softmax_backward(cache["probs"], dprobs)
    dw4, db4, dd3 = ops.conv1x1_backward(dz4, cache["d3"], params.w4)
    if cache["m3"] is not None:
        dd3 = dd3 * cache["m3"]
    dz3 = np.where(cache["r3"], dd3, 0.0)
    dw3, db3, dd2 = ops.conv3x3_backward(dz3, cache["cols"][2], params.w3)
    if cache["m2"] is not None:
        dd2 = dd2 * cache["m2"]
    dz2 = np.where(cache["r2"], dd2, 0.0)
    dw2, db2, dd1 = ops.conv3x3_backward(dz2, cache["cols"][1], params.w2)
    dz1 = np.where(cache["r1"], dd1, 0.0)
    dw1, db1, _ = ops.conv3x3_backward(dz1, cache["cols"][0], params.w1, need_dx=False)
    return {
        "w1": dw1, "b1": db1,
        "w2": dw2, "b2": db2,
        "w3": dw3, "b3": db3,
        "w4": dw4, "b4": db4,
    }


def loss_and_param_grads(params, pixels, target, dropout_p=0.0, seed=None):
    """Loss and dLoss/dparams for one example; dispatches on the mask type."""
    x = _as_input(params, pixels)
    probs, cache = _forward_full(params, x, dropout_p, seed, want_cache=True)
    if isinstance(target, PartialLabelMask):
        loss, dprobs = point_loss_grad(probs, target)
    elif isinstance(target, GroundTruthMask):
        loss, dprobs = full_sup_loss_grad(probs, target)
    elif np.asarray(target).min() < 0:  # raw arrays: -1 marks partial labels
        loss, dprobs = point_loss_grad(probs, target)
    else:
        loss, dprobs = full_sup_loss_grad(probs, target)
    grads = _backward(params, x, cache, dprobs.astype(params.dtype, copy=False))
    return loss, grads


# ---------------------------------------------------------------------------
# Losses


def _label_array(labels) -> np.ndarray:
    if isinstance(labels, PartialLabelMask):
        return labels.labels
    return np.asarray(labels)


def _mask_array(mask) -> np.ndarray:
    if isinstance(mask, GroundTruthMask):
        return mask.classes
    return np.asarray(mask)


def point_loss(prob_map: np.ndarray, labels) -> float:
    """Cross-entropy summed over the labeled pixels only.

    Pixels labeled -1 contribute nothing; with no labeled pixels the loss is
    defined as 0. Probabilities are clamped at 1e-12 before the log.
    """
    return point_loss_grad(prob_map, labels)[0]


def point_loss_grad(prob_map: np.ndarray, labels) -> tuple[float, np.ndarray]:
    y = _label_array(labels)
    p = np.asarray(prob_map)
    if y.shape != p.shape[:2]:
        raise ValueError(f"labels shape {y.shape} does not match prob map {p.shape[:2]}")
    rows, cols = np.nonzero(y >= 0)
    dp = np.zeros_like(p)
    if rows.size == 0:
        return 0.0, dp
    cls = y[rows, cols].astype(int)
    p_true = p[rows, cols, cls]
    clamped = np.maximum(p_true, PROB_CLAMP)
    loss = float(-np.log(clamped).sum()) + 0.0  # normalize -0.0
    grad = np.where(p_true > PROB_CLAMP, -1.0 / clamped, 0.0)
    dp[rows, cols, cls] = grad
    return loss, dp


def full_sup_loss(prob_map: np.ndarray, mask) -> float:
    """Class-frequency-weighted cross-entropy plus a soft IoU term.

    The per-pixel cross-entropy is weighted by the inverse frequency of the
    pixel's class (weights normalized to mean 1) and averaged; the IoU term is
    1 - (sum(p*y)+1)/(sum(p)+sum(y)-sum(p*y)+1) on the infected-class
    probability. Both vanish for a one-hot map equal to the ground truth.
    """
    return full_sup_loss_grad(prob_map, mask)[0]


def full_sup_loss_grad(prob_map: np.ndarray, mask) -> tuple[float, np.ndarray]:
    y = _mask_array(mask)
    p = np.asarray(prob_map)
    if y.shape != p.shape[:2]:
        raise ValueError(f"mask shape {y.shape} does not match prob map {p.shape[:2]}")
    n = y.size
    n1 = int(y.sum())
    n0 = n - n1
    cls = y.astype(int)
    rows, cols = np.indices(y.shape)
    p_true = p[rows, cols, cls]
    clamped = np.maximum(p_true, PROB_CLAMP)
    if n0 > 0 and n1 > 0:
        # inverse-frequency weights, normalized so the pixel-mean weight is 1
        w_pix = np.where(y == 1, n / (2.0 * n1), n / (2.0 * n0))
    else:
        w_pix = np.ones_like(p_true)
    wbce = float((w_pix * -np.log(clamped)).sum() / n)

    p1 = p[:, :, 1]
    inter = float((p1 * y).sum())
    total = float(p1.sum() + y.sum())
    i_eps = inter + 1.0
    u_eps = total - inter + 1.0
    iou_loss = 1.0 - i_eps / u_eps

    dp = np.zeros_like(p)
    dce = np.where(p_true > PROB_CLAMP, -w_pix / (n * clamped), 0.0)
    dp[rows, cols, cls] = dce
    diou = -(y * u_eps - i_eps * (1.0 - y)) / (u_eps * u_eps)
    dp[:, :, 1] += diou
    return wbce + iou_loss, dp


# ---------------------------------------------------------------------------
# Optimizer and training


class Adam:
    """Adam with bias correction, one statistic pair per parameter array."""

    def __init__(self, params: PredictorParams, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: PredictorParams, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def predict_binary(params: PredictorParams, pixels) -> np.ndarray:
    """Deterministic infected/background prediction (threshold 0.5 on class 1)."""
    probs = forward(params, pixels)
    return (probs[:, :, 1] > 0.5).astype(np.uint8)


def _val_dice(params, val) -> float:
    tp = fp = fn = 0
    for img, gt in val:
        pred = predict_binary(params, img)
        g = gt.classes if isinstance(gt, GroundTruthMask) else np.asarray(gt)
        tp += int(np.count_nonzero((pred == 1) & (g == 1)))
        fp += int(np.count_nonzero((pred == 1) & (g == 0)))
        fn += int(np.count_nonzero((pred == 0) & (g == 1)))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def train_cycle(
    params: PredictorParams,
    labeled: list[tuple[ImageSlice, PartialLabelMask | GroundTruthMask]],
    val: list[tuple[ImageSlice, GroundTruthMask]],
    config: TrainConfig,
) -> tuple[PredictorParams, float | None]:
    """Train for up to ``max_epochs`` passes over the labeled pool (batch 1).

    Point masks use the point loss, full masks the weighted-CE + IoU loss.
    With a non-empty val set, the parameters with the best validation Dice
    are returned (and training stops early once ``patience`` epochs pass
    without improvement); with an empty val set the final parameters are
    returned and the reported Dice is None.
    """
    if not labeled:
        raise ValueError("train_cycle needs at least one labeled image")
    work = params.copy()
    opt = Adam(work, lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    best: PredictorParams | None = None
    best_dice = -1.0
    best_epoch = -1
    for epoch in range(config.max_epochs):
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed, 0x33, epoch])
        ).permutation(len(labeled))
        for j, idx in enumerate(order):
            img, target = labeled[int(idx)]
            step_seed = int(
                np.random.SeedSequence([config.seed, 0x44, epoch, j]).generate_state(1)[0]
            )
            loss, grads = loss_and_param_grads(
                work, img, target, dropout_p=config.dropout, seed=step_seed
            )
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            opt.step(work, grads)
            work.assert_finite(f"at epoch {epoch}")
        if val:
            dice = _val_dice(work, val)
            if dice > best_dice:
                best_dice = dice
                best = work.copy()
                best_epoch = epoch
            elif config.patience is not None and epoch - best_epoch >= config.patience:
                break
    if val and best is not None:
        return best, best_dice
    return work, None


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: PredictorParams, adam: Adam | None = None, seed: int | None = None) -> None:
    """Versioned .npz: layer shapes, float64 weights, optimizer moments, seed."""
    payload = {
        "version": np.int64(CHECKPOINT_VERSION),
        "dtype": str(params.dtype),
        "seed": np.int64(-1 if seed is None else seed),
    }
    for name, arr in params.items():
        payload[f"param_{name}"] = arr.astype(np.float64)
    if adam is not None:
        payload["adam_t"] = np.int64(adam.t)
        payload["adam_lr"] = np.float64(adam.lr)
        for name in _PARAM_FIELDS:
            payload[f"adam_m_{name}"] = adam.m[name].astype(np.float64)
            payload[f"adam_v_{name}"] = adam.v[name].astype(np.float64)
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[PredictorParams, Adam | None, int | None]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        dtype = np.dtype(str(data["dtype"]))
        kwargs = {name: data[f"param_{name}"].astype(dtype) for name in _PARAM_FIELDS}
        params = PredictorParams(**kwargs)
        seed = int(data["seed"])
        adam = None
        if "adam_t" in data:
            adam = Adam(params, lr=float(data["adam_lr"]))
            adam.t = int(data["adam_t"])
            adam.m = {name: data[f"adam_m_{name}"].astype(dtype) for name in _PARAM_FIELDS}
            adam.v = {name: data[f"adam_v_{name}"].astype(dtype) for name in _PARAM_FIELDS}
    return params, adam, (None if seed < 0 else seed)
