"""Low-level numpy kernels for the small convolutional pixel classifier.

Activations are channels-last (H, W, C). 3x3 convolutions use stride 1 and
same-padding, implemented as im2col + one GEMM; backward reuses the forward
im2col matrix for the weight gradient and runs a second im2col over the
output gradient for the input gradient.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col3(x: np.ndarray) -> np.ndarray:
    """(H, W, C) -> (H*W, C*9) patch matrix for a same-padded 3x3 window."""
    h, w, c = x.shape
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))  # (H, W, C, 3, 3)
    return win.reshape(h * w, c * 9)


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray, col_out: list | None = None) -> np.ndarray:
    """Same-padded 3x3 convolution. w: (Cout, Cin, 3, 3), b: (Cout,).

    If ``col_out`` is given, the im2col matrix is appended to it so the
    backward pass can reuse it.
    """
    h, wd, _ = x.shape
    cout = w.shape[0]
    col = im2col3(x)
    if col_out is not None:
        col_out.append(col)
    y = col @ w.reshape(cout, -1).T
    y += b
    return y.reshape(h, wd, cout)


def conv3x3_backward(
    dy: np.ndarray, col: np.ndarray, w: np.ndarray, need_dx: bool = True
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Gradients of a 3x3 conv: (dW, db, dX). dy is (H, W, Cout)."""
    h, wd, cout = dy.shape
    dy_flat = dy.reshape(h * wd, cout)
    dw = (col.T @ dy_flat).T.reshape(w.shape)
    db = dy_flat.sum(axis=0)
    dx = None
    if need_dx:
        # dX is a full correlation of dY with the spatially flipped, in/out
        # transposed kernel; same-padding makes it another 3x3 conv.
        wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        cin = wt.shape[0]
        dcol = im2col3(dy)
        dx = (dcol @ wt.reshape(cin, -1).T).reshape(h, wd, cin)
    return dw, db, dx


def conv1x1(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise convolution. w: (Cout, Cin)."""
    h, wd, _ = x.shape
    y = x.reshape(h * wd, -1) @ w.T
    y += b
    return y.reshape(h, wd, w.shape[0])


def conv1x1_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    h, wd, cout = dy.shape
    dy_flat = dy.reshape(h * wd, cout)
    x_flat = x.reshape(h * wd, -1)
    dw = dy_flat.T @ x_flat
    db = dy_flat.sum(axis=0)
    dx = (dy_flat @ w).reshape(x.shape)
    return dw, db, dx


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def dropout_mask(rng: np.random.Generator, shape, p: float, dtype) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability p, survivors scaled 1/(1-p)."""
    keep = rng.random(shape) >= p
    scale = np.asarray(1.0 / (1.0 - p), dtype=dtype)
    return keep.astype(dtype) * scale


def softmax(z: np.ndarray) -> np.ndarray:
    """Per-pixel softmax over the trailing class axis."""
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """Map dL/dprobs to dL/dlogits through the softmax Jacobian."""
    inner = (dp * p).sum(axis=-1, keepdims=True)
    return p * (dp - inner)
