"""Dense and convolution kernels with reverse-mode gradients.

Pure functions over numpy arrays; each forward returns (output, cache) and the
matching backward consumes the cache. All ops preserve the input dtype so the
same code path runs in float32 for training and float64 for gradient checks.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """(N,C,H,W) -> (C*k*k, N*H*W) patch matrix for a stride-1 convolution."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N,C,H,W,k,k)
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(c * k * k, n * h * w)


def col2im(dcols: np.ndarray, shape: tuple, k: int, pad: int) -> np.ndarray:
    """Adjoint of im2col: fold (C*k*k, N*H*W) back onto (N,C,H,W)."""
    n, c, h, w = shape
    dxp = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d = dcols.reshape(c, k, k, n, h, w)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + h, j : j + w] += d[:, i, j]
    return dxp[:, :, pad : pad + h, pad : pad + w].transpose(1, 0, 2, 3)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, pad: int):
    """Stride-1 'same' convolution. x (N,C,H,W), w (O,C,k,k), b (O,)."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    cols = im2col(x, k, pad)
    out = w.reshape(o, -1) @ cols + b[:, None]
    y = out.reshape(o, n, h, wd).transpose(1, 0, 2, 3)
    return y, (x.shape, cols)


def conv2d_backward(dy: np.ndarray, cache, w: np.ndarray, pad: int, need_dx: bool = True):
    x_shape, cols = cache
    o, _, k, _ = w.shape
    dy_mat = dy.transpose(1, 0, 2, 3).reshape(o, -1)
    dw = (dy_mat @ cols.T).reshape(w.shape)
    db = dy_mat.sum(axis=1)
    dx = None
    if need_dx:
        dcols = w.reshape(o, -1).T @ dy_mat
        dx = col2im(dcols, x_shape, k, pad)
    return dx, dw, db


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2. Equal maxima share the routed gradient."""
    m = np.maximum(x[:, :, 0::2, :], x[:, :, 1::2, :])
    y = np.maximum(m[:, :, :, 0::2], m[:, :, :, 1::2])
    return y, (x, y)


def maxpool2_backward(dy: np.ndarray, cache):
    x, y = cache
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2)
    mask = win == y[:, :, :, None, :, None]
    return (mask * dy[:, :, :, None, :, None]).reshape(x.shape)


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x > 0


def relu_backward(dy: np.ndarray, mask: np.ndarray):
    return dy * mask


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x (N,F) @ w (O,F)^T + b."""
    return x @ w.T + b, x


def linear_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient wrt logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float((logsumexp - z[np.arange(n), labels]).mean())
    probs = softmax(logits)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits
