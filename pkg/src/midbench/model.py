"""The small CNN: 2 conv layers, 3 FC layers, and a linear classifier head.

The third FC layer is the penultimate embedding; everything up to and
including it is the encoder, the final linear map is the classifier. Layer
parameter names are fixed so checkpoints and the encoder/classifier split
are unambiguous.
"""

from dataclasses import dataclass, field

import numpy as np

from .layers import (
    conv2d_backward,
    conv2d_forward,
    linear_backward,
    linear_forward,
    maxpool2_backward,
    maxpool2_forward,
    relu_backward,
    relu_forward,
    softmax_cross_entropy,
)

CLASSIFIER_KEYS = ("clf_w", "clf_b")


class NonFiniteError(RuntimeError):
    """Raised when activations or loss stop being finite."""


@dataclass(frozen=True)
class ModelSpec:
    conv_channels: tuple[int, int] = (16, 32)
    kernel_size: int = 5
    fc_widths: tuple[int, int, int] = (256, 128, 64)
    n_classes: int = 3
    input_size: int = 64

    def __post_init__(self):
        if len(self.conv_channels) != 2 or len(self.fc_widths) != 3:
            raise ValueError("exactly 2 conv layers and 3 FC layers required")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.input_size % 4 != 0:
            raise ValueError("input_size must be divisible by 4 (two 2x2 pools)")

    @property
    def flat_dim(self) -> int:
        side = self.input_size // 4
        return self.conv_channels[1] * side * side

    @property
    def embedding_dim(self) -> int:
        return self.fc_widths[2]

    def param_shapes(self) -> dict[str, tuple]:
        c1, c2 = self.conv_channels
        k = self.kernel_size
        f1, f2, f3 = self.fc_widths
        return {
            "conv1_w": (c1, 1, k, k),
            "conv1_b": (c1,),
            "conv2_w": (c2, c1, k, k),
            "conv2_b": (c2,),
            "fc1_w": (f1, self.flat_dim),
            "fc1_b": (f1,),
            "fc2_w": (f2, f1),
            "fc2_b": (f2,),
            "fc3_w": (f3, f2),
            "fc3_b": (f3,),
            "clf_w": (self.n_classes, f3),
            "clf_b": (self.n_classes,),
        }

    def to_dict(self) -> dict:
        return {
            "conv_channels": list(self.conv_channels),
            "kernel_size": self.kernel_size,
            "fc_widths": list(self.fc_widths),
            "n_classes": self.n_classes,
            "input_size": self.input_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            conv_channels=tuple(d["conv_channels"]),
            kernel_size=int(d["kernel_size"]),
            fc_widths=tuple(d["fc_widths"]),
            n_classes=int(d["n_classes"]),
            input_size=int(d["input_size"]),
        )


REDUCED_SPEC = ModelSpec(conv_channels=(2, 3), kernel_size=5, fc_widths=(10, 8, 6), n_classes=3, input_size=16)


def init_params(spec: ModelSpec, seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    """Uniform fan-in init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 100)))
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


def check_params(spec: ModelSpec, params: dict[str, np.ndarray]) -> None:
    shapes = spec.param_shapes()
    if set(params) != set(shapes):
        raise ValueError(f"parameter names {sorted(params)} != expected {sorted(shapes)}")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ValueError(f"{name} has shape {params[name].shape}, expected {shape}")


def forward(params: dict, x: np.ndarray, spec: ModelSpec, with_cache: bool = False):
    """Run the network. x is (N, 1, H, W); returns (embedding, logits[, cache])."""
    if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != spec.input_size or x.shape[3] != spec.input_size:
        raise ValueError(f"input shape {x.shape} does not match spec input {spec.input_size}")
    pad = spec.kernel_size // 2
    n = x.shape[0]

    a1, cv1 = conv2d_forward(x, params["conv1_w"], params["conv1_b"], pad)
    r1, m1 = relu_forward(a1)
    p1, pc1 = maxpool2_forward(r1)
    a2, cv2 = conv2d_forward(p1, params["conv2_w"], params["conv2_b"], pad)
    r2, m2 = relu_forward(a2)
    p2, pc2 = maxpool2_forward(r2)
    flat = p2.reshape(n, -1)
    h1, lx1 = linear_forward(flat, params["fc1_w"], params["fc1_b"])
    g1, n1 = relu_forward(h1)
    h2, lx2 = linear_forward(g1, params["fc2_w"], params["fc2_b"])
    g2, n2 = relu_forward(h2)
    emb, lx3 = linear_forward(g2, params["fc3_w"], params["fc3_b"])
    logits, lxc = linear_forward(emb, params["clf_w"], params["clf_b"])

    if not np.isfinite(logits).all():
        raise NonFiniteError("non-finite logits in forward pass")
    if not with_cache:
        return emb, logits
    cache = (cv1, m1, pc1, cv2, m2, pc2, lx1, n1, lx2, n2, lx3, lxc, p2.shape)
    return emb, logits, cache


def loss_grad_logits(params: dict, x: np.ndarray, labels: np.ndarray, spec: ModelSpec):
    """As loss_and_grad, additionally returning the batch logits."""
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    emb, logits, cache = forward(params, x, spec, with_cache=True)
    cv1, m1, pc1, cv2, m2, pc2, lx1, n1, lx2, n2, lx3, lxc, p2_shape = cache
    loss, dlogits = softmax_cross_entropy(logits, labels)
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite loss")
    pad = spec.kernel_size // 2
    grads = {}

    demb, grads["clf_w"], grads["clf_b"] = linear_backward(dlogits, lxc, params["clf_w"])
    dg2, grads["fc3_w"], grads["fc3_b"] = linear_backward(demb, lx3, params["fc3_w"])
    dh2 = relu_backward(dg2, n2)
    dg1, grads["fc2_w"], grads["fc2_b"] = linear_backward(dh2, lx2, params["fc2_w"])
    dh1 = relu_backward(dg1, n1)
    dflat, grads["fc1_w"], grads["fc1_b"] = linear_backward(dh1, lx1, params["fc1_w"])
    dp2 = dflat.reshape(p2_shape)
    dr2 = maxpool2_backward(dp2, pc2)
    da2 = relu_backward(dr2, m2)
    dp1, grads["conv2_w"], grads["conv2_b"] = conv2d_backward(da2, cv2, params["conv2_w"], pad)
    dr1 = maxpool2_backward(dp1, pc1)
    da1 = relu_backward(dr1, m1)
    _, grads["conv1_w"], grads["conv1_b"] = conv2d_backward(da1, cv1, params["conv1_w"], pad, need_dx=False)
    return loss, grads, logits


def loss_and_grad(params: dict, x: np.ndarray, labels: np.ndarray, spec: ModelSpec):
    """Mean cross-entropy over the batch and gradients for every parameter."""
    loss, grads, _ = loss_grad_logits(params, x, labels, spec)
    return loss, grads
