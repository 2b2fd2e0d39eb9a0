"""Small feed-forward network with hand-derived gradients and SGD momentum.

The extractor is a stack of fully connected layers with ReLU after every
layer (features are the post-ReLU output of the last one); a linear head
maps features to logits over the unified label space. Everything runs in
64-bit numpy; there is no autodiff anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericError, ParseError

Layer = tuple[np.ndarray, np.ndarray]  # (W: out x in, b: out)


@dataclass
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    iterations: int = 3000
    lr_drop_at: int = 2000
    lr_drop_factor: float = 0.1
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0 <= self.lr_drop_at <= self.iterations:
            raise ValueError("lr_drop_at must be in [0, iterations]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(eq=False)
class ModelParams:
    """Extractor layers plus a linear classification head."""

    layers: list[Layer]
    head: Layer

    def __post_init__(self):
        if not self.layers:
            raise ValueError("extractor must have at least one layer")
        prev = self.layers[0][0].shape[1]
        for i, (w, b) in enumerate(self.layers + [self.head]):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: inconsistent shapes {w.shape}, {b.shape}")
            if w.shape[1] != prev:
                raise ValueError(
                    f"layer {i}: fan-in {w.shape[1]} does not chain from {prev}"
                )
            prev = w.shape[0]

    @property
    def d(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def feature_width(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def label_count(self) -> int:
        return self.head[0].shape[0]

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in fixed order: W0, b0, ..., W_head, b_head."""
        out = []
        for w, b in self.layers + [self.head]:
            out.extend((w, b))
        return out

    def decay_mask(self) -> list[bool]:
        """Parallel to arrays(): True where weight decay applies (weights, not biases)."""
        return [True, False] * (len(self.layers) + 1)

    def copy(self) -> "ModelParams":
        return ModelParams(
            [(w.copy(), b.copy()) for w, b in self.layers],
            (self.head[0].copy(), self.head[1].copy()),
        )

    @staticmethod
    def zeros_like(p: "ModelParams") -> "ModelParams":
        return ModelParams(
            [(np.zeros_like(w), np.zeros_like(b)) for w, b in p.layers],
            (np.zeros_like(p.head[0]), np.zeros_like(p.head[1])),
        )

    @staticmethod
    def from_arrays(template: "ModelParams", arrays: list[np.ndarray]) -> "ModelParams":
        n = len(template.layers)
        layers = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(n)]
        return ModelParams(layers, (arrays[2 * n], arrays[2 * n + 1]))


def init_linear(out_dim: int, in_dim: int, rng) -> Layer:
    """Glorot-uniform weight matrix and zero bias."""
    s = math.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-s, s, size=(out_dim, in_dim)), np.zeros(out_dim)


def init(d: int, hidden: list[int], label_count: int, seed: int) -> ModelParams:
    """Initialize extractor + head; weights uniform(-s, s) with s = sqrt(6/(fan_in+fan_out))."""
    if not hidden:
        raise ValueError("extractor must have at least one hidden layer")
    widths = [d] + list(hidden)
    if any(w < 1 for w in widths + [label_count]):
        raise ValueError("all layer widths must be >= 1")
    rng = np.random.default_rng(seed)
    layers = [
        init_linear(widths[i + 1], widths[i], rng) for i in range(len(hidden))
    ]
    head = init_linear(label_count, widths[-1], rng)
    return ModelParams(layers, head)


def one_hot(index: int, size: int) -> np.ndarray:
    if not 0 <= index < size:
        raise ValueError(f"one-hot index {index} outside [0, {size})")
    v = np.zeros(size)
    v[index] = 1.0
    return v


def forward(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (features, logits) for a single vector (d,) or a batch (N, d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.d:
        raise ValueError(f"input dimension {x.shape[-1]} != model d {params.d}")
    a = x
    for w, b in params.layers:
        a = np.maximum(a @ w.T + b, 0.0)
    wh, bh = params.head
    return a, a @ wh.T + bh


def forward_cache(params: ModelParams, X: np.ndarray):
    """Batch forward keeping pre-activations for backprop.

    Returns (activations, preacts, features, logits); activations[i] is the
    input to extractor layer i.
    """
    acts = [np.asarray(X, dtype=float)]
    pres = []
    for w, b in params.layers:
        z = acts[-1] @ w.T + b
        pres.append(z)
        acts.append(np.maximum(z, 0.0))
    features = acts[-1]
    wh, bh = params.head
    return acts, pres, features, features @ wh.T + bh


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax with max subtraction for stability."""
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def backward_from_dlogits(
    params: ModelParams, acts, pres, dlogits: np.ndarray
) -> ModelParams:
    """Backpropagate gradients of a scalar loss given d(loss)/d(logits)."""
    features = acts[-1]
    wh, _ = params.head
    g_head = (dlogits.T @ features, dlogits.sum(axis=0))
    da = dlogits @ wh
    g_layers: list[Layer] = []
    for i in reversed(range(len(params.layers))):
        dz = da * (pres[i] > 0)
        w, _ = params.layers[i]
        g_layers.append((dz.T @ acts[i], dz.sum(axis=0)))
        da = dz @ w
    g_layers.reverse()
    return ModelParams(g_layers, g_head)


def _check_soft_labels(P: np.ndarray):
    if np.any(P < -1e-12):
        raise ValueError("soft labels must be non-negative")
    sums = P.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError("soft label rows must sum to 1 within 1e-9")


def loss_and_grad_arrays(
    params: ModelParams, X: np.ndarray, P: np.ndarray
) -> tuple[float, ModelParams]:
    """Soft-target cross-entropy loss and exact gradients for a stacked batch.

    loss = mean_i -sum_k P[i,k] * log softmax(logits[i])_k. Weight decay is
    *not* part of the loss; the optimizer applies it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if X.shape[0] != P.shape[0]:
        raise ValueError("inputs and labels disagree on batch size")
    if P.shape[1] != params.label_count:
        raise ValueError(
            f"label width {P.shape[1]} != head size {params.label_count}"
        )
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(P))):
        raise NumericError("non-finite values in batch")
    _check_soft_labels(P)

    acts, pres, features, logits = forward_cache(params, X)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits (diverged parameters?)")
    logp = log_softmax(logits)
    loss = float(-(P * logp).sum(axis=1).mean())
    dlogits = (np.exp(logp) - P) / X.shape[0]
    return loss, backward_from_dlogits(params, acts, pres, dlogits)


def loss_and_grad(
    params: ModelParams, batch: list[tuple[np.ndarray, np.ndarray]]
) -> tuple[float, ModelParams]:
    """Same as loss_and_grad_arrays for a list of (x, soft_label) pairs."""
    if not batch:
        raise ValueError("batch must be non-empty")
    X = np.stack([x for x, _ in batch])
    P = np.stack([p for _, p in batch])
    return loss_and_grad_arrays(params, X, P)


def sgd_step(
    params: ModelParams,
    grads: ModelParams,
    velocity: ModelParams,
    cfg: TrainConfig,
    iteration: int,
) -> tuple[ModelParams, ModelParams]:
    """One SGD-with-momentum update; biases are excluded from weight decay.

    effective_lr = lr * (lr_drop_factor if iteration >= lr_drop_at else 1);
    v <- momentum*v - effective_lr*(g + weight_decay*w); w <- w + v.
    """
    for g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    eff_lr = cfg.lr * (cfg.lr_drop_factor if iteration >= cfg.lr_drop_at else 1.0)
    new_w = []
    new_v = []
    for w, g, v, decays in zip(
        params.arrays(), grads.arrays(), velocity.arrays(), params.decay_mask()
    ):
        step_g = g + cfg.weight_decay * w if decays else g
        v2 = cfg.momentum * v - eff_lr * step_g
        new_v.append(v2)
        new_w.append(w + v2)
    return (
        ModelParams.from_arrays(params, new_w),
        ModelParams.from_arrays(params, new_v),
    )


_CKPT_MAGIC = b"XMIXUP-CKPT-1"


def save_params(params: ModelParams, path) -> None:
    """Write a checkpoint: ASCII shape header, then raw little-endian float64.

    Layout: magic line; layer count; one `out in` line per layer (head last);
    then the arrays of ModelParams.arrays() concatenated row-major. The file
    is a pure function of the parameter values, so round-trips are bit-exact.
    """
    with open(Path(path), "wb") as f:
        f.write(_CKPT_MAGIC + b"\n")
        f.write(f"{len(params.layers)}\n".encode())
        for w, _ in params.layers + [params.head]:
            f.write(f"{w.shape[0]} {w.shape[1]}\n".encode())
        for arr in params.arrays():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> ModelParams:
    data = Path(path).read_bytes()
    head, _, rest = data.partition(b"\n")
    if head != _CKPT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file", line=1)
    count_line, _, rest = rest.partition(b"\n")
    try:
        n_layers = int(count_line)
    except ValueError:
        raise ParseError("bad layer count", line=2) from None
    shapes = []
    for i in range(n_layers + 1):
        line, _, rest = rest.partition(b"\n")
        try:
            out_dim, in_dim = (int(v) for v in line.split())
        except ValueError:
            raise ParseError("bad shape line", line=3 + i) from None
        shapes.append((out_dim, in_dim))

    try:
        buf = np.frombuffer(rest, dtype="<f8")
    except ValueError:
        raise ParseError("checkpoint payload is not float64-aligned") from None
    if buf.size != sum(o * i + o for o, i in shapes):
        raise ParseError("checkpoint payload size mismatch")
    arrays = []
    offset = 0
    for out_dim, in_dim in shapes:
        w = buf[offset : offset + out_dim * in_dim].reshape(out_dim, in_dim).copy()
        offset += out_dim * in_dim
        b = buf[offset : offset + out_dim].copy()
        offset += out_dim
        arrays.extend((w, b))
    layers = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(n_layers)]
    return ModelParams(layers, (arrays[2 * n_layers], arrays[2 * n_layers + 1]))
