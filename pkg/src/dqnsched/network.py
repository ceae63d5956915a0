"""Small fully connected Q-network in numpy.

ReLU on hidden layers, identity on the output layer. Gradients are of the
squared TD loss ``0.5 * delta**2`` and are returned in the *ascent* direction
``delta * dQ/dtheta``, so an update is always ``theta += alpha * g``.

Checkpoint layout (little-endian)::

    8 bytes   magic b"DQNCKPT1"
    int64     number of layer sizes L
    int64[L]  layer sizes (input first, output last)
    float64   for each layer in order: weight (out x in, row-major), then bias (out)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DQNCKPT1"


@dataclass
class NetworkParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


# Gradients share the parameter layout.
GradientSet = NetworkParams


@dataclass
class OptimizerState:
    kind: str = "rmsprop"
    decay: float = 0.95
    eps_stab: float = 0.01
    accumulator: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.kind!r}")


def init_network(layer_sizes, seed: int) -> NetworkParams:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if any(s <= 0 for s in sizes):
        raise ValueError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 0.05 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases)


def _forward_cache(params: NetworkParams, x: np.ndarray):
    # x: (batch, in). Returns pre-activations and layer inputs for backprop.
    inputs = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        h = z if i == last else np.maximum(z, 0.0)
    return h, inputs


def forward(params: NetworkParams, obs) -> np.ndarray:
    """Q-values for one observation (shape ``(n_actions,)``) or a batch (``(B, n_actions)``)."""
    x = np.asarray(obs, dtype=float)
    in_dim = params.weights[0].shape[1]
    if x.shape[-1] != in_dim or x.ndim not in (1, 2):
        raise ValueError(f"observation shape {x.shape} does not match input dimension {in_dim}")
    if x.ndim == 1:
        return _forward_cache(params, x[None, :])[0][0]
    return _forward_cache(params, x)[0]


def clip_error(delta, clip: float | None):
    if clip is None:
        return delta
    return np.clip(delta, -clip, clip)


def batch_td_gradient(params: NetworkParams, obs: np.ndarray, actions, targets, clip: float | None = None):
    """Mean over the batch of per-example ascent gradients, plus the clipped TD errors."""
    x = np.atleast_2d(np.asarray(obs, dtype=float))
    actions = np.asarray(actions, dtype=np.intp).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if not np.all(np.isfinite(targets)):
        raise ValueError("non-finite TD target")
    n_out = params.weights[-1].shape[0]
    if actions.size and (actions.min() < 0 or actions.max() >= n_out):
        raise IndexError("action out of range")
    batch = x.shape[0]
    q, inputs = _forward_cache(params, x)
    rows = np.arange(batch)
    delta = clip_error(targets - q[rows, actions], clip)

    # Upstream signal on the output layer: delta on the selected unit only, averaged.
    up = np.zeros_like(q)
    up[rows, actions] = delta / batch
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        h = inputs[i]
        gw[i] = up.T @ h
        gb[i] = up.sum(axis=0)
        if i > 0:
            up = (up @ params.weights[i]) * (h > 0.0)
    return NetworkParams(gw, gb), delta


def td_gradient(params: NetworkParams, obs, action: int, target: float, clip: float | None = None):
    """Ascent gradient ``delta * grad Q(s, a)`` for a single example."""
    if not math.isfinite(target):
        raise ValueError("non-finite TD target")
    grads, delta = batch_td_gradient(params, np.asarray(obs, dtype=float)[None, :], [action], [target], clip)
    return grads, float(delta[0])


def apply_update(params: NetworkParams, grads: GradientSet, alpha: float, opt: OptimizerState):
    """In-place step ``theta += alpha * g`` (SGD) or its RMSProp-scaled form."""
    if not alpha > 0:
        raise ValueError(f"learning rate must be positive, got {alpha}")
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
        raise ValueError("gradient shapes do not match parameters")
    if opt.kind == "sgd":
        for p, g in zip(p_arrays, g_arrays):
            p += alpha * g
        return params, opt
    if opt.accumulator is None:
        opt.accumulator = [np.zeros_like(p) for p in p_arrays]
    for p, g, acc in zip(p_arrays, g_arrays, opt.accumulator):
        acc *= opt.decay
        acc += (1.0 - opt.decay) * g * g
        p += alpha * g / np.sqrt(acc + opt.eps_stab)
    return params, opt


def clone_params(params: NetworkParams) -> NetworkParams:
    return NetworkParams([w.copy() for w in params.weights], [b.copy() for b in params.biases])


def save_checkpoint(params: NetworkParams, path) -> None:
    sizes = np.asarray(params.layer_sizes, dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.asarray([sizes.size], dtype="<i8").tobytes())
        fh.write(sizes.tobytes())
        for arr in params.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> NetworkParams:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    pos = 8
    (n_sizes,) = np.frombuffer(data, dtype="<i8", count=1, offset=pos)
    pos += 8
    sizes = np.frombuffer(data, dtype="<i8", count=int(n_sizes), offset=pos).tolist()
    pos += 8 * int(n_sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=pos).reshape(fan_out, fan_in)
        pos += 8 * fan_in * fan_out
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=pos)
        pos += 8 * fan_out
        weights.append(w.astype(float))
        biases.append(b.astype(float))
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return NetworkParams(weights, biases)
