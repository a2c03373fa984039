"""Dense ReLU network for the scalar outer function g, with backprop and SGD.

Layers store weights as ``(out, in)`` matrices.  Hidden layers use ReLU
(derivative 0 at 0), the last layer is linear.  ``forward`` accepts a
scalar or a 1-D batch of scalars; ``backward`` sums gradients over the
batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64

OPTIMIZERS = ("sgd", "sgd_momentum")


class TrainingDivergence(RuntimeError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class Mlp:
    dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.dims = [int(v) for v in self.dims]
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match dims")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.dims[l + 1], self.dims[l])
            if W.shape != shape or b.shape != (self.dims[l + 1],):
                raise ValueError(f"layer {l}: expected W{shape}, b({shape[0]},), got {W.shape}, {b.shape}")

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self) -> Mlp:
        return Mlp(list(self.dims), [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Mlp:
        dims = data["dims"]
        weights = [
            np.array(w, dtype=np.float64).reshape(dims[l + 1], dims[l]) for l, w in enumerate(data["weights"])
        ]
        return cls(dims, weights, [np.array(b, dtype=np.float64) for b in data["biases"]])


def outer_dims(width: int, depth: int) -> list[int]:
    """``[1, width x (depth + 1), 1]``: one input layer plus ``depth`` hidden-to-hidden maps."""
    return [1] + [width] * (depth + 1) + [1]


def init_mlp(dims, seed: int) -> Mlp:
    """He-uniform weights ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
    dims = [int(v) for v in dims]
    if len(dims) < 2 or dims[0] != 1 or dims[-1] != 1 or min(dims) < 1:
        raise ValueError(f"dims must start and end with 1 and have positive widths, got {dims}")
    rng = SplitMix64(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        u = rng.uniform(fan_out * fan_in).reshape(fan_out, fan_in)
        weights.append((2.0 * u - 1.0) * bound)
        biases.append(np.zeros(fan_out))
    return Mlp(dims, weights, biases)


@dataclass
class Cache:
    dims: list[int]
    activations: list[np.ndarray]  # inputs to each layer, (B, width)
    preacts: list[np.ndarray]  # hidden pre-activations, (B, width)
    scalar: bool


def forward(net: Mlp, x):
    """Evaluate g at ``x`` (scalar or 1-D array); returns ``(out, cache)``."""
    scalar = np.ndim(x) == 0
    h = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    activations, preacts = [h], []
    last = len(net.weights) - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W.T + b
        if l == last:
            h = z
        else:
            preacts.append(z)
            h = np.maximum(z, 0.0)
            activations.append(h)
    out = h[:, 0]
    cache = Cache(list(net.dims), activations, preacts, scalar)
    return (float(out[0]) if scalar else out), cache


def predict(net: Mlp, x):
    return forward(net, x)[0]


@dataclass
class Grads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


def backward(net: Mlp, cache: Cache, upstream) -> Grads:
    """Gradients of ``sum_b upstream_b * g(x_b)`` with respect to every parameter."""
    if cache.dims != net.dims:
        raise ValueError(f"cache built for dims {cache.dims}, network has {net.dims}")
    batch = cache.activations[0].shape[0]
    delta = np.broadcast_to(np.asarray(upstream, dtype=np.float64), (batch,)).reshape(-1, 1)
    n_layers = len(net.weights)
    gW: list[np.ndarray] = [None] * n_layers
    gb: list[np.ndarray] = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        gW[l] = delta.T @ cache.activations[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l]) * (cache.preacts[l - 1] > 0)
    return Grads(gW, gb)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 2000
    batch_size: int = 16
    momentum: float = 0.0
    seed: int = 0
    optimizer: str = "sgd"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")

    @property
    def effective_momentum(self) -> float:
        return self.momentum if self.optimizer == "sgd_momentum" else 0.0


@dataclass
class SgdState:
    """Velocity buffers, one per parameter array, created lazily."""

    velocity: list[np.ndarray] = field(default_factory=list)


def sgd_step(net: Mlp, grads: Grads, config: TrainConfig, state: SgdState | None = None) -> Mlp:
    """In-place update ``v = g + momentum * v; theta -= lr * v``.  Returns ``net``."""
    params = [a for pair in zip(net.weights, net.biases) for a in pair]
    gs = [a for pair in zip(grads.weights, grads.biases) for a in pair]
    if len(gs) != len(params) or any(g.shape != p.shape for g, p in zip(gs, params)):
        raise ValueError("gradient structure does not match the network")
    if not all(np.all(np.isfinite(g)) for g in gs):
        raise TrainingDivergence("non-finite gradient")
    mu = config.effective_momentum
    if mu > 0.0:
        if state is None:
            raise ValueError("momentum updates need an SgdState to carry the velocity")
        if not state.velocity:
            state.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, gs, state.velocity):
            v *= mu
            v += g
            p -= config.learning_rate * v
    else:
        for p, g in zip(params, gs):
            p -= config.learning_rate * g
    return net
