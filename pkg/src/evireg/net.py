"""Fully connected network with a four-output evidential head.

Parameters live in one flat float64 vector. Layout is layer-major: for each
layer the weight matrix of shape ``(fan_in, fan_out)`` in row-major order,
then its bias of length ``fan_out``.
"""

from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np

from .losses import LossPartials
from .nig import EvidentialOutput

HEADS = ("gamma", "nu", "alpha", "beta")
GAMMA_HEAD = frozenset({"gamma"})
UNCERTAINTY_HEADS = frozenset({"nu", "alpha", "beta"})
ALL_HEADS = frozenset(HEADS)

NU_FLOOR = 1e-6
ALPHA_SHIFT = 1.0 + 1e-6
BETA_FLOOR = 1e-6

CHECKPOINT_MAGIC = "# evireg checkpoint v1"


@dataclass(frozen=True)
class NetConfig:
    input_dim: int = 1
    hidden_sizes: tuple = (100, 100, 100)
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be a nonempty list of positive integers")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layer_sizes(self):
        return (self.input_dim, *self.hidden_sizes, len(HEADS))


def softplus(z):
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def param_count(config: NetConfig) -> int:
    sizes = config.layer_sizes
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def _check_heads(heads):
    heads = frozenset(heads)
    if not heads:
        raise ValueError("head set must be nonempty")
    unknown = heads - ALL_HEADS
    if unknown:
        raise ValueError(f"unknown heads: {sorted(unknown)}")
    return heads


@dataclass
class _Cache:
    inputs: list = field(default_factory=list)  # input to each layer
    pre: list = field(default_factory=list)     # pre-activation of each hidden layer
    raw: np.ndarray | None = None               # raw head outputs, (N, 4)


class EvidentialMLP:
    """Shape bookkeeping plus forward and reverse passes for one ``NetConfig``.

    Holds no trainable state; parameter vectors are passed in explicitly.
    """

    def __init__(self, config: NetConfig):
        self.config = config
        self.n_params = param_count(config)
        self._slices = []
        offset = 0
        for fan_in, fan_out in zip(config.layer_sizes[:-1], config.layer_sizes[1:]):
            w = slice(offset, offset + fan_in * fan_out)
            offset += fan_in * fan_out
            b = slice(offset, offset + fan_out)
            offset += fan_out
            self._slices.append((w, b, fan_in, fan_out))

    def init(self) -> np.ndarray:
        """Glorot-uniform weights, zero biases, reproducible from ``config.seed``."""
        rng = np.random.default_rng(self.config.seed)
        params = np.zeros(self.n_params)
        for w, _, fan_in, fan_out in self._slices:
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            params[w] = rng.uniform(-bound, bound, size=fan_in * fan_out)
        return params

    def layers(self, params):
        self._check_params(params)
        return [
            (params[w].reshape(fan_in, fan_out), params[b])
            for w, b, fan_in, fan_out in self._slices
        ]

    def _check_params(self, params):
        if np.shape(params) != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {np.shape(params)}")

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim <= 1
        batch = x.reshape(1, -1) if single else x
        if batch.ndim != 2 or batch.shape[1] != self.config.input_dim:
            raise ValueError(
                f"input must have {self.config.input_dim} features, got shape {x.shape}"
            )
        return batch, single

    def _act(self, z):
        return np.tanh(z) if self.config.activation == "tanh" else np.maximum(z, 0.0)

    def _act_grad(self, z, a):
        if self.config.activation == "tanh":
            return 1.0 - a * a
        return (z > 0).astype(float)

    def _forward(self, params, batch):
        cache = _Cache()
        h = batch
        layers = self.layers(params)
        for i, (weight, bias) in enumerate(layers):
            cache.inputs.append(h)
            z = h @ weight + bias
            if i < len(layers) - 1:
                cache.pre.append(z)
                h = self._act(z)
            else:
                cache.raw = z
        return cache

    @staticmethod
    def _heads_from_raw(raw):
        return EvidentialOutput(
            raw[:, 0],
            softplus(raw[:, 1]) + NU_FLOOR,
            softplus(raw[:, 2]) + ALPHA_SHIFT,
            softplus(raw[:, 3]) + BETA_FLOOR,
        )

    def forward_batch(self, params, x):
        """Forward pass returning ``(EvidentialOutput, cache)`` for reuse in backward."""
        batch, single = self._as_batch(x)
        cache = self._forward(params, batch)
        out = self._heads_from_raw(cache.raw)
        if single:
            out = out[0]
        return out, cache

    def forward(self, params, x) -> EvidentialOutput:
        return self.forward_batch(params, x)[0]

    def backward(self, params, cache, partials: LossPartials, heads=ALL_HEADS):
        """Reverse pass from per-item head partials to a flat parameter gradient.

        Only the partials of ``heads`` seed the pass. The result is the sum
        over the batch of each item's contribution.
        """
        heads = _check_heads(heads)
        raw = cache.raw
        seed = np.broadcast_to(partials.as_array(), raw.shape).copy()
        for j, name in enumerate(HEADS):
            if name not in heads:
                seed[:, j] = 0.0
        # gamma is linear; the other heads pass through softplus (derivative sigmoid)
        seed[:, 1:] *= sigmoid(raw[:, 1:])

        grad = np.empty(self.n_params)
        layers = self.layers(params)
        delta = seed
        for i in range(len(layers) - 1, -1, -1):
            w, b, _, _ = self._slices[i]
            weight = layers[i][0]
            grad[w] = (cache.inputs[i].T @ delta).ravel()
            grad[b] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ weight.T) * self._act_grad(cache.pre[i - 1], cache.inputs[i])
        return grad

    def head_gradient(self, params, x, partials: LossPartials, heads=ALL_HEADS):
        """Gradient vector of a loss restricted to the chosen output heads.

        ``partials`` are the loss derivatives with respect to the head
        outputs at ``forward(params, x)``; ``x`` may be one input or a batch.
        """
        heads = _check_heads(heads)
        batch, _ = self._as_batch(x)
        cache = self._forward(params, batch)
        return self.backward(params, cache, partials, heads)


def cosine(a, b):
    """Cosine similarity, or ``None`` when either vector has norm below 1e-12."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return None
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def save_checkpoint(path, config: NetConfig, params, meta=None):
    """Write a checkpoint: ``key=value`` header lines, a blank line, then one value per line.

    Header keys, in order: ``input_dim``, ``hidden_sizes`` (comma separated),
    ``activation``, ``seed``, ``param_count``, then any ``meta`` entries.
    Values are written with ``repr`` so they round-trip exactly.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (param_count(config),):
        raise ValueError("parameter vector does not match config")
    lines = [
        CHECKPOINT_MAGIC,
        f"input_dim={config.input_dim}",
        f"hidden_sizes={','.join(str(h) for h in config.hidden_sizes)}",
        f"activation={config.activation}",
        f"seed={config.seed}",
        f"param_count={params.size}",
    ]
    for key, value in (meta or {}).items():
        lines.append(f"{key}={value}")
    lines.append("")
    lines.extend(repr(float(v)) for v in params)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(config, params, meta)``."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    header = {}
    i = 1
    while i < len(text) and text[i]:
        key, _, value = text[i].partition("=")
        header[key] = value
        i += 1
    config = NetConfig(
        input_dim=int(header.pop("input_dim")),
        hidden_sizes=tuple(int(h) for h in header.pop("hidden_sizes").split(",")),
        activation=header.pop("activation"),
        seed=int(header.pop("seed")),
    )
    count = int(header.pop("param_count"))
    params = np.array([float(v) for v in text[i + 1:]], dtype=float)
    if params.size != count or count != param_count(config):
        raise ValueError(f"{path}: expected {count} parameters, found {params.size}")
    return config, params, header
