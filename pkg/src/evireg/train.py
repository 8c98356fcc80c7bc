"""Minibatch training with Adam, plus the auxiliary-vs-NLL gradient conflict monitor."""

from collections import deque
from dataclasses import dataclass, field
import logging

import numpy as np

from .data import Dataset
from .losses import AuxLossKind, total_objective
from .metrics import MetricsReport, report
from .net import ALL_HEADS, GAMMA_HEAD, EvidentialMLP, NetConfig, cosine

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 1e-3
    reg_coeff: float = 1e-2
    batch_size: int = 128
    epochs: int = 500
    aux: AuxLossKind = AuxLossKind.LIPSCHITZ_MSE
    seed: int = 0
    conflict_window: int = 500

    def __post_init__(self):
        object.__setattr__(self, "aux", AuxLossKind(self.aux))
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0 or self.reg_coeff < 0:
            raise ValueError("weight_decay and reg_coeff must be nonnegative")
        if self.batch_size < 1 or self.epochs < 1 or self.conflict_window < 1:
            raise ValueError("batch_size, epochs and conflict_window must be >= 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grad, state: AdamState, config: TrainConfig):
    """One Adam update with decoupled weight decay; returns ``(params, state)``.

    Inputs are not modified.
    """
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("parameter, gradient and optimizer state shapes differ")
    lr = config.learning_rate
    params = params - lr * config.weight_decay * params
    step = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - ADAM_BETA1 ** step)
    v_hat = v / (1.0 - ADAM_BETA2 ** step)
    params = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params, AdamState(m, v, step)


@dataclass
class ConflictTrace:
    """Per-iteration cosine between the auxiliary and NLL gradients.

    Undefined cosines are stored as ``None`` and skipped by the moving
    average, which covers the most recent ``window`` defined values.
    """

    window: int = 500
    iterations: list = field(default_factory=list)
    cosines: list = field(default_factory=list)
    moving_avg: list = field(default_factory=list)
    _recent: deque = field(default=None, repr=False)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        self._recent = deque(maxlen=self.window)

    def record(self, iteration, value):
        self.iterations.append(iteration)
        self.cosines.append(value)
        if value is not None:
            self._recent.append(value)
        self.moving_avg.append(float(np.mean(self._recent)) if self._recent else None)

    def __len__(self):
        return len(self.iterations)

    def tail_mean(self, fraction=0.25):
        """Mean moving average over the final ``fraction`` of iterations."""
        n = len(self.moving_avg)
        start = n - max(1, int(round(n * fraction)))
        vals = [v for v in self.moving_avg[start:] if v is not None]
        return float(np.mean(vals)) if vals else None


@dataclass(frozen=True)
class EpochLosses:
    epoch: int
    nll: float
    aux: float
    reg: float
    total: float


@dataclass
class TrainResult:
    params: np.ndarray
    trace: ConflictTrace
    losses: list


def batch_gradients(model: EvidentialMLP, params, x, y, aux, reg_coeff):
    """Loss bundle and per-source parameter gradients for one minibatch.

    The auxiliary gradient only flows through the gamma head. Returns
    ``(bundle, {"nll": g, "aux": g, "reg": g})`` for the batch-mean loss.
    """
    out, cache = model.forward_batch(params, x)
    bundle = total_objective(y, out, aux, reg_coeff)
    scale = 1.0 / len(y)
    grads = {
        "nll": model.backward(params, cache, bundle.partials["nll"].scale(scale), ALL_HEADS),
        "aux": model.backward(params, cache, bundle.partials["aux"].scale(scale), GAMMA_HEAD),
        "reg": model.backward(params, cache, bundle.partials["reg"].scale(scale), ALL_HEADS),
    }
    return bundle, grads


def train(dataset: Dataset, net_config: NetConfig, train_config: TrainConfig,
          params=None) -> TrainResult:
    """Train an evidential MLP on ``dataset`` with the configured objective.

    ``params`` overrides the seeded initialization. Returns the final
    parameters, the conflict trace (empty when ``aux`` is ``none``) and one
    :class:`EpochLosses` per epoch.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    model = EvidentialMLP(net_config)
    params = model.init() if params is None else np.array(params, dtype=float)
    state = AdamState.zeros(model.n_params)
    rng = np.random.default_rng(train_config.seed)
    trace = ConflictTrace(window=train_config.conflict_window)
    aux = train_config.aux
    history = []
    x_all, y_all = dataset.inputs, dataset.targets
    n = len(dataset)
    iteration = 0
    for epoch in range(train_config.epochs):
        perm = rng.permutation(n)
        sums = np.zeros(4)
        for start in range(0, n, train_config.batch_size):
            idx = perm[start:start + train_config.batch_size]
            bundle, grads = batch_gradients(
                model, params, x_all[idx], y_all[idx], aux, train_config.reg_coeff
            )
            if aux is not AuxLossKind.NONE:
                trace.record(iteration, cosine(grads["aux"], grads["nll"]))
            grad = grads["nll"] + grads["aux"] + grads["reg"]
            params, state = adam_step(params, grad, state, train_config)
            sums += len(idx) * np.array([bundle.nll, bundle.aux, bundle.reg, bundle.total])
            iteration += 1
        means = sums / n
        history.append(EpochLosses(epoch, *map(float, means)))
        if epoch % 50 == 0 or epoch == train_config.epochs - 1:
            log.debug("epoch %d total %.5f nll %.5f aux %.5f", epoch, means[3], means[0], means[1])
    return TrainResult(params, trace, history)


def predict(params, dataset: Dataset, net_config: NetConfig):
    """Evidential outputs for ``dataset`` in raw target units."""
    out = EvidentialMLP(net_config).forward(params, dataset.inputs)
    norm = dataset.normalization
    if norm is not None:
        out = out.denormalize(norm.y_mean, norm.y_std)
    return out


def raw_targets(dataset: Dataset):
    norm = dataset.normalization
    return dataset.targets if norm is None else norm.denormalize_targets(dataset.targets)


def evaluate(params, dataset: Dataset, net_config: NetConfig) -> MetricsReport:
    """RMSE, mean NLL, ECE and CI on ``dataset``, computed in raw target units."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    return report(raw_targets(dataset), predict(params, dataset, net_config))
