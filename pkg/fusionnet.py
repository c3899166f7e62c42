"""
Label-fusion network: M model probabilities -> ReLU(H1) -> ReLU(H2) -> sigmoid.

Trained with mini-batch Adam on binary cross-entropy, the learning rate decayed
exponentially per epoch. After every epoch the network is scored on a held-out
validation split and the checkpoint with the best composite score S is kept.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy.special import expit

from metrics import MetricsReport, evaluate_arrays
from predictions import PredictionPanel
from settings import DECISION_THRESHOLD, DEFAULT_SEED, ECE_BINS

logger = logging.getLogger(__name__)

OUTPUT_CLAMP = 1e-7
LOG_COLUMNS = ("epoch", "loss", "val_auc", "val_f1", "val_ece", "val_S", "lr")

# Independent generator streams derived from one seed
_SPLIT_STREAM = 1
_SHUFFLE_STREAM = 2

Params = tuple[np.ndarray, ...]


class TrainingError(RuntimeError):
    pass


class TrainConfig(BaseModel):
    epochs: int = Field(200, ge=1)
    batch_size: int = Field(16, ge=1)
    seed: int = DEFAULT_SEED
    validation_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    learning_rate: float = Field(1e-3, gt=0.0)
    decay: float = Field(0.99, gt=0.0, le=1.0)
    hidden1: int = Field(16, ge=1)
    hidden2: int = Field(8, ge=1)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    n_bins: int = Field(ECE_BINS, ge=1)
    threshold: float = Field(DECISION_THRESHOLD, ge=0.0, le=1.0)
    loss: Literal["binary_cross_entropy"] = "binary_cross_entropy"


@dataclass(frozen=True, eq=False)
class FusionNetwork:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    model_names: tuple[str, ...] = ()
    config: TrainConfig | None = None

    def __post_init__(self):
        weights = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        if len(weights) != 3 or len(biases) != 3:
            raise ValueError("fusion network needs exactly three layers")
        fan_in = weights[0].shape[1] if weights[0].ndim == 2 else -1
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or w.shape[1] != fan_in or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i + 1} has inconsistent shapes {w.shape} / {b.shape}")
            fan_in = w.shape[0]
        if fan_in != 1:
            raise ValueError("output layer must have a single unit")
        if not all(np.isfinite(a).all() for a in weights + biases):
            raise ValueError("network parameters must be finite")
        if self.model_names and len(self.model_names) != weights[0].shape[1]:
            raise ValueError("model_names must match the input dimension")
        for a in weights + biases:
            a.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "model_names", tuple(self.model_names))

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    def parameters(self) -> Params:
        w1, w2, w3 = self.weights
        b1, b2, b3 = self.biases
        return (w1, b1, w2, b2, w3, b3)

    def with_parameters(self, params: Sequence[np.ndarray]) -> "FusionNetwork":
        w1, b1, w2, b2, w3, b3 = params
        return FusionNetwork((w1, w2, w3), (b1, b2, b3), self.model_names, self.config)


class ExponentialScheduler:
    def __init__(self, base_lr: float = 1e-3, decay_rate: float = 0.99, decay_every: int = 1):
        self.base_lr = base_lr
        self.decay_rate = decay_rate
        self.decay_every = decay_every

    def __call__(self, epoch: int) -> float:
        return self.base_lr * self.decay_rate ** (epoch / self.decay_every)


@dataclass(frozen=True, eq=False)
class AdamState:
    m: Params
    v: Params
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 1e-3
    decay: float = 0.99

    @classmethod
    def for_network(cls, net: FusionNetwork, config: TrainConfig | None = None) -> "AdamState":
        config = config or TrainConfig()
        zeros = tuple(np.zeros_like(p) for p in net.parameters())
        return cls(
            m=zeros,
            v=tuple(np.zeros_like(p) for p in net.parameters()),
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            base_lr=config.learning_rate,
            decay=config.decay,
        )

    def learning_rate(self, epoch: int) -> float:
        return ExponentialScheduler(self.base_lr, self.decay)(epoch)


# ==============================
# Network algebra
# ==============================

def init_network(n_inputs: int, config: TrainConfig | None = None, model_names: Sequence[str] = ()) -> FusionNetwork:
    """Glorot-uniform weights from the seeded generator, zero biases."""
    if n_inputs < 1:
        raise ValueError(f"fusion network needs at least one input, got {n_inputs}")
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    dims = [n_inputs, config.hidden1, config.hidden2, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return FusionNetwork(tuple(weights), tuple(biases), tuple(model_names), config)


def _check_inputs(net: FusionNetwork, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ValueError(f"dimension mismatch: network takes {net.n_inputs} inputs, got shape {x.shape}")
    return x


def _forward(net: FusionNetwork, x: np.ndarray):
    w1, w2, w3 = net.weights
    b1, b2, b3 = net.biases
    z1 = x @ w1.T + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w2.T + b2
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ w3.T + b3
    return (z1, a1, z2, a2), z3[:, 0]


def forward_batch(net: FusionNetwork, inputs) -> np.ndarray:
    x = _check_inputs(net, inputs)
    _, logits = _forward(net, x)
    return expit(logits)


def forward(net: FusionNetwork, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward takes a single input vector")
    return float(forward_batch(net, x[None, :])[0])


def _bce(s: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(s, OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _check_batch(net: FusionNetwork, inputs, labels) -> tuple[np.ndarray, np.ndarray]:
    x = _check_inputs(net, inputs)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    if y.size != x.shape[0]:
        raise ValueError("batch inputs and labels differ in length")
    return x, y


def binary_cross_entropy(net: FusionNetwork, inputs, labels) -> float:
    x, y = _check_batch(net, inputs, labels)
    return _bce(forward_batch(net, x), y)


def loss_and_gradient(net: FusionNetwork, inputs, labels) -> tuple[float, Params]:
    """Mean clamped BCE and its exact gradient, ordered like net.parameters()."""
    x, y = _check_batch(net, inputs, labels)
    (z1, a1, z2, a2), logits = _forward(net, x)
    s = expit(logits)
    loss = _bce(s, y)

    w1, w2, w3 = net.weights
    n = x.shape[0]
    # the clamp is flat outside its range, so clamped samples contribute nothing
    inside = (s > OUTPUT_CLAMP) & (s < 1.0 - OUTPUT_CLAMP)
    dz3 = (np.where(inside, s - y, 0.0) / n)[:, None]
    dw3 = dz3.T @ a2
    db3 = dz3.sum(axis=0)
    dz2 = (dz3 @ w3) * (z2 > 0.0)
    dw2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ w2) * (z1 > 0.0)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return loss, (dw1, db1, dw2, db2, dw3, db3)


def numerical_gradient(net: FusionNetwork, inputs, labels, step: float = 1e-5) -> Params:
    """Central differences of binary_cross_entropy; a diagnostic for loss_and_gradient."""
    x, y = _check_batch(net, inputs, labels)
    params = [p.copy() for p in net.parameters()]
    grads = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            original = p[idx]
            p[idx] = original + step
            upper = binary_cross_entropy(net.with_parameters(params), x, y)
            p[idx] = original - step
            lower = binary_cross_entropy(net.with_parameters(params), x, y)
            p[idx] = original
            g[idx] = (upper - lower) / (2.0 * step)
        grads.append(g)
    return tuple(grads)


def adam_step(net: FusionNetwork, grads: Sequence[np.ndarray], state: AdamState, epoch: int = 0) -> tuple[FusionNetwork, AdamState]:
    params = net.parameters()
    if len(grads) != len(params) or any(np.shape(g) != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match the network")
    if not all(np.isfinite(g).all() for g in grads):
        raise TrainingError("non-finite gradient, aborting training")

    t = state.t + 1
    lr = state.learning_rate(epoch)
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    if not all(np.isfinite(p).all() for p in new_params):
        raise TrainingError("parameters diverged to non-finite values")
    return net.with_parameters(new_params), replace(state, m=tuple(new_m), v=tuple(new_v), t=t)


# ==============================
# Training
# ==============================

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    report: MetricsReport
    lr: float


@dataclass(frozen=True, eq=False)
class TrainingLog:
    epochs: tuple[EpochRecord, ...]
    best_epoch: int
    train_indices: np.ndarray
    val_indices: np.ndarray

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch]

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (r.epoch, r.loss, r.report.auc, r.report.f1, r.report.ece, r.report.overall, r.lr)
            for r in self.epochs
        ]
        return pd.DataFrame(rows, columns=list(LOG_COLUMNS))


def stratified_split(labels, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class shuffle; returns sorted (train, validation) indices."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"validation fraction must be within (0, 1), got {fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, _SPLIT_STREAM])
    train, val = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise TrainingError(f"degenerate split: class {cls} has {idx.size} sample(s), need at least 2")
        n_val = min(max(int(round(fraction * idx.size)), 1), idx.size - 1)
        perm = rng.permutation(idx)
        val.append(perm[:n_val])
        train.append(perm[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def train(
    panel: PredictionPanel,
    config: TrainConfig | None = None,
    split: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[FusionNetwork, TrainingLog]:
    config = config or TrainConfig()
    labels = panel.labels
    if np.unique(labels).size < 2:
        raise TrainingError("label fusion training needs both classes in the panel")
    if split is None:
        split = stratified_split(labels, config.validation_fraction, config.seed)
    train_idx, val_idx = (np.asarray(s, dtype=np.intp) for s in split)
    for name, idx in (("train", train_idx), ("validation", val_idx)):
        if np.unique(labels[idx]).size < 2:
            raise TrainingError(f"degenerate split: {name} partition misses a class")

    x = panel.matrix()
    x_train, y_train = x[train_idx], labels[train_idx].astype(np.float64)
    x_val, y_val = x[val_idx], labels[val_idx]

    net = init_network(panel.n_models, config, panel.model_names)
    state = AdamState.for_network(net, config)
    shuffle_rng = np.random.default_rng([config.seed, _SHUFFLE_STREAM])

    def checkpoint(epoch: int, lr: float) -> EpochRecord:
        loss = binary_cross_entropy(net, x_train, y_train)
        if not np.isfinite(loss):
            raise TrainingError(f"training loss is not finite at epoch {epoch}")
        report = evaluate_arrays(forward_batch(net, x_val), y_val, "label_fusion", config.n_bins, config.threshold)
        return EpochRecord(epoch, loss, report, lr)

    records = [checkpoint(0, state.learning_rate(0))]
    best_net, best_epoch = net, 0
    for epoch in range(1, config.epochs + 1):
        lr = state.learning_rate(epoch - 1)
        order = shuffle_rng.permutation(train_idx.size)
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grads = loss_and_gradient(net, x_train[batch], y_train[batch])
            net, state = adam_step(net, grads, state, epoch - 1)
        record = checkpoint(epoch, lr)
        records.append(record)
        logger.debug(f"epoch {epoch}: loss={record.loss:.6f} {record.report.summary()} lr={lr:.3e}")
        if record.report.overall > records[best_epoch].report.overall:
            best_net, best_epoch = net, epoch

    logger.info(f"Label fusion: best epoch {best_epoch}, validation S={records[best_epoch].report.overall:.4f}")
    return best_net, TrainingLog(tuple(records), best_epoch, train_idx, val_idx)


# ==============================
# Serialization
# ==============================

def network_to_dict(net: FusionNetwork) -> dict:
    return {
        "layer_dims": net.layer_dims,
        "model_names": list(net.model_names),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "config": net.config.model_dump() if net.config else None,
    }


def network_from_dict(data: dict) -> FusionNetwork:
    try:
        net = FusionNetwork(
            tuple(np.array(w, dtype=np.float64) for w in data["weights"]),
            tuple(np.array(b, dtype=np.float64) for b in data["biases"]),
            tuple(data.get("model_names") or ()),
            TrainConfig.model_validate(data["config"]) if data.get("config") else None,
        )
    except KeyError as exc:
        raise ValueError(f"network file is missing {exc.args[0]!r}") from None
    if data.get("layer_dims") and list(data["layer_dims"]) != net.layer_dims:
        raise ValueError(f"layer_dims {data['layer_dims']} disagree with the weight shapes {net.layer_dims}")
    return net


def save_network(net: FusionNetwork, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(network_to_dict(net), indent=1) + "\n", encoding="utf-8")
    return path


def load_network(path: str | Path) -> FusionNetwork:
    return network_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_training_log(log: TrainingLog, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    log.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path
