"""Multi-head dense network with shared trunk, trained by Adam.

Implemented directly on numpy: a stack of shared fully connected layers
feeds per-head stacks of task layers, each ending in an output layer.
Binary heads apply the logistic function and use cross-entropy against
bit targets; distribution heads apply softmax and use cross-entropy
against (possibly soft) probability-vector targets. The total training
loss is the loss-weighted sum of the head losses.

Losses and gradients are computed from logits (log-sum-exp and softplus
forms), so training never evaluates log(0); the probability-level
:func:`forward`/:func:`loss` pair exists for inspection and testing.
"""

from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1

DEFAULT_VALIDATION_FRACTION = 0.01
HOLDOUT_VALIDATION_FRACTION = 0.20


class NumericsError(ArithmeticError):
    """A non-finite value appeared where the math promises finite ones."""


@dataclass(frozen=True)
class HeadSpec:
    """One output head: optional task layers, then an output layer."""

    name: str
    task_layers: tuple[int, ...]
    output_dim: int
    output_kind: str
    loss_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "task_layers", tuple(self.task_layers))
        if self.output_kind not in ("binary", "distribution"):
            raise ValueError(f"unknown output kind {self.output_kind!r}")
        if self.output_dim < 1 or any(w < 1 for w in self.task_layers):
            raise ValueError("layer widths and output_dim must be >= 1")
        if self.loss_weight <= 0:
            raise ValueError("loss_weight must be positive")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: shared trunk widths plus one or more heads."""

    input_dim: int
    shared_layers: tuple[int, ...]
    heads: tuple[HeadSpec, ...]
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "shared_layers", tuple(self.shared_layers))
        object.__setattr__(self, "heads", tuple(self.heads))
        if self.input_dim < 1 or any(w < 1 for w in self.shared_layers):
            raise ValueError("input_dim and layer widths must be >= 1")
        if not self.heads:
            raise ValueError("at least one head is required")
        names = [h.name for h in self.heads]
        if len(set(names)) != len(names):
            raise ValueError("head names must be unique")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) pairs in canonical order: trunk, then heads."""
        shapes = []
        width = self.input_dim
        for out in self.shared_layers:
            shapes.append((width, out))
            width = out
        junction = width
        for head in self.heads:
            width = junction
            for out in head.task_layers:
                shapes.append((width, out))
                width = out
            shapes.append((width, head.output_dim))
        return shapes

    def head_slices(self) -> dict[str, slice]:
        """Index ranges of each head's layers within the canonical order."""
        start = len(self.shared_layers)
        out = {}
        for head in self.heads:
            stop = start + len(head.task_layers) + 1
            out[head.name] = slice(start, stop)
            start = stop
        return out


Parameters = list  # list of [W, b] pairs in canonical layer order


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> Parameters:
    """Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases."""
    params = []
    for fan_in, fan_out in spec.layer_shapes():
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(
            [rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)]
        )
    return params


def copy_params(params: Parameters) -> Parameters:
    return [[w.copy(), b.copy()] for w, b in params]


def flatten_params(params: Parameters) -> np.ndarray:
    return np.concatenate([a.ravel() for w, b in params for a in (w, b)])


def unflatten_params(spec: NetworkSpec, vector: np.ndarray) -> Parameters:
    params = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes():
        w = vector[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = vector[offset : offset + fan_out]
        offset += fan_out
        params.append([w.copy(), b.copy()])
    if offset != vector.size:
        raise ValueError("parameter vector length does not match this architecture")
    return params


def _act(spec: NetworkSpec, pre: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        return np.maximum(pre, 0.0)
    return np.tanh(pre)


def _act_grad(spec: NetworkSpec, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        return (pre > 0.0).astype(np.float64)
    return 1.0 - post * post


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(z))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _forward_full(spec: NetworkSpec, params: Parameters, x: np.ndarray):
    """Logits per head plus the caches backward needs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"input must have shape (batch, {spec.input_dim})")
    shared_pre, shared_post = [], []
    h = x
    for w, b in params[: len(spec.shared_layers)]:
        pre = h @ w + b
        h = _act(spec, pre)
        shared_pre.append(pre)
        shared_post.append(h)
    slices = spec.head_slices()
    logits, head_pre, head_post = {}, {}, {}
    for head in spec.heads:
        layers = params[slices[head.name]]
        t = h
        pres, posts = [], []
        for w, b in layers[:-1]:
            pre = t @ w + b
            t = _act(spec, pre)
            pres.append(pre)
            posts.append(t)
        w, b = layers[-1]
        logits[head.name] = t @ w + b
        head_pre[head.name] = pres
        head_post[head.name] = posts
    cache = (x, shared_pre, shared_post, head_pre, head_post)
    return logits, cache


def forward(spec: NetworkSpec, params: Parameters, x: np.ndarray) -> dict[str, np.ndarray]:
    """Per-head output activations: logistic for binary, softmax otherwise."""
    logits, _ = _forward_full(spec, params, x)
    out = {}
    for head in spec.heads:
        z = logits[head.name]
        out[head.name] = _sigmoid(z) if head.output_kind == "binary" else _softmax(z)
    return out


def _check_targets(head: HeadSpec, target: np.ndarray, batch: int) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if head.output_kind == "binary":
        if target.ndim == 1:
            target = target[:, None]
        if target.shape != (batch, head.output_dim):
            raise ValueError(f"target shape mismatch for head {head.name!r}")
        if not np.isin(target, (0.0, 1.0)).all():
            raise ValueError(f"binary targets for head {head.name!r} must be bits")
        return target
    if target.shape != (batch, head.output_dim):
        raise ValueError(f"target shape mismatch for head {head.name!r}")
    if (target < 0).any() or np.abs(target.sum(axis=1) - 1.0).max() > 1e-6:
        raise ValueError(
            f"distribution targets for head {head.name!r} must be probability vectors"
        )
    return target


def loss(
    outputs: dict[str, np.ndarray],
    targets: dict[str, np.ndarray],
    spec: NetworkSpec,
) -> tuple[float, dict[str, float]]:
    """Total weighted cross-entropy and the per-head terms.

    Operates on the probability-level outputs of :func:`forward`;
    probabilities are floored at a tiny constant only to keep the log
    finite for hard-saturated inputs.
    """
    per_head = {}
    total = 0.0
    for head in spec.heads:
        q = np.asarray(outputs[head.name], dtype=np.float64)
        t = _check_targets(head, targets[head.name], q.shape[0])
        tiny = np.finfo(np.float64).tiny
        if head.output_kind == "binary":
            value = -(
                t * np.log(np.maximum(q, tiny))
                + (1.0 - t) * np.log(np.maximum(1.0 - q, tiny))
            ).sum(axis=1)
        else:
            value = -(t * np.log(np.maximum(q, tiny))).sum(axis=1)
        head_loss = float(value.mean())
        if not np.isfinite(head_loss):
            raise NumericsError(f"non-finite loss on head {head.name!r}")
        per_head[head.name] = head_loss
        total += head.loss_weight * head_loss
    return total, per_head


def loss_and_grads(
    spec: NetworkSpec,
    params: Parameters,
    x: np.ndarray,
    targets: dict[str, np.ndarray],
) -> tuple[float, dict[str, float], Parameters]:
    """Fused stable loss and analytic gradients for one batch."""
    logits, cache = _forward_full(spec, params, x)
    x, shared_pre, shared_post, head_pre, head_post = cache
    batch = x.shape[0]
    slices = spec.head_slices()
    grads = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params]
    n_shared = len(spec.shared_layers)
    junction = shared_post[-1] if n_shared else x
    d_junction = np.zeros_like(junction)

    per_head = {}
    total = 0.0
    for head in spec.heads:
        z = logits[head.name]
        t = _check_targets(head, targets[head.name], batch)
        if head.output_kind == "binary":
            value = (_softplus(z) - t * z).sum(axis=1)
            dz = _sigmoid(z) - t
        else:
            log_q = _log_softmax(z)
            value = -(t * log_q).sum(axis=1)
            dz = np.exp(log_q) - t
        head_loss = float(value.mean())
        if not np.isfinite(head_loss):
            raise NumericsError(f"non-finite loss on head {head.name!r}")
        per_head[head.name] = head_loss
        total += head.loss_weight * head_loss

        dz = dz * (head.loss_weight / batch)
        layer_range = list(range(len(params))[slices[head.name]])
        posts = head_post[head.name]
        pres = head_pre[head.name]
        upstream = dz
        for local in range(len(layer_range) - 1, -1, -1):
            index = layer_range[local]
            w, _ = params[index]
            inputs = posts[local - 1] if local > 0 else junction
            grads[index][0] += inputs.T @ upstream
            grads[index][1] += upstream.sum(axis=0)
            upstream = upstream @ w.T
            if local > 0:
                upstream = upstream * _act_grad(spec, pres[local - 1], posts[local - 1])
        d_junction += upstream

    upstream = d_junction
    for index in range(n_shared - 1, -1, -1):
        upstream = upstream * _act_grad(spec, shared_pre[index], shared_post[index])
        w, _ = params[index]
        inputs = shared_post[index - 1] if index > 0 else x
        grads[index][0] += inputs.T @ upstream
        grads[index][1] += upstream.sum(axis=0)
        upstream = upstream @ w.T
    return total, per_head, grads


def backward(
    spec: NetworkSpec,
    params: Parameters,
    x: np.ndarray,
    targets: dict[str, np.ndarray],
) -> Parameters:
    """Analytic gradient of the total weighted loss for one batch."""
    return loss_and_grads(spec, params, x, targets)[2]


def evaluate_loss(
    spec: NetworkSpec,
    params: Parameters,
    x: np.ndarray,
    targets: dict[str, np.ndarray],
) -> tuple[float, dict[str, float]]:
    """Stable loss without gradient work; used for validation passes."""
    logits, _ = _forward_full(spec, params, x)
    per_head = {}
    total = 0.0
    for head in spec.heads:
        z = logits[head.name]
        t = _check_targets(head, targets[head.name], z.shape[0])
        if head.output_kind == "binary":
            value = (_softplus(z) - t * z).sum(axis=1)
        else:
            value = -(t * _log_softmax(z)).sum(axis=1)
        head_loss = float(value.mean())
        if not np.isfinite(head_loss):
            raise NumericsError(f"non-finite loss on head {head.name!r}")
        per_head[head.name] = head_loss
        total += head.loss_weight * head_loss
    return total, per_head


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: Parameters
    v: Parameters
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Parameters) -> "AdamState":
        return cls(
            m=[[np.zeros_like(w), np.zeros_like(b)] for w, b in params],
            v=[[np.zeros_like(w), np.zeros_like(b)] for w, b in params],
        )


def adam_step(
    params: Parameters,
    grads: Parameters,
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> None:
    """One in-place Adam update with bias correction."""
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for layer, grad_layer, m_layer, v_layer in zip(params, grads, state.m, state.v):
        for array, grad, m, v in zip(layer, grad_layer, m_layer, v_layer):
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            array -= learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + epsilon
            )


@dataclass(frozen=True)
class TrainConfig:
    """Optimization protocol shared by every attack mode."""

    learning_rate: float = 0.001
    batch_size: int = 1000
    max_epochs: int = 150
    patience: int = 10
    min_delta: float = 1e-4
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION
    seed: int = 0
    time_limit_s: float = 1800.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, batch_size and max_epochs must be positive")
        if self.patience < 1 or self.min_delta < 0:
            raise ValueError("patience must be >= 1 and min_delta >= 0")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.time_limit_s <= 0:
            raise ValueError("time_limit_s must be positive")


@dataclass
class TrainOutcome:
    """Raw epoch-loop result before attack-level evaluation."""

    params: Parameters
    epochs_run: int
    history: dict[str, list[float]] = field(default_factory=dict)
    timed_out: bool = False


def train_loop(
    spec: NetworkSpec,
    x_train: np.ndarray,
    targets_train: dict[str, np.ndarray],
    x_val: np.ndarray,
    targets_val: dict[str, np.ndarray],
    config: TrainConfig,
    rng: np.random.Generator,
    params: Parameters | None = None,
) -> TrainOutcome:
    """Mini-batch Adam with early stopping on the validation loss.

    Stops when the validation loss has not improved by at least
    min_delta for ``patience`` consecutive epochs, or at max_epochs, or
    at the wall-clock limit; the best-validation parameters are restored
    in every case. Deterministic given the generator state: one
    permutation per epoch, fixed batch slicing.
    """
    if params is None:
        params = init_params(spec, rng)
    if x_train.shape[0] < 1 or x_val.shape[0] < 1:
        raise ValueError("training and validation sets must be non-empty")
    state = AdamState.zeros_like(params)
    history: dict[str, list[float]] = {
        "total": [],
        "validation": [],
        "seconds": [],
        **{head.name: [] for head in spec.heads},
    }
    best_loss = np.inf
    best_params = copy_params(params)
    stall = 0
    timed_out = False
    n = x_train.shape[0]
    started = time.monotonic()
    epochs_run = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        sums = {head.name: 0.0 for head in spec.heads}
        total_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            total, per_head, grads = loss_and_grads(
                spec,
                params,
                x_train[batch],
                {name: t[batch] for name, t in targets_train.items()},
            )
            adam_step(params, grads, state, config.learning_rate)
            weight = batch.shape[0] / n
            total_sum += total * weight
            for name, value in per_head.items():
                sums[name] += value * weight
        val_total, _ = evaluate_loss(spec, params, x_val, targets_val)
        epochs_run = epoch + 1
        history["total"].append(total_sum)
        history["validation"].append(val_total)
        history["seconds"].append(time.monotonic() - started)
        for name, value in sums.items():
            history[name].append(value)
        if val_total < best_loss - config.min_delta:
            best_loss = val_total
            best_params = copy_params(params)
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break
        if time.monotonic() - started > config.time_limit_s:
            timed_out = True
            break
    return TrainOutcome(
        params=best_params,
        epochs_run=epochs_run,
        history=history,
        timed_out=timed_out,
    )


def _spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "input_dim": spec.input_dim,
        "shared_layers": list(spec.shared_layers),
        "activation": spec.activation,
        "heads": [
            {
                "name": h.name,
                "task_layers": list(h.task_layers),
                "output_dim": h.output_dim,
                "output_kind": h.output_kind,
                "loss_weight": h.loss_weight,
            }
            for h in spec.heads
        ],
    }


def _spec_from_dict(data: dict) -> NetworkSpec:
    return NetworkSpec(
        input_dim=int(data["input_dim"]),
        shared_layers=tuple(data["shared_layers"]),
        heads=tuple(
            HeadSpec(
                name=h["name"],
                task_layers=tuple(h["task_layers"]),
                output_dim=int(h["output_dim"]),
                output_kind=h["output_kind"],
                loss_weight=float(h["loss_weight"]),
            )
            for h in data["heads"]
        ),
        activation=data.get("activation", "relu"),
    )


def save_checkpoint(
    path,
    spec: NetworkSpec,
    params: Parameters,
    config: TrainConfig,
    dataset_fingerprint: str,
) -> None:
    """Versioned JSON container; parameters as little-endian float64."""
    vector = flatten_params(params).astype("<f8")
    document = {
        "version": CHECKPOINT_FORMAT_VERSION,
        "spec": _spec_to_dict(spec),
        "train_config": {
            "learning_rate": config.learning_rate,
            "batch_size": config.batch_size,
            "max_epochs": config.max_epochs,
            "patience": config.patience,
            "min_delta": config.min_delta,
            "validation_fraction": config.validation_fraction,
            "seed": config.seed,
            "time_limit_s": config.time_limit_s,
        },
        "dataset_fingerprint": dataset_fingerprint,
        "params": base64.b64encode(vector.tobytes()).decode("ascii"),
    }
    with open(path, "w", encoding="ascii") as handle:
        json.dump(document, handle)
        handle.write("\n")


def load_checkpoint(path) -> tuple[NetworkSpec, Parameters, TrainConfig, str]:
    with open(path, "r", encoding="ascii") as handle:
        document = json.load(handle)
    if document.get("version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {document.get('version')!r}")
    spec = _spec_from_dict(document["spec"])
    vector = np.frombuffer(
        base64.b64decode(document["params"]), dtype="<f8"
    ).astype(np.float64)
    params = unflatten_params(spec, vector)
    config = TrainConfig(**document["train_config"])
    return spec, params, config, document["dataset_fingerprint"]
