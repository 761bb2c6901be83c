"""Modeling attacks: architectures per mode, targets, training protocol.

Every mode shares one trunk of (64, 128, 128) shared layers over the
parity feature vector of the challenge. Modes differ in their heads:

* msa:      one distribution head over 2(m+1) feature-crossed classes,
            label = response * (m+1) + ones;
* mlmsa:    binary response head plus a one-hot (m+1) reliability head,
            no task layers on either;
* alsca:    the mlmsa heads behind (64, 64) task layers each;
* ldhf:     the alsca topology with a (k+1)-dim reliability head trained
            against the soft LDHF event-frequency vector;
* response: the binary response head alone.

Records are split 90/10 into train/test; a validation slice is carved
from the training part for early stopping. The response target of a
record is its first stored repeat, and test accuracy is agreement of the
response head (or the decoded crossed head) with that bit. An attack is
a success when test accuracy exceeds 0.85.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .crp import Dataset
from .nn import (
    HeadSpec,
    NetworkSpec,
    Parameters,
    TrainConfig,
    TrainOutcome,
    evaluate_loss,
    forward,
    train_loop,
)
from .puf import transform_challenges
from .reliability import LdhfParams, dataset_representations

SUCCESS_THRESHOLD = 0.85
SHARED_LAYERS = (64, 128, 128)
TASK_LAYERS = (64, 64)

MODES = ("msa", "mlmsa", "alsca", "ldhf", "response")

HEAD_RESPONSE = "response"
HEAD_RELIABILITY = "reliability"
HEAD_CROSSED = "crossed"


def build_architecture(
    mode: str,
    input_dim: int,
    m: int,
    k: int | None = None,
    activation: str = "relu",
) -> NetworkSpec:
    """Network topology for an attack mode and repeat count."""
    mode = mode.lower()
    if mode not in MODES:
        raise ValueError(f"unknown attack mode {mode!r}")
    if mode == "msa":
        heads = (HeadSpec(HEAD_CROSSED, (), 2 * (m + 1), "distribution", 1.0),)
    elif mode == "response":
        heads = (HeadSpec(HEAD_RESPONSE, (), 1, "binary", 1.0),)
    else:
        task = () if mode == "mlmsa" else TASK_LAYERS
        if mode == "ldhf":
            if k is None:
                raise ValueError("ldhf mode requires k")
            reliability_dim = k + 1
        else:
            reliability_dim = m + 1
        heads = (
            HeadSpec(HEAD_RESPONSE, task, 1, "binary", 1.0),
            HeadSpec(HEAD_RELIABILITY, task, reliability_dim, "distribution", 1.8),
        )
    return NetworkSpec(
        input_dim=input_dim,
        shared_layers=SHARED_LAYERS,
        heads=heads,
        activation=activation,
    )


def attack_features(dataset: Dataset, raw_challenges: bool = False) -> np.ndarray:
    """Input matrix: parity features by default, raw challenge bits on request."""
    if raw_challenges:
        return dataset.challenges.astype(np.float64)
    return transform_challenges(dataset.challenges)


def attack_targets(
    dataset: Dataset, mode: str, k: int | None = None
) -> dict[str, np.ndarray]:
    """Per-head target arrays for every record of a dataset."""
    mode = mode.lower()
    if mode not in MODES:
        raise ValueError(f"unknown attack mode {mode!r}")
    m = dataset.m_repeats
    response = dataset.responses[:, 0].astype(np.float64)
    if mode == "response":
        return {HEAD_RESPONSE: response}
    ones = dataset.ones_counts()
    if mode == "msa":
        labels = response.astype(np.int64) * (m + 1) + ones
        out = np.zeros((len(dataset), 2 * (m + 1)))
        out[np.arange(len(dataset)), labels] = 1.0
        return {HEAD_CROSSED: out}
    if mode == "ldhf":
        if k is None:
            raise ValueError("ldhf mode requires k")
        LdhfParams(m=m, k=k)
        reliability = dataset_representations(dataset, "ldhf", k)
    else:
        reliability = np.zeros((len(dataset), m + 1))
        reliability[np.arange(len(dataset)), ones] = 1.0
    return {HEAD_RESPONSE: response, HEAD_RELIABILITY: reliability}


def predicted_responses(
    spec: NetworkSpec, outputs: dict[str, np.ndarray]
) -> np.ndarray:
    """Response bits from head outputs; crossed heads decode by argmax block."""
    by_name = {head.name: head for head in spec.heads}
    if HEAD_RESPONSE in by_name:
        return (outputs[HEAD_RESPONSE][:, 0] > 0.5).astype(np.uint8)
    if HEAD_CROSSED in by_name:
        classes = outputs[HEAD_CROSSED].shape[1]
        return (np.argmax(outputs[HEAD_CROSSED], axis=1) >= classes // 2).astype(
            np.uint8
        )
    raise ValueError("spec has neither a response nor a crossed head")


def evaluate(
    params: Parameters,
    spec: NetworkSpec,
    x: np.ndarray,
    targets: dict[str, np.ndarray],
    true_bits: np.ndarray,
) -> tuple[float, dict[str, float]]:
    """Response accuracy plus per-head mean cross-entropy on a test set."""
    if x.shape[0] == 0:
        raise ValueError("test set must be non-empty")
    outputs = forward(spec, params, x)
    accuracy = float((predicted_responses(spec, outputs) == true_bits).mean())
    _, per_head = evaluate_loss(spec, params, x, targets)
    return accuracy, per_head


@dataclass
class AttackResult:
    """Outcome of one attack run on one dataset."""

    test_accuracy: float
    success: bool
    epochs_run: int
    history: dict[str, list[float]] = field(default_factory=dict)
    wall_seconds: float = 0.0
    timed_out: bool = False
    test_metrics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.success != (self.test_accuracy > SUCCESS_THRESHOLD):
            raise ValueError("success flag must equal accuracy > threshold")


def split_indices(
    n: int, validation_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffled 90/10 train/test split, validation carved from the train end."""
    order = rng.permutation(n)
    n_test = n // 10
    n_train_pool = n - n_test
    n_val = max(1, int(round(n_train_pool * validation_fraction)))
    if n_test < 1 or n_train_pool - n_val < 1:
        raise ValueError(f"dataset of {n} records is too small to split")
    test = order[n_train_pool:]
    val = order[n_train_pool - n_val : n_train_pool]
    train = order[: n_train_pool - n_val]
    return train, val, test


def train(
    dataset: Dataset,
    mode: str,
    config: TrainConfig,
    k: int | None = None,
    raw_challenges: bool = False,
    spec: NetworkSpec | None = None,
    activation: str = "relu",
) -> tuple[NetworkSpec, Parameters, AttackResult]:
    """Run one full attack: split, fit with early stopping, evaluate.

    Deterministic given config.seed; the generator is consumed in a
    fixed order (split permutation, weight init, epoch shuffles).
    """
    started = time.monotonic()
    x = attack_features(dataset, raw_challenges)
    targets = attack_targets(dataset, mode, k)
    if spec is None:
        spec = build_architecture(mode, x.shape[1], dataset.m_repeats, k, activation)
    rng = np.random.default_rng(config.seed)
    train_ix, val_ix, test_ix = split_indices(
        len(dataset), config.validation_fraction, rng
    )
    outcome: TrainOutcome = train_loop(
        spec,
        x[train_ix],
        {name: t[train_ix] for name, t in targets.items()},
        x[val_ix],
        {name: t[val_ix] for name, t in targets.items()},
        config,
        rng,
    )
    true_bits = dataset.responses[test_ix, 0]
    accuracy, metrics = evaluate(
        outcome.params,
        spec,
        x[test_ix],
        {name: t[test_ix] for name, t in targets.items()},
        true_bits,
    )
    result = AttackResult(
        test_accuracy=accuracy,
        success=accuracy > SUCCESS_THRESHOLD,
        epochs_run=outcome.epochs_run,
        history=outcome.history,
        wall_seconds=time.monotonic() - started,
        timed_out=outcome.timed_out,
        test_metrics=metrics,
    )
    return spec, outcome.params, result


def write_training_log(path, result: AttackResult) -> None:
    """One CSV row per epoch: losses per head, validation, elapsed seconds."""
    history = result.history
    heads = [
        name
        for name in history
        if name not in ("total", "validation", "seconds")
    ]
    with open(path, "w", encoding="ascii", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["epoch"]
            + [f"train_loss_{name}" for name in heads]
            + ["train_loss_total", "validation_loss", "seconds"]
        )
        for epoch in range(result.epochs_run):
            writer.writerow(
                [epoch + 1]
                + [f"{history[name][epoch]:.10g}" for name in heads]
                + [
                    f"{history['total'][epoch]:.10g}",
                    f"{history['validation'][epoch]:.10g}",
                    f"{history['seconds'][epoch]:.3f}",
                ]
            )
