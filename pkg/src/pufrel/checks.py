"""Independent cross-checks wiring the analytic and sampled routes together.

Three suites, each comparing two implementations that share no code
path: closed-form reliability against Monte Carlo relative frequency,
backpropagated gradients against central finite differences, and the
Adam loop against the known minimizer of a quadratic. They back the
``oracle-check`` CLI subcommand and the numerical test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    AdamState,
    HeadSpec,
    NetworkSpec,
    adam_step,
    backward,
    flatten_params,
    init_params,
    loss_and_grads,
    unflatten_params,
)
from .puf import (
    PufModel,
    analytic_reliability,
    noise_channel_count,
    responses_from_noise,
    sample_arbiter,
    sample_xor,
)

GRADIENT_TRIALS = 100
GRADIENT_TOLERANCE = 1e-4
RELIABILITY_SIGMA_BAND = 4.0
ADAM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one suite: pass flag plus the worst observed figure."""

    name: str
    passed: bool
    worst: float
    detail: str


def _mc_reliability(
    model: PufModel, challenge: np.ndarray, repeats: int, rng: np.random.Generator
) -> float:
    z = rng.standard_normal((repeats, noise_channel_count(model)))
    bits = responses_from_noise(model, challenge, z)
    return abs(2.0 * float(np.mean(bits)) - 1.0)


def run_reliability_check(
    seed: int = 0,
    challenges: int = 100,
    repeats: int = 100_000,
    sigma_band: float = RELIABILITY_SIGMA_BAND,
) -> CheckReport:
    """Analytic reliability vs Monte Carlo on fresh Arbiter and XOR PUFs.

    The estimator |2f - 1| of |2p - 1| has standard error at most
    2*sqrt(p(1-p)/repeats); each challenge must land within sigma_band
    standard errors. Only model kinds with a closed form are checked.
    """
    rng = np.random.default_rng(seed)
    models: list[PufModel] = [
        sample_arbiter(64, 0.05, rng),
        sample_xor(64, 4, 0.1, rng),
    ]
    worst = 0.0
    checked = 0
    for model in models:
        for _ in range(challenges // len(models)):
            challenge = rng.integers(0, 2, size=64, dtype=np.uint8)
            exact = analytic_reliability(model, challenge)
            estimate = _mc_reliability(model, challenge, repeats, rng)
            p = (1.0 + exact) / 2.0
            se = 2.0 * np.sqrt(max(p * (1.0 - p), 1.0 / repeats) / repeats)
            pull = float(abs(estimate - exact) / se)
            worst = max(worst, pull)
            checked += 1
    passed = bool(worst <= sigma_band)
    return CheckReport(
        name="reliability",
        passed=passed,
        worst=worst,
        detail=f"{checked} challenges, worst pull {worst:.2f} of {sigma_band} allowed",
    )


def _random_small_spec(rng: np.random.Generator) -> NetworkSpec:
    input_dim = int(rng.integers(2, 7))
    shared = tuple(int(rng.integers(2, 7)) for _ in range(int(rng.integers(1, 3))))
    heads = []
    if rng.random() < 0.8:
        heads.append(
            HeadSpec(
                name="response",
                task_layers=tuple(
                    int(rng.integers(2, 6)) for _ in range(int(rng.integers(0, 3)))
                ),
                output_dim=1,
                output_kind="binary",
                loss_weight=float(rng.uniform(0.5, 2.0)),
            )
        )
    if not heads or rng.random() < 0.8:
        heads.append(
            HeadSpec(
                name="reliability",
                task_layers=tuple(
                    int(rng.integers(2, 6)) for _ in range(int(rng.integers(0, 3)))
                ),
                output_dim=int(rng.integers(2, 8)),
                output_kind="distribution",
                loss_weight=float(rng.uniform(0.5, 2.0)),
            )
        )
    activation = "relu" if rng.random() < 0.5 else "tanh"
    return NetworkSpec(
        input_dim=input_dim,
        shared_layers=shared,
        heads=tuple(heads),
        activation=activation,
    )


def _random_targets(
    spec: NetworkSpec, batch: int, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    targets = {}
    for head in spec.heads:
        if head.output_kind == "binary":
            targets[head.name] = rng.integers(0, 2, size=batch).astype(np.float64)
        else:
            raw = rng.random((batch, head.output_dim))
            targets[head.name] = raw / raw.sum(axis=1, keepdims=True)
    return targets


def _relu_kink_distance(
    spec: NetworkSpec, params, x: np.ndarray
) -> float:
    # distance of the closest hidden pre-activation to the relu kink;
    # finite differences are only trustworthy away from it
    pre = x
    closest = np.inf
    idx = 0
    for _ in spec.shared_layers:
        w, b = params[idx]
        z = pre @ w + b
        closest = min(closest, float(np.min(np.abs(z))))
        pre = np.maximum(z, 0.0) if spec.activation == "relu" else np.tanh(z)
        idx += 1
    trunk = pre
    for head in spec.heads:
        pre = trunk
        for _ in head.task_layers:
            w, b = params[idx]
            z = pre @ w + b
            closest = min(closest, float(np.min(np.abs(z))))
            pre = np.maximum(z, 0.0) if spec.activation == "relu" else np.tanh(z)
            idx += 1
        idx += 1
    return closest


def run_gradient_check(
    seed: int = 0,
    trials: int = GRADIENT_TRIALS,
    epsilon: float = 1e-5,
    tolerance: float = GRADIENT_TOLERANCE,
) -> CheckReport:
    """Backprop gradients vs central finite differences on random nets.

    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    For rectifier networks, draws whose pre-activations sit within 1e-3
    of the kink are resampled so the two-sided difference stays on one
    linear piece.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < trials:
        spec = _random_small_spec(rng)
        params = init_params(spec, rng)
        batch = int(rng.integers(1, 5))
        x = rng.standard_normal((batch, spec.input_dim))
        if spec.activation == "relu" and _relu_kink_distance(spec, params, x) < 1e-3:
            continue
        targets = _random_targets(spec, batch, rng)
        grads = backward(spec, params, x, targets)
        flat_params = flatten_params(params)
        flat_grads = flatten_params(grads)
        numeric = np.empty_like(flat_params)
        for j in range(flat_params.size):
            bumped = flat_params.copy()
            bumped[j] += epsilon
            up = loss_and_grads(spec, unflatten_params(spec, bumped), x, targets)[0]
            bumped[j] -= 2 * epsilon
            down = loss_and_grads(spec, unflatten_params(spec, bumped), x, targets)[0]
            numeric[j] = (up - down) / (2 * epsilon)
        denom = np.maximum(np.maximum(np.abs(flat_grads), np.abs(numeric)), 1e-8)
        rel = float(np.max(np.abs(flat_grads - numeric) / denom))
        worst = max(worst, rel)
        done += 1
    passed = worst <= tolerance
    return CheckReport(
        name="gradient",
        passed=passed,
        worst=worst,
        detail=f"{done} networks, worst relative error {worst:.3e} of {tolerance:.0e} allowed",
    )


def run_adam_check(
    target: float = 3.0,
    curvature: float = 2.0,
    steps: int = 500,
    learning_rate: float = 0.05,
    tolerance: float = ADAM_TOLERANCE,
) -> CheckReport:
    """Adam on f(w) = curvature/2 * (w - target)^2 must land on target."""
    params = [[np.zeros((1, 1)), np.zeros(1)]]
    state = AdamState.zeros_like(params)
    w = 0.0
    for _ in range(steps):
        grad = curvature * (w - target)
        grads = [[np.array([[grad]]), np.zeros(1)]]
        adam_step(params, grads, state, learning_rate)
        w = float(params[0][0][0, 0])
    err = abs(w - target)
    return CheckReport(
        name="adam",
        passed=err <= tolerance,
        worst=err,
        detail=f"final |w - minimizer| = {err:.2e} of {tolerance:.0e} allowed after {steps} steps",
    )


def run_all_checks(seed: int = 0) -> list[CheckReport]:
    return [
        run_reliability_check(seed=seed),
        run_gradient_check(seed=seed),
        run_adam_check(),
    ]
