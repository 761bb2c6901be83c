"""Additive delay models of arbiter-style PUFs.

All models share one evaluation contract: a challenge is a vector of n
bits in {0, 1}, the response is a single bit in {0, 1}, and measurement
noise is a fresh Gaussian disturbance added to every delay comparison.
An arbiter chain with stage weights w evaluates the delay difference

    delta(c) = w . phi(c),    phi_i(c) = prod_{j=i..n-1} (1 - 2 c_j),

with phi_n = 1, and returns 1 iff delta + eps > 0 where
eps ~ N(0, sigma_n^2) and sigma_n = noise_level * sqrt(n + 1). With
standard-normal weights the delay difference itself has variance n + 1
over random challenges, so noise_level is the ratio of the noise
standard deviation to the delay-difference standard deviation. An exact
tie (delta + eps == 0) resolves to 0.

XOR, interpose and feed-forward compositions are built from the same
comparison primitive; every comparison inside a composite model receives
independent noise of the same sigma_n for its chain length.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import sqrt
from typing import Union

import numpy as np
from scipy.special import ndtr

MODEL_FORMAT_VERSION = 1


def transform_challenge(bits: np.ndarray) -> np.ndarray:
    """Map one challenge in {0,1}^n to its parity feature vector.

    Returns a float vector of length n + 1 with entries in {-1, +1}:
    phi_i = prod_{j=i..n-1} (1 - 2 bits_j) and phi_n = 1. The feature
    vector makes the arbiter delay difference linear, delta = w . phi.
    """
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError("challenge must be one-dimensional")
    return transform_challenges(bits[None, :])[0]


def transform_challenges(batch: np.ndarray) -> np.ndarray:
    """Vectorized :func:`transform_challenge` for a (N, n) batch of bits."""
    batch = np.asarray(batch)
    if batch.ndim != 2:
        raise ValueError("challenge batch must be two-dimensional")
    if batch.size and not np.isin(batch, (0, 1)).all():
        raise ValueError("challenge bits must be 0 or 1")
    signs = (1 - 2 * batch.astype(np.int64)).astype(np.float64)
    n_rows = batch.shape[0]
    suffix = np.cumprod(signs[:, ::-1], axis=1)[:, ::-1]
    return np.concatenate([suffix, np.ones((n_rows, 1))], axis=1)


@dataclass(frozen=True, eq=False)
class ArbiterModel:
    """Linear arbiter chain: n + 1 stage weights plus a noise level.

    :param weights: delay-difference weights, shape (n + 1,).
    :param noise_level: noise std relative to the delay-difference std.
    """

    weights: np.ndarray
    noise_level: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] < 2:
            raise ValueError("weights must be one-dimensional with length n + 1 >= 2")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0] - 1

    @property
    def sigma(self) -> float:
        """Noise standard deviation sigma_n = noise_level * sqrt(n + 1)."""
        return self.noise_level * sqrt(self.n + 1)


@dataclass(frozen=True, eq=False)
class XorModel:
    """XOR composition of arbiter chains over one shared challenge."""

    components: tuple[ArbiterModel, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("XOR model needs at least one component")
        if len({c.n for c in comps}) != 1:
            raise ValueError("all XOR components must have the same stage count")
        if len({c.noise_level for c in comps}) != 1:
            raise ValueError("all XOR components must share one noise level")
        object.__setattr__(self, "components", comps)

    @property
    def n(self) -> int:
        return self.components[0].n

    @property
    def noise_level(self) -> float:
        return self.components[0].noise_level

    @property
    def k(self) -> int:
        return len(self.components)


@dataclass(frozen=True, eq=False)
class InterposeModel:
    """Interpose composition: the upper XOR's bit is inserted into the
    challenge at ``interpose_pos`` before the lower XOR (n + 1 stages)
    evaluates it."""

    upper: XorModel
    lower: XorModel
    interpose_pos: int

    def __post_init__(self):
        if self.lower.n != self.upper.n + 1:
            raise ValueError("lower XOR must have exactly one more stage than upper")
        if not 0 <= self.interpose_pos <= self.upper.n:
            raise ValueError("interpose_pos must lie in [0, n]")
        if self.upper.noise_level != self.lower.noise_level:
            raise ValueError("upper and lower noise levels must match")

    @property
    def n(self) -> int:
        return self.upper.n

    @property
    def noise_level(self) -> float:
        return self.upper.noise_level


@dataclass(frozen=True, eq=False)
class FeedForwardModel:
    """Arbiter chain with feed-forward loops on explicit stage delays.

    :param stage_delays: shape (n, 4); per stage the delays added to the
        (top, bottom) output lines for the straight and crossed MUX
        settings, ordered (top_straight, bottom_straight, top_crossed,
        bottom_crossed).
    :param loops: (arbiter_stage, target_stage) pairs. An intermediate
        arbiter taps the accumulated delay difference right after
        ``arbiter_stage`` and its bit replaces the challenge bit at
        ``target_stage``. The tapped comparison receives independent
        noise of the same magnitude as the final one.
    """

    stage_delays: np.ndarray
    loops: tuple[tuple[int, int], ...]
    noise_level: float

    def __post_init__(self):
        d = np.asarray(self.stage_delays, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 4 or d.shape[0] < 1:
            raise ValueError("stage_delays must have shape (n, 4) with n >= 1")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        loops = tuple((int(a), int(t)) for a, t in self.loops)
        n = d.shape[0]
        targets = [t for _, t in loops]
        if len(set(targets)) != len(targets):
            raise ValueError("loop target stages must be pairwise distinct")
        for a, t in loops:
            if not 0 <= a < t < n:
                raise ValueError("loops require 0 <= arbiter_stage < target_stage < n")
        object.__setattr__(self, "stage_delays", d)
        object.__setattr__(self, "loops", loops)

    @property
    def n(self) -> int:
        return self.stage_delays.shape[0]

    @property
    def sigma(self) -> float:
        return self.noise_level * sqrt(self.n + 1)


PufModel = Union[ArbiterModel, XorModel, InterposeModel, FeedForwardModel]


def sample_arbiter(n: int, noise_level: float, rng: np.random.Generator) -> ArbiterModel:
    """Draw an arbiter chain with n + 1 standard-normal weights."""
    if n < 1:
        raise ValueError("stage count n must be >= 1")
    return ArbiterModel(weights=rng.standard_normal(n + 1), noise_level=noise_level)


def sample_xor(n: int, k: int, noise_level: float, rng: np.random.Generator) -> XorModel:
    """Draw k independent arbiter chains combined by XOR."""
    if k < 1:
        raise ValueError("component count k must be >= 1")
    return XorModel(tuple(sample_arbiter(n, noise_level, rng) for _ in range(k)))


def sample_interpose(
    n: int,
    x: int,
    y: int,
    noise_level: float,
    rng: np.random.Generator,
    interpose_pos: int | None = None,
) -> InterposeModel:
    """Draw an (x, y)-interpose model; insertion defaults to the midpoint."""
    upper = sample_xor(n, x, noise_level, rng)
    lower = sample_xor(n + 1, y, noise_level, rng)
    pos = n // 2 if interpose_pos is None else interpose_pos
    return InterposeModel(upper=upper, lower=lower, interpose_pos=pos)


def sample_feedforward(
    n: int,
    noise_level: float,
    rng: np.random.Generator,
    loops: tuple[tuple[int, int], ...] | None = None,
) -> FeedForwardModel:
    """Draw a feed-forward chain with standard-normal stage delays.

    Without an explicit loop list a single loop from stage floor(n/3) to
    stage floor(2n/3) is used.
    """
    if n < 2:
        raise ValueError("feed-forward models need n >= 2")
    if loops is None:
        loops = ((n // 3, (2 * n) // 3),)
    return FeedForwardModel(
        stage_delays=rng.standard_normal((n, 4)), loops=loops, noise_level=noise_level
    )


def delta(model: ArbiterModel, phi: np.ndarray) -> float:
    """Noise-free delay difference: inner product of the weights and ``phi``.

    ``phi`` is a parity feature vector of length n + 1, normally produced by
    :func:`transform_challenge`.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != model.weights.shape:
        raise ValueError(
            f"feature vector length {phi.shape[0]} does not match model n+1={model.n + 1}"
        )
    return float(model.weights @ phi)


def noise_channel_count(model: PufModel) -> int:
    """Number of independent noise draws one evaluation consumes."""
    if isinstance(model, ArbiterModel):
        return 1
    if isinstance(model, XorModel):
        return model.k
    if isinstance(model, InterposeModel):
        return len(model.upper.components) + len(model.lower.components)
    if isinstance(model, FeedForwardModel):
        return len(model.loops) + 1
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _xor_deltas(model: XorModel, challenge: np.ndarray) -> np.ndarray:
    phi = transform_challenge(challenge)
    if phi.shape[0] != model.n + 1:
        raise ValueError(
            f"challenge length {phi.shape[0] - 1} does not match model n={model.n}"
        )
    w = np.stack([c.weights for c in model.components])
    return w @ phi


def _parity(bits: np.ndarray) -> np.ndarray:
    return np.bitwise_xor.reduce(bits.astype(np.uint8), axis=-1)


def _interposed(challenge: np.ndarray, pos: int, bit: int) -> np.ndarray:
    return np.insert(np.asarray(challenge), pos, bit)


def _feedforward_bits(
    model: FeedForwardModel, challenge: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """Evaluate a feed-forward chain for a block of noise draws.

    z has shape (..., L + 1): one standard-normal per loop arbiter plus
    one for the final arbiter. Stages are processed in order; loop bits
    become available strictly before their target stage consumes them.
    """
    challenge = np.asarray(challenge)
    n = model.n
    if challenge.shape != (n,):
        raise ValueError(f"challenge length {challenge.shape} does not match n={n}")
    d = model.stage_delays
    gain_straight = d[:, 1] - d[:, 0]
    gain_crossed = d[:, 3] - d[:, 2]
    sigma = model.sigma

    taps: dict[int, list[int]] = {}
    for index, (a, _) in enumerate(model.loops):
        taps.setdefault(a, []).append(index)
    target_of = {t: index for index, (_, t) in enumerate(model.loops)}

    lead = z.shape[:-1]
    acc = np.zeros(lead)
    loop_bits: list[np.ndarray] = [np.zeros(lead, dtype=bool)] * len(model.loops)
    for stage in range(n):
        if stage in target_of:
            crossed = loop_bits[target_of[stage]]
        else:
            crossed = np.broadcast_to(challenge[stage] == 1, lead)
        acc = np.where(crossed, -acc + gain_crossed[stage], acc + gain_straight[stage])
        for index in taps.get(stage, ()):
            loop_bits[index] = (acc + sigma * z[..., index]) > 0
    return ((acc + sigma * z[..., len(model.loops)]) > 0).astype(np.uint8)


def responses_from_noise(
    model: PufModel, challenge: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """Responses of ``model`` to one challenge under given noise draws.

    z holds standard-normal values with trailing dimension
    :func:`noise_channel_count`; one response bit is produced per leading
    element. Comparisons use delta + sigma_n * z > 0, so ties yield 0.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != noise_channel_count(model):
        raise ValueError("noise block has wrong channel count for this model")
    if isinstance(model, ArbiterModel):
        d = delta(model, transform_challenge(challenge))
        return ((d + model.sigma * z[..., 0]) > 0).astype(np.uint8)
    if isinstance(model, XorModel):
        deltas = _xor_deltas(model, challenge)
        sigma = model.components[0].sigma
        return _parity((deltas + sigma * z) > 0)
    if isinstance(model, InterposeModel):
        x = len(model.upper.components)
        upper_bits = _parity(
            (_xor_deltas(model.upper, challenge) + model.upper.components[0].sigma * z[..., :x]) > 0
        )
        lower0 = _xor_deltas(model.lower, _interposed(challenge, model.interpose_pos, 0))
        lower1 = _xor_deltas(model.lower, _interposed(challenge, model.interpose_pos, 1))
        chosen = np.where(upper_bits[..., None].astype(bool), lower1, lower0)
        sigma_lower = model.lower.components[0].sigma
        return _parity((chosen + sigma_lower * z[..., x:]) > 0)
    if isinstance(model, FeedForwardModel):
        return _feedforward_bits(model, challenge, z)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def evaluate(model: PufModel, challenge: np.ndarray, rng: np.random.Generator) -> int:
    """One noisy evaluation; consumes fresh noise from ``rng`` per call."""
    z = rng.standard_normal(noise_channel_count(model))
    return int(responses_from_noise(model, challenge, z))


def noiseless_response(model: PufModel, challenge: np.ndarray) -> int:
    """Deterministic response with every noise term forced to zero."""
    z = np.zeros(noise_channel_count(model))
    return int(responses_from_noise(model, challenge, z))


def analytic_reliability(model: PufModel, challenge: np.ndarray) -> float:
    """Closed-form single-evaluation reliability |2 p1 - 1|.

    For an arbiter chain p1 = Phi(delta / sigma_n); for an XOR model the
    reliability is the product of the component terms |prod (2 p1_i - 1)|.
    Only these two kinds admit the closed form.
    """
    if isinstance(model, ArbiterModel):
        d = delta(model, transform_challenge(challenge))
        return abs(2.0 * _p_one(d, model.sigma) - 1.0)
    if isinstance(model, XorModel):
        sigma = model.components[0].sigma
        deltas = _xor_deltas(model, challenge)
        return float(abs(np.prod([2.0 * _p_one(d, sigma) - 1.0 for d in deltas])))
    raise TypeError("analytic reliability is defined for arbiter and XOR models only")


def _p_one(delta_value: float, sigma: float) -> float:
    if sigma > 0:
        return float(ndtr(delta_value / sigma))
    return 1.0 if delta_value > 0 else 0.0


def arbiter_weights_from_stage_delays(stage_delays: np.ndarray) -> np.ndarray:
    """Collapse per-stage MUX delays into equivalent linear weights.

    With per-stage bottom-minus-top gains g_s (straight) and g_c
    (crossed), the accumulated difference obeys
    acc' = s * acc + alpha + s * beta for s = 1 - 2 bit,
    alpha = (g_s + g_c) / 2 and beta = (g_s - g_c) / 2, which telescopes
    to the linear form w . phi with w_0 = beta_0, w_i = alpha_{i-1} +
    beta_i and w_n = alpha_{n-1}.
    """
    d = np.asarray(stage_delays, dtype=np.float64)
    if d.ndim != 2 or d.shape[1] != 4:
        raise ValueError("stage_delays must have shape (n, 4)")
    gain_straight = d[:, 1] - d[:, 0]
    gain_crossed = d[:, 3] - d[:, 2]
    alpha = (gain_straight + gain_crossed) / 2.0
    beta = (gain_straight - gain_crossed) / 2.0
    n = d.shape[0]
    w = np.empty(n + 1)
    w[0] = beta[0]
    w[1:n] = alpha[: n - 1] + beta[1:]
    w[n] = alpha[n - 1]
    return w


@dataclass(frozen=True)
class PufDescriptor:
    """Seed-based recipe for a PUF instance.

    Models are serialized and rebuilt from descriptors, never from raw
    weights: the structural parameters plus the seed determine every
    delay value.
    """

    kind: str
    n: int
    noise_level: float
    seed: int
    k_xor: int = 1
    x: int = 1
    y: int = 1
    interpose_pos: int | None = None
    loops: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("arbiter", "xor", "interpose", "feedforward"):
            raise ValueError(f"unknown PUF kind {self.kind!r}")
        if self.loops is not None:
            object.__setattr__(
                self, "loops", tuple((int(a), int(t)) for a, t in self.loops)
            )

    def label(self) -> str:
        """Short human-readable instance-independent identifier."""
        if self.kind == "arbiter":
            return f"arbiter-{self.n}"
        if self.kind == "xor":
            return f"{self.k_xor}-xor-{self.n}"
        if self.kind == "interpose":
            return f"({self.x},{self.y})-interpose-{self.n}"
        return f"feedforward-{self.n}"


def build_model(desc: PufDescriptor) -> PufModel:
    """Materialize the delay model a descriptor denotes."""
    rng = np.random.default_rng(desc.seed)
    if desc.kind == "arbiter":
        return sample_arbiter(desc.n, desc.noise_level, rng)
    if desc.kind == "xor":
        return sample_xor(desc.n, desc.k_xor, desc.noise_level, rng)
    if desc.kind == "interpose":
        return sample_interpose(
            desc.n, desc.x, desc.y, desc.noise_level, rng, desc.interpose_pos
        )
    if desc.kind == "feedforward":
        return sample_feedforward(desc.n, desc.noise_level, rng, desc.loops)
    raise ValueError(f"unknown PUF kind {desc.kind!r}")


def descriptor_to_dict(desc: PufDescriptor) -> dict:
    out = {
        "version": MODEL_FORMAT_VERSION,
        "kind": desc.kind,
        "n": desc.n,
        "noise_level": desc.noise_level,
        "seed": desc.seed,
    }
    if desc.kind == "xor":
        out["k_xor"] = desc.k_xor
    if desc.kind == "interpose":
        out["x"] = desc.x
        out["y"] = desc.y
        out["interpose_pos"] = desc.interpose_pos
    if desc.kind == "feedforward":
        out["loops"] = [list(pair) for pair in (desc.loops or ())] or None
    return out


def descriptor_from_dict(data: dict) -> PufDescriptor:
    if data.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {data.get('version')!r}")
    loops = data.get("loops")
    return PufDescriptor(
        kind=data["kind"],
        n=int(data["n"]),
        noise_level=float(data["noise_level"]),
        seed=int(data["seed"]),
        k_xor=int(data.get("k_xor", 1)),
        x=int(data.get("x", 1)),
        y=int(data.get("y", 1)),
        interpose_pos=data.get("interpose_pos"),
        loops=tuple(tuple(pair) for pair in loops) if loops else None,
    )


def save_model(desc: PufDescriptor, path) -> None:
    """Write the seed-based model recipe as a versioned JSON document."""
    with open(path, "w", encoding="ascii") as handle:
        json.dump(descriptor_to_dict(desc), handle, indent=2)
        handle.write("\n")


def load_model(path) -> PufDescriptor:
    with open(path, "r", encoding="ascii") as handle:
        return descriptor_from_dict(json.load(handle))
