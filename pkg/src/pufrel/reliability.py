"""Reliability statistics and representations of repeated measurements.

Given m recorded responses to one challenge with ``ones`` of them equal
to 1, the scalar measured reliability is |2 ones/m - 1|. Attacks consume
richer encodings of the same count:

* one-hot: length m+1 indicator of ``ones``;
* feature-crossed label: response * (m + 1) + ones over 2(m+1) classes;
* lossy buckets: length k+1 indicator of floor(ones * k / m), k | m;
* LDHF: the response sequence is cut into consecutive events of k
  responses each and entry i is the frequency of events containing
  exactly i ones, giving a length k+1 distribution whose expectation is
  the Binomial(k, p1) pmf.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .crp import MeasurementConfig, Dataset, measure
from .puf import PufModel

REPRESENTATION_FORMAT_VERSION = 1
_SUM_TOLERANCE = 1e-9

KIND_ONEHOT = "onehot"
KIND_LOSSY = "lossy"
KIND_LDHF = "ldhf"
_KINDS = (KIND_ONEHOT, KIND_LOSSY, KIND_LDHF)


@dataclass(frozen=True)
class CountSummary:
    """Number of 1-responses among m repeats of one challenge."""

    ones: int
    m: int

    def __post_init__(self):
        if not 0 <= self.ones <= self.m:
            raise ValueError("ones must lie in [0, m]")
        if self.m < 1:
            raise ValueError("m must be >= 1")


@dataclass(frozen=True, eq=False)
class ReliabilityVector:
    """A distribution-valued reliability encoding."""

    probs: np.ndarray
    kind: str

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if probs.ndim != 1:
            raise ValueError("probs must be one-dimensional")
        if (probs < 0).any():
            raise ValueError("probs must be non-negative")
        if abs(probs.sum() - 1.0) > _SUM_TOLERANCE:
            raise ValueError("probs must sum to 1")
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class LdhfParams:
    """LDHF window parameters: m recorded responses, events of k each.

    Only m' = k * floor(m / k) responses enter the representation; the
    trailing m - m' responses are dropped.
    """

    m: int
    k: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 1 <= self.k <= self.m:
            raise ValueError("k must lie in [1, m]")

    @property
    def used_responses(self) -> int:
        return self.k * (self.m // self.k)

    @property
    def num_events(self) -> int:
        return self.m // self.k


def count_summary(responses: np.ndarray) -> CountSummary:
    """Summarize a response vector into (ones, m)."""
    responses = np.asarray(responses)
    return CountSummary(ones=int(responses.sum()), m=int(responses.size))


def measured_reliability(s: CountSummary) -> float:
    """Scalar reliability |2 f1 - 1| with f1 = ones / m."""
    return abs(2.0 * s.ones / s.m - 1.0)


def puf_reliability(dataset: Dataset) -> float:
    """Dataset-mean measured reliability over all records."""
    f1 = dataset.ones_counts() / dataset.m_repeats
    return float(np.abs(2.0 * f1 - 1.0).mean())


def onehot_repr(s: CountSummary) -> ReliabilityVector:
    """Length m+1 indicator of the observed 1-count."""
    probs = np.zeros(s.m + 1)
    probs[s.ones] = 1.0
    return ReliabilityVector(probs=probs, kind=KIND_ONEHOT)


def msa_label(response: int, s: CountSummary) -> int:
    """Feature-crossed class response * (m + 1) + ones in [0, 2(m+1))."""
    if response not in (0, 1):
        raise ValueError("response must be 0 or 1")
    return response * (s.m + 1) + s.ones


def lossy_repr(s: CountSummary, k: int) -> ReliabilityVector:
    """Length k+1 bucket indicator, bucket = floor(ones * k / m).

    Requires k to divide m; the full count ones = m maps to bucket k.
    """
    if k < 1 or s.m % k != 0:
        raise ValueError("k must be a positive divisor of m")
    bucket = k if s.ones == s.m else (s.ones * k) // s.m
    probs = np.zeros(k + 1)
    probs[bucket] = 1.0
    return ReliabilityVector(probs=probs, kind=KIND_LOSSY)


def ldhf_from_responses(responses: np.ndarray, params: LdhfParams) -> ReliabilityVector:
    """Event-frequency representation of a recorded response sequence.

    The first m' = k * floor(m / k) responses are grouped into
    consecutive, non-overlapping events of k responses; entry i is the
    fraction of events whose 1-count equals i.
    """
    responses = np.asarray(responses)
    if responses.ndim != 1:
        raise ValueError("responses must be one-dimensional")
    if responses.size < params.used_responses:
        raise ValueError(
            f"need at least {params.used_responses} responses, got {responses.size}"
        )
    events = responses[: params.used_responses].reshape(params.num_events, params.k)
    counts = events.sum(axis=1, dtype=np.int64)
    probs = np.bincount(counts, minlength=params.k + 1) / params.num_events
    return ReliabilityVector(probs=probs, kind=KIND_LDHF)


def ldhf_measure(
    model: PufModel,
    challenge: np.ndarray,
    params: LdhfParams,
    num_mv: int,
    rng: np.random.Generator,
) -> ReliabilityVector:
    """Measure m fresh majority-voted responses and encode them as LDHF."""
    config = MeasurementConfig(num_mv=num_mv, m_repeats=params.m, n_challenges=1)
    measurement = measure(model, challenge, config, rng)
    return ldhf_from_responses(measurement.responses, params)


def mean_reliability_difference(a: Dataset, b: Dataset) -> float:
    """Mean |R_a(c_i) - R_b(c_i)| over one shared challenge list."""
    if len(a) != len(b) or not np.array_equal(a.challenges, b.challenges):
        raise ValueError("datasets must share one challenge list in the same order")
    ra = np.abs(2.0 * a.ones_counts() / a.m_repeats - 1.0)
    rb = np.abs(2.0 * b.ones_counts() / b.m_repeats - 1.0)
    return float(np.abs(ra - rb).mean())


def dataset_representations(
    dataset: Dataset, kind: str, k: int | None = None
) -> np.ndarray:
    """Per-record representation vectors as one (N, dim) matrix."""
    if kind not in _KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    m = dataset.m_repeats
    ones = dataset.ones_counts()
    if kind == KIND_ONEHOT:
        out = np.zeros((len(dataset), m + 1))
        out[np.arange(len(dataset)), ones] = 1.0
        return out
    if k is None:
        raise ValueError(f"kind {kind!r} requires k")
    if kind == KIND_LOSSY:
        if k < 1 or m % k != 0:
            raise ValueError("k must be a positive divisor of m")
        buckets = np.where(ones == m, k, (ones * k) // m)
        out = np.zeros((len(dataset), k + 1))
        out[np.arange(len(dataset)), buckets] = 1.0
        return out
    params = LdhfParams(m=m, k=k)
    used = dataset.responses[:, : params.used_responses]
    counts = used.reshape(len(dataset), params.num_events, params.k).sum(
        axis=2, dtype=np.int64
    )
    out = np.zeros((len(dataset), params.k + 1))
    for i in range(params.k + 1):
        out[:, i] = (counts == i).sum(axis=1)
    return out / params.num_events


def write_representations(path, dataset: Dataset, kind: str, k: int | None = None) -> None:
    """Export per-record representation vectors next to their challenges.

    Line 1 is a JSON header naming the kind and (m, k); each following
    line holds the challenge bit string and the vector entries.
    """
    matrix = dataset_representations(dataset, kind, k)
    header = {
        "version": REPRESENTATION_FORMAT_VERSION,
        "kind": kind,
        "m": dataset.m_repeats,
        "k": k,
        "n": dataset.n,
        "n_challenges": len(dataset),
        "dim": matrix.shape[1],
    }
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write(json.dumps(header, sort_keys=True))
        handle.write("\n")
        for i in range(len(dataset)):
            bits = (dataset.challenges[i] + ord("0")).astype(np.uint8)
            handle.write(bits.tobytes().decode("ascii"))
            handle.write(" ")
            handle.write(" ".join(repr(float(v)) for v in matrix[i]))
            handle.write("\n")


def read_representations(path) -> tuple[dict, np.ndarray, np.ndarray]:
    """Read an exported representation file: (header, challenges, matrix)."""
    with open(path, "r", encoding="ascii") as handle:
        header = json.loads(handle.readline())
        count = int(header["n_challenges"])
        n = int(header["n"])
        dim = int(header["dim"])
        challenges = np.empty((count, n), dtype=np.uint8)
        matrix = np.empty((count, dim))
        for i in range(count):
            parts = handle.readline().split()
            challenges[i] = np.frombuffer(
                parts[0].encode("ascii"), dtype=np.uint8
            ) - ord("0")
            matrix[i] = [float(v) for v in parts[1:]]
    return header, challenges, matrix
