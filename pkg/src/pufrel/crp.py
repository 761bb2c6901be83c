"""Challenge-response pipeline: LCG challenges, repeated measurement,
majority voting, dataset files, and bit error rates.

Challenges come from a linear congruential generator over the modulus
2^n, so a dataset is reproducible from (seed, a, g) alone. Measurement
noise for record i is drawn from the substream (seed, STREAM_RECORD, i)
as one standard-normal block of shape (m_repeats, num_mv, channels) in
repeat-major order; the block layout makes generation independent of
execution order and makes a dataset truncated to fewer repeats
byte-identical to one generated with that repeat count.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from hashlib import sha256

import numpy as np

from .puf import (
    PufDescriptor,
    PufModel,
    build_model,
    descriptor_from_dict,
    descriptor_to_dict,
    noise_channel_count,
    noiseless_response,
    responses_from_noise,
)
from .rng import STREAM_RECORD, STREAM_REFERENCE, Rng, derive_seed

DATASET_FORMAT_VERSION = 1
DEFAULT_LCG_A = 75
DEFAULT_LCG_G = 74

# Vote count of the "majority-of-many" bit-error-rate reference.
REFERENCE_VOTES = 501


class DatasetFormatError(ValueError):
    """A dataset file violates the line-oriented format."""


class MalformedHeaderError(DatasetFormatError):
    """The first line is not a valid header."""


class TruncatedRecordError(DatasetFormatError):
    """The record section is shorter or shaped differently than declared."""


class VersionMismatchError(DatasetFormatError):
    """The file declares an unsupported format version."""


@dataclass(frozen=True)
class LcgState:
    """State of the challenge generator c' = (a c + g) mod modulus."""

    c: int
    a: int
    g: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 2 or self.modulus & (self.modulus - 1):
            raise ValueError("modulus must be a power of two >= 2")
        if not 0 <= self.c < self.modulus:
            raise ValueError("state must lie in [0, modulus)")


def lcg_next(state: LcgState) -> LcgState:
    """Advance the congruential generator by one step."""
    return replace(state, c=(state.a * state.c + state.g) % state.modulus)


def lcg_challenges(
    seed: int,
    n: int,
    count: int,
    a: int = DEFAULT_LCG_A,
    g: int = DEFAULT_LCG_G,
) -> np.ndarray:
    """First ``count`` challenges of the LCG stream over modulus 2^n.

    Challenge i is the n-bit little-endian expansion (bit j = bit j of
    the state) of the (i + 1)-th state after the seed. The default
    constants a=75, g=74 give long but not full-period streams on
    power-of-two moduli; supply full-period constants for the modulus at
    hand when exhaustive coverage matters.
    """
    if n < 1:
        raise ValueError("challenge length n must be >= 1")
    if count < 0:
        raise ValueError("count must be non-negative")
    modulus = 1 << n
    state = LcgState(c=seed % modulus, a=a % modulus, g=g % modulus, modulus=modulus)
    states = np.empty(count, dtype=object)
    for i in range(count):
        state = lcg_next(state)
        states[i] = state.c
    if n <= 64:
        values = states.astype(np.uint64)
        shifts = np.arange(n, dtype=np.uint64)
        return ((values[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    out = np.empty((count, n), dtype=np.uint8)
    for i, value in enumerate(states):
        out[i] = [(value >> j) & 1 for j in range(n)]
    return out


@dataclass(frozen=True)
class MeasurementConfig:
    """How often each challenge is measured.

    num_mv inner evaluations are fused into one majority-voted response;
    m_repeats such responses are recorded per challenge; n_challenges
    challenges make up a dataset.
    """

    num_mv: int = 1
    m_repeats: int = 1
    n_challenges: int = 1

    def __post_init__(self):
        if self.num_mv < 1 or self.m_repeats < 1 or self.n_challenges < 1:
            raise ValueError("num_mv, m_repeats and n_challenges must all be >= 1")


@dataclass(frozen=True)
class RepeatedMeasurement:
    """One challenge with its m_repeats recorded responses."""

    challenge: np.ndarray
    responses: np.ndarray


_tie_lock = threading.Lock()
_tie_count = 0


def _note_ties(count: int) -> None:
    global _tie_count
    if count:
        with _tie_lock:
            _tie_count += count


def majority_tie_count() -> int:
    """Total even-vote ties resolved to 0 since the last reset."""
    return _tie_count


def reset_majority_tie_count() -> None:
    global _tie_count
    with _tie_lock:
        _tie_count = 0


def majority_bit(bits: np.ndarray) -> int:
    """Majority of a bit vector; an exact tie resolves to 0."""
    bits = np.asarray(bits)
    ones = int(bits.sum())
    if 2 * ones == bits.size:
        _note_ties(1)
        return 0
    return int(2 * ones > bits.size)


def _vote_block(model: PufModel, challenge, shape, rng) -> np.ndarray:
    """Raw response bits of shape ``shape`` (leading dims) for one challenge."""
    channels = noise_channel_count(model)
    z = rng.standard_normal(shape + (channels,))
    return responses_from_noise(model, challenge, z)


def _majority_rows(bits: np.ndarray) -> np.ndarray:
    """Row-wise majority with ties to 0 over the last axis."""
    votes = bits.shape[-1]
    ones = bits.sum(axis=-1, dtype=np.int64)
    if votes % 2 == 0:
        _note_ties(int((2 * ones == votes).sum()))
    return (2 * ones > votes).astype(np.uint8)


def majority_vote(
    model: PufModel, challenge: np.ndarray, num_mv: int, rng: np.random.Generator
) -> int:
    """Majority over num_mv fresh evaluations; num_mv=1 is a plain eval."""
    if num_mv < 1:
        raise ValueError("num_mv must be >= 1")
    return int(_majority_rows(_vote_block(model, challenge, (1, num_mv), rng))[0])


def measure(
    model: PufModel,
    challenge: np.ndarray,
    config: MeasurementConfig,
    rng: np.random.Generator,
) -> RepeatedMeasurement:
    """Record m_repeats majority-voted responses for one challenge.

    A single standard-normal block of shape (m_repeats, num_mv, channels)
    is drawn, so repeat j always consumes the same stream slice no matter
    how many repeats follow it.
    """
    bits = _vote_block(model, challenge, (config.m_repeats, config.num_mv), rng)
    responses = _majority_rows(bits)
    return RepeatedMeasurement(
        challenge=np.asarray(challenge, dtype=np.uint8), responses=responses
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Reliability-annotated CRP set with its full generation recipe."""

    puf: PufDescriptor
    config: MeasurementConfig
    seed: int
    lcg_a: int
    lcg_g: int
    challenges: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        if self.challenges.shape[0] != self.responses.shape[0]:
            raise ValueError("challenge and response counts differ")
        if self.challenges.shape[0] != self.config.n_challenges:
            raise ValueError("record count does not match the configuration")
        if self.responses.shape[1] != self.config.m_repeats:
            raise ValueError("response width does not match m_repeats")

    @property
    def n(self) -> int:
        return self.challenges.shape[1]

    @property
    def m_repeats(self) -> int:
        return self.responses.shape[1]

    def __len__(self) -> int:
        return self.challenges.shape[0]

    def record(self, i: int) -> RepeatedMeasurement:
        return RepeatedMeasurement(self.challenges[i], self.responses[i])

    def ones_counts(self) -> np.ndarray:
        """Per-record number of 1-responses among the m_repeats."""
        return self.responses.sum(axis=1, dtype=np.int64)

    def truncated(self, m_repeats: int) -> "Dataset":
        """Restrict to the first m_repeats responses per record.

        Identical to generating with that repeat count from the start,
        thanks to the repeat-major noise layout.
        """
        if not 1 <= m_repeats <= self.m_repeats:
            raise ValueError("m_repeats must lie in [1, current m_repeats]")
        return Dataset(
            puf=self.puf,
            config=replace(self.config, m_repeats=m_repeats),
            seed=self.seed,
            lcg_a=self.lcg_a,
            lcg_g=self.lcg_g,
            challenges=self.challenges,
            responses=np.ascontiguousarray(self.responses[:, :m_repeats]),
        )


def generate_dataset(
    puf: PufDescriptor,
    config: MeasurementConfig,
    seed: int,
    lcg_a: int = DEFAULT_LCG_A,
    lcg_g: int = DEFAULT_LCG_G,
    workers: int = 1,
) -> Dataset:
    """Generate a dataset deterministically from (descriptor, config, seed).

    Challenges come from the LCG started at seed mod 2^n; record i's
    noise comes from the substream (seed, STREAM_RECORD, i). The output
    is identical for any ``workers`` value.
    """
    model = build_model(puf)
    challenges = lcg_challenges(seed, puf.n, config.n_challenges, lcg_a, lcg_g)
    responses = np.empty((config.n_challenges, config.m_repeats), dtype=np.uint8)

    def fill(i: int) -> None:
        rng = Rng(derive_seed(seed, STREAM_RECORD, i)).generator()
        responses[i] = measure(model, challenges[i], config, rng).responses

    if workers <= 1:
        for i in range(config.n_challenges):
            fill(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, range(config.n_challenges)))
    return Dataset(
        puf=puf,
        config=config,
        seed=seed,
        lcg_a=lcg_a,
        lcg_g=lcg_g,
        challenges=challenges,
        responses=responses,
    )


def _header_dict(dataset: Dataset) -> dict:
    return {
        "version": DATASET_FORMAT_VERSION,
        "puf": descriptor_to_dict(dataset.puf),
        "n": dataset.n,
        "m_repeats": dataset.m_repeats,
        "num_mv": dataset.config.num_mv,
        "n_challenges": len(dataset),
        "seed": dataset.seed,
        "lcg": {"a": dataset.lcg_a, "g": dataset.lcg_g},
    }


def _bits_to_line(bits: np.ndarray) -> str:
    return (bits + ord("0")).astype(np.uint8).tobytes().decode("ascii")


def write_dataset(dataset: Dataset, path) -> None:
    """Write header JSON plus one ``<challenge> <responses>`` line per record."""
    with open(path, "w", encoding="ascii", newline="\n") as handle:
        handle.write(json.dumps(_header_dict(dataset), sort_keys=True))
        handle.write("\n")
        for i in range(len(dataset)):
            handle.write(_bits_to_line(dataset.challenges[i]))
            handle.write(" ")
            handle.write(_bits_to_line(dataset.responses[i]))
            handle.write("\n")


def _parse_bits(token: str, length: int, line_no: int) -> np.ndarray:
    raw = np.frombuffer(token.encode("ascii"), dtype=np.uint8) - ord("0")
    if raw.shape[0] != length or not np.isin(raw, (0, 1)).all():
        raise TruncatedRecordError(
            f"line {line_no}: expected {length} bits, got {token!r}"
        )
    return raw.astype(np.uint8)


def read_dataset(path) -> Dataset:
    """Read a dataset file back losslessly; errors stay distinguishable."""
    with open(path, "r", encoding="ascii") as handle:
        header_line = handle.readline()
        if not header_line:
            raise MalformedHeaderError("empty file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as error:
            raise MalformedHeaderError(f"header is not valid JSON: {error}") from error
        if not isinstance(header, dict):
            raise MalformedHeaderError("header must be a JSON object")
        version = header.get("version")
        if version != DATASET_FORMAT_VERSION:
            raise VersionMismatchError(f"unsupported dataset version {version!r}")
        try:
            puf = descriptor_from_dict(header["puf"])
            n = int(header["n"])
            m_repeats = int(header["m_repeats"])
            num_mv = int(header["num_mv"])
            n_challenges = int(header["n_challenges"])
            seed = int(header["seed"])
            lcg_a = int(header["lcg"]["a"])
            lcg_g = int(header["lcg"]["g"])
        except (KeyError, TypeError, ValueError) as error:
            raise MalformedHeaderError(f"header field invalid: {error}") from error

        challenges = np.empty((n_challenges, n), dtype=np.uint8)
        responses = np.empty((n_challenges, m_repeats), dtype=np.uint8)
        for i in range(n_challenges):
            line = handle.readline()
            if not line:
                raise TruncatedRecordError(
                    f"expected {n_challenges} records, file ends after {i}"
                )
            parts = line.split()
            if len(parts) != 2:
                raise TruncatedRecordError(f"line {i + 2}: expected two fields")
            challenges[i] = _parse_bits(parts[0], n, i + 2)
            responses[i] = _parse_bits(parts[1], m_repeats, i + 2)
    return Dataset(
        puf=puf,
        config=MeasurementConfig(
            num_mv=num_mv, m_repeats=m_repeats, n_challenges=n_challenges
        ),
        seed=seed,
        lcg_a=lcg_a,
        lcg_g=lcg_g,
        challenges=challenges,
        responses=responses,
    )


def dataset_fingerprint(dataset: Dataset) -> str:
    """Stable content hash used to tie checkpoints to their data."""
    digest = sha256()
    digest.update(json.dumps(_header_dict(dataset), sort_keys=True).encode("ascii"))
    digest.update(np.ascontiguousarray(dataset.challenges).tobytes())
    digest.update(np.ascontiguousarray(dataset.responses).tobytes())
    return digest.hexdigest()


def bit_error_rate(
    model: PufModel,
    config: MeasurementConfig,
    reference: str,
    rng: Rng,
    lcg_a: int = DEFAULT_LCG_A,
    lcg_g: int = DEFAULT_LCG_G,
) -> float:
    """Fraction of majority-voted responses that differ from a reference.

    reference "noiseless" compares against the zero-noise response;
    "majority-of-many" compares against the majority of REFERENCE_VOTES
    fresh evaluations per challenge. All n_challenges * m_repeats voted
    responses enter the fraction.
    """
    if reference not in ("noiseless", "majority-of-many"):
        raise ValueError(f"unknown reference {reference!r}")
    n = model.n
    challenges = lcg_challenges(rng.seed, n, config.n_challenges, lcg_a, lcg_g)
    errors = 0
    total = 0
    for i in range(config.n_challenges):
        record_rng = rng.substream(STREAM_RECORD, i).generator()
        measured = measure(model, challenges[i], config, record_rng)
        if reference == "noiseless":
            ref = noiseless_response(model, challenges[i])
        else:
            ref_rng = rng.substream(STREAM_REFERENCE, i).generator()
            ref = majority_bit(
                _vote_block(model, challenges[i], (REFERENCE_VOTES,), ref_rng)
            )
        errors += int((measured.responses != ref).sum())
        total += measured.responses.size
    return errors / total
