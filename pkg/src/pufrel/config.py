"""Flat dotted-key experiment configuration.

One text file drives a whole run: ``section.key = value`` lines, ``#``
comments, no nesting. Every key has a declared type and default in
KEYS, and every key can be overridden from the command line, so a
report can always state the exact configuration that produced it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .crp import DEFAULT_LCG_A, DEFAULT_LCG_G, MeasurementConfig
from .nn import DEFAULT_VALIDATION_FRACTION, TrainConfig
from .puf import PufDescriptor

ENV_OUTPUT_DIR = "PUFREL_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    return tuple(int(part) for part in items)


def _parse_loops(text: str) -> tuple[tuple[int, int], ...]:
    pairs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        left, _, right = part.partition(":")
        pairs.append((int(left), int(right)))
    return tuple(pairs)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(f"{a}:{t}" for a, t in value)
        return ",".join(str(v) for v in value)
    return str(value)


# key -> (parser, default). None defaults mean "unset" and are resolved
# by the consuming command.
KEYS: dict[str, tuple] = {
    "puf.kind": (str, "arbiter"),
    "puf.n": (int, 64),
    "puf.noise_level": (float, 0.05),
    "puf.k_xor": (int, 1),
    "puf.x": (int, 1),
    "puf.y": (int, 1),
    "puf.interpose_pos": (int, None),
    "puf.loops": (_parse_loops, None),
    "measure.num_mv": (int, 1),
    "measure.m": (int, 1),
    "measure.n_challenges": (int, 10_000),
    "measure.k_ldhf": (int, None),
    "lcg.a": (int, DEFAULT_LCG_A),
    "lcg.g": (int, DEFAULT_LCG_G),
    "attack.mode": (str, "alsca"),
    "attack.learning_rate": (float, 0.001),
    "attack.batch_size": (int, 1000),
    "attack.max_epochs": (int, 150),
    "attack.patience": (int, 10),
    "attack.min_delta": (float, 1e-4),
    "attack.validation_fraction": (float, DEFAULT_VALIDATION_FRACTION),
    "attack.time_limit_s": (float, 1800.0),
    "attack.activation": (str, "relu"),
    "attack.raw_inputs": (_parse_bool, False),
    "instances.count": (int, 1),
    "instances.base_seed": (int, 0),
    "output.dir": (str, None),
    "study.m_list": (_parse_int_list, (20, 100, 1000)),
    "ber.num_mv_list": (_parse_int_list, (5, 20, 50)),
    "ber.reference": (str, "noiseless"),
    "sweep.axis": (str, None),
    "sweep.values": (_parse_int_list, None),
    "report.figures": (_parse_bool, True),
}

_MODES = ("msa", "mlmsa", "alsca", "ldhf", "response")
_SWEEP_AXES = ("k_ldhf", "num_mv", "crp_budget", "m")


@dataclass
class ExperimentConfig:
    """Typed view over the flat key table."""

    values: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        merged = {key: default for key, (_, default) in KEYS.items()}
        merged.update(self.values)
        self.values = merged

    def __getitem__(self, key: str):
        if key not in KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        return self.values[key]

    def set(self, key: str, raw: str) -> None:
        if key not in KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        parser = KEYS[key][0]
        try:
            self.values[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc

    def validate(self) -> None:
        kind = self["puf.kind"]
        if kind not in ("arbiter", "xor", "interpose", "feedforward"):
            raise ConfigError(f"puf.kind: unknown PUF kind {kind!r}")
        for key in ("puf.n", "measure.num_mv", "measure.m", "measure.n_challenges",
                    "instances.count"):
            if self[key] < 1:
                raise ConfigError(f"{key}: must be >= 1, got {self[key]}")
        if self["puf.noise_level"] < 0:
            raise ConfigError("puf.noise_level: must be >= 0")
        if self["attack.mode"] not in _MODES:
            raise ConfigError(f"attack.mode: unknown mode {self['attack.mode']!r}")
        if self["attack.activation"] not in ("relu", "tanh"):
            raise ConfigError(
                f"attack.activation: unknown activation {self['attack.activation']!r}"
            )
        k_ldhf = self["measure.k_ldhf"]
        if k_ldhf is not None:
            if k_ldhf < 1:
                raise ConfigError("measure.k_ldhf: must be >= 1")
            if k_ldhf > self["measure.m"]:
                raise ConfigError(
                    f"measure.k_ldhf: {k_ldhf} exceeds measure.m = {self['measure.m']}"
                )
        if self["attack.mode"] == "ldhf" and k_ldhf is None:
            raise ConfigError("measure.k_ldhf: required for attack.mode = ldhf")
        if self["ber.reference"] not in ("noiseless", "majority-of-many"):
            raise ConfigError(
                f"ber.reference: unknown reference {self['ber.reference']!r}"
            )
        axis = self["sweep.axis"]
        if axis is not None and axis not in _SWEEP_AXES:
            raise ConfigError(f"sweep.axis: unknown axis {axis!r}")

    def descriptor(self, seed: int) -> PufDescriptor:
        return PufDescriptor(
            kind=self["puf.kind"],
            n=self["puf.n"],
            noise_level=self["puf.noise_level"],
            seed=seed,
            k_xor=self["puf.k_xor"],
            x=self["puf.x"],
            y=self["puf.y"],
            interpose_pos=self["puf.interpose_pos"],
            loops=self["puf.loops"],
        )

    def measurement(self) -> MeasurementConfig:
        return MeasurementConfig(
            num_mv=self["measure.num_mv"],
            m_repeats=self["measure.m"],
            n_challenges=self["measure.n_challenges"],
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self["attack.learning_rate"],
            batch_size=self["attack.batch_size"],
            max_epochs=self["attack.max_epochs"],
            patience=self["attack.patience"],
            min_delta=self["attack.min_delta"],
            validation_fraction=self["attack.validation_fraction"],
            seed=seed,
            time_limit_s=self["attack.time_limit_s"],
        )

    def output_dir(self) -> str:
        configured = self["output.dir"]
        if configured:
            return configured
        return os.environ.get(ENV_OUTPUT_DIR, "runs")

    def as_lines(self) -> list[str]:
        lines = []
        for key in sorted(KEYS):
            value = self.values[key]
            if value is None:
                continue
            lines.append(f"{key} = {_fmt(value)}")
        return lines


def parse_config_text(text: str) -> ExperimentConfig:
    config = ExperimentConfig()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        config.set(key.strip(), value.strip())
    return config


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config_text(handle.read())
