"""Delay-PUF simulation, CRP pipelines, and reliability-assisted attacks.

The package is organized around five layers: delay models (`puf`),
deterministic CRP generation and storage (`crp`), reliability
statistics and representations (`reliability`), the from-scratch
multi-head network and attack protocol (`nn`, `attack`), and the
config-driven experiment CLI (`config`, `cli`, `figures`, `checks`).
"""

__version__ = "0.1.0"

from .crp import (
    Dataset,
    MeasurementConfig,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .nn import NetworkSpec, TrainConfig
from .puf import PufDescriptor, build_model
from .reliability import ldhf_measure, measured_reliability, puf_reliability

__all__ = [
    "__version__",
    "Dataset",
    "MeasurementConfig",
    "NetworkSpec",
    "PufDescriptor",
    "TrainConfig",
    "build_model",
    "generate_dataset",
    "ldhf_measure",
    "measured_reliability",
    "puf_reliability",
    "read_dataset",
    "write_dataset",
]
