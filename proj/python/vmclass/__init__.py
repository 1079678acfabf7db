"""Behavior classification of VM resource traces with 1D convolutional networks."""

from ._core import (
    ConfigError,
    DataError,
    DivergenceError,
    Error,
    FormatError,
    Model,
    ShapeError,
    block_count,
    fft,
    ingest,
    magnitude_spectrum,
    metric_names,
    synthesize,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "Error",
    "FormatError",
    "Model",
    "ShapeError",
    "block_count",
    "fft",
    "ingest",
    "magnitude_spectrum",
    "metric_names",
    "synthesize",
    "train",
]

__version__ = "0.1.0"
