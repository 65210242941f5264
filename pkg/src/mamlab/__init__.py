"""Desk-scale masked audio modeling with feature distillation and a
supervised classification branch, end to end: waveform DSP, patch masking,
transformer encoder/decoder, pluggable teacher targets, multi-objective
losses, and a training CLI."""

from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    InputError,
    MamlabError,
    NumericError,
    ParameterError,
)
from .gradcheck import check_gradient
from .tensor import GradTape, Tensor, backward, no_grad

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "FormatError",
    "GradTape",
    "InputError",
    "MamlabError",
    "NumericError",
    "ParameterError",
    "Tensor",
    "backward",
    "check_gradient",
    "no_grad",
]

__version__ = "0.1.0"
