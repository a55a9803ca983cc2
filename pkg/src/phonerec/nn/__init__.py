"""Acoustic encoder, allophone layer, and checkpoint container."""

from .allophone import (
    DEFAULT_ALPHA,
    AllophoneLayer,
    AllophoneTrace,
    allophone_backward,
    allophone_forward,
    allophone_penalty,
    penalty_gradient,
)
from .checkpoint import Checkpoint, CorruptFile, load_checkpoint, save_checkpoint
from .encoder import (
    ConfigError,
    DimensionMismatch,
    EncoderConfig,
    EncoderParams,
    ForwardTrace,
    TraceMismatch,
    encoder_backward,
    encoder_forward,
    init_encoder,
    zeros_encoder,
)

__all__ = [
    "DEFAULT_ALPHA",
    "AllophoneLayer",
    "AllophoneTrace",
    "allophone_backward",
    "allophone_forward",
    "allophone_penalty",
    "penalty_gradient",
    "Checkpoint",
    "CorruptFile",
    "load_checkpoint",
    "save_checkpoint",
    "ConfigError",
    "DimensionMismatch",
    "EncoderConfig",
    "EncoderParams",
    "ForwardTrace",
    "TraceMismatch",
    "encoder_backward",
    "encoder_forward",
    "init_encoder",
    "zeros_encoder",
]
