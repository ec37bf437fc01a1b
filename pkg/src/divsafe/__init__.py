"""Diverse runtime OOD detection for a small MLP, combined by k-out-of-n voting."""

from .errors import (
    CalibrationError,
    ChannelFaultError,
    ConfigurationError,
    DivsafeError,
    FitError,
    InvalidInputError,
    InvalidParameterError,
    InvariantViolation,
    ShapeError,
)
from .model import MlpModel, TrainConfig, ensemble_predict, mc_dropout_predict, train
from .seeding import derive_seed, rng
from .voter import VoteDecision, VoterConfig, vote

__version__ = "0.1.0"
