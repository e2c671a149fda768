"""Neural vocoder with a linear-prediction-shifted mixture output head.

Three model variants share one trunk: a 256-way categorical head over
mu-law speech classes, a Gaussian-mixture head over the LP excitation,
and a Gaussian-mixture head over speech whose means are shifted by the
frame-wise LP predictor so that source generation and envelope
filtering are trained jointly.
"""

from .audio import AudioBuffer, mulaw_decode, mulaw_encode, read_wav, write_wav
from .features import FeatureTrack, NormStats, extract_features, load_features, save_features
from .lpc import LpcCoeffs, LpcSchedule, Lsf
from .net import (
    HEAD_EXCITATION,
    HEAD_LP_MOG,
    HEAD_MULAW,
    NetConfig,
    WaveNetModel,
    desk_config,
    full_config,
    receptive_field,
)
from .synth import copy_synthesis, generate
from .train import TrainConfig, prepare_training_data, train_loop

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "FeatureTrack",
    "HEAD_EXCITATION",
    "HEAD_LP_MOG",
    "HEAD_MULAW",
    "LpcCoeffs",
    "LpcSchedule",
    "Lsf",
    "NetConfig",
    "NormStats",
    "TrainConfig",
    "WaveNetModel",
    "copy_synthesis",
    "desk_config",
    "extract_features",
    "full_config",
    "generate",
    "load_features",
    "mulaw_decode",
    "mulaw_encode",
    "prepare_training_data",
    "read_wav",
    "receptive_field",
    "save_features",
    "train_loop",
    "write_wav",
]
