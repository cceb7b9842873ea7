"""Multichannel continuous speech separation toolkit.

Converts a streaming microphone-array signal into two time-synchronous
separated audio streams via windowed mask application or MVDR beamforming,
with WPE dereverberation, a room/noise simulator and evaluation metrics.
"""

__version__ = "0.1.0"

from .signal_io import ArrayGeometry, MultichannelWave, circular_array
from .stft import Spectrogram, StftConfig, analyze, synthesize
from .masks import MaskSet, normalize_masks, oracle_masks
from .stitcher import WindowPlan, plan_windows, run_pipeline
from .metrics import best_permutation_eval, si_sdr

__all__ = [
    "ArrayGeometry",
    "MultichannelWave",
    "circular_array",
    "Spectrogram",
    "StftConfig",
    "analyze",
    "synthesize",
    "MaskSet",
    "normalize_masks",
    "oracle_masks",
    "WindowPlan",
    "plan_windows",
    "run_pipeline",
    "best_permutation_eval",
    "si_sdr",
    "__version__",
]
