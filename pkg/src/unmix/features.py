"""Spectral and spatial input features: reference magnitude plus wrap-safe
inter-microphone phase differences with rolling mean normalization."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

EPS = 1e-10

# deviations below this magnitude are treated as exact zeros when taking the
# argument, so stationary-geometry and identical-channel inputs yield IPD 0
ZERO_DEVIATION_TOL = 1e-6


@dataclass
class FeatureFrameSequence:
    """Per-frame features aligned with the source spectrogram.

    magnitude: (frames, bins), mean-normalized reference magnitude.
    ipd: (J-1, frames, bins) radians in (-pi, pi].
    """

    magnitude: np.ndarray
    ipd: np.ndarray
    normalization_window: float = 4.0


def rolling_mean(values, window_frames, axis=0):
    """Centered rolling mean with truncated (shorter) windows at the edges.

    A window covering the whole sequence reduces to the global mean.
    """
    n = values.shape[axis]
    half = max(window_frames // 2, 0)
    values = np.moveaxis(values, axis, 0)
    csum = np.cumsum(values, axis=0)
    zero = np.zeros((1,) + csum.shape[1:], dtype=csum.dtype)
    csum = np.concatenate([zero, csum], axis=0)  # csum[i] = sum of first i
    t = np.arange(n)
    lo = np.maximum(t - half, 0)
    hi = np.minimum(t + half + 1, n)
    counts = (hi - lo).reshape((-1,) + (1,) * (values.ndim - 1))
    out = (csum[hi] - csum[lo]) / counts
    return np.moveaxis(out, 0, axis)


def compute_features(spec, geometry, norm_window=4.0):
    """Compute magnitude and IPD features from a multichannel spectrogram.

    The IPD for non-reference channel j is Arg(r - E[r]) with r the
    epsilon-regularized complex ratio x_j / x_R; the mean E[r] is a centered
    rolling average over `norm_window` seconds. Taking Arg after the mean
    subtraction keeps the features consistent across the pi/-pi boundary.
    Magnitude features are |x_R| with the same rolling mean subtracted.
    """
    if spec.channel_count < 2:
        raise ConfigurationError("IPD features need at least two channels")
    ref = geometry.reference_index
    x = spec.data  # (J, T, F)
    x_ref = x[ref]
    window_frames = max(int(round(norm_window * spec.frame_rate())), 1)

    # epsilon-regularized complex ratio x_j / x_R
    denom = np.abs(x_ref) ** 2 + EPS
    others = [j for j in range(spec.channel_count) if j != ref]
    ratio = x[others] * np.conj(x_ref) / denom  # (J-1, T, F)

    deviation = ratio - rolling_mean(ratio, window_frames, axis=1)
    deviation = np.where(np.abs(deviation) < ZERO_DEVIATION_TOL, 0.0, deviation)
    ipd = np.angle(deviation)

    mag = np.abs(x_ref)
    magnitude = mag - rolling_mean(mag, window_frames, axis=0)
    return FeatureFrameSequence(
        magnitude=magnitude, ipd=ipd, normalization_window=norm_window
    )
