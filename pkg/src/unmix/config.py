"""Declarative key-value configuration files for scenes and pipeline runs."""

from dataclasses import dataclass, field

import numpy as np

from .dereverb import WpeConfig
from .errors import ConfigurationError, FormatError
from .signal_io import ArrayGeometry, circular_array
from .stft import StftConfig
from .stitcher import WindowPlan
from .simulator import CONFIGURATIONS, MixtureSpec, RoomSpec


def parse_kv_file(path):
    """Parse a `key = value` text file; '#' starts a comment.

    Repeated keys collect into a list. Raises FormatError with the offending
    line number on malformed input.
    """
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not key or not val:
                raise FormatError(f"{path}:{lineno}: empty key or value")
            if key in values:
                existing = values[key]
                if not isinstance(existing, list):
                    values[key] = [existing]
                values[key].append(val)
            else:
                values[key] = val
    return values


def _floats(text):
    return [float(v) for v in text.split()]


@dataclass
class SceneSpec:
    """Declarative scene description consumed by the simulate command."""

    room_dim: np.ndarray
    t60: float
    array_center: np.ndarray
    source_positions: np.ndarray
    configuration: str
    snr_db: float
    duration: float
    seed: int
    gains_db: tuple
    array_radius: float = 0.0425

    def room(self):
        return RoomSpec(
            dimensions=self.room_dim,
            t60=self.t60,
            source_positions=self.source_positions,
            array_center=self.array_center,
            array_geometry=circular_array(radius=self.array_radius),
        )

    def mixture_spec(self):
        return MixtureSpec(
            configuration=self.configuration,
            utterance_gains_db=self.gains_db,
            noise_snr_db=self.snr_db,
            clip_seconds=self.duration,
            seed=self.seed,
        )


def load_scene_spec(path):
    values = parse_kv_file(path)
    try:
        sources = values["source"]
        if not isinstance(sources, list):
            sources = [sources]
        config = values.get("config", "single")
        if config not in CONFIGURATIONS:
            raise ConfigurationError(
                f"{path}: unknown config {config!r}; expected one of {CONFIGURATIONS}"
            )
        gains = values.get("gains_db")
        gains = tuple(_floats(gains)) if gains else (0.0,) * len(sources)
        return SceneSpec(
            room_dim=np.array(_floats(values["room_dim"])),
            t60=float(values.get("t60", "0.3")),
            array_center=np.array(_floats(values["array_center"])),
            source_positions=np.array([_floats(s) for s in sources]),
            configuration=config,
            snr_db=float(values.get("snr_db", "20")),
            duration=float(values.get("duration", "10")),
            seed=int(values.get("seed", "0")),
            gains_db=gains,
            array_radius=float(values.get("array_radius", "0.0425")),
        )
    except KeyError as exc:
        raise ConfigurationError(f"{path}: missing required field {exc}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


@dataclass
class PipelineConfig:
    """Everything a separation run needs; every field has a config-file key."""

    stft: StftConfig = field(default_factory=StftConfig)
    plan: WindowPlan = field(default_factory=WindowPlan)
    mask_provider: str = "oracle"  # "oracle" or "file:<path>"
    truth_dir: str = None  # required by the oracle provider
    mode: str = "masking"  # or "beamforming"
    dereverb: bool = False
    wpe: WpeConfig = field(default_factory=WpeConfig)
    array_radius: float = 0.0425
    reference_index: int = 0
    doa_merge_threshold_deg: float = 15.0
    seed: int = 0

    def geometry(self):
        geo = circular_array(radius=self.array_radius)
        return ArrayGeometry(
            positions=geo.positions, reference_index=self.reference_index
        )


PIPELINE_KEYS = {
    "fft_size": ("stft", "fft_size", int),
    "window_size": ("stft", "window_size", int),
    "hop": ("stft", "hop", int),
    "window_frames": ("plan", "window_frames", int),
    "hop_frames": ("plan", "hop_frames", int),
    "mask_provider": (None, "mask_provider", str),
    "truth_dir": (None, "truth_dir", str),
    "mode": (None, "mode", str),
    "dereverb": (None, "dereverb", lambda v: v.lower() in ("1", "true", "on", "yes")),
    "wpe_taps": ("wpe", "taps", int),
    "wpe_delay": ("wpe", "delay", int),
    "wpe_iterations": ("wpe", "iterations", int),
    "wpe_update_interval": ("wpe", "update_interval", float),
    "wpe_context": ("wpe", "context", float),
    "array_radius": (None, "array_radius", float),
    "reference_index": (None, "reference_index", int),
    "doa_merge_threshold_deg": (None, "doa_merge_threshold_deg", float),
    "seed": (None, "seed", int),
}


def load_pipeline_config(path=None, overrides=None):
    """Build a PipelineConfig from a key-value file plus override pairs."""
    config = PipelineConfig()
    values = parse_kv_file(path) if path else {}
    values.update(overrides or {})
    for key, raw in values.items():
        if key not in PIPELINE_KEYS:
            raise ConfigurationError(f"unknown config key {key!r}")
        section, attr, conv = PIPELINE_KEYS[key]
        try:
            value = conv(raw)
        except ValueError as exc:
            raise ConfigurationError(f"config key {key!r}: {exc}") from exc
        target = config if section is None else getattr(config, section)
        setattr(target, attr, value)
    if config.mode not in ("masking", "beamforming"):
        raise ConfigurationError(f"unknown mode {config.mode!r}")
    if not (
        config.mask_provider == "oracle" or config.mask_provider.startswith("file:")
    ):
        raise ConfigurationError(
            f"mask_provider must be 'oracle' or 'file:<path>', got {config.mask_provider!r}"
        )
    return config


def pipeline_config_text(config):
    """Render a PipelineConfig back to its key-value file form."""
    lines = [
        f"fft_size = {config.stft.fft_size}",
        f"window_size = {config.stft.window_size}",
        f"hop = {config.stft.hop}",
        f"window_frames = {config.plan.window_frames}",
        f"hop_frames = {config.plan.hop_frames}",
        f"mask_provider = {config.mask_provider}",
        f"mode = {config.mode}",
        f"dereverb = {'true' if config.dereverb else 'false'}",
        f"wpe_taps = {config.wpe.taps}",
        f"wpe_delay = {config.wpe.delay}",
        f"wpe_iterations = {config.wpe.iterations}",
        f"wpe_update_interval = {config.wpe.update_interval}",
        f"wpe_context = {config.wpe.context}",
        f"array_radius = {config.array_radius}",
        f"reference_index = {config.reference_index}",
        f"doa_merge_threshold_deg = {config.doa_merge_threshold_deg}",
        f"seed = {config.seed}",
    ]
    if config.truth_dir:
        lines.insert(6, f"truth_dir = {config.truth_dir}")
    return "\n".join(lines) + "\n"
