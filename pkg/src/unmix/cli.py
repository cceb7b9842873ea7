"""Command-line front end: scene simulation, separation runs, evaluation,
and config inspection."""

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    load_pipeline_config,
    load_scene_spec,
    pipeline_config_text,
)
from .dereverb import wpe_stream
from .errors import ConfigurationError, FormatError, GeometryError, UnmixError
from .masks import FileMaskProvider, OracleMaskProvider
from .metrics import (
    activity_frames_from_segments,
    best_permutation_eval,
    channel_leakage_db,
    check_nonmixing,
)
from .signal_io import MultichannelWave, read_wave, write_wave
from .simulator import make_mixture, speech_like_source
from .stft import Spectrogram, analyze, synthesize
from .stitcher import plan_windows, run_pipeline

log = logging.getLogger("unmix")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3


def cmd_simulate(args):
    scene = load_scene_spec(args.scene)
    room = scene.room()
    mix_spec = scene.mixture_spec()
    rng_seed = scene.seed
    sources = []
    for k in range(len(scene.source_positions)):
        if args.source_wav and k < len(args.source_wav):
            wave = read_wave(args.source_wav[k])
            sources.append(wave.samples[0])
        else:
            length = scene.duration * (0.8 if k == 0 else 0.5)
            sources.append(
                speech_like_source(length, seed=rng_seed * 1000 + k)
            )
    mixture, truth = make_mixture(mix_spec, room, sources)

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    write_wave(mixture, outdir / "mixture.wav", dtype="float32")
    for k in range(len(sources)):
        write_wave(
            MultichannelWave(truth.utterance_images_ref[k], mixture.sample_rate),
            outdir / f"source{k}.wav",
            dtype="float32",
        )
    noise_ref = truth.noise[room.array_geometry.reference_index]
    has_noise = bool(np.any(noise_ref != 0.0))
    if has_noise:
        write_wave(
            MultichannelWave(noise_ref, mixture.sample_rate),
            outdir / "noise_ref.wav",
            dtype="float32",
        )
    meta = {
        "sample_rate": mixture.sample_rate,
        "channels": mixture.channel_count,
        "utterances": len(sources),
        "assignment": list(truth.assignment),
        "activity_samples": [list(seg) for seg in truth.activity],
        "configuration": mix_spec.configuration,
        "t60": scene.t60,
        "snr_db": None if not has_noise else scene.snr_db,
        "seed": scene.seed,
    }
    (outdir / "truth.json").write_text(json.dumps(meta, indent=2))
    log.info("wrote scene to %s", outdir)
    return EXIT_OK


def _load_truth(truth_dir, stft_config, num_samples):
    truth_dir = Path(truth_dir)
    meta_path = truth_dir / "truth.json"
    if not meta_path.exists():
        raise ConfigurationError(f"missing truth metadata {meta_path}")
    meta = json.loads(meta_path.read_text())
    sources = []
    for k in range(meta["utterances"]):
        wave = read_wave(truth_dir / f"source{k}.wav")
        sources.append(wave.samples[0][:num_samples])
    noise_path = truth_dir / "noise_ref.wav"
    if noise_path.exists():
        noise = read_wave(noise_path).samples[0][:num_samples]
    else:
        noise = np.zeros(num_samples)
    channel_sources = [np.zeros(num_samples), np.zeros(num_samples)]
    for k, ch in enumerate(meta["assignment"]):
        channel_sources[ch] += sources[k]
    return meta, sources, channel_sources, noise


def _make_provider(config, spec, input_wave, plan):
    if config.mask_provider == "oracle":
        if not config.truth_dir:
            raise ConfigurationError(
                "oracle mask provider requires truth_dir pointing at simulate output"
            )
        _, _, channel_sources, noise = _load_truth(
            config.truth_dir, config.stft, input_wave.samples.shape[1]
        )
        rate = input_wave.sample_rate
        source_specs = [
            analyze(MultichannelWave(s, rate), config.stft) for s in channel_sources
        ]
        noise_spec = analyze(MultichannelWave(noise, rate), config.stft)
        return OracleMaskProvider(spec, source_specs, noise_spec)
    path = config.mask_provider[len("file:") :]
    provider = FileMaskProvider(path)
    expected = len(plan_windows(spec.frame_count, plan))
    if provider.window_count != expected:
        raise FormatError(
            f"mask file {path} has {provider.window_count} windows, "
            f"pipeline expects {expected}"
        )
    return provider


def cmd_separate(args):
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    config = load_pipeline_config(args.config, overrides)
    if args.truth_dir:
        config.truth_dir = args.truth_dir
    geometry = config.geometry()
    input_wave = read_wave(args.input)
    if input_wave.channel_count != geometry.channel_count:
        raise ConfigurationError(
            f"input has {input_wave.channel_count} channels, geometry expects "
            f"{geometry.channel_count}"
        )
    started = time.monotonic()
    spec = analyze(input_wave, config.stft)
    if config.dereverb:
        spec = wpe_stream(spec, config.wpe)
    provider = _make_provider(config, spec, input_wave, config.plan)
    out0, out1 = run_pipeline(
        spec,
        provider,
        config.plan,
        config.mode,
        geometry,
        merge_threshold_deg=config.doa_merge_threshold_deg,
    )
    elapsed = time.monotonic() - started

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    num_samples = input_wave.samples.shape[1]
    for i, stream in enumerate((out0, out1)):
        wave = synthesize(stream)
        padded = np.zeros(num_samples)
        n = min(num_samples, wave.samples.shape[1])
        padded[:n] = wave.samples[0, :n]
        write_wave(
            MultichannelWave(padded, input_wave.sample_rate),
            outdir / f"out{i}.wav",
            dtype="float32",
        )
    config_text = pipeline_config_text(config)
    manifest = {
        "tool": "unmix",
        "version": __version__,
        "numpy": np.__version__,
        "config": config_text,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "input": str(args.input),
        "seconds_elapsed": round(elapsed, 3),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    log.info("separated %s -> %s in %.2fs", args.input, outdir, elapsed)
    return EXIT_OK


def _evaluate_scene(est_dir, truth_dir, stft_config):
    est_dir, truth_dir = Path(est_dir), Path(truth_dir)
    estimates = [read_wave(est_dir / f"out{i}.wav").samples[0] for i in (0, 1)]
    num_samples = len(estimates[0])
    meta, _, channel_sources, _ = _load_truth(truth_dir, stft_config, num_samples)
    mixture = read_wave(truth_dir / "mixture.wav")
    ref_channel = 0
    report = best_permutation_eval(
        estimates, channel_sources, mixture_ref=mixture.samples[ref_channel][:num_samples]
    )
    segments = meta["activity_samples"]
    activity = activity_frames_from_segments(
        segments, num_samples, stft_config.hop, stft_config.window_size
    )
    report.nonmixing_violation_rate = check_nonmixing(meta["assignment"], activity)
    channel_activity = [np.zeros(len(activity[0]), dtype=bool) for _ in range(2)]
    for k, ch in enumerate(meta["assignment"]):
        channel_activity[ch] |= activity[k]
    sample_activity = []
    for ch in range(2):
        mask = np.zeros(num_samples, dtype=bool)
        for k, c in enumerate(meta["assignment"]):
            if c == ch:
                lo, hi = segments[k]
                mask[lo:hi] = True
        sample_activity.append(mask)
    report.leakage_db = channel_leakage_db(estimates, sample_activity)
    return report


def cmd_evaluate(args):
    config = load_pipeline_config(args.config) if args.config else load_pipeline_config()
    est_root, truth_root = Path(args.estimates), Path(args.truth)
    if (est_root / "out0.wav").exists():
        scene_pairs = [("scene", est_root, truth_root)]
    else:
        scene_pairs = []
        for sub in sorted(p for p in est_root.iterdir() if p.is_dir()):
            truth_sub = truth_root / sub.name
            if not truth_sub.exists():
                log.warning("skipping %s: no matching truth directory", sub.name)
                continue
            scene_pairs.append((sub.name, sub, truth_sub))
    if not scene_pairs:
        raise ConfigurationError("no evaluable scenes found")
    reports = {}
    failed_invariant = False
    for name, est_dir, truth_dir in scene_pairs:
        report = _evaluate_scene(est_dir, truth_dir, config.stft)
        reports[name] = report
        if report.nonmixing_violation_rate and report.nonmixing_violation_rate > 0:
            failed_invariant = True
        (est_dir / "report.txt").write_text(report.to_kv_text())
        (est_dir / "report.json").write_text(report.to_json())
        print(f"{name}: {report.to_kv_text().strip().replace(os.linesep, ' ')}")
    totals = [r.total_si_sdr() for r in reports.values()]
    aggregate = {
        "scenes": len(reports),
        "mean_total_si_sdr": float(np.mean(totals)),
    }
    (est_root / "aggregate.json").write_text(json.dumps(aggregate, indent=2))
    print(f"aggregate: scenes={len(reports)} mean_total_si_sdr={np.mean(totals):.2f}")
    return EXIT_INVARIANT if failed_invariant else EXIT_OK


def cmd_print_config(args):
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    config = load_pipeline_config(args.config, overrides)
    sys.stdout.write(pipeline_config_text(config))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="unmix",
        description="Multichannel continuous speech separation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scene from a scene-spec file")
    p.add_argument("scene", help="scene spec (key = value text)")
    p.add_argument("output", help="output directory")
    p.add_argument(
        "--source-wav", action="append", help="WAV to use as source material"
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("separate", help="separate a multichannel WAV into two streams")
    p.add_argument("input", help="multichannel input WAV")
    p.add_argument("output", help="output directory")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--truth-dir", help="simulate output dir (oracle provider)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("evaluate", help="score separated streams against ground truth")
    p.add_argument("estimates", help="directory with out0.wav/out1.wav (or scene subdirs)")
    p.add_argument("truth", help="matching simulate output directory (or parent)")
    p.add_argument("--config", help="pipeline config file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("print-config", help="print the effective configuration")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("UNMIX_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigurationError, FormatError, GeometryError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UnmixError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
