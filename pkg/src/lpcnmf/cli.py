"""Command-line entry point: ``lpcnmf {separate,mix,eval,sweep}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, metrics
from .config import config_from_mapping, read_kv
from .separation import MODES, separate
from .spectrogram import AudioSignal, read_wav, write_wav

logger = logging.getLogger("lpcnmf")

# CLI flag -> config key
SEPARATION_FLAGS = ("bases", "lpc_order", "iters", "init", "p", "alpha_step", "beta",
                    "recon", "seed", "frame_size", "hop_size")


def _add_separation_flags(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--bases", type=int, help="bases per instrument")
    p.add_argument("--lpc-order", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--init", choices=("normal", "sparse"))
    p.add_argument("--p", type=float, help="activation weight exponent (blind mode)")
    p.add_argument("--alpha-step", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--recon", choices=("direct", "soft_mask"))
    p.add_argument("--seed", type=int)
    p.add_argument("--frame-size", type=int)
    p.add_argument("--hop-size", type=int)


def _config(args, extra=None):
    mapping = read_kv(args.config) if getattr(args, "config", None) else {}
    if extra:
        mapping.update(extra)
    cfg = config_from_mapping(mapping)
    flags = {k: getattr(args, k, None) for k in SEPARATION_FLAGS}
    return config_from_mapping(flags, cfg)


def load_training_clips(path) -> list:
    """One clip per instrument: subdirectories are concatenated, bare WAVs used as-is."""
    root = Path(path)
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if subdirs:
        return [harness.concatenate(c) for c in harness.load_clip_dir(root).values()]
    wavs = sorted(root.glob("*.wav"))
    if not wavs:
        raise SystemExit(f"no WAV clips found in {root}")
    return [read_wav(w) for w in wavs]


def cmd_separate(args):
    mixture = read_wav(args.mixture)
    cfg = _config(args).replace(sample_rate=mixture.sample_rate)
    clips = load_training_clips(args.clips) if args.clips else None
    if args.mode == "informed" and not clips:
        raise SystemExit("--clips is required in informed mode")
    n = args.instruments or (len(clips) if clips else None)
    if args.mode != "informed" and not n:
        raise SystemExit("--instruments is required in blind/baseline mode")
    result = separate(args.mode, mixture, cfg, clips=clips, n_instruments=n)
    paths = result.write(args.out)
    for p in paths:
        print(p)
    return 0


def _mixture_suite(spec: dict, sample_rate_default=22050):
    """Build ``(mixture, truth, training_clips)`` tuples from a mix/sweep spec mapping."""
    n_mix = int(spec.get("n_mixtures", 1))
    duration = float(spec.get("duration", 10.0))
    notes = int(spec.get("notes_per_instrument", 10))
    seed = int(spec.get("mixture_seed", spec.get("seed", 0)))
    if "clips" in spec:
        library = harness.load_clip_dir(spec["clips"])
        names = spec["instruments"].split(",") if "instruments" in spec else list(library)
        train_lib = harness.load_clip_dir(spec["train_clips"]) if "train_clips" in spec else library
        repeat = set(spec.get("repeat", "").split(",")) - {""}
        out = []
        for child in np.random.SeedSequence(seed).spawn(n_mix):
            ms = harness.MixtureSpec([library[n] for n in names], duration, notes,
                                     seed=int(child.generate_state(1)[0]),
                                     repeat_clip=[n in repeat for n in names])
            mix, truth = harness.generate_mixture(ms)
            out.append((mix, truth, [harness.concatenate(train_lib[n]) for n in names]))
        return out, names
    pairs = [tuple(p.split("+")) for p in spec.get("instruments", "low+high").split(",")]
    suite = harness.SyntheticSuite(
        pairs=pairs, n_mixtures=n_mix,
        sample_rate=int(spec.get("sample_rate", sample_rate_default)),
        duration=duration, notes_per_instrument=notes,
        clips_per_instrument=int(spec.get("clips_per_instrument", 10)), seed=seed)
    return suite.build(), None


def cmd_mix(args):
    spec = read_kv(args.spec)
    suite, names = _mixture_suite(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for m, (mix, truth, train) in enumerate(suite):
        d = out / f"mix_{m:03d}" if len(suite) > 1 else out
        (d / "refs").mkdir(parents=True, exist_ok=True)
        (d / "clips").mkdir(exist_ok=True)
        write_wav(d / "mixture.wav", mix)
        for i, (t, c) in enumerate(zip(truth, train)):
            write_wav(d / "refs" / f"ref_{i:02d}.wav", t)
            write_wav(d / "clips" / f"instrument_{i:02d}.wav", c)
        print(d)
    return 0


def _read_dir(path):
    wavs = sorted(Path(path).glob("*.wav"))
    if not wavs:
        raise SystemExit(f"no WAV files in {path}")
    return [read_wav(w) for w in wavs]


def cmd_eval(args):
    ests, refs = _read_dir(args.est), _read_dir(args.ref)
    n = len(refs[0])
    fitted = []
    for e in ests:
        x = e.samples[:n]
        if len(x) != n:
            logger.warning("estimate shorter than reference; zero-padding")
            x = np.pad(x, (0, n - len(x)))
        fitted.append(AudioSignal(x, e.sample_rate))
    report = metrics.evaluate_permuted(fitted, refs, args.filter_length)
    report.to_csv(args.out)
    for row in report.rows():
        print("source %d -> ref %d: SDR %.2f  SIR %.2f  SAR %.2f" % row)
    return 0


def cmd_sweep(args):
    spec = read_kv(args.spec)
    sweep = harness.SweepSpec(
        variable=spec["variable"],
        values=[v.strip() for v in spec["values"].split(",")],
        repetitions=int(spec.get("repetitions", 1)),
        mode=spec.get("mode", "blind"),
        workers=int(spec.get("workers", 1)),
    )
    if sweep.mode not in MODES:
        raise SystemExit(f"unknown mode {sweep.mode!r}")
    suite, _ = _mixture_suite(spec)
    cfg = config_from_mapping(spec).replace(sample_rate=suite[0][0].sample_rate)
    text = harness.run_sweep(sweep, cfg, suite, audio_dir=args.audio_dir)
    Path(args.out).write_text(text)
    print(args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="lpcnmf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("separate", help="separate a mono mixture")
    p.add_argument("--mode", choices=MODES, default="informed")
    p.add_argument("--mixture", required=True)
    p.add_argument("--clips", help="instrument clips (one WAV or subdirectory per instrument)")
    p.add_argument("--instruments", type=int)
    p.add_argument("--out", required=True)
    _add_separation_flags(p)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("mix", help="synthesize mixtures from note clips")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("eval", help="SDR/SIR/SAR of estimates against references")
    p.add_argument("--est", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--filter-length", type=int, default=metrics.FILTER_LENGTH)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="parameter sweep to CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--audio-dir", help="also write separated sources per sweep cell")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
