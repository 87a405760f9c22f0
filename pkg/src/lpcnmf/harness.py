"""Experiment harness: mixture synthesis, synthetic instruments and sweeps.

Note clips can come from disk (one subdirectory of WAV files per instrument)
or from the built-in synthetic instruments, which are all-pole filters driven
by pulse trains (harmonic) or decaying noise bursts (percussive).
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
from scipy.signal import lfilter

from . import metrics
from .separation import SeparationConfig, separate
from .spectrogram import AudioSignal, read_wav

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# synthetic instruments

@dataclass(frozen=True)
class SyntheticInstrument:
    """All-pole resonator bank driven by a harmonic or noise excitation.

    ``formants`` are ``(centre_hz, bandwidth_hz)`` pairs; each contributes a
    conjugate pole pair.
    """

    name: str
    formants: tuple
    kind: str = "harmonic"  # or "percussive"
    pitch_range: tuple = (110.0, 440.0)
    attack: float = 0.02
    decay: float = 2.5  # 1/s exponential decay rate
    jitter: float = 0.05  # per-note relative formant detuning (std)
    brightness_decay: float = 1.0  # extra decay per kHz of partial frequency
    transient: float = 0.015  # attack noise time constant, s
    transient_level: float = 0.3

    def lpc_polynomial(self, sample_rate: int, detune=None) -> np.ndarray:
        A = np.array([1.0])
        scale = np.ones(len(self.formants)) if detune is None else detune
        for (fc, bw), c in zip(self.formants, scale):
            fc = min(fc * c, 0.45 * sample_rate)
            r = np.exp(-np.pi * bw / sample_rate)
            theta = 2 * np.pi * fc / sample_rate
            A = np.convolve(A, [1.0, -2 * r * np.cos(theta), r * r])
        return A

    def response(self, frame_size: int, sample_rate: int) -> np.ndarray:
        """L1-normalized magnitude response on the one-sided FFT grid."""
        v = 1.0 / np.abs(np.fft.rfft(self.lpc_polynomial(sample_rate), n=frame_size))
        return v / v.sum()

    def note(self, duration: float, sample_rate: int, rng, f0: float | None = None) -> AudioSignal:
        n = int(round(duration * sample_rate))
        t = np.arange(n) / sample_rate
        onset = np.minimum(t / max(self.attack, 1e-6), 1.0)
        if self.kind == "harmonic":
            if f0 is None:
                lo, hi = np.log2(self.pitch_range[0]), np.log2(self.pitch_range[1])
                f0 = 2.0 ** (lo + (hi - lo) * rng.integers(0, 25) / 24.0)
            n_harm = max(1, int(0.45 * sample_rate / f0))
            fk = f0 * np.arange(1, n_harm + 1)
            phases = rng.uniform(0, 2 * np.pi, n_harm)
            # upper partials die out faster, so the spectrum changes over the note
            rates = self.decay * (1.0 + self.brightness_decay * fk / 1000.0)
            partials = np.cos(2 * np.pi * np.outer(fk, t) + phases[:, None])
            exc = np.sum(partials * np.exp(-np.outer(rates, t)), axis=0) / np.sqrt(n_harm)
            burst = rng.standard_normal(n) * np.exp(-t / self.transient)
            exc = exc + self.transient_level * burst
            amp = onset
        elif self.kind == "percussive":
            exc = rng.standard_normal(n)
            amp = onset * np.exp(-self.decay * t)
        else:
            raise ValueError(f"unknown instrument kind {self.kind!r}")
        fade = min(n, int(0.01 * sample_rate))
        if fade:
            amp[-fade:] *= np.linspace(1.0, 0.0, fade)
        detune = np.exp(self.jitter * rng.standard_normal(len(self.formants)))
        y = lfilter([1.0], self.lpc_polynomial(sample_rate, detune), exc * amp)
        y /= np.max(np.abs(y)) + 1e-12
        return AudioSignal(0.5 * y, sample_rate)


INSTRUMENTS = {
    "low": SyntheticInstrument("low", ((350.0, 120.0), (900.0, 200.0)), "harmonic", (98.0, 392.0)),
    "high": SyntheticInstrument("high", ((2600.0, 300.0), (4200.0, 400.0)), "harmonic", (196.0, 784.0)),
    "mid": SyntheticInstrument("mid", ((1300.0, 200.0), (2000.0, 300.0)), "harmonic", (147.0, 587.0)),
    "snare": SyntheticInstrument("snare", ((1800.0, 1500.0), (5000.0, 2500.0)), "percussive", decay=12.0),
}

# instrument pairs cycled through by SyntheticSuite
DEFAULT_PAIRS = (("low", "mid"), ("mid", "high"), ("low", "high"), ("low", "snare"), ("mid", "snare"))


def synthetic_clips(instrument: SyntheticInstrument, n_clips: int, sample_rate: int,
                    seed=None, duration: float = 0.8) -> List[AudioSignal]:
    rng = np.random.default_rng(seed)
    return [instrument.note(duration, sample_rate, rng) for _ in range(n_clips)]


def load_clip_dir(path) -> Dict[str, List[AudioSignal]]:
    """``{instrument: [clips]}`` from one subdirectory of WAV files per instrument."""
    root = Path(path)
    out = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        wavs = sorted(sub.glob("*.wav"))
        if wavs:
            out[sub.name] = [read_wav(w) for w in wavs]
    if not out:
        raise ValueError(f"no instrument subdirectories with WAV clips under {root}")
    return out


def concatenate(clips: Sequence[AudioSignal]) -> AudioSignal:
    return AudioSignal(np.concatenate([c.samples for c in clips]), clips[0].sample_rate)


# --------------------------------------------------------------------------
# mixtures

@dataclass
class MixtureSpec:
    """Random placement of note clips; one list of clips per instrument.

    With ``repeat_clip`` set for an instrument (unpitched sounds), a single
    clip is chosen and repeated ``notes_per_instrument`` times.
    """

    note_clips: List[List[AudioSignal]]
    duration: float = 10.0
    notes_per_instrument: int = 10
    gain_mode: str = "equal_energy"
    seed: int = 0
    repeat_clip: Sequence[bool] | None = None


def generate_mixture(spec: MixtureSpec):
    """Return ``(mixture, ground_truth)``; the ground-truth tracks sum to the mixture."""
    if not spec.note_clips:
        raise ValueError("need at least one instrument")
    sr = spec.note_clips[0][0].sample_rate
    n = int(round(spec.duration * sr))
    rng = np.random.default_rng(spec.seed)
    tracks = []
    for i, clips in enumerate(spec.note_clips):
        if not clips:
            raise ValueError(f"instrument {i} has no clips")
        if any(len(c) > n for c in clips):
            raise ValueError("clip longer than mixture duration")
        if any(c.sample_rate != sr for c in clips):
            raise ValueError("all clips must share one sample rate")
        repeat = bool(spec.repeat_clip[i]) if spec.repeat_clip is not None else False
        track = np.zeros(n)
        fixed = int(rng.integers(len(clips))) if repeat else None
        for _ in range(spec.notes_per_instrument):
            clip = clips[fixed if repeat else int(rng.integers(len(clips)))].samples
            onset = int(rng.integers(0, n - len(clip) + 1))
            track[onset:onset + len(clip)] += clip
        tracks.append(track)

    if spec.gain_mode != "equal_energy":
        raise ValueError(f"unknown gain mode {spec.gain_mode!r}")
    energies = np.array([np.sum(t ** 2) for t in tracks])
    if np.any(energies <= 0):
        raise ValueError("silent instrument track")
    target = energies.max()
    tracks = [t * np.sqrt(target / e) for t, e in zip(tracks, energies)]
    truth = [AudioSignal(t, sr) for t in tracks]
    mixture = AudioSignal(np.sum(tracks, axis=0), sr)
    return mixture, truth


@dataclass
class SyntheticSuite:
    """Reproducible set of two-instrument mixtures built from synthetic instruments.

    Each mixture gets its own fresh note clips for the test signal and an
    independent clip set for envelope training.
    """

    pairs: Sequence[Sequence[str]] = DEFAULT_PAIRS
    n_mixtures: int = 20
    sample_rate: int = 22050
    duration: float = 10.0
    notes_per_instrument: int = 10
    clips_per_instrument: int = 10
    note_duration: float = 0.8
    seed: int = 0

    def build(self) -> list:
        """List of ``(mixture, ground_truth, training_clips)`` tuples."""
        out = []
        root = np.random.SeedSequence(self.seed)
        for m, child in enumerate(root.spawn(self.n_mixtures)):
            insts = [INSTRUMENTS[name] for name in self.pairs[m % len(self.pairs)]]
            test_seed, train_seed, mix_seed = child.spawn(3)
            trs = test_seed.spawn(len(insts))
            tns = train_seed.spawn(len(insts))
            clips = [synthetic_clips(ins, self.clips_per_instrument, self.sample_rate, s,
                                     self.note_duration) for ins, s in zip(insts, trs)]
            train = [concatenate(synthetic_clips(ins, self.clips_per_instrument,
                                                 self.sample_rate, s, self.note_duration))
                     for ins, s in zip(insts, tns)]
            spec = MixtureSpec(clips, self.duration, self.notes_per_instrument,
                               seed=int(mix_seed.generate_state(1)[0]),
                               repeat_clip=[ins.kind == "percussive" for ins in insts])
            mix, truth = generate_mixture(spec)
            out.append((mix, truth, train))
        return out


# --------------------------------------------------------------------------
# sweeps

SWEEP_VARIABLES = {
    "p": "p",
    "bases": "bases_per_instrument",
    "init_mode": "init_mode",
    "alpha_schedule": "alpha_step",
}

CSV_HEADER = ["row", "mode", "variable", "value", "mixture", "repetition", "seed",
              "source", "permuted_ref", "SDR", "SIR", "SAR", "error"]


@dataclass
class SweepSpec:
    variable: str
    values: list
    repetitions: int = 1
    mode: str = "blind"
    workers: int = 1

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"unknown sweep variable {self.variable!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")


def run_cell(mode: str, config: SeparationConfig, mixture, truth, clips, audio_dir=None):
    """Separate one mixture and score it; returns a :class:`metrics.MetricsReport`.

    With ``audio_dir`` the separated sources and run manifest are written there.
    """
    result = separate(mode, mixture, config, clips=clips, n_instruments=len(truth))
    if audio_dir is not None:
        result.write(audio_dir)
    return metrics.evaluate_permuted(result.sources, truth)


def _cell(args):
    mode, config, mixture, truth, clips, audio_dir = args
    try:
        return run_cell(mode, config, mixture, truth, clips, audio_dir), ""
    except Exception as exc:  # recorded in the report, sweep continues
        logger.exception("sweep cell failed")
        return None, f"{type(exc).__name__}: {exc}"


def _coerce(variable, value):
    if variable == "bases":
        return int(value)
    if variable == "init_mode":
        return str(value)
    return float(value)


def run_sweep(sweep: SweepSpec, base_config: SeparationConfig, mixtures: Sequence,
              audio_dir=None) -> str:
    """Run every (value, mixture, repetition) cell and return the CSV report.

    ``mixtures`` holds ``(mixture, ground_truth, training_clips)`` tuples.
    Per-source rows come first in cell order, followed by one ``mean`` row per
    value. Seeds are ``base_config.seed + repetition``. With ``audio_dir``,
    cell ``n`` writes its sources to ``audio_dir/cell_<n>``.
    """
    key = SWEEP_VARIABLES[sweep.variable]
    cells, jobs = [], []
    for value in sweep.values:
        cfg = base_config.replace(**{key: _coerce(sweep.variable, value)})
        for m, (mix, truth, clips) in enumerate(mixtures):
            for rep in range(sweep.repetitions):
                seed = base_config.seed + rep
                out = None if audio_dir is None else Path(audio_dir) / f"cell_{len(cells):04d}"
                cells.append((value, m, rep, seed))
                jobs.append((sweep.mode, cfg.replace(seed=seed), mix, truth, clips, out))

    if sweep.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(sweep.workers) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    row = 0
    summary = {v: [] for v in map(str, sweep.values)}
    for (value, m, rep, seed), (report, err) in zip(cells, results):
        if report is None:
            w.writerow([row, sweep.mode, sweep.variable, value, m, rep, seed,
                        "", "", "", "", "", err])
            row += 1
            continue
        for i, j, s1, s2, s3 in report.rows():
            w.writerow([row, sweep.mode, sweep.variable, value, m, rep, seed, i, j,
                        f"{s1:.6f}", f"{s2:.6f}", f"{s3:.6f}", ""])
            summary[str(value)].append((s1, s2, s3))
            row += 1
    for value in sweep.values if cells else ():
        vals = np.array(summary[str(value)]).reshape(-1, 3)
        means = vals.mean(axis=0) if len(vals) else [np.nan] * 3
        w.writerow([row, sweep.mode, sweep.variable, value, "mean", "", "", "", "",
                    f"{means[0]:.6f}", f"{means[1]:.6f}", f"{means[2]:.6f}", ""])
        row += 1
    return buf.getvalue()


def read_sweep_csv(text: str) -> list:
    return list(csv.DictReader(io.StringIO(text)))


def mean_sdr(mode: str, config: SeparationConfig, suite: Sequence, seeds: Sequence[int]) -> float:
    """Mean SDR over every mixture in ``suite`` (seed ``seeds[i % len(seeds)]``)."""
    scores = []
    for i, (mix, truth, clips) in enumerate(suite):
        cfg = config.replace(seed=seeds[i % len(seeds)])
        scores.extend(run_cell(mode, cfg, mix, truth, clips).sdr)
    return float(np.mean(scores))
