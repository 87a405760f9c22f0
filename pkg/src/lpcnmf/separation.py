"""End-to-end separation of a mono mixture into instrument tracks."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence

import numpy as np

from . import constraint as cons
from . import nmf
from .lpc import train_true_envelope
from .spectrogram import (AudioSignal, MagnitudeSpectrogram, istft, magnitude,
                          masked_reconstruct, stft)

logger = logging.getLogger(__name__)

MODES = ("informed", "blind", "baseline")


@dataclass(frozen=True)
class SeparationConfig:
    sample_rate: int = 44100
    frame_size: int = 4096
    hop_size: int = 1024
    iterations: int = 100
    bases_per_instrument: int = 40
    lpc_order: int = 4
    init_mode: str = "normal"
    schedule: cons.ConstraintSchedule = field(default_factory=cons.ConstraintSchedule)
    reconstruction_mode: str = "soft_mask"
    seed: int = 0

    def __post_init__(self):
        for name in ("sample_rate", "frame_size", "hop_size", "iterations",
                     "bases_per_instrument", "lpc_order"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lpc_order > 32:
            raise ValueError("lpc_order must be at most 32")
        if self.init_mode not in ("normal", "sparse"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.reconstruction_mode not in ("direct", "soft_mask"):
            raise ValueError(f"unknown reconstruction_mode {self.reconstruction_mode!r}")

    def replace(self, **changes) -> "SeparationConfig":
        """Copy with changes; schedule fields (alpha_step, beta, p, ...) are accepted too."""
        sched_fields = {f.name for f in dataclasses.fields(cons.ConstraintSchedule)}
        sched = {k: changes.pop(k) for k in list(changes) if k in sched_fields}
        if sched:
            changes["schedule"] = dataclasses.replace(self.schedule, **sched)
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.update(d.pop("schedule"))
        return d


@dataclass
class SeparationResult:
    sources: List[AudioSignal]
    per_source_spectrograms: List[MagnitudeSpectrogram]
    divergence_trace: List[float]
    config_echo: SeparationConfig
    mode: str = "informed"
    W: np.ndarray | None = field(default=None, repr=False)
    H: np.ndarray | None = field(default=None, repr=False)

    def write(self, out_dir, prefix: str = "source") -> List[Path]:
        """Write one WAV per source plus ``manifest.txt`` and ``divergence.csv``."""
        from .spectrogram import write_wav

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, src in enumerate(self.sources):
            p = out / f"{prefix}_{i:02d}.wav"
            write_wav(p, src)
            paths.append(p)
        with open(out / "manifest.txt", "w") as fh:
            fh.write(f"mode={self.mode}\n")
            for k, v in self.config_echo.as_dict().items():
                fh.write(f"{k}={v}\n")
            fh.write(f"n_sources={len(self.sources)}\n")
            fh.write(f"final_divergence={self.divergence_trace[-1]!r}\n")
        with open(out / "divergence.csv", "w") as fh:
            fh.write("iteration,kl_divergence\n")
            for i, d in enumerate(self.divergence_trace):
                fh.write(f"{i},{d!r}\n")
        return paths


def reconstruct_sources(W, H, partition: nmf.Partition) -> List[np.ndarray]:
    """Per-group products ``W[:, g] @ H[g]``; they sum to ``W @ H``."""
    return [W[:, idx] @ H[idx] for idx in partition]


def _check_mixture(mixture: AudioSignal, config: SeparationConfig):
    if len(mixture) == 0:
        raise ValueError("mixture is empty")
    if mixture.sample_rate != config.sample_rate:
        logger.warning("mixture sample rate %d differs from config %d",
                       mixture.sample_rate, config.sample_rate)


def _factorize(X, n_instruments, config, constraint):
    F = X.shape[0]
    K = n_instruments * config.bases_per_instrument
    ss = np.random.SeedSequence(config.seed)
    w_seed, h_seed = ss.spawn(2)
    W = nmf.init_bases(F, K, config.init_mode, w_seed)
    H = nmf.init_activations(X, K, h_seed)
    partition = nmf.Partition.contiguous(n_instruments, config.bases_per_instrument)
    state = nmf.factorize(X, W, H, config.iterations,
                          constraint=constraint(partition) if constraint else None)
    return state, partition


def _finish(mixture, spec, state, partition, config, mode) -> SeparationResult:
    parts = reconstruct_sources(state.W, state.H, partition)
    mags = [MagnitudeSpectrogram(np.maximum(P, 0.0), spec.frame_size, spec.hop_size,
                                 spec.sample_rate, spec.length) for P in parts]
    complex_parts = masked_reconstruct(mags, spec, config.reconstruction_mode)
    sources = [istft(c, len(mixture)) for c in complex_parts]
    return SeparationResult(sources, mags, state.divergence, config, mode, state.W, state.H)


def separate_informed(mixture: AudioSignal, instrument_clips: Sequence[AudioSignal],
                      config: SeparationConfig = SeparationConfig()) -> SeparationResult:
    """Separate using envelopes trained from one example clip per instrument."""
    if len(instrument_clips) < 2:
        raise ValueError("informed separation needs at least two instrument clips")
    _check_mixture(mixture, config)
    envelopes = [train_true_envelope(c, config.frame_size, config.hop_size, config.lpc_order)
                 for c in instrument_clips]
    return separate_with_envelopes(mixture, envelopes, config)


def separate_with_envelopes(mixture: AudioSignal, envelopes: Sequence[np.ndarray],
                            config: SeparationConfig = SeparationConfig()) -> SeparationResult:
    """Informed separation from already-trained envelopes."""
    if len(envelopes) < 2:
        raise ValueError("informed separation needs at least two instruments")
    _check_mixture(mixture, config)
    spec = stft(mixture, config.frame_size, config.hop_size)
    X = magnitude(spec).values
    sched = config.schedule

    def make(partition):
        def apply(it, W, H):
            return cons.apply_informed(W, envelopes, partition, sched.alpha_of(it),
                                       config.lpc_order)
        return apply

    state, partition = _factorize(X, len(envelopes), config, make)
    return _finish(mixture, spec, state, partition, config, "informed")


def separate_blind(mixture: AudioSignal, n_instruments: int,
                   config: SeparationConfig = SeparationConfig()) -> SeparationResult:
    """Separate with group-averaged envelopes; output order is arbitrary."""
    if n_instruments < 2:
        raise ValueError("blind separation needs at least two instruments")
    _check_mixture(mixture, config)
    spec = stft(mixture, config.frame_size, config.hop_size)
    X = magnitude(spec).values
    sched = config.schedule

    def make(partition):
        def apply(it, W, H):
            return cons.apply_blind(W, H, partition, sched.beta, sched.p, config.lpc_order)
        return apply

    state, partition = _factorize(X, n_instruments, config, make)
    return _finish(mixture, spec, state, partition, config, "blind")


def separate_baseline(mixture: AudioSignal, n_instruments: int,
                      config: SeparationConfig = SeparationConfig()) -> SeparationResult:
    """Plain KL-NMF with the same contiguous grouping and no envelope constraint."""
    if n_instruments < 2:
        raise ValueError("separation needs at least two instruments")
    _check_mixture(mixture, config)
    spec = stft(mixture, config.frame_size, config.hop_size)
    X = magnitude(spec).values
    state, partition = _factorize(X, n_instruments, config, None)
    return _finish(mixture, spec, state, partition, config, "baseline")


def separate(mode: str, mixture: AudioSignal, config: SeparationConfig, *,
             clips: Sequence[AudioSignal] | None = None,
             n_instruments: int | None = None) -> SeparationResult:
    if mode == "informed":
        if clips is None:
            raise ValueError("informed mode needs instrument clips")
        return separate_informed(mixture, clips, config)
    if n_instruments is None:
        n_instruments = len(clips) if clips else 2
    if mode == "blind":
        return separate_blind(mixture, n_instruments, config)
    if mode == "baseline":
        return separate_baseline(mixture, n_instruments, config)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
