"""Short-time Fourier analysis/synthesis and WAV I/O.

All spectra are one-sided (``F = frame_size // 2 + 1``) and computed with a
periodic Hann window. Signals are zero-padded by ``frame_size // 2`` at both
ends so that every sample lies under full windows; synthesis trims the padding
again.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import scipy.io.wavfile

logger = logging.getLogger(__name__)

EPS = 1e-12


@dataclass(frozen=True)
class AudioSignal:
    """Mono audio signal."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioSignal must be mono (1-D samples)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioSignal samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    bins: np.ndarray
    frame_size: int
    hop_size: int
    sample_rate: int
    length: int | None = None  # original signal length in samples

    def __post_init__(self):
        _check_geometry(self.bins.shape, self.frame_size, self.hop_size)

    @property
    def shape(self):
        return self.bins.shape


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    values: np.ndarray
    frame_size: int
    hop_size: int
    sample_rate: int
    length: int | None = None

    def __post_init__(self):
        _check_geometry(self.values.shape, self.frame_size, self.hop_size)
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("magnitude values must be finite and nonnegative")

    @property
    def shape(self):
        return self.values.shape


def _check_geometry(shape, frame_size, hop_size):
    if len(shape) != 2:
        raise ValueError("spectrogram must be a 2-D (F x T) matrix")
    if shape[0] != frame_size // 2 + 1:
        raise ValueError(
            f"expected {frame_size // 2 + 1} frequency bins for frame size "
            f"{frame_size}, got {shape[0]}"
        )
    if hop_size <= 0 or hop_size > frame_size or frame_size % hop_size:
        raise ValueError("hop_size must divide frame_size")


def hann(frame_size: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(frame_size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_size)


def n_frames(length: int, frame_size: int, hop_size: int) -> int:
    """Number of frames covering ``length`` samples after centre padding."""
    return 1 + (length + 2 * (frame_size // 2) - frame_size + hop_size - 1) // hop_size


def stft(signal: AudioSignal, frame_size: int = 4096, hop_size: int = 1024) -> ComplexSpectrogram:
    """Windowed one-sided STFT.

    Parameters
    ----------
    signal : AudioSignal
    frame_size : int
        FFT length, must be a power of two.
    hop_size : int
        Frame advance in samples; must divide ``frame_size``.

    Returns
    -------
    ComplexSpectrogram
        ``bins`` has shape ``(frame_size // 2 + 1, T)``; frame ``t`` is centred
        on sample ``t * hop_size`` of the original signal.
    """
    x = signal.samples
    if len(x) == 0:
        raise ValueError("cannot analyse an empty signal")
    if frame_size <= 0 or frame_size & (frame_size - 1):
        raise ValueError(f"frame_size must be a power of two, got {frame_size}")
    if hop_size <= 0 or hop_size > frame_size or frame_size % hop_size:
        raise ValueError("hop_size must be positive and divide frame_size")

    pad = frame_size // 2
    T = n_frames(len(x), frame_size, hop_size)
    total = (T - 1) * hop_size + frame_size
    padded = np.zeros(total)
    padded[pad:pad + len(x)] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame_size)[::hop_size][:T]
    bins = np.fft.rfft(frames * hann(frame_size), axis=1).T
    return ComplexSpectrogram(np.ascontiguousarray(bins), frame_size, hop_size,
                              signal.sample_rate, len(x))


def magnitude(spec: ComplexSpectrogram) -> MagnitudeSpectrogram:
    return MagnitudeSpectrogram(np.abs(spec.bins), spec.frame_size, spec.hop_size,
                                spec.sample_rate, spec.length)


def istft(spec: ComplexSpectrogram, length: int | None = None) -> AudioSignal:
    """Weighted overlap-add inverse of :func:`stft`.

    The synthesis window is the analysis window; the squared-window overlap sum
    is divided out, so ``istft(stft(x))`` reproduces ``x``.
    """
    F, T = spec.bins.shape
    N, hop = spec.frame_size, spec.hop_size
    _check_geometry(spec.bins.shape, N, hop)
    if length is None:
        length = spec.length
    pad = N // 2
    total = (T - 1) * hop + N
    if length is None:
        length = total - 2 * pad

    win = hann(N)
    frames = np.fft.irfft(spec.bins.T, n=N, axis=1) * win
    out = np.zeros(total)
    norm = np.zeros(total)
    w2 = win ** 2
    for t in range(T):
        out[t * hop:t * hop + N] += frames[t]
        norm[t * hop:t * hop + N] += w2
    nz = norm > 1e-10
    out[nz] /= norm[nz]

    y = out[pad:pad + length]
    if len(y) < length:
        y = np.pad(y, (0, length - len(y)))
    return AudioSignal(y, spec.sample_rate)


def masked_reconstruct(estimates: Sequence[MagnitudeSpectrogram],
                       mixture: ComplexSpectrogram,
                       mode: str = "soft_mask") -> List[ComplexSpectrogram]:
    """Attach phase to per-source magnitude estimates.

    ``direct`` uses each estimate as the magnitude and borrows the mixture
    phase. ``soft_mask`` distributes the mixture bins proportionally to the
    estimates, so the outputs sum back to the mixture.
    """
    if not estimates:
        raise ValueError("need at least one estimate")
    for est in estimates:
        if est.values.shape != mixture.bins.shape or est.frame_size != mixture.frame_size \
                or est.hop_size != mixture.hop_size:
            raise ValueError("estimate geometry does not match the mixture")

    def wrap(bins):
        return ComplexSpectrogram(bins, mixture.frame_size, mixture.hop_size,
                                  mixture.sample_rate, mixture.length)

    if mode == "direct":
        phase = np.exp(1j * np.angle(mixture.bins))
        return [wrap(est.values * phase) for est in estimates]
    if mode == "soft_mask":
        total = np.sum([est.values for est in estimates], axis=0)
        # guard only empty bins so the masks sum to exactly one elsewhere
        total = np.where(total > 0, total, EPS)
        return [wrap(mixture.bins * (est.values / total)) for est in estimates]
    raise ValueError(f"unknown reconstruction mode {mode!r}")


def read_wav(path: str | os.PathLike) -> AudioSignal:
    """Read a WAV file as float64 mono in [-1, 1].

    Multi-channel files are downmixed by averaging.
    """
    sr, data = scipy.io.wavfile.read(path)
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        # scipy returns 24-bit PCM left-justified in int32
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        logger.warning("%s has %d channels; downmixing to mono", path, x.shape[1])
        x = x.mean(axis=1)
    return AudioSignal(x, int(sr))


def write_wav(path: str | os.PathLike, signal: AudioSignal, subtype: str = "float32") -> None:
    """Write a mono WAV file (``float32`` or ``pcm16``)."""
    if subtype == "float32":
        data = signal.samples.astype(np.float32)
    elif subtype == "pcm16":
        data = np.round(np.clip(signal.samples, -1.0, 32767 / 32768) * 32768).astype(np.int16)
    else:
        raise ValueError(f"unsupported WAV subtype {subtype!r}")
    scipy.io.wavfile.write(path, signal.sample_rate, data)
