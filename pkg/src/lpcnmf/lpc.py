"""All-pole spectral envelopes from magnitude spectra.

The envelope of a nonnegative one-sided magnitude vector is obtained without
going back to the time domain: the squared magnitude is mirrored into a
Hermitian power spectrum whose inverse FFT gives the autocorrelation, the
Yule-Walker system is solved with the Levinson-Durbin recursion, and the
all-pole magnitude response is evaluated on the FFT grid.

Most functions accept a single vector or a stack of column vectors (axis 0 is
frequency/lag), which is how the factorization code calls them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

EPS = 1e-12
SPECTRAL_FLOOR = 1e-12
MAX_ORDER = 32


@dataclass
class LpcModel:
    """Order-M predictor ``y[n] ~ sum_m coeffs[m-1] * y[n-m]``.

    ``coeffs`` has shape ``(M,)`` or ``(M, K)`` for a batch of K models.
    ``gain`` is filled in by :func:`envelope_from_lpc`.
    """

    coeffs: np.ndarray
    error: np.ndarray | float | None = None
    gain: np.ndarray | float | None = None
    flagged: np.ndarray | bool = False

    @property
    def order(self) -> int:
        return self.coeffs.shape[0]

    def polynomial(self) -> np.ndarray:
        """Inverse-filter polynomial ``(1, -a_1, ..., -a_M)``."""
        one = np.ones((1,) + self.coeffs.shape[1:])
        return np.concatenate([one, -self.coeffs], axis=0)


@dataclass
class SplitBasis:
    envelope: np.ndarray
    excitation: np.ndarray
    model: LpcModel = field(repr=False, default=None)


def autocorr_from_magnitude(mag, order: int) -> np.ndarray:
    """Autocorrelation lags ``0..order`` of the signal whose spectrum is ``mag``.

    Parameters
    ----------
    mag : np.ndarray, shape (F,) or (F, K)
        One-sided magnitude spectrum (or spectra, column-wise), with
        ``F = frame_size // 2 + 1``.
    order : int
        LPC order M; ``order + 1`` lags are returned.

    Returns
    -------
    np.ndarray, shape (order + 1,) or (order + 1, K)
    """
    mag = np.asarray(mag, dtype=np.float64)
    F = mag.shape[0]
    if order < 1:
        raise ValueError("LPC order must be at least 1")
    if order >= F:
        raise ValueError(f"LPC order {order} must be smaller than the bin count {F}")
    if np.any(mag < 0):
        raise ValueError("magnitude spectrum must be nonnegative")
    peak = mag.max(axis=0)
    if np.any(peak <= 0):
        raise ValueError("cannot take the envelope of an all-zero spectrum")
    floored = mag + SPECTRAL_FLOOR * peak
    n_fft = 2 * (F - 1)
    r = np.fft.irfft(floored ** 2, n=n_fft, axis=0)
    return r[:order + 1]


def levinson_durbin(r) -> LpcModel:
    """Solve the Toeplitz Yule-Walker system ``R a = r[1:]`` in O(M^2).

    Parameters
    ----------
    r : np.ndarray, shape (M + 1,) or (M + 1, K)
        Autocorrelation lags, ``r[0] > 0``.

    Returns
    -------
    LpcModel
        With ``error`` set to the final prediction-error power. Models whose
        error power collapsed during the recursion are clamped at ``EPS * r[0]``
        and marked in ``flagged``.
    """
    r = np.asarray(r, dtype=np.float64)
    single = r.ndim == 1
    if single:
        r = r[:, None]
    M = r.shape[0] - 1
    if M < 1:
        raise ValueError("need at least two autocorrelation lags")
    if np.any(r[0] <= 0):
        raise ValueError("r[0] must be positive")

    K = r.shape[1]
    a = np.zeros((M, K))
    err = r[0].copy()
    floor = EPS * r[0]
    flagged = np.zeros(K, dtype=bool)
    for i in range(M):
        acc = r[i + 1] - np.einsum("jk,jk->k", a[:i], r[i:0:-1]) if i else r[1].copy()
        k = acc / err
        prev = a[:i].copy()
        a[:i] = prev - k * prev[::-1]
        a[i] = k
        err = err * (1.0 - k * k)
        bad = err <= floor
        if np.any(bad):
            flagged |= bad
            err = np.where(bad, floor, err)
    if np.any(flagged):
        logger.debug("levinson_durbin: %d degenerate model(s) clamped", int(flagged.sum()))

    if single:
        return LpcModel(a[:, 0], float(err[0]), flagged=bool(flagged[0]))
    return LpcModel(a, err, flagged=flagged)


def inverse_filter_response(model: LpcModel, frame_size: int) -> np.ndarray:
    """``|1 - sum_m a_m exp(-2j pi f m / frame_size)|`` for ``f = 0..F-1``."""
    return np.abs(np.fft.rfft(model.polynomial(), n=frame_size, axis=0))


def envelope_from_lpc(model: LpcModel, F: int, frame_size: int | None = None) -> np.ndarray:
    """All-pole magnitude envelope, L1-normalized over the F bins.

    Sets ``model.gain`` to the normalization constant.
    """
    if frame_size is None:
        frame_size = 2 * (F - 1)
    if F != frame_size // 2 + 1:
        raise ValueError("F must equal frame_size // 2 + 1")
    denom = inverse_filter_response(model, frame_size)
    low = denom < EPS
    if np.any(low):
        logger.debug("envelope_from_lpc: pole on the unit circle, flooring")
        denom = np.maximum(denom, EPS)
        model.flagged = np.logical_or(model.flagged, low.any(axis=0))
    inv = 1.0 / denom
    gain = 1.0 / inv.sum(axis=0)
    model.gain = gain
    return inv * gain


def split_basis(w, order: int = 4) -> SplitBasis:
    """Split basis column(s) into envelope and excitation with ``env * exc == w``."""
    w = np.asarray(w, dtype=np.float64)
    F = w.shape[0]
    model = levinson_durbin(autocorr_from_magnitude(w, order))
    env = envelope_from_lpc(model, F)
    return SplitBasis(env, w / env, model)


def basis_envelopes(W, order: int = 4) -> np.ndarray:
    """Envelopes of every column of ``W`` (shape ``(F, K)``)."""
    W = np.asarray(W, dtype=np.float64)
    model = levinson_durbin(autocorr_from_magnitude(W, order))
    return envelope_from_lpc(model, W.shape[0])


def train_true_envelope(clip, frame_size: int = 4096, hop_size: int = 1024,
                        order: int = 4, energy_floor: float = 1e-10) -> np.ndarray:
    """Instrument envelope from an example recording.

    Each frame's envelope is weighted by the frame's L1 magnitude, and the
    weighted sum is renormalized to unit L1 norm. Frames with L1 magnitude
    below ``energy_floor`` are ignored.
    """
    from .spectrogram import magnitude, stft

    if len(clip) < frame_size:
        raise ValueError("training clip must be at least one frame long")
    X = magnitude(stft(clip, frame_size, hop_size)).values
    return envelope_from_frames(X, order, energy_floor)


def envelope_from_frames(X, order: int = 4, energy_floor: float = 1e-10) -> np.ndarray:
    """L1-weighted mean of per-column envelopes of the magnitude matrix ``X``."""
    X = np.asarray(X, dtype=np.float64)
    norms = X.sum(axis=0)
    keep = norms > energy_floor
    if not np.any(keep):
        raise ValueError("training clip is silent")
    env = basis_envelopes(X[:, keep], order)
    mean = env @ norms[keep]
    return mean / mean.sum()
