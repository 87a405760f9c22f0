"""SDR / SIR / SAR with time-invariant projection filters.

The estimate is decomposed as ``s_target + e_interf + e_artif``:
``s_target`` is its orthogonal projection onto delayed copies (0..L-1 samples)
of the target reference, ``s_target + e_interf`` its projection onto delayed
copies of all references, and ``e_artif`` the remainder. The projection space
is that of full linear convolution, so the estimate is zero-padded by ``L - 1``
samples and all parts have length ``N + L - 1``.
"""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.signal import fftconvolve

logger = logging.getLogger(__name__)

DB_CAP = 120.0
FILTER_LENGTH = 512


@dataclass
class BssDecomposition:
    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray

    @property
    def estimate(self) -> np.ndarray:
        return self.s_target + self.e_interf + self.e_artif


@dataclass
class MetricsReport:
    sdr: np.ndarray
    sir: np.ndarray
    sar: np.ndarray
    permutation: tuple  # permutation[i] = reference matched to estimate i

    def rows(self):
        for i, j in enumerate(self.permutation):
            yield i, j, float(self.sdr[i]), float(self.sir[i]), float(self.sar[i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source_id", "permuted_ref", "SDR", "SIR", "SAR"])
            for i, j, a, b, c in self.rows():
                w.writerow([i, j, f"{a:.6f}", f"{b:.6f}", f"{c:.6f}"])


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def _db_ratio(num: float, den: float) -> float:
    if den <= 0:
        return DB_CAP if num > 0 else 0.0
    if num <= 0:
        return -DB_CAP
    return float(np.clip(20.0 * np.log10(num / den), -DB_CAP, DB_CAP))


class _Projector:
    """Cached Gram system for projections onto delayed references."""

    def __init__(self, references: np.ndarray, L: int):
        self.refs = references
        self.L = L
        n_src, N = references.shape
        if np.any(np.all(references == 0, axis=1)):
            raise ValueError("reference signals must be nonzero")
        n_fft = int(2 ** np.ceil(np.log2(N + L - 1)))
        self.n_fft = n_fft
        self.ref_fft = np.fft.rfft(references, n=n_fft, axis=1)
        # cross-correlations r_i(n) r_j(n - tau) for tau in -(L-1)..(L-1)
        G = np.zeros((n_src * L, n_src * L))
        for i in range(n_src):
            for j in range(i, n_src):
                xc = np.fft.irfft(self.ref_fft[i] * np.conj(self.ref_fft[j]), n=n_fft)
                lags = np.concatenate([xc[-(L - 1):], xc[:L]]) if L > 1 else xc[:1]
                # lags[L-1 + d] = sum_n r_i(n + d) r_j(n)
                d = np.arange(L)[None, :] - np.arange(L)[:, None]  # b - a
                block = lags[L - 1 + d]  # block[a, b] = <r_i shifted a, r_j shifted b>
                G[i * L:(i + 1) * L, j * L:(j + 1) * L] = block
                G[j * L:(j + 1) * L, i * L:(i + 1) * L] = block.T
        self.G = G
        self._factors = {}

    def _factor(self, sel):
        key = tuple(sel)
        if key not in self._factors:
            idx = np.concatenate([np.arange(s * self.L, (s + 1) * self.L) for s in sel])
            Gs = self.G[np.ix_(idx, idx)]
            try:
                fac = scipy.linalg.cho_factor(Gs)
                if not np.all(np.isfinite(fac[0])):
                    raise np.linalg.LinAlgError
            except np.linalg.LinAlgError:
                lam = 1e-9 * np.trace(Gs)
                logger.debug("rank-deficient projection basis; ridge %g", lam)
                fac = scipy.linalg.cho_factor(Gs + lam * np.eye(len(Gs)))
            self._factors[key] = (idx, fac)
        return self._factors[key]

    def project(self, est: np.ndarray, sel: Sequence[int]) -> np.ndarray:
        L, N = self.L, self.refs.shape[1]
        idx, fac = self._factor(sel)
        est_fft = np.fft.rfft(est, n=self.n_fft)
        D = np.empty(len(sel) * L)
        for n, s in enumerate(sel):
            xc = np.fft.irfft(est_fft * np.conj(self.ref_fft[s]), n=self.n_fft)
            D[n * L:(n + 1) * L] = xc[:L]  # <est, r_s shifted a>
        C = scipy.linalg.cho_solve(fac, D).reshape(len(sel), L)
        out = np.zeros(N + L - 1)
        for n, s in enumerate(sel):
            out += fftconvolve(self.refs[s], C[n])
        return out


def decompose(estimate, references, target_index: int,
              filter_length: int = FILTER_LENGTH, _projector=None) -> BssDecomposition:
    """Split ``estimate`` into target, interference and artifact parts."""
    est = _as_array(estimate)
    refs = np.stack([_as_array(r) for r in references])
    if refs.shape[1] != len(est):
        raise ValueError("estimate and references must have equal length")
    if not 0 <= target_index < len(refs):
        raise IndexError("target_index out of range")
    proj = _projector or _Projector(refs, filter_length)
    L = proj.L
    padded = np.concatenate([est, np.zeros(L - 1)])
    s_target = proj.project(est, [target_index])
    p_all = proj.project(est, list(range(len(refs)))) if len(refs) > 1 else s_target
    return BssDecomposition(s_target, p_all - s_target, padded - p_all)


def sdr(d: BssDecomposition) -> float:
    return _db_ratio(np.linalg.norm(d.s_target), np.linalg.norm(d.e_interf + d.e_artif))


def sir(d: BssDecomposition) -> float:
    return _db_ratio(np.linalg.norm(d.s_target), np.linalg.norm(d.e_interf))


def sar(d: BssDecomposition) -> float:
    return _db_ratio(np.linalg.norm(d.s_target + d.e_interf), np.linalg.norm(d.e_artif))


def evaluate(estimates, references, filter_length: int = FILTER_LENGTH):
    """All (estimate, reference) metric pairs as three ``(n_est, n_ref)`` arrays."""
    refs = np.stack([_as_array(r) for r in references])
    ests = [_as_array(e) for e in estimates]
    proj = _Projector(refs, filter_length)
    n = len(refs)
    out = np.zeros((3, len(ests), n))
    for i, e in enumerate(ests):
        if len(e) != refs.shape[1]:
            raise ValueError("estimate and references must have equal length")
        for j in range(n):
            d = decompose(e, refs, j, filter_length, _projector=proj)
            out[:, i, j] = sdr(d), sir(d), sar(d)
    return out


def evaluate_permuted(estimates, references, filter_length: int = FILTER_LENGTH) -> MetricsReport:
    """Metrics under the estimate-to-reference assignment with the best mean SDR."""
    if len(estimates) != len(references):
        raise ValueError("need as many estimates as references")
    if not estimates:
        raise ValueError("nothing to evaluate")
    table = evaluate(estimates, references, filter_length)
    n = len(estimates)
    best, best_score = None, -np.inf
    for perm in itertools.permutations(range(n)):
        score = np.mean(table[0, np.arange(n), perm])
        if score > best_score:
            best, best_score = perm, score
    rows = np.arange(n)
    return MetricsReport(table[0, rows, best], table[1, rows, best],
                         table[2, rows, best], tuple(int(p) for p in best))
