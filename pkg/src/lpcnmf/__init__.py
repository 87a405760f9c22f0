"""Monaural instrument separation with LPC spectral-envelope constrained KL-NMF."""
from .constraint import ConstraintSchedule, apply_blind, apply_informed
from .lpc import (LpcModel, autocorr_from_magnitude, envelope_from_lpc, levinson_durbin,
                  split_basis, train_true_envelope)
from .metrics import decompose, evaluate_permuted, sar, sdr, sir
from .nmf import Partition, init_bases, kl_divergence
from .separation import (SeparationConfig, SeparationResult, reconstruct_sources,
                         separate, separate_baseline, separate_blind, separate_informed)
from .spectrogram import AudioSignal, istft, magnitude, masked_reconstruct, read_wav, stft, write_wav

__version__ = "0.1.0"
