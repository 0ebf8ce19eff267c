"""Server-side training-data cleaning and segmentation.

The notch + band-pass chain runs on the continuous record before it is cut
into epochs, so the learned atoms are free of power-line interference,
baseline wander and high-frequency noise. Both filters run forward-backward
(zero phase); training is offline so the non-causal pass is free.

Default frequencies are standard ECG choices for a 360 Hz recording with US
power-line interference; all of them are configurable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .core import Epoch


@dataclass(frozen=True)
class FilterSpec:
    sample_rate_hz: float = 360.0
    notch_freq_hz: float = 60.0
    notch_bandwidth_hz: float = 2.0
    bandpass_low_hz: float = 0.5
    bandpass_high_hz: float = 40.0
    filter_order: int = 2

    def __post_init__(self):
        nyq = self.sample_rate_hz / 2.0
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if not (0 < self.bandpass_low_hz < self.bandpass_high_hz < nyq):
            raise ValueError(
                "need 0 < bandpass_low < bandpass_high < sample_rate/2")
        if not (0 < self.notch_freq_hz < nyq):
            raise ValueError("notch_freq_hz must lie below Nyquist")
        if self.notch_bandwidth_hz <= 0:
            raise ValueError("notch_bandwidth_hz must be positive")
        if self.filter_order < 1:
            raise ValueError("filter_order must be >= 1")


def _min_length(ntaps: int) -> int:
    # filtfilt pads 3 * (max(len(a), len(b)) - 1) samples on each side
    return 3 * (ntaps - 1) + 1


def notch_filter(x, spec: FilterSpec) -> np.ndarray:
    """Remove the power-line tone; zero-phase second-order IIR notch."""
    x = np.asarray(x, dtype=np.float64)
    q = spec.notch_freq_hz / spec.notch_bandwidth_hz
    b, a = sps.iirnotch(spec.notch_freq_hz, q, fs=spec.sample_rate_hz)
    need = _min_length(max(len(a), len(b)))
    if x.size < need:
        raise ValueError(f"signal too short for notch warm-up ({x.size} < {need})")
    return sps.filtfilt(b, a, x)


def bandpass_filter(x, spec: FilterSpec) -> np.ndarray:
    """Remove baseline wander and high-frequency noise; zero-phase Butterworth."""
    x = np.asarray(x, dtype=np.float64)
    sos = sps.butter(spec.filter_order,
                     [spec.bandpass_low_hz, spec.bandpass_high_hz],
                     btype="bandpass", fs=spec.sample_rate_hz, output="sos")
    need = _min_length(2 * spec.filter_order + 1)
    if x.size < need:
        raise ValueError(f"signal too short for band-pass warm-up ({x.size} < {need})")
    return sps.sosfiltfilt(sos, x)


def clean(x, spec: FilterSpec) -> np.ndarray:
    """Full training-data chain: notch then band-pass."""
    return bandpass_filter(notch_filter(x, spec), spec)


def segment(x, n: int, filtered: bool = False):
    """Cut a record into consecutive non-overlapping epochs of length n.

    Returns (epochs, n_dropped); the trailing remainder is dropped, not
    padded.
    """
    if n < 1:
        raise ValueError("epoch length n must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    count = x.size // n
    dropped = int(x.size - count * n)
    epochs = [Epoch(x[i * n:(i + 1) * n], filtered=filtered)
              for i in range(count)]
    return epochs, dropped


def split_dataset(epochs, counts, seed: int):
    """Seeded random partition into (init, train, test) without replacement.

    ``counts`` is (n_init, n_train); the test set is the remainder. The same
    seed always reproduces the identical partition.
    """
    n_init, n_train = counts
    if n_init < 0 or n_train < 0:
        raise ValueError("split counts must be nonnegative")
    if n_init + n_train > len(epochs):
        raise ValueError(
            f"split counts {n_init}+{n_train} exceed {len(epochs)} epochs")
    order = np.random.default_rng(seed).permutation(len(epochs))
    init_idx = order[:n_init]
    train_idx = order[n_init:n_init + n_train]
    test_idx = order[n_init + n_train:]
    pick = lambda idx: [epochs[i] for i in idx]
    return pick(init_idx), pick(train_idx), pick(test_idx)


def split_indices(n_epochs: int, counts, seed: int):
    """Index-level variant of split_dataset, for pairing two segmentations
    of the same record (e.g. raw and filtered) under one partition."""
    n_init, n_train = counts
    if n_init + n_train > n_epochs:
        raise ValueError(
            f"split counts {n_init}+{n_train} exceed {n_epochs} epochs")
    order = np.random.default_rng(seed).permutation(n_epochs)
    return (order[:n_init], order[n_init:n_init + n_train],
            order[n_init + n_train:])
