"""Bundled demonstration data.

Real recordings (e.g. MIT-BIH) must be converted by the user; see README.
For tests and demos the package ships a freely redistributable synthetic
ECG excerpt generated by :func:`synthetic_ecg` (quasi-periodic beats plus
baseline wander, power-line hum and measurement noise) stored as a
single-column int16 CSV at 360 Hz with a 0.005 mV/count gain.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

EXCERPT_FILENAME = "ecg_excerpt_360hz.csv"
EXCERPT_SAMPLE_RATE_HZ = 360.0
EXCERPT_GAIN_MV = 0.005  # 200 counts per millivolt
EXCERPT_SEED = 2024
EXCERPT_SECONDS = 180.0


def _gauss(t, center, width):
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def synthetic_ecg(n_samples: int, fs: float = 360.0, seed: int = 0,
                  heart_rate_bpm: float = 75.0, rate_jitter: float = 0.015,
                  amp_jitter: float = 0.04, wander_amp: float = 0.04,
                  powerline_amp: float = 0.005, powerline_hz: float = 60.0,
                  noise_amp: float = 0.002) -> np.ndarray:
    """Quasi-periodic ECG-like waveform in millivolts.

    Each beat is a fixed P-QRS-T template with per-beat amplitude jitter and
    slightly jittered onsets; wander stays below 0.5 Hz so the default
    band-pass removes it.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / fs
    x = np.zeros(n_samples)

    period = 60.0 / heart_rate_bpm
    center = 0.4
    while center < n_samples / fs + period:
        amp = 1.0 + amp_jitter * rng.standard_normal()
        lo = max(0, int((center - 0.45) * fs))
        hi = min(n_samples, int((center + 0.55) * fs))
        if hi > lo:
            tb = t[lo:hi] - center
            beat = (0.15 * _gauss(tb, -0.19, 0.022)
                    - 0.10 * _gauss(tb, -0.025, 0.008)
                    + 1.00 * _gauss(tb, 0.0, 0.009)
                    - 0.20 * _gauss(tb, 0.028, 0.010)
                    + 0.30 * _gauss(tb, 0.30, 0.060))
            x[lo:hi] += amp * beat
        center += period * (1.0 + rate_jitter * rng.standard_normal())

    x += wander_amp * np.sin(2 * np.pi * 0.25 * t + rng.uniform(0, 2 * np.pi))
    x += 0.6 * wander_amp * np.sin(2 * np.pi * 0.11 * t + rng.uniform(0, 2 * np.pi))
    x += powerline_amp * np.sin(2 * np.pi * powerline_hz * t + rng.uniform(0, 2 * np.pi))
    x += noise_amp * rng.standard_normal(n_samples)
    return x


def make_excerpt_counts(seconds: float = EXCERPT_SECONDS,
                        seed: int = EXCERPT_SEED) -> np.ndarray:
    """int16 counts of the bundled excerpt (used to regenerate the CSV)."""
    n = int(round(seconds * EXCERPT_SAMPLE_RATE_HZ))
    mv = synthetic_ecg(n, fs=EXCERPT_SAMPLE_RATE_HZ, seed=seed)
    return np.round(mv / EXCERPT_GAIN_MV).astype(np.int16)


def excerpt_path() -> str:
    """Filesystem path of the bundled ECG excerpt CSV."""
    return str(resources.files("csodl").joinpath("data", EXCERPT_FILENAME))
