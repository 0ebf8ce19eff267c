"""Pre-determined reference bases: orthonormal DCT, DWT, and their union.

The joint n x 2n matrix [DCT | DWT] is the comparison baseline for the
learned dictionary: cosine atoms capture the slow periodic components,
wavelet atoms the spikes. Wavelet matrices use periodic extension so the
matrix form stays exactly orthonormal.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.fft import idct

_SQRT2 = np.sqrt(2.0)
_SQRT3 = np.sqrt(3.0)

# synthesis (reconstruction) low-pass taps of orthogonal Daubechies wavelets;
# taps sum to sqrt(2) and are orthonormal to their even shifts
_WAVELET_LOWPASS = {
    "haar": np.array([1.0, 1.0]) / _SQRT2,
    "db1": np.array([1.0, 1.0]) / _SQRT2,
    "db2": np.array([1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3]) / (4.0 * _SQRT2),
    "db4": np.array([
        0.23037781330885523,
        0.7148465705525415,
        0.6308807679295904,
        -0.02798376941698385,
        -0.18703481171888114,
        0.030841381835986965,
        0.032883011666982945,
        -0.010597401784997278,
    ]),
}


def wavelet_filters(wavelet: str):
    """(lowpass, highpass) synthesis taps for a named orthogonal wavelet."""
    try:
        lo = _WAVELET_LOWPASS[wavelet]
    except KeyError:
        raise ValueError(
            f"unknown wavelet {wavelet!r}; available: {sorted(_WAVELET_LOWPASS)}"
        ) from None
    hi = (lo[::-1] * np.power(-1.0, np.arange(lo.size)))
    return lo, hi


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@lru_cache(maxsize=32)
def dct_basis(n: int) -> np.ndarray:
    """Orthonormal type-II DCT synthesis matrix; column c is the c-th cosine."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _readonly(idct(np.eye(n), axis=0, norm="ortho"))


def _analysis_level(size: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """One periodized analysis step: rows are even shifts of the filters."""
    half = size // 2
    a = np.zeros((size, size))
    cols = (2 * np.arange(half)[:, None] + np.arange(lo.size)[None, :]) % size
    for i in range(half):
        np.add.at(a[i], cols[i], lo)
        np.add.at(a[half + i], cols[i], hi)
    return a


@lru_cache(maxsize=32)
def dwt_basis(n: int, wavelet: str = "db4", levels: int = 4) -> np.ndarray:
    """Orthonormal wavelet synthesis matrix with periodic boundary handling.

    Columns are ordered approximation first, then detail bands from coarsest
    to finest. Requires n to be a power of two and every level to keep at
    least one full filter length of samples.
    """
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"n must be a power of two, got {n}")
    lo, hi = wavelet_filters(wavelet)
    if levels < 1 or levels > int(np.log2(n)):
        raise ValueError(f"levels must be in [1, log2(n)={int(np.log2(n))}]")
    if n // 2 ** (levels - 1) < lo.size:
        raise ValueError(
            f"levels too deep: level {levels} leaves {n // 2 ** (levels - 1)} "
            f"samples for a {lo.size}-tap filter")
    analysis = np.eye(n)
    size = n
    for _ in range(levels):
        step = np.eye(n)
        step[:size, :size] = _analysis_level(size, lo, hi)
        analysis = step @ analysis
        size //= 2
    return _readonly(analysis.T.copy())


@lru_cache(maxsize=32)
def joint_basis(n: int, wavelet: str = "db4", levels: int = 4) -> np.ndarray:
    """[DCT | DWT]: the n x 2n pre-determined representation."""
    return _readonly(np.hstack([dct_basis(n), dwt_basis(n, wavelet, levels)]))


def analyze(basis: np.ndarray, v) -> np.ndarray:
    """Coefficients of v against an orthonormal basis (its transpose)."""
    return basis.T @ np.asarray(v, dtype=np.float64)
