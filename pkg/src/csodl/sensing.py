"""Sensor-node model: seeded binary sensing matrices and random encoding.

Entries are exact 0/1 (no 1/sqrt(m) scaling) to match the hardware argument
for cheap acquisition; any column-energy imbalance is absorbed downstream by
the solver's regularization search. Generation uses numpy's PCG64 stream, so
matrices are bit-reproducible within this implementation for a given seed.
"""
from __future__ import annotations

import warnings

import numpy as np

from .core import Epoch, Measurements, SensingMatrix, as_samples

_MAX_ROW_REDRAWS = 10000


def generate_sensing_matrix(m: int, n: int, seed: int, p: float = 0.5) -> SensingMatrix:
    """Draw an m x n matrix with iid Bernoulli(p) entries in {0, 1}.

    All-zero rows waste a measurement, so each one is redrawn from an
    incremented sub-seed; the redraws are recorded as guard events.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if not 0.0 < p <= 1.0:
        raise ValueError("entry probability p must be in (0, 1]")
    if m > n:
        warnings.warn(f"m={m} > n={n} does not compress; intended for testing only")
    rng = np.random.default_rng(seed)
    entries = (rng.random((m, n)) < p).astype(np.float64)
    events = []
    for i in np.flatnonzero(~entries.any(axis=1)):
        attempt = 1
        while attempt <= _MAX_ROW_REDRAWS:
            row = (np.random.default_rng((seed, int(i), attempt)).random(n) < p)
            if row.any():
                entries[i] = row.astype(np.float64)
                events.append((int(i), attempt))
                break
            attempt += 1
        else:
            raise RuntimeError(f"row {i} still all-zero after {_MAX_ROW_REDRAWS} redraws")
    return SensingMatrix(entries=entries, seed=int(seed), p=float(p),
                         guard_events=tuple(events))


def encode(epoch, phi: SensingMatrix) -> Measurements:
    """y = Phi f: the only computation the sensor performs besides segmentation."""
    f = as_samples(epoch)
    if f.size != phi.n:
        raise ValueError(f"epoch length {f.size} != sensing matrix n {phi.n}")
    return Measurements(values=phi.entries @ f, phi_seed=phi.seed,
                        phi_shape=(phi.m, phi.n))


def encode_all(epochs, phi: SensingMatrix) -> list:
    """Encode many epochs with one shared matrix, preserving order."""
    return [encode(e, phi) for e in epochs]
