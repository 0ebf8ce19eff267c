"""Shared domain types and the two evaluation metrics (CR and PRD).

All types are frozen dataclasses holding read-only numpy arrays, so instances
are safe to share between concurrent workers. Metric functions are pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ATOM_NORM_SLACK = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.flags.writeable = False
    return out


def as_samples(x) -> np.ndarray:
    """Accept an Epoch, Measurements or any array-like; return a float64 vector."""
    if hasattr(x, "samples"):
        x = x.samples
    elif hasattr(x, "phi_shape"):
        x = x.values
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class Epoch:
    """One fixed-length window of signal samples, the unit of encoding.

    ``filtered`` is a data-lineage flag: True only for epochs that passed
    through the server-side notch/band-pass chain. The pipeline asserts that
    test epochs never carry it.
    """

    samples: np.ndarray
    filtered: bool = False

    def __post_init__(self):
        s = _readonly(np.ravel(self.samples))
        if s.size == 0:
            raise ValueError("epoch must contain at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("epoch samples must be finite")
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class Dictionary:
    """n x k matrix of atoms (columns); overcomplete when k > n.

    ``scale`` is the training-set standardization constant stored alongside
    the atoms so downstream coding can reproduce the training scaling.
    ``seeds`` is the chain of RNG seeds used to create it.
    """

    atoms: np.ndarray
    scale: float = 1.0
    seeds: tuple = ()

    def __post_init__(self):
        a = _readonly(self.atoms)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"atoms must be a 2-d matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("dictionary atoms must be finite")
        norms = np.linalg.norm(a, axis=0)
        if np.any(norms > 1.0 + ATOM_NORM_SLACK):
            raise ValueError(
                f"atom norms must be <= 1 (max {norms.max():.12f})")
        object.__setattr__(self, "atoms", a)

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def k(self) -> int:
        return self.atoms.shape[1]

    def with_dc_atom(self) -> "Dictionary":
        """Append a unit-norm constant column.

        Training standardization removes each epoch's mean, so learned atoms
        are zero-mean; the extra column lets reconstruction recover the DC
        component of raw epochs.
        """
        dc = np.full((self.n, 1), 1.0 / np.sqrt(self.n))
        return Dictionary(np.hstack([self.atoms, dc]), scale=self.scale,
                          seeds=self.seeds)


@dataclass(frozen=True)
class SensingMatrix:
    """m x n binary 0/1 random projection applied on the sensor node.

    Regenerating with the same (m, n, seed, p) yields identical entries;
    ``guard_events`` records rows that were redrawn to avoid all-zero rows.
    """

    entries: np.ndarray
    seed: int
    p: float = 0.5
    guard_events: tuple = ()

    def __post_init__(self):
        e = _readonly(self.entries)
        if e.ndim != 2:
            raise ValueError("sensing matrix must be 2-d")
        if not np.all((e == 0.0) | (e == 1.0)):
            raise ValueError("sensing matrix entries must be exactly 0 or 1")
        object.__setattr__(self, "entries", e)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def metadata(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "seed": int(self.seed),
            "p": float(self.p),
            "guard_events": list(self.guard_events),
        }


@dataclass(frozen=True)
class SparseCode:
    """k-length coefficient vector stored as (index, value) pairs."""

    indices: np.ndarray
    values: np.ndarray
    k: int

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64)
        val = np.array(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be matching 1-d arrays")
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.k:
                raise ValueError("indices must lie in [0, k)")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if np.any(val == 0.0) or not np.all(np.isfinite(val)):
                raise ValueError("stored values must be nonzero and finite")
        idx.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, vec, k: int | None = None) -> "SparseCode":
        v = np.asarray(vec, dtype=np.float64).ravel()
        k = v.size if k is None else k
        idx = np.flatnonzero(v)
        return cls(indices=idx, values=v[idx], k=k)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.k)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class Measurements:
    """m-length projection of one epoch plus the producing matrix identity."""

    values: np.ndarray
    phi_seed: int
    phi_shape: tuple

    def __post_init__(self):
        v = _readonly(np.ravel(self.values))
        m, n = self.phi_shape
        if v.size != m:
            raise ValueError(f"expected {m} measurements, got {v.size}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "phi_shape", (int(m), int(n)))

    @property
    def m(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SolverConfig:
    """Shared l1-solver knobs: l1 weight, residual tolerance, iteration caps."""

    lam: float = 0.12
    epsilon: float = 0.0
    max_iterations: int = 20000
    convergence_tol: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")


def compression_ratio(n: int, m: int) -> float:
    """CR = n/m: the factor by which m measurements shrink an n-sample epoch."""
    if n <= 0 or m <= 0:
        raise ValueError("n and m must be positive")
    return n / m


def prd(original, reconstructed) -> float:
    """Percent root-mean-square difference with the DC bias removed.

    100 * ||f - f'|| / ||f - mean(f)||. Raises if the original is constant
    (the denominator would vanish).
    """
    f = as_samples(original)
    g = as_samples(reconstructed)
    if f.shape != g.shape:
        raise ValueError(f"length mismatch: {f.size} vs {g.size}")
    denom = np.linalg.norm(f - f.mean())
    if denom == 0.0:
        raise ValueError("PRD undefined for a constant original signal")
    return float(100.0 * np.linalg.norm(f - g) / denom)


def prd_concatenated(originals: Sequence, reconstructions: Sequence) -> float:
    """PRD of the whole record: concatenate epochs before one computation.

    Companion to the per-epoch default; useful when a single record-level
    number is wanted instead of a mean over epochs.
    """
    f = np.concatenate([as_samples(o) for o in originals])
    g = np.concatenate([as_samples(r) for r in reconstructions])
    return prd(f, g)
